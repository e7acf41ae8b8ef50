#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "fareflow/hash.hpp"
#include "fareflow/sim.hpp"
#include "fareflow/tilecoding.hpp"

namespace fareflow::mdp {

// Trip travel time T counts these sub-segments; MDP slots stay 30 minutes.
constexpr int kSubSegmentMinutes = 10;
// Episodes end when a trip crosses 03:00; the low-activity point of the day.
constexpr int kEpisodeBoundaryMinute = 180;
constexpr int kContextDim = 4;

enum class RewardMode { plain = 0, penalized = 1 };
std::string to_string(RewardMode m);
RewardMode reward_mode_from_string(const std::string& s);

// delta_ecr(trip, a) * sum_{t=0}^{T-1} gamma^t * fare / T.
double discounted_reward(const sim::TripRecord& trip, double a, double gamma);
// discounted_reward minus alpha * (1 - a) * fare: the cost-aware variant.
double penalized_reward(const sim::TripRecord& trip, double a, double gamma,
                        double alpha);

// True iff the ride interval (request, request + 10*T] crosses 03:00,
// possibly into the next day.
bool crosses_episode_boundary(int request_minute, int est_travel_slots);

// Arrival semi-hour slot, wrapped around midnight.
int arrival_slot(int request_minute, int est_travel_slots);

struct SpatioTemporalState {
  std::int64_t cell_id = 0;  // finest hex level
  geo::LatLon loc;           // representative point for tile activation
  geo::TimeSlot slot;
  std::array<double, kContextDim> context{};  // z-normalized trailing stats
};

struct Transition {
  SpatioTemporalState s;
  SpatioTemporalState s_next;
  int action_index = sim::kNoDiscountIndex;
  double reward = 0.0;
  bool done = false;
  std::uint64_t trip_id = 0;
  // Trip attributes kept for relabeling and allocation without the raw log.
  double fare = 0.0;
  double cr = 0.0;
  double base_ecr = 0.0;
  double price_sensitivity = 0.0;
  int est_travel_slots = 1;
  // Reward under every menu action, per the buffer's reward mode; relabeling
  // reads r' from here instead of re-simulating.
  std::array<double, sim::kNumActions> rewards_by_action{};
};

// Key of the discretized grid used for the action index and context stats.
struct GridKey {
  std::int64_t cell_id = 0;
  std::int16_t slot = 0;
  std::uint8_t day_kind = 0;
  bool operator==(const GridKey&) const = default;
};
struct GridKeyHash {
  std::size_t operator()(const GridKey& k) const {
    std::uint64_t h = hash_combine(0x9d7f3u, static_cast<std::uint64_t>(k.cell_id));
    h = hash_combine(h, static_cast<std::uint64_t>(k.slot) * 2u + k.day_kind);
    return static_cast<std::size_t>(h);
  }
};

GridKey grid_key(const SpatioTemporalState& s);

// Trailing-window statistics per (cell, slot, day kind), computed once from a
// trip log. The four raw features of a state: origin inquiries, expected
// completions, arrivals, and arrivals minus inquiries, each summed over the
// two slots preceding the state's slot. Multi-day logs average per day kind.
class ContextStats {
 public:
  ContextStats() = default;
  static ContextStats from_trips(const std::vector<sim::TripRecord>& trips,
                                 const geo::TileCoder& coder);

  // z-normalized features for any state; unseen keys normalize raw zeros.
  std::array<double, kContextDim> features(std::int64_t cell_id, int slot,
                                           geo::DayKind kind) const;
  // Pre-normalization trailing-window sums, exposed for verification.
  std::array<double, kContextDim> raw_features(std::int64_t cell_id, int slot,
                                               geo::DayKind kind) const;
  const std::array<double, kContextDim>& mean() const { return mean_; }
  const std::array<double, kContextDim>& stddev() const { return stddev_; }
  void set_moments(const std::array<double, kContextDim>& mean,
                   const std::array<double, kContextDim>& stddev);

 private:
  std::unordered_map<GridKey, std::array<double, kContextDim>, GridKeyHash> raw_;
  std::array<double, kContextDim> mean_{};
  std::array<double, kContextDim> stddev_{1.0, 1.0, 1.0, 1.0};
};

class ReplayBuffer {
 public:
  ReplayBuffer() = default;

  const std::vector<Transition>& transitions() const { return transitions_; }
  std::size_t size() const { return transitions_.size(); }
  std::size_t original_size() const { return original_size_; }
  double gamma() const { return gamma_; }
  RewardMode reward_mode() const { return reward_mode_; }
  double alpha() const { return alpha_; }
  const ContextStats& stats() const { return stats_; }
  std::size_t skipped_trips() const { return skipped_; }

  // Actions observed in the buffer for the state's discretized grid; sorted
  // ascending by menu index. Backed by exact per-action counts so eviction
  // keeps the index consistent.
  std::vector<int> observed_actions(const SpatioTemporalState& s) const;

  // Appends a relabeled transition; when the buffer exceeds twice its
  // original size the oldest relabeled transition is evicted.
  void append_relabeled(const Transition& t);

  void save(const std::string& path) const;
  static ReplayBuffer load(const std::string& path);

  friend ReplayBuffer build_transitions(const std::vector<sim::TripRecord>&,
                                        const geo::TileCoder&, double,
                                        RewardMode, double);

 private:
  void index_add(const Transition& t);
  void index_remove(const Transition& t);

  std::vector<Transition> transitions_;
  std::size_t original_size_ = 0;
  std::size_t relabel_cursor_ = 0;  // next eviction position (ring over tail)
  double gamma_ = 0.9;
  RewardMode reward_mode_ = RewardMode::plain;
  double alpha_ = 0.0;
  std::size_t skipped_ = 0;
  ContextStats stats_;
  std::unordered_map<GridKey, std::array<std::uint32_t, sim::kNumActions>,
                     GridKeyHash>
      observed_counts_;
};

// State at a point and semi-hour slot: finest-level cell, a representative
// point clamped into the coder's bounding box, and normalized context
// features. Throws std::out_of_range when the point is outside the box.
SpatioTemporalState make_state(const geo::LatLon& p, int slot,
                               geo::DayKind kind, const geo::TileCoder& coder,
                               const ContextStats& stats);

// Converts a trip log into transitions: origin state at the request slot,
// destination state at the arrival slot, terminal when the ride crosses
// 03:00. Malformed trips are skipped and counted, never fatal.
ReplayBuffer build_transitions(const std::vector<sim::TripRecord>& trips,
                               const geo::TileCoder& coder, double gamma,
                               RewardMode mode, double alpha = 0.0);

}  // namespace fareflow::mdp
