#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fareflow/alloc.hpp"
#include "fareflow/mdp.hpp"
#include "fareflow/model.hpp"
#include "fareflow/rng.hpp"

namespace fareflow::train {

struct TrainConfig {
  double gamma = 0.9;
  int batch_size = 32;
  double learning_rate = 1e-3;
  int target_sync_every = 100;
  int steps = 10000;
  double beta = 0.5;   // fare weight when scoring relabel candidates
  double rho = 0.045;  // relabel budget as a fraction of batch fares
  double alpha = 0.0;  // penalty coefficient of the cost-aware reward
  std::uint64_t seed = 7;
  bool relabel_enabled = true;
  // A loss above this (or any non-finite loss) aborts the run.
  double divergence_threshold = 1e6;
  mdp::RewardMode reward_mode = mdp::RewardMode::plain;
  nn::ModelShape shape;  // outputs field is ignored; heads are fixed

  void validate() const;  // throws std::invalid_argument
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig load(const std::string& path);
};

// Highest-value action among those observed at the state's grid key; ties
// take the lowest menu index. With nothing observed the choice falls back to
// a uniform draw over the full menu.
int constrained_argmax(const std::array<double, sim::kNumActions>& q_values,
                       const std::vector<int>& observed_actions, Rng& rng);

// Regression targets for one mini-batch, straight from the update rule:
//   y_j = r_j + gamma * (1 - d_j) * V_target(s'_j)
//   v_j = Q_target(s_j, argmax_{a in observed(s_j)} Q_online(s_j, a))
struct TargetBatch {
  std::vector<double> y;  // per-transition target for Q(s_j, a_j)
  std::vector<double> v;  // per-transition target for V(s_j)
};
TargetBatch compute_targets(const mdp::ReplayBuffer& buffer,
                            const std::vector<std::size_t>& batch,
                            const geo::TileCoder& coder,
                            const nn::ValueModel& q_online,
                            const nn::ValueModel& q_target,
                            const nn::ValueModel& v_target, double gamma,
                            Rng& fallback_rng);

struct StepMetrics {
  int step = 0;
  double q_loss = 0.0;
  double v_loss = 0.0;
  double batch_spend = 0.0;   // relabel assignment spend (0 when disabled)
  double batch_budget = 0.0;  // rho * sum of batch fares (0 when disabled)
};

// Everything needed to act and evaluate later: both networks with their
// frozen targets, the feature coder config, and the context normalization
// moments the networks were trained under.
struct Checkpoint {
  TrainConfig config;
  geo::CodingConfig coding;
  long long step = 0;
  std::array<double, mdp::kContextDim> context_mean{};
  std::array<double, mdp::kContextDim> context_stddev{1.0, 1.0, 1.0, 1.0};
  nn::ValueModel q, q_target, v, v_target;

  Checkpoint(const TrainConfig& cfg, const geo::CodingConfig& coding_cfg);

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

class Trainer {
 public:
  // The buffer's gamma / reward mode / alpha must match the config; the
  // trainer refuses silently inconsistent setups.
  Trainer(const TrainConfig& cfg, const geo::TileCoder& coder,
          mdp::ReplayBuffer buffer);
  // Resumes from a checkpoint. The coder must match the checkpoint's coding
  // config. Sampling streams are re-forked per resume point, so a resumed
  // run is deterministic but not a bitwise splice of an unbroken one.
  Trainer(const Checkpoint& ck, const geo::TileCoder& coder,
          mdp::ReplayBuffer buffer);

  const TrainConfig& config() const { return cfg_; }
  const mdp::ReplayBuffer& buffer() const { return buffer_; }
  const nn::ValueModel& q() const { return q_; }
  const nn::ValueModel& q_target() const { return q_target_; }
  const nn::ValueModel& v() const { return v_; }
  const nn::ValueModel& v_target() const { return v_target_; }
  long long step_count() const { return step_count_; }

  // One mini-batch update; throws std::runtime_error on divergence.
  StepMetrics step();
  // Runs `steps` updates (config().steps when negative); when metrics_csv is
  // set, writes a header plus one row per step.
  void run(std::ostream* metrics_csv = nullptr, int steps = -1);

  Checkpoint checkpoint() const;

 private:
  TrainConfig cfg_;
  const geo::TileCoder& coder_;
  mdp::ReplayBuffer buffer_;
  nn::ValueModel q_, q_target_, v_, v_target_;
  Rng batch_rng_, fallback_rng_;
  long long step_count_ = 0;
};

// Per-trip inputs of the allocation stage: endpoint values from the state
// network plus the trip attributes the value and cost rows need. Trips whose
// endpoints fall outside the coder's bounding box are skipped and counted.
std::vector<alloc::TripEval> make_trip_evals(
    const std::vector<sim::TripRecord>& trips, const geo::TileCoder& coder,
    const mdp::ContextStats& stats, const nn::ValueModel& v_model,
    std::size_t* skipped = nullptr);

}  // namespace fareflow::train
