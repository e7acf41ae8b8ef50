#include "fareflow/mdp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace fareflow::mdp {

static_assert(std::endian::native == std::endian::little,
              "replay buffer binary format assumes a little-endian host");

std::string to_string(RewardMode m) {
  return m == RewardMode::plain ? "plain" : "penalized";
}

RewardMode reward_mode_from_string(const std::string& s) {
  if (s == "plain" || s == "eq1") return RewardMode::plain;
  if (s == "penalized" || s == "eq7") return RewardMode::penalized;
  throw std::invalid_argument("unknown reward mode: " + s);
}

double discounted_reward(const sim::TripRecord& trip, double a, double gamma) {
  if (!(gamma > 0.0) || gamma > 1.0) {
    throw std::invalid_argument("discount factor must be in (0, 1]");
  }
  if (trip.est_travel_slots < 1) {
    throw std::invalid_argument("est_travel_slots must be >= 1");
  }
  const double per_segment = trip.fare / trip.est_travel_slots;
  double sum = 0.0;
  double g = 1.0;
  for (int t = 0; t < trip.est_travel_slots; ++t) {
    sum += g * per_segment;
    g *= gamma;
  }
  return sim::delta_ecr(trip, a) * sum;
}

double penalized_reward(const sim::TripRecord& trip, double a, double gamma,
                        double alpha) {
  if (alpha < 0.0) throw std::invalid_argument("penalty weight must be >= 0");
  return discounted_reward(trip, a, gamma) - alpha * (1.0 - a) * trip.fare;
}

bool crosses_episode_boundary(int request_minute, int est_travel_slots) {
  const int end = request_minute + kSubSegmentMinutes * est_travel_slots;
  return (request_minute < kEpisodeBoundaryMinute &&
          end >= kEpisodeBoundaryMinute) ||
         end >= 24 * 60 + kEpisodeBoundaryMinute;
}

int arrival_slot(int request_minute, int est_travel_slots) {
  const int end = request_minute + kSubSegmentMinutes * est_travel_slots;
  return (end / geo::kMinutesPerSlot) % geo::kSlotsPerDay;
}

GridKey grid_key(const SpatioTemporalState& s) {
  return GridKey{s.cell_id, static_cast<std::int16_t>(s.slot.index),
                 static_cast<std::uint8_t>(s.slot.day_kind)};
}

// ---------------------------------------------------------------------------
// Context statistics

ContextStats ContextStats::from_trips(const std::vector<sim::TripRecord>& trips,
                                      const geo::TileCoder& coder) {
  ContextStats out;
  // Raw per-(cell, slot, kind) accumulators: [inquiries, expected
  // completions, arrivals, unused].
  std::array<int, 2> days_seen_max{-1, -1};
  for (const sim::TripRecord& t : trips) {
    const auto kind_idx = static_cast<std::size_t>(t.day_kind);
    days_seen_max[kind_idx] = std::max(days_seen_max[kind_idx], t.day_index);
  }
  // Day counts per kind: distinct day indices actually present.
  std::array<double, 2> day_count{0.0, 0.0};
  {
    std::array<std::vector<char>, 2> seen;
    seen[0].assign(static_cast<std::size_t>(days_seen_max[0] + 1), 0);
    seen[1].assign(static_cast<std::size_t>(days_seen_max[1] + 1), 0);
    for (const sim::TripRecord& t : trips) {
      auto& s = seen[static_cast<std::size_t>(t.day_kind)];
      if (!s[static_cast<std::size_t>(t.day_index)]) {
        s[static_cast<std::size_t>(t.day_index)] = 1;
        day_count[static_cast<std::size_t>(t.day_kind)] += 1.0;
      }
    }
  }

  for (const sim::TripRecord& t : trips) {
    std::int64_t o_cell, d_cell;
    try {
      o_cell = coder.grids().locate(t.origin, 0).cell_id;
      d_cell = coder.grids().locate(t.dest, 0).cell_id;
    } catch (const std::out_of_range&) {
      continue;  // build_transitions counts these; stats just skip them
    }
    const int o_slot = t.request_minute / geo::kMinutesPerSlot;
    const int a_slot = arrival_slot(t.request_minute, t.est_travel_slots);
    const auto kind = static_cast<std::uint8_t>(t.day_kind);
    auto& origin_raw = out.raw_[GridKey{o_cell, static_cast<std::int16_t>(o_slot),
                                        kind}];
    origin_raw[0] += 1.0;
    double completion = 0.0;
    try {
      completion = sim::ecr(t, t.historical_action) * t.cr;
    } catch (const std::invalid_argument&) {
      // off-menu or degenerate demand parameters: contributes no completion
    }
    origin_raw[1] += completion;
    out.raw_[GridKey{d_cell, static_cast<std::int16_t>(a_slot), kind}][2] += 1.0;
  }

  // Per-day averages so weekday and weekend logs of different lengths are
  // comparable.
  for (auto& [key, v] : out.raw_) {
    const double days = day_count[key.day_kind];
    if (days > 0.0) {
      for (double& x : v) x /= days;
    }
  }

  // Population moments over the raw feature vectors of every trip endpoint.
  std::array<double, kContextDim> sum{}, sumsq{};
  double n = 0.0;
  auto accumulate = [&](std::int64_t cell, int slot, geo::DayKind kind) {
    const auto f = out.raw_features(cell, slot, kind);
    for (int d = 0; d < kContextDim; ++d) {
      sum[static_cast<std::size_t>(d)] += f[static_cast<std::size_t>(d)];
      sumsq[static_cast<std::size_t>(d)] +=
          f[static_cast<std::size_t>(d)] * f[static_cast<std::size_t>(d)];
    }
    n += 1.0;
  };
  for (const sim::TripRecord& t : trips) {
    std::int64_t o_cell, d_cell;
    try {
      o_cell = coder.grids().locate(t.origin, 0).cell_id;
      d_cell = coder.grids().locate(t.dest, 0).cell_id;
    } catch (const std::out_of_range&) {
      continue;
    }
    accumulate(o_cell, t.request_minute / geo::kMinutesPerSlot, t.day_kind);
    accumulate(d_cell, arrival_slot(t.request_minute, t.est_travel_slots),
               t.day_kind);
  }
  if (n > 0.0) {
    for (int d = 0; d < kContextDim; ++d) {
      const auto i = static_cast<std::size_t>(d);
      out.mean_[i] = sum[i] / n;
      const double var = std::max(0.0, sumsq[i] / n - out.mean_[i] * out.mean_[i]);
      out.stddev_[i] = std::max(std::sqrt(var), 1e-9);
    }
  }
  return out;
}

std::array<double, kContextDim> ContextStats::raw_features(
    std::int64_t cell_id, int slot, geo::DayKind kind) const {
  std::array<double, kContextDim> f{};
  for (int back = 1; back <= 2; ++back) {
    int s = slot - back;
    if (s < 0) s += geo::kSlotsPerDay;  // trailing window wraps midnight
    const auto it = raw_.find(GridKey{cell_id, static_cast<std::int16_t>(s),
                                      static_cast<std::uint8_t>(kind)});
    if (it == raw_.end()) continue;
    f[0] += it->second[0];
    f[1] += it->second[1];
    f[2] += it->second[2];
  }
  f[3] = f[2] - f[0];  // arrivals minus inquiries: the supply-demand proxy
  return f;
}

std::array<double, kContextDim> ContextStats::features(std::int64_t cell_id,
                                                       int slot,
                                                       geo::DayKind kind) const {
  auto f = raw_features(cell_id, slot, kind);
  for (int d = 0; d < kContextDim; ++d) {
    const auto i = static_cast<std::size_t>(d);
    f[i] = (f[i] - mean_[i]) / stddev_[i];
  }
  return f;
}

void ContextStats::set_moments(const std::array<double, kContextDim>& mean,
                               const std::array<double, kContextDim>& stddev) {
  mean_ = mean;
  for (double s : stddev) {
    if (!(s > 0.0)) throw std::invalid_argument("stddevs must be positive");
  }
  stddev_ = stddev;
}

// ---------------------------------------------------------------------------
// Replay buffer

std::vector<int> ReplayBuffer::observed_actions(
    const SpatioTemporalState& s) const {
  std::vector<int> out;
  const auto it = observed_counts_.find(grid_key(s));
  if (it == observed_counts_.end()) return out;
  for (int k = 0; k < sim::kNumActions; ++k) {
    if (it->second[static_cast<std::size_t>(k)] > 0) out.push_back(k);
  }
  return out;
}

void ReplayBuffer::index_add(const Transition& t) {
  observed_counts_[grid_key(t.s)][static_cast<std::size_t>(t.action_index)] += 1;
}

void ReplayBuffer::index_remove(const Transition& t) {
  const auto it = observed_counts_.find(grid_key(t.s));
  if (it == observed_counts_.end()) return;
  auto& c = it->second[static_cast<std::size_t>(t.action_index)];
  if (c > 0) --c;
}

void ReplayBuffer::append_relabeled(const Transition& t) {
  if (original_size_ == 0) {
    throw std::logic_error("cannot relabel into an empty buffer");
  }
  if (transitions_.size() < 2 * original_size_) {
    transitions_.push_back(t);
    index_add(t);
    return;
  }
  // Ring over the relabeled tail: overwrite the oldest relabel.
  index_remove(transitions_[relabel_cursor_]);
  transitions_[relabel_cursor_] = t;
  index_add(t);
  ++relabel_cursor_;
  if (relabel_cursor_ >= 2 * original_size_) relabel_cursor_ = original_size_;
}

namespace {

bool trip_is_wellformed(const sim::TripRecord& t) {
  if (!(t.fare > 0.0) || !std::isfinite(t.fare)) return false;
  if (!(t.base_ecr > 0.0) || !(t.base_ecr < 1.0)) return false;
  if (!(t.cr > 0.0) || t.cr > 1.0) return false;
  if (!(t.price_sensitivity >= 0.0)) return false;
  if (t.est_travel_slots < 1) return false;
  if (t.request_minute < 0 || t.request_minute >= 24 * 60) return false;
  try {
    sim::action_index(t.historical_action);
  } catch (const std::invalid_argument&) {
    return false;
  }
  return true;
}

}  // namespace

SpatioTemporalState make_state(const geo::LatLon& p, int slot,
                               geo::DayKind kind, const geo::TileCoder& coder,
                               const ContextStats& stats) {
  const geo::BoundingBox& box = coder.config().bbox;
  const geo::GridCell cell = coder.grids().locate(p, 0);
  SpatioTemporalState s;
  s.cell_id = cell.cell_id;
  // Boundary cells can center just outside the box; nudge the
  // representative point back inside for tile activation.
  s.loc.lat = std::clamp(cell.center.lat, box.lat_min + 1e-9, box.lat_max - 1e-9);
  s.loc.lon = std::clamp(cell.center.lon, box.lon_min + 1e-9, box.lon_max - 1e-9);
  s.slot = geo::TimeSlot{slot, kind};
  s.context = stats.features(cell.cell_id, slot, kind);
  return s;
}

ReplayBuffer build_transitions(const std::vector<sim::TripRecord>& trips,
                               const geo::TileCoder& coder, double gamma,
                               RewardMode mode, double alpha) {
  if (!(gamma > 0.0) || gamma > 1.0) {
    throw std::invalid_argument("discount factor must be in (0, 1]");
  }
  ReplayBuffer buf;
  buf.gamma_ = gamma;
  buf.reward_mode_ = mode;
  buf.alpha_ = alpha;
  buf.stats_ = ContextStats::from_trips(trips, coder);

  auto state_at = [&](const geo::LatLon& p, int slot,
                      geo::DayKind kind) -> SpatioTemporalState {
    return make_state(p, slot, kind, coder, buf.stats_);
  };

  for (const sim::TripRecord& t : trips) {
    if (!trip_is_wellformed(t)) {
      ++buf.skipped_;
      continue;
    }
    Transition tr;
    try {
      tr.s = state_at(t.origin, t.request_minute / geo::kMinutesPerSlot,
                      t.day_kind);
      tr.s_next = state_at(
          t.dest, arrival_slot(t.request_minute, t.est_travel_slots), t.day_kind);
    } catch (const std::out_of_range&) {
      ++buf.skipped_;  // endpoint outside the configured bounding box
      continue;
    }
    tr.action_index = sim::action_index(t.historical_action);
    tr.done = crosses_episode_boundary(t.request_minute, t.est_travel_slots);
    tr.trip_id = t.trip_id;
    tr.fare = t.fare;
    tr.cr = t.cr;
    tr.base_ecr = t.base_ecr;
    tr.price_sensitivity = t.price_sensitivity;
    tr.est_travel_slots = t.est_travel_slots;
    for (int k = 0; k < sim::kNumActions; ++k) {
      const double a = sim::kActionMenu[static_cast<std::size_t>(k)];
      tr.rewards_by_action[static_cast<std::size_t>(k)] =
          mode == RewardMode::plain ? discounted_reward(t, a, gamma)
                                    : penalized_reward(t, a, gamma, alpha);
    }
    tr.reward = tr.rewards_by_action[static_cast<std::size_t>(tr.action_index)];
    buf.transitions_.push_back(tr);
    buf.index_add(tr);
  }
  buf.original_size_ = buf.transitions_.size();
  buf.relabel_cursor_ = buf.original_size_;
  return buf;
}

// ---------------------------------------------------------------------------
// Persistence: magic, little-endian u64 header length, JSON header, then
// fixed-width 224-byte transition records.

namespace {

constexpr char kMagic[8] = {'F', 'F', 'R', 'B', '0', '0', '0', '1'};
constexpr std::size_t kRecordBytes = 224;

template <typename T>
void put(std::string& out, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.append(b, sizeof(T));
}

template <typename T>
T get(const char*& p, const char* end) {
  if (p + sizeof(T) > end) {
    throw std::runtime_error("replay buffer file truncated");
  }
  T v;
  std::memcpy(&v, p, sizeof(T));
  p += sizeof(T);
  return v;
}

void put_state(std::string& out, const SpatioTemporalState& s) {
  put<std::int64_t>(out, s.cell_id);
  put<double>(out, s.loc.lat);
  put<double>(out, s.loc.lon);
  put<std::int32_t>(out, s.slot.index);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(s.slot.day_kind));
  for (double c : s.context) put<double>(out, c);
}

SpatioTemporalState get_state(const char*& p, const char* end) {
  SpatioTemporalState s;
  s.cell_id = get<std::int64_t>(p, end);
  s.loc.lat = get<double>(p, end);
  s.loc.lon = get<double>(p, end);
  s.slot.index = get<std::int32_t>(p, end);
  s.slot.day_kind = static_cast<geo::DayKind>(get<std::uint8_t>(p, end));
  for (double& c : s.context) c = get<double>(p, end);
  return s;
}

}  // namespace

void ReplayBuffer::save(const std::string& path) const {
  nlohmann::json header{
      {"version", 1},
      {"gamma", gamma_},
      {"reward_mode", to_string(reward_mode_)},
      {"alpha", alpha_},
      {"count", transitions_.size()},
      {"original_size", original_size_},
      {"relabel_cursor", relabel_cursor_},
      {"skipped_trips", skipped_},
      {"context_mean",
       std::vector<double>(stats_.mean().begin(), stats_.mean().end())},
      {"context_stddev",
       std::vector<double>(stats_.stddev().begin(), stats_.stddev().end())},
      {"record_bytes", kRecordBytes}};
  const std::string header_str = header.dump();

  std::string blob;
  blob.reserve(sizeof(kMagic) + 8 + header_str.size() +
               transitions_.size() * kRecordBytes);
  blob.append(kMagic, sizeof(kMagic));
  put<std::uint64_t>(blob, header_str.size());
  blob += header_str;
  for (const Transition& t : transitions_) {
    const std::size_t before = blob.size();
    put_state(blob, t.s);
    put_state(blob, t.s_next);
    put<std::uint8_t>(blob, static_cast<std::uint8_t>(t.action_index));
    put<std::uint8_t>(blob, t.done ? 1 : 0);
    put<double>(blob, t.reward);
    put<std::uint64_t>(blob, t.trip_id);
    put<double>(blob, t.fare);
    put<double>(blob, t.cr);
    put<double>(blob, t.base_ecr);
    put<double>(blob, t.price_sensitivity);
    put<std::int32_t>(blob, t.est_travel_slots);
    for (double r : t.rewards_by_action) put<double>(blob, r);
    if (blob.size() - before != kRecordBytes) {
      throw std::logic_error("transition record layout drifted");
    }
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write replay buffer: " + path);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw std::runtime_error("short write to replay buffer: " + path);
}

ReplayBuffer ReplayBuffer::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open replay buffer: " + path);
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  const char* p = data.data();
  const char* end = p + data.size();
  if (data.size() < sizeof(kMagic) ||
      std::memcmp(p, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a replay buffer file: " + path);
  }
  p += sizeof(kMagic);
  const auto header_len = get<std::uint64_t>(p, end);
  if (p + header_len > end) {
    throw std::runtime_error("replay buffer header truncated: " + path);
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(p, p + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt replay buffer header: " +
                             std::string(e.what()));
  }
  p += header_len;

  ReplayBuffer buf;
  buf.gamma_ = header.at("gamma").get<double>();
  buf.reward_mode_ =
      reward_mode_from_string(header.at("reward_mode").get<std::string>());
  buf.alpha_ = header.at("alpha").get<double>();
  buf.original_size_ = header.at("original_size").get<std::size_t>();
  buf.relabel_cursor_ = header.at("relabel_cursor").get<std::size_t>();
  buf.skipped_ = header.at("skipped_trips").get<std::size_t>();
  const auto mean = header.at("context_mean").get<std::vector<double>>();
  const auto stddev = header.at("context_stddev").get<std::vector<double>>();
  if (mean.size() != kContextDim || stddev.size() != kContextDim) {
    throw std::runtime_error("replay buffer header has bad moment shapes");
  }
  std::array<double, kContextDim> m{}, s{};
  std::copy(mean.begin(), mean.end(), m.begin());
  std::copy(stddev.begin(), stddev.end(), s.begin());
  buf.stats_.set_moments(m, s);

  const auto count = header.at("count").get<std::size_t>();
  if (static_cast<std::size_t>(end - p) != count * kRecordBytes) {
    throw std::runtime_error("replay buffer record section has wrong size");
  }
  buf.transitions_.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Transition t;
    t.s = get_state(p, end);
    t.s_next = get_state(p, end);
    t.action_index = static_cast<int>(get<std::uint8_t>(p, end));
    t.done = get<std::uint8_t>(p, end) != 0;
    t.reward = get<double>(p, end);
    t.trip_id = get<std::uint64_t>(p, end);
    t.fare = get<double>(p, end);
    t.cr = get<double>(p, end);
    t.base_ecr = get<double>(p, end);
    t.price_sensitivity = get<double>(p, end);
    t.est_travel_slots = get<std::int32_t>(p, end);
    for (double& r : t.rewards_by_action) r = get<double>(p, end);
    if (t.action_index < 0 || t.action_index >= sim::kNumActions) {
      throw std::runtime_error("replay buffer record has bad action index");
    }
    buf.transitions_.push_back(t);
    buf.index_add(t);
  }
  return buf;
}

}  // namespace fareflow::mdp
