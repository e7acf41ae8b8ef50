#include "fareflow/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <utility>

#include <nlohmann/json.hpp>

namespace fareflow::train {

namespace {

nn::ModelShape head_shape(const nn::ModelShape& base, int outputs) {
  nn::ModelShape s = base;
  s.context_dim = mdp::kContextDim;
  s.outputs = outputs;
  s.validate();
  return s;
}

// Substream ids of the trainer's forked generators. Values are arbitrary but
// frozen: changing them changes every trained artifact.
constexpr std::uint64_t kStreamQInit = 1;
constexpr std::uint64_t kStreamVInit = 2;
constexpr std::uint64_t kStreamBatch = 3;
constexpr std::uint64_t kStreamFallback = 4;

}  // namespace

void TrainConfig::validate() const {
  if (!(gamma > 0.0) || gamma > 1.0) {
    throw std::invalid_argument("gamma must be in (0, 1]");
  }
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning_rate must be positive and finite");
  }
  if (target_sync_every < 1) {
    throw std::invalid_argument("target_sync_every must be >= 1");
  }
  if (steps < 0) throw std::invalid_argument("steps must be >= 0");
  if (beta < 0.0 || beta > 1.0) {
    throw std::invalid_argument("beta must be in [0, 1]");
  }
  if (!(rho >= 0.0)) throw std::invalid_argument("rho must be >= 0");
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
  if (!(divergence_threshold > 0.0)) {
    throw std::invalid_argument("divergence_threshold must be > 0");
  }
  head_shape(shape, sim::kNumActions);  // validates the dense dimensions
}

nlohmann::json TrainConfig::to_json() const {
  return nlohmann::json{{"gamma", gamma},
                        {"batch_size", batch_size},
                        {"learning_rate", learning_rate},
                        {"target_sync_every", target_sync_every},
                        {"steps", steps},
                        {"beta", beta},
                        {"rho", rho},
                        {"alpha", alpha},
                        {"seed", seed},
                        {"relabel_enabled", relabel_enabled},
                        {"divergence_threshold", divergence_threshold},
                        {"reward_mode", mdp::to_string(reward_mode)},
                        {"model",
                         {{"emb_rows", shape.emb_rows},
                          {"emb_dim", shape.emb_dim},
                          {"hidden1", shape.hidden1},
                          {"hidden2", shape.hidden2}}}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.gamma = j.value("gamma", c.gamma);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.target_sync_every = j.value("target_sync_every", c.target_sync_every);
  c.steps = j.value("steps", c.steps);
  c.beta = j.value("beta", c.beta);
  c.rho = j.value("rho", c.rho);
  c.alpha = j.value("alpha", c.alpha);
  c.seed = j.value("seed", c.seed);
  c.relabel_enabled = j.value("relabel_enabled", c.relabel_enabled);
  c.divergence_threshold =
      j.value("divergence_threshold", c.divergence_threshold);
  if (j.contains("reward_mode")) {
    c.reward_mode =
        mdp::reward_mode_from_string(j.at("reward_mode").get<std::string>());
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    c.shape.emb_rows = m.value("emb_rows", c.shape.emb_rows);
    c.shape.emb_dim = m.value("emb_dim", c.shape.emb_dim);
    c.shape.hidden1 = m.value("hidden1", c.shape.hidden1);
    c.shape.hidden2 = m.value("hidden2", c.shape.hidden2);
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open train config: " + path);
  nlohmann::json j;
  in >> j;
  return from_json(j);
}

int constrained_argmax(const std::array<double, sim::kNumActions>& q_values,
                       const std::vector<int>& observed_actions, Rng& rng) {
  if (observed_actions.empty()) {
    return static_cast<int>(rng.uniform_index(sim::kNumActions));
  }
  int best = -1;
  double best_q = 0.0;
  for (int k : observed_actions) {
    if (k < 0 || k >= sim::kNumActions) {
      throw std::invalid_argument("observed action index out of menu range");
    }
    const double q = q_values[static_cast<std::size_t>(k)];
    if (best < 0 || q > best_q) {  // strict: ties keep the lowest index
      best = k;
      best_q = q;
    }
  }
  return best;
}

namespace {

std::array<double, sim::kNumActions> q_row(const nn::ValueModel& model,
                                           const geo::TileCoder& coder,
                                           const mdp::SpatioTemporalState& s) {
  std::array<double, sim::kNumActions> out{};
  model.forward(coder.activate(s.loc, s.slot), s.context.data(), out.data());
  return out;
}

double v_scalar(const nn::ValueModel& model, const geo::TileCoder& coder,
                const mdp::SpatioTemporalState& s) {
  double out = 0.0;
  model.forward(coder.activate(s.loc, s.slot), s.context.data(), &out);
  return out;
}

}  // namespace

TargetBatch compute_targets(const mdp::ReplayBuffer& buffer,
                            const std::vector<std::size_t>& batch,
                            const geo::TileCoder& coder,
                            const nn::ValueModel& q_online,
                            const nn::ValueModel& q_target,
                            const nn::ValueModel& v_target, double gamma,
                            Rng& fallback_rng) {
  TargetBatch out;
  out.y.reserve(batch.size());
  out.v.reserve(batch.size());
  for (std::size_t idx : batch) {
    const mdp::Transition& tr = buffer.transitions().at(idx);

    const double v_next = tr.done ? 0.0 : v_scalar(v_target, coder, tr.s_next);
    out.y.push_back(tr.reward + gamma * v_next);

    const auto q_on = q_row(q_online, coder, tr.s);
    const int a_star =
        constrained_argmax(q_on, buffer.observed_actions(tr.s), fallback_rng);
    const auto q_tg = q_row(q_target, coder, tr.s);
    out.v.push_back(q_tg[static_cast<std::size_t>(a_star)]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(const TrainConfig& cfg, const geo::TileCoder& coder,
                 mdp::ReplayBuffer buffer)
    : cfg_(cfg),
      coder_(coder),
      buffer_(std::move(buffer)),
      q_(nn::ValueModel::random_init(
          head_shape(cfg.shape, sim::kNumActions),
          Rng(cfg.seed).fork(kStreamQInit).seed())),
      q_target_(q_),
      v_(nn::ValueModel::random_init(head_shape(cfg.shape, 1),
                                     Rng(cfg.seed).fork(kStreamVInit).seed())),
      v_target_(v_),
      batch_rng_(Rng(cfg.seed).fork(kStreamBatch)),
      fallback_rng_(Rng(cfg.seed).fork(kStreamFallback)) {
  cfg_.validate();
  if (buffer_.size() == 0) {
    throw std::invalid_argument("replay buffer is empty");
  }
  if (buffer_.gamma() != cfg_.gamma) {
    throw std::invalid_argument("buffer gamma does not match train config");
  }
  if (buffer_.reward_mode() != cfg_.reward_mode) {
    throw std::invalid_argument("buffer reward mode does not match config");
  }
  if (cfg_.reward_mode == mdp::RewardMode::penalized &&
      buffer_.alpha() != cfg_.alpha) {
    throw std::invalid_argument("buffer alpha does not match train config");
  }
  if (cfg_.shape.emb_rows != coder_.config().hash_table_size) {
    throw std::invalid_argument(
        "model embedding rows must equal the tile hash table size");
  }
}

Trainer::Trainer(const Checkpoint& ck, const geo::TileCoder& coder,
                 mdp::ReplayBuffer buffer)
    : cfg_(ck.config),
      coder_(coder),
      buffer_(std::move(buffer)),
      q_(ck.q),
      q_target_(ck.q_target),
      v_(ck.v),
      v_target_(ck.v_target),
      batch_rng_(Rng(ck.config.seed)
                     .fork(splitmix64(kStreamBatch) ^
                           static_cast<std::uint64_t>(ck.step))),
      fallback_rng_(Rng(ck.config.seed)
                        .fork(splitmix64(kStreamFallback) ^
                              static_cast<std::uint64_t>(ck.step))),
      step_count_(ck.step) {
  cfg_.validate();
  if (buffer_.size() == 0) {
    throw std::invalid_argument("replay buffer is empty");
  }
  if (ck.coding.to_json() != coder_.config().to_json()) {
    throw std::invalid_argument(
        "tile coder does not match the checkpoint's coding config");
  }
  if (buffer_.gamma() != cfg_.gamma ||
      buffer_.reward_mode() != cfg_.reward_mode) {
    throw std::invalid_argument("buffer does not match the checkpoint config");
  }
}

StepMetrics Trainer::step() {
  const auto batch_n = static_cast<std::size_t>(cfg_.batch_size);
  std::vector<std::size_t> batch(batch_n);
  for (std::size_t& idx : batch) {
    idx = static_cast<std::size_t>(batch_rng_.uniform_index(buffer_.size()));
  }

  const TargetBatch targets = compute_targets(
      buffer_, batch, coder_, q_, q_target_, v_target_, cfg_.gamma,
      fallback_rng_);

  // Forward traces at s_j, then mean-squared-error gradients for both heads.
  nn::ValueModel::Gradients q_grads, v_grads;
  q_grads.reset(q_.shape());
  v_grads.reset(v_.shape());
  nn::ValueModel::Trace q_trace, v_trace;
  std::vector<double> q_dout(sim::kNumActions);
  double v_dout = 0.0;
  double q_loss = 0.0;
  double v_loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(batch_n);

  // Endpoint values for the relabel assignment, taken before the update so
  // the assignment and the gradients see the same networks.
  std::vector<alloc::TripEval> evals;
  if (cfg_.relabel_enabled) evals.reserve(batch_n);

  for (std::size_t b = 0; b < batch_n; ++b) {
    const mdp::Transition& tr = buffer_.transitions()[batch[b]];
    const geo::TileSet tiles = coder_.activate(tr.s.loc, tr.s.slot);

    q_.forward_trace(tiles, tr.s.context.data(), q_trace);
    const auto a = static_cast<std::size_t>(tr.action_index);
    const double q_err = q_trace.out[a] - targets.y[b];
    q_loss += q_err * q_err * inv_n;
    std::fill(q_dout.begin(), q_dout.end(), 0.0);
    q_dout[a] = 2.0 * q_err * inv_n;
    q_.backward(tiles, q_trace, q_dout.data(), q_grads);

    v_.forward_trace(tiles, tr.s.context.data(), v_trace);
    const double v_err = v_trace.out[0] - targets.v[b];
    v_loss += v_err * v_err * inv_n;
    v_dout = 2.0 * v_err * inv_n;
    v_.backward(tiles, v_trace, &v_dout, v_grads);

    if (cfg_.relabel_enabled) {
      alloc::TripEval e;
      e.trip_id = tr.trip_id;
      e.fare = tr.fare;
      e.cr = tr.cr;
      sim::TripRecord probe;
      probe.base_ecr = tr.base_ecr;
      probe.price_sensitivity = tr.price_sensitivity;
      for (int k = 0; k < sim::kNumActions; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        e.delta_ecr[kk] = sim::delta_ecr(probe, sim::kActionMenu[kk]);
      }
      e.v_s = v_trace.out[0];
      e.v_s_next = tr.done ? 0.0 : v_scalar(v_, coder_, tr.s_next);
      e.done = tr.done;
      evals.push_back(e);
    }
  }

  if (!std::isfinite(q_loss) || !std::isfinite(v_loss) ||
      q_loss > cfg_.divergence_threshold || v_loss > cfg_.divergence_threshold) {
    throw std::runtime_error("training diverged at step " +
                             std::to_string(step_count_ + 1));
  }

  q_.apply_sgd(q_grads, cfg_.learning_rate);
  v_.apply_sgd(v_grads, cfg_.learning_rate);

  StepMetrics m;
  m.q_loss = q_loss;
  m.v_loss = v_loss;

  if (cfg_.relabel_enabled) {
    double fare_sum = 0.0;
    for (const auto& e : evals) fare_sum += e.fare;
    const double budget = cfg_.rho * fare_sum;
    const alloc::AllocationProblem problem =
        alloc::build_problem(evals, cfg_.beta, cfg_.gamma, budget);
    const alloc::AllocationSolution sol = alloc::solve_lagrangian(problem);
    for (std::size_t b = 0; b < batch_n; ++b) {
      mdp::Transition relabeled = buffer_.transitions()[batch[b]];
      relabeled.action_index = sol.choice[b];
      relabeled.reward =
          relabeled.rewards_by_action[static_cast<std::size_t>(sol.choice[b])];
      buffer_.append_relabeled(relabeled);
    }
    m.batch_spend = sol.spend;
    m.batch_budget = budget;
  }

  ++step_count_;
  if (step_count_ % cfg_.target_sync_every == 0) {
    q_target_ = q_;
    v_target_ = v_;
  }
  m.step = static_cast<int>(step_count_);
  return m;
}

void Trainer::run(std::ostream* metrics_csv, int steps) {
  if (steps < 0) steps = cfg_.steps;
  if (metrics_csv) {
    *metrics_csv << "step,q_loss,v_loss,batch_spend,batch_budget\n";
  }
  for (int i = 0; i < steps; ++i) {
    const StepMetrics m = step();
    if (metrics_csv) {
      char line[160];
      std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.6f,%.6f\n", m.step,
                    m.q_loss, m.v_loss, m.batch_spend, m.batch_budget);
      *metrics_csv << line;
    }
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck(cfg_, coder_.config());
  ck.step = step_count_;
  ck.context_mean = buffer_.stats().mean();
  ck.context_stddev = buffer_.stats().stddev();
  ck.q = q_;
  ck.q_target = q_target_;
  ck.v = v_;
  ck.v_target = v_target_;
  return ck;
}

// ---------------------------------------------------------------------------
// Checkpoint persistence: magic, little-endian u64 header length, JSON
// header, then the four float32 parameter images in a fixed order.

namespace {
constexpr char kCheckpointMagic[8] = {'F', 'F', 'C', 'K', '0', '0', '0', '1'};
}

Checkpoint::Checkpoint(const TrainConfig& cfg, const geo::CodingConfig& coding_cfg)
    : config(cfg),
      coding(coding_cfg),
      q(head_shape(cfg.shape, sim::kNumActions)),
      q_target(head_shape(cfg.shape, sim::kNumActions)),
      v(head_shape(cfg.shape, 1)),
      v_target(head_shape(cfg.shape, 1)) {}

void Checkpoint::save(const std::string& path) const {
  nlohmann::json header{
      {"version", 1},
      {"step", step},
      {"config", config.to_json()},
      {"coding", coding.to_json()},
      {"context_mean",
       std::vector<double>(context_mean.begin(), context_mean.end())},
      {"context_stddev",
       std::vector<double>(context_stddev.begin(), context_stddev.end())},
      {"q_params", q.num_params()},
      {"v_params", v.num_params()}};
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const auto len = static_cast<std::uint64_t>(header_str.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const nn::ValueModel* m : {&q, &q_target, &v, &v_target}) {
    const std::vector<float> blob = m->to_f32();
    out.write(reinterpret_cast<const char*>(blob.data()),
              static_cast<std::streamsize>(blob.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("short write on checkpoint: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1u << 20)) {
    throw std::runtime_error("corrupt checkpoint header: " + path);
  }
  std::string header_str(len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("truncated checkpoint header: " + path);
  const nlohmann::json header = nlohmann::json::parse(header_str);

  Checkpoint ck(TrainConfig::from_json(header.at("config")),
                geo::CodingConfig::from_json(header.at("coding")));
  ck.step = header.at("step").get<long long>();
  const auto mean = header.at("context_mean").get<std::vector<double>>();
  const auto stddev = header.at("context_stddev").get<std::vector<double>>();
  if (mean.size() != mdp::kContextDim || stddev.size() != mdp::kContextDim) {
    throw std::runtime_error("checkpoint context moments have wrong size");
  }
  std::copy(mean.begin(), mean.end(), ck.context_mean.begin());
  std::copy(stddev.begin(), stddev.end(), ck.context_stddev.begin());

  if (header.at("q_params").get<std::size_t>() != ck.q.num_params() ||
      header.at("v_params").get<std::size_t>() != ck.v.num_params()) {
    throw std::runtime_error("checkpoint parameter counts do not match shape");
  }
  for (nn::ValueModel* m : {&ck.q, &ck.q_target, &ck.v, &ck.v_target}) {
    std::vector<float> blob(m->num_params());
    in.read(reinterpret_cast<char*>(blob.data()),
            static_cast<std::streamsize>(blob.size() * sizeof(float)));
    if (!in) throw std::runtime_error("truncated checkpoint blob: " + path);
    m->from_f32(blob);
  }
  return ck;
}

// ---------------------------------------------------------------------------

std::vector<alloc::TripEval> make_trip_evals(
    const std::vector<sim::TripRecord>& trips, const geo::TileCoder& coder,
    const mdp::ContextStats& stats, const nn::ValueModel& v_model,
    std::size_t* skipped) {
  std::vector<alloc::TripEval> out;
  out.reserve(trips.size());
  std::size_t dropped = 0;
  for (const sim::TripRecord& t : trips) {
    mdp::SpatioTemporalState s, s_next;
    try {
      s = mdp::make_state(t.origin, t.request_minute / geo::kMinutesPerSlot,
                          t.day_kind, coder, stats);
      s_next = mdp::make_state(
          t.dest, mdp::arrival_slot(t.request_minute, t.est_travel_slots),
          t.day_kind, coder, stats);
    } catch (const std::out_of_range&) {
      ++dropped;
      continue;
    }
    alloc::TripEval e;
    e.trip_id = t.trip_id;
    e.fare = t.fare;
    e.cr = t.cr;
    for (int k = 0; k < sim::kNumActions; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      e.delta_ecr[kk] = sim::delta_ecr(t, sim::kActionMenu[kk]);
    }
    e.done = mdp::crosses_episode_boundary(t.request_minute, t.est_travel_slots);
    e.v_s = v_scalar(v_model, coder, s);
    e.v_s_next = e.done ? 0.0 : v_scalar(v_model, coder, s_next);
    out.push_back(e);
  }
  if (skipped) *skipped = dropped;
  return out;
}

}  // namespace fareflow::train
