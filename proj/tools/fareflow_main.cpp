// fareflow: command-line front end for the full pipeline.
//
//   gen        synthesize a trip log from a city config
//   build-mdp  turn a trip log into a replay buffer of transitions
//   train      fit the action-value and state-value networks
//   solve      assign per-trip discounts under a budget
//   eval       compare policies on a trip log and emit reports
//   report     render a saved report JSON as Markdown
//
// Exit codes: 0 success; 1 runtime failure (bad input files, divergence);
// 2 usage error; 3 a policy violated its budget during eval.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fareflow/alloc.hpp"
#include "fareflow/manifest.hpp"
#include "fareflow/mdp.hpp"
#include "fareflow/model.hpp"
#include "fareflow/report.hpp"
#include "fareflow/rng.hpp"
#include "fareflow/sim.hpp"
#include "fareflow/tilecoding.hpp"
#include "fareflow/train.hpp"

namespace {

using namespace fareflow;

double elapsed_ms(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

std::vector<sim::DayPlan> parse_day_plan(const std::string& spec,
                                         std::uint64_t seed) {
  // "weekday:5,weekend:2" -> 7 entries, one forked seed per day.
  std::vector<sim::DayPlan> plan;
  const Rng root(seed);
  std::size_t pos = 0;
  int day_index = 0;
  while (pos < spec.size()) {
    const std::size_t comma = spec.find(',', pos);
    const std::string part =
        spec.substr(pos, comma == std::string::npos ? comma : comma - pos);
    const std::size_t colon = part.find(':');
    if (colon == std::string::npos) {
      throw std::invalid_argument("day plan entries look like kind:count");
    }
    const geo::DayKind kind = geo::day_kind_from_string(part.substr(0, colon));
    const int count = std::stoi(part.substr(colon + 1));
    if (count < 0) throw std::invalid_argument("day counts must be >= 0");
    for (int i = 0; i < count; ++i, ++day_index) {
      plan.push_back(sim::DayPlan{
          kind, root.fork(1000 + static_cast<std::uint64_t>(day_index)).seed()});
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (plan.empty()) throw std::invalid_argument("day plan produced no days");
  return plan;
}

std::vector<sim::TripRecord> read_trips_or_die(const std::string& path) {
  sim::TripReadResult r = sim::read_trips_jsonl(path);
  if (r.skipped > 0) {
    std::cerr << "warning: skipped " << r.skipped << " malformed line(s) in "
              << path << "\n";
  }
  if (r.trips.empty()) {
    throw std::runtime_error("no usable trips in " + path);
  }
  return r.trips;
}

double historical_spend(const std::vector<sim::TripRecord>& trips) {
  double total = 0.0;
  for (const auto& t : trips) total += (1.0 - t.historical_action) * t.fare;
  return total;
}

double parse_budget(const std::string& s,
                    const std::vector<sim::TripRecord>& trips) {
  if (s == "historical") return historical_spend(trips);
  std::size_t used = 0;
  const double value = std::stod(s, &used);
  if (used != s.size()) {
    throw std::invalid_argument("budget must be a number or 'historical'");
  }
  if (value < 0.0) throw std::invalid_argument("budget must be >= 0");
  return value;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw std::runtime_error("cannot create output directory " + dir + ": " +
                             ec.message());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("short write on " + path);
}

void write_policy_file(const std::string& path, const std::string& name,
                       const std::unordered_map<std::uint64_t, double>& actions) {
  // Object keys sort lexicographically in the output; ordering is cosmetic,
  // determinism is what matters.
  nlohmann::json amap = nlohmann::json::object();
  for (const auto& [trip_id, a] : actions) {
    amap[std::to_string(trip_id)] = a;
  }
  nlohmann::json j{{"name", name}, {"actions", amap}};
  write_text(path, j.dump(2) + "\n");
}

report::Policy read_policy_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open policy file: " + path);
  nlohmann::json j;
  in >> j;
  report::Policy policy;
  for (const auto& [key, value] : j.at("actions").items()) {
    policy[std::stoull(key)] = value.get<double>();
  }
  return policy;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string config, out_dir, days = "weekday:5,weekend:2";
  std::uint64_t seed = 42;
};

int cmd_gen(const GenArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  ensure_dir(a.out_dir);
  auto man = manifest::start_manifest("gen");
  man.set_args(nlohmann::json{
      {"config", a.config}, {"out", a.out_dir}, {"days", a.days}, {"seed", a.seed}});
  man.add_input(a.config);

  const sim::CityModel city = sim::CityModel::load(a.config);
  const std::vector<sim::DayPlan> plan = parse_day_plan(a.days, a.seed);
  const std::vector<sim::TripRecord> trips = sim::generate_days(city, plan);

  const std::string trips_path = a.out_dir + "/trips.jsonl";
  sim::write_trips_jsonl(trips_path, trips);
  man.add_output(trips_path);
  man.wall_ms = elapsed_ms(t0);
  man.save(a.out_dir + "/gen.manifest.json");

  std::cout << "gen: " << trips.size() << " trips over " << plan.size()
            << " day(s) -> " << trips_path << "\n";
  return 0;
}

struct BuildMdpArgs {
  std::string trips, coding, out_dir;
  double gamma = 0.9;
  double alpha = 0.0;
  std::string reward_mode = "plain";
};

int cmd_build_mdp(const BuildMdpArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  ensure_dir(a.out_dir);
  auto man = manifest::start_manifest("build-mdp");
  man.set_args(nlohmann::json{{"trips", a.trips},
                              {"coding", a.coding},
                              {"out", a.out_dir},
                              {"gamma", a.gamma},
                              {"alpha", a.alpha},
                              {"reward_mode", a.reward_mode}});
  man.add_input(a.trips);
  man.add_input(a.coding);

  const auto trips = read_trips_or_die(a.trips);
  const geo::TileCoder coder(geo::CodingConfig::load(a.coding));
  const mdp::RewardMode mode = mdp::reward_mode_from_string(a.reward_mode);
  const mdp::ReplayBuffer buffer =
      mdp::build_transitions(trips, coder, a.gamma, mode, a.alpha);
  if (buffer.skipped_trips() > 0) {
    std::cerr << "warning: skipped " << buffer.skipped_trips()
              << " malformed trip(s)\n";
  }
  if (buffer.size() == 0) {
    throw std::runtime_error("no transitions were built from " + a.trips);
  }

  const std::string buffer_path = a.out_dir + "/buffer.bin";
  buffer.save(buffer_path);
  man.add_output(buffer_path);
  man.wall_ms = elapsed_ms(t0);
  man.save(a.out_dir + "/build-mdp.manifest.json");

  std::cout << "build-mdp: " << buffer.size() << " transitions -> "
            << buffer_path << "\n";
  return 0;
}

struct TrainArgs {
  std::string buffer, coding, config, out_dir, resume;
  int steps = -1;           // override config when >= 0
  std::int64_t seed = -1;   // override config when >= 0
};

int cmd_train(const TrainArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  ensure_dir(a.out_dir);
  auto man = manifest::start_manifest("train");
  man.set_args(nlohmann::json{{"buffer", a.buffer},
                              {"coding", a.coding},
                              {"config", a.config},
                              {"out", a.out_dir},
                              {"resume", a.resume},
                              {"steps", a.steps},
                              {"seed", a.seed}});
  man.add_input(a.buffer);
  man.add_input(a.config);

  train::TrainConfig cfg = train::TrainConfig::load(a.config);
  if (a.steps >= 0) cfg.steps = a.steps;
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  cfg.validate();

  mdp::ReplayBuffer buffer = mdp::ReplayBuffer::load(a.buffer);

  std::ofstream metrics(a.out_dir + "/metrics.csv", std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot write metrics.csv");

  const std::string ck_path = a.out_dir + "/checkpoint.bin";
  if (a.resume.empty()) {
    if (a.coding.empty()) {
      throw std::runtime_error("--coding is required unless resuming");
    }
    man.add_input(a.coding);
    const geo::TileCoder coder(geo::CodingConfig::load(a.coding));
    train::Trainer trainer(cfg, coder, std::move(buffer));
    trainer.run(&metrics);
    trainer.checkpoint().save(ck_path);
    std::cout << "train: " << trainer.step_count() << " step(s) -> " << ck_path
              << "\n";
  } else {
    man.add_input(a.resume);
    train::Checkpoint ck = train::Checkpoint::load(a.resume);
    ck.config.steps = cfg.steps;  // --steps / config give the total target
    const geo::TileCoder coder(ck.coding);
    train::Trainer trainer(ck, coder, std::move(buffer));
    const int remaining = std::max(0, cfg.steps - static_cast<int>(ck.step));
    trainer.run(&metrics, remaining);
    trainer.checkpoint().save(ck_path);
    std::cout << "train: resumed at " << ck.step << ", now "
              << trainer.step_count() << " step(s) -> " << ck_path << "\n";
  }
  metrics.close();

  man.add_output(ck_path);
  man.add_output(a.out_dir + "/metrics.csv");
  man.wall_ms = elapsed_ms(t0);
  man.save(a.out_dir + "/train.manifest.json");
  return 0;
}

struct SolveArgs {
  std::string checkpoint, trips, problem, out_dir;
  std::string budget = "historical";
  std::string method = "ip";          // ip | greedy
  std::string solver = "lagrangian";  // lagrangian | exact
  std::string variant = "standard";   // standard | symmetric
  std::string name;                   // policy name; defaults to the method
  double beta = 0.5;
};

alloc::AllocationSolution run_solver(const alloc::AllocationProblem& problem,
                                     const std::string& solver) {
  if (solver == "exact") return alloc::solve_exact(problem);
  if (solver == "lagrangian") return alloc::solve_lagrangian(problem);
  throw std::invalid_argument("unknown solver: " + solver);
}

int cmd_solve(const SolveArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  ensure_dir(a.out_dir);
  auto man = manifest::start_manifest("solve");
  man.set_args(nlohmann::json{{"checkpoint", a.checkpoint},
                              {"trips", a.trips},
                              {"problem", a.problem},
                              {"out", a.out_dir},
                              {"budget", a.budget},
                              {"method", a.method},
                              {"solver", a.solver},
                              {"variant", a.variant},
                              {"beta", a.beta}});

  // Raw mode: solve a standalone allocation problem file.
  if (!a.problem.empty()) {
    man.add_input(a.problem);
    alloc::AllocationProblem problem = alloc::AllocationProblem::load(a.problem);
    if (a.budget != "historical") problem.budget = parse_budget(a.budget, {});
    const alloc::AllocationSolution sol = run_solver(problem, a.solver);
    const std::string sol_path = a.out_dir + "/solution.json";
    write_text(sol_path, sol.to_json(problem).dump(2) + "\n");
    man.add_output(sol_path);
    man.wall_ms = elapsed_ms(t0);
    man.save(a.out_dir + "/solve.manifest.json");
    std::printf("solve: solver=%s n=%zu objective=%.6f spend=%.6f budget=%.6f gap=%.3g\n",
                sol.solver.c_str(), problem.size(), sol.objective, sol.spend,
                problem.budget, sol.gap_bound);
    return 0;
  }

  if (a.checkpoint.empty() || a.trips.empty()) {
    throw std::runtime_error("solve needs --checkpoint and --trips (or --problem)");
  }
  man.add_input(a.checkpoint);
  man.add_input(a.trips);

  const auto trips = read_trips_or_die(a.trips);
  const train::Checkpoint ck = train::Checkpoint::load(a.checkpoint);
  const geo::TileCoder coder(ck.coding);
  mdp::ContextStats stats = mdp::ContextStats::from_trips(trips, coder);
  stats.set_moments(ck.context_mean, ck.context_stddev);

  std::size_t skipped = 0;
  const std::vector<alloc::TripEval> evals =
      train::make_trip_evals(trips, coder, stats, ck.v, &skipped);
  if (skipped > 0) {
    std::cerr << "warning: " << skipped
              << " trip(s) outside the coding box were left undiscounted\n";
  }
  if (evals.empty()) throw std::runtime_error("no trips to assign");

  const double budget = parse_budget(a.budget, trips);
  const alloc::AllocationProblem problem = alloc::build_problem(
      evals, a.beta, ck.config.gamma, budget, a.variant == "symmetric");

  alloc::AllocationSolution sol;
  if (a.method == "ip") {
    sol = run_solver(problem, a.solver);
  } else if (a.method == "greedy") {
    // Per-trip argmax of the action-value head, clamped back to the budget.
    std::unordered_map<std::uint64_t, const sim::TripRecord*> by_id;
    for (const auto& t : trips) by_id.emplace(t.trip_id, &t);
    std::vector<int> choice;
    choice.reserve(evals.size());
    std::array<double, sim::kNumActions> q{};
    for (const auto& e : evals) {
      const sim::TripRecord& t = *by_id.at(e.trip_id);
      const mdp::SpatioTemporalState s = mdp::make_state(
          t.origin, t.request_minute / geo::kMinutesPerSlot, t.day_kind, coder,
          stats);
      ck.q.forward(coder.activate(s.loc, s.slot), s.context.data(), q.data());
      int best = 0;
      for (int k = 1; k < sim::kNumActions; ++k) {
        if (q[static_cast<std::size_t>(k)] > q[static_cast<std::size_t>(best)]) {
          best = k;
        }
      }
      choice.push_back(best);
    }
    sol = alloc::repair_assignment(problem, std::move(choice));
  } else {
    throw std::invalid_argument("unknown method: " + a.method);
  }

  const std::string name = a.name.empty() ? a.method : a.name;
  const std::string policy_path = a.out_dir + "/policy.json";
  write_policy_file(policy_path, name, alloc::assignment_to_policy(sol, problem));
  const std::string sol_path = a.out_dir + "/solution.json";
  write_text(sol_path, sol.to_json(problem).dump(2) + "\n");
  man.add_output(policy_path);
  man.add_output(sol_path);
  man.wall_ms = elapsed_ms(t0);
  man.save(a.out_dir + "/solve.manifest.json");

  std::printf("solve: method=%s solver=%s n=%zu objective=%.6f spend=%.6f "
              "budget=%.6f gap=%.3g\n",
              a.method.c_str(), sol.solver.c_str(), problem.size(),
              sol.objective, sol.spend, budget, sol.gap_bound);
  return 0;
}

struct EvalArgs {
  std::string trips, city, coding, checkpoint, out_dir;
  std::string budget = "historical";
  std::string baseline = "historical";
  std::vector<std::string> policies;  // NAME=PATH
};

int cmd_eval(const EvalArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  ensure_dir(a.out_dir);
  auto man = manifest::start_manifest("eval");
  man.set_args(nlohmann::json{{"trips", a.trips},
                              {"city", a.city},
                              {"coding", a.coding},
                              {"checkpoint", a.checkpoint},
                              {"out", a.out_dir},
                              {"budget", a.budget},
                              {"baseline", a.baseline},
                              {"policies", a.policies}});
  man.add_input(a.trips);
  man.add_input(a.city);
  man.add_input(a.coding);

  const auto trips = read_trips_or_die(a.trips);
  const sim::CityModel city = sim::CityModel::load(a.city);
  const geo::TileCoder coder(geo::CodingConfig::load(a.coding));
  const double budget = parse_budget(a.budget, trips);

  std::vector<report::NamedPolicy> policies;
  report::Policy historical;
  historical.reserve(trips.size());
  for (const auto& t : trips) historical.emplace(t.trip_id, t.historical_action);
  policies.push_back(report::NamedPolicy{"historical", std::move(historical)});

  for (const std::string& p : a.policies) {
    const std::size_t eq = p.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("--policy entries look like NAME=PATH");
    }
    const std::string name = p.substr(0, eq);
    const std::string path = p.substr(eq + 1);
    if (name == "historical") {
      throw std::invalid_argument("'historical' is the built-in baseline name");
    }
    man.add_input(path);
    policies.push_back(report::NamedPolicy{name, read_policy_file(path)});
  }

  const report::ComparisonReport rep =
      report::compare_policies(trips, policies, budget, city, coder, a.baseline);

  const std::string json_path = a.out_dir + "/report.json";
  const std::string md_path = a.out_dir + "/report.md";
  write_text(json_path, rep.to_json().dump(2) + "\n");
  write_text(md_path, rep.to_markdown());

  // Per-cell detail for the last non-baseline policy (or the baseline when
  // it is alone), with the learned state value when a checkpoint is given.
  const report::NamedPolicy& detail = policies.back();
  const report::CellSlotMap smd = report::supply_minus_demand(trips, city, coder);
  const report::CellSlotMap d_map = report::dest_delta_ecr(
      trips, report::actions_for(trips, detail.actions), coder);
  const std::string cells_path = a.out_dir + "/cells.csv";
  if (!a.checkpoint.empty()) {
    man.add_input(a.checkpoint);
    const train::Checkpoint ck = train::Checkpoint::load(a.checkpoint);
    const geo::TileCoder ck_coder(ck.coding);
    mdp::ContextStats stats = mdp::ContextStats::from_trips(trips, ck_coder);
    stats.set_moments(ck.context_mean, ck.context_stddev);
    report::write_cell_csv(
        cells_path, smd, d_map, coder,
        [&](std::int64_t cell_id, int slot, geo::DayKind kind) {
          const geo::LatLon center =
              ck_coder.grids().grid(0).cell_center(geo::HexGrid::unpack(cell_id));
          try {
            const mdp::SpatioTemporalState s =
                mdp::make_state(center, slot, kind, ck_coder, stats);
            double v = 0.0;
            ck.v.forward(ck_coder.activate(s.loc, s.slot), s.context.data(), &v);
            return v;
          } catch (const std::out_of_range&) {
            return 0.0;  // cell center outside the checkpoint's box
          }
        });
  } else {
    report::write_cell_csv(cells_path, smd, d_map, coder);
  }

  man.add_output(json_path);
  man.add_output(md_path);
  man.add_output(cells_path);
  man.wall_ms = elapsed_ms(t0);
  man.save(a.out_dir + "/eval.manifest.json");

  for (const auto& r : rep.policies) {
    std::printf("eval: %-12s gmv=%.4f (%+.2f%%) spend=%.4f/%.4f%s "
                "short_supply_d=%.4f (x%.3f)\n",
                r.name.c_str(), r.expected_gmv, r.gmv_delta_pct, r.spend,
                r.budget, r.budget_violated ? " OVER" : "",
                r.short_supply_d_sum, r.short_supply_ratio);
  }
  if (rep.any_budget_violation) {
    std::cerr << "error: at least one policy exceeded the budget\n";
    return 3;
  }
  return 0;
}

struct ReportArgs {
  std::string in, out;
};

int cmd_report(const ReportArgs& a) {
  std::ifstream in(a.in);
  if (!in) throw std::runtime_error("cannot open report: " + a.in);
  nlohmann::json j;
  in >> j;
  const report::ComparisonReport rep = report::ComparisonReport::from_json(j);
  write_text(a.out, rep.to_markdown());
  std::cout << "report: " << a.in << " -> " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatio-temporal value learning and budgeted discount allocation"};
  app.set_version_flag("--version", "fareflow 1.0.0");
  app.require_subcommand(1);

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen", "Generate a synthetic trip log");
  c_gen->add_option("--config", gen.config, "City model JSON")
      ->required()->check(CLI::ExistingFile);
  c_gen->add_option("--out", gen.out_dir, "Output directory")->required();
  c_gen->add_option("--days", gen.days, "Day plan, e.g. weekday:5,weekend:2");
  c_gen->add_option("--seed", gen.seed, "Master seed (per-day seeds fork from it)");

  BuildMdpArgs bm;
  auto* c_bm = app.add_subcommand("build-mdp", "Build a replay buffer from trips");
  c_bm->add_option("--trips", bm.trips, "Trip log JSONL")
      ->required()->check(CLI::ExistingFile);
  c_bm->add_option("--coding", bm.coding, "Tile coding config JSON")
      ->required()->check(CLI::ExistingFile);
  c_bm->add_option("--out", bm.out_dir, "Output directory")->required();
  c_bm->add_option("--gamma", bm.gamma, "Discount factor");
  c_bm->add_option("--alpha", bm.alpha, "Penalty coefficient (penalized mode)");
  c_bm->add_option("--reward-mode", bm.reward_mode,
                   "plain|penalized (eq1|eq7 accepted)");

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train the value networks");
  c_tr->add_option("--buffer", tr.buffer, "Replay buffer file")
      ->required()->check(CLI::ExistingFile);
  c_tr->add_option("--coding", tr.coding, "Tile coding config JSON")
      ->check(CLI::ExistingFile);
  c_tr->add_option("--config", tr.config, "Train config JSON")
      ->required()->check(CLI::ExistingFile);
  c_tr->add_option("--out", tr.out_dir, "Output directory")->required();
  c_tr->add_option("--resume", tr.resume, "Checkpoint to resume from")
      ->check(CLI::ExistingFile);
  c_tr->add_option("--steps", tr.steps, "Total step target (overrides config)");
  c_tr->add_option("--seed", tr.seed, "Seed override");

  SolveArgs sv;
  auto* c_sv = app.add_subcommand("solve", "Assign discounts under a budget");
  c_sv->add_option("--checkpoint", sv.checkpoint, "Trained checkpoint")
      ->check(CLI::ExistingFile);
  c_sv->add_option("--trips", sv.trips, "Trip log JSONL")
      ->check(CLI::ExistingFile);
  c_sv->add_option("--problem", sv.problem,
                   "Standalone allocation problem JSON (raw mode)")
      ->check(CLI::ExistingFile);
  c_sv->add_option("--out", sv.out_dir, "Output directory")->required();
  c_sv->add_option("--budget", sv.budget, "Number or 'historical'");
  c_sv->add_option("--beta", sv.beta, "Immediate-fare weight in [0,1]");
  c_sv->add_option("--method", sv.method, "ip|greedy");
  c_sv->add_option("--solver", sv.solver, "lagrangian|exact");
  c_sv->add_option("--value-variant", sv.variant, "standard|symmetric");
  c_sv->add_option("--name", sv.name, "Policy name in the output file");

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Compare policies on a trip log");
  c_ev->add_option("--trips", ev.trips, "Trip log JSONL")
      ->required()->check(CLI::ExistingFile);
  c_ev->add_option("--city", ev.city, "City model JSON")
      ->required()->check(CLI::ExistingFile);
  c_ev->add_option("--coding", ev.coding, "Tile coding config JSON")
      ->required()->check(CLI::ExistingFile);
  c_ev->add_option("--checkpoint", ev.checkpoint,
                   "Checkpoint for the cell CSV value column")
      ->check(CLI::ExistingFile);
  c_ev->add_option("--out", ev.out_dir, "Output directory")->required();
  c_ev->add_option("--budget", ev.budget, "Number or 'historical'");
  c_ev->add_option("--baseline", ev.baseline, "Baseline policy name");
  c_ev->add_option("--policy", ev.policies, "NAME=PATH, repeatable");

  ReportArgs rp;
  auto* c_rp = app.add_subcommand("report", "Render a report JSON as Markdown");
  c_rp->add_option("--in", rp.in, "report.json")
      ->required()->check(CLI::ExistingFile);
  c_rp->add_option("--out", rp.out, "Markdown output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (c_gen->parsed()) return cmd_gen(gen);
    if (c_bm->parsed()) return cmd_build_mdp(bm);
    if (c_tr->parsed()) return cmd_train(tr);
    if (c_sv->parsed()) return cmd_solve(sv);
    if (c_ev->parsed()) return cmd_eval(ev);
    if (c_rp->parsed()) return cmd_report(rp);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;  // unreachable: require_subcommand(1)
}
