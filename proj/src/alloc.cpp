#include "fareflow/alloc.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fareflow/kernels.hpp"

namespace fareflow::alloc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// DP table cap: beyond this, the caller must coarsen the cost quantum.
constexpr std::size_t kDpMemoryCapBytes = 2ull << 30;

double row_sum_objective(const AllocationProblem& p,
                         const std::vector<int>& choice) {
  double obj = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    obj += p.value[i][static_cast<std::size_t>(choice[i])];
  }
  return obj;
}

double row_sum_spend(const AllocationProblem& p, const std::vector<int>& choice) {
  double spend = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    spend += p.cost[i][static_cast<std::size_t>(choice[i])];
  }
  return spend;
}

AllocationSolution finish(const AllocationProblem& p, std::vector<int> choice,
                          std::string solver, double gap_bound) {
  AllocationSolution s;
  s.objective = row_sum_objective(p, choice);
  s.spend = row_sum_spend(p, choice);
  s.choice = std::move(choice);
  s.solver = std::move(solver);
  s.gap_bound = gap_bound;
  return s;
}

// Greedy repair: while over budget, apply the cheapest downgrade measured as
// value lost per unit of cost saved. Upgrades that both gain value and save
// cost rank first automatically (negative ratio).
void repair_to_budget(const AllocationProblem& p, std::vector<int>& choice,
                      double& spend) {
  while (spend > p.budget) {
    double best_ratio = std::numeric_limits<double>::infinity();
    std::size_t best_i = p.size();
    int best_k = -1;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto cur = static_cast<std::size_t>(choice[i]);
      for (int k = 0; k < sim::kNumActions; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        const double dc = p.cost[i][cur] - p.cost[i][kk];  // cost saved
        if (!(dc > 0.0)) continue;
        const double ratio = (p.value[i][cur] - p.value[i][kk]) / dc;
        if (ratio < best_ratio) {
          best_ratio = ratio;
          best_i = i;
          best_k = k;
        }
      }
    }
    if (best_k < 0) break;  // nothing left to downgrade (spend already 0)
    spend -= p.cost[best_i][static_cast<std::size_t>(choice[best_i])] -
             p.cost[best_i][static_cast<std::size_t>(best_k)];
    choice[best_i] = best_k;
  }
  // Recompute exactly: the incremental spend above accumulates rounding.
  spend = row_sum_spend(p, choice);
  while (spend > p.budget) {
    // Numeric corner: incremental accounting said feasible but the exact sum
    // is not. Drop the smallest positive cost remaining.
    std::size_t best_i = p.size();
    int best_k = -1;
    double best_dc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto cur = static_cast<std::size_t>(choice[i]);
      for (int k = 0; k < sim::kNumActions; ++k) {
        const double dc = p.cost[i][cur] - p.cost[i][static_cast<std::size_t>(k)];
        if (dc > best_dc) {
          best_dc = dc;
          best_i = i;
          best_k = k;
        }
      }
    }
    if (best_k < 0) break;
    choice[best_i] = best_k;
    spend = row_sum_spend(p, choice);
  }
}

// Greedy fill: spend leftover budget on the upgrades with the best value
// gained per cost added. Free upgrades (same cost, more value) apply first.
void fill_budget(const AllocationProblem& p, std::vector<int>& choice,
                 double& spend) {
  for (;;) {
    const double remaining = p.budget - spend;
    double best_ratio = 0.0;
    std::size_t best_i = p.size();
    int best_k = -1;
    bool best_free = false;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto cur = static_cast<std::size_t>(choice[i]);
      for (int k = 0; k < sim::kNumActions; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        const double dv = p.value[i][kk] - p.value[i][cur];
        if (!(dv > 0.0)) continue;
        const double dc = p.cost[i][kk] - p.cost[i][cur];
        if (dc > remaining) continue;
        if (dc <= 0.0) {
          if (!best_free || dv > best_ratio) {
            best_free = true;
            best_ratio = dv;
            best_i = i;
            best_k = k;
          }
          continue;
        }
        if (best_free) continue;
        const double ratio = dv / dc;
        if (ratio > best_ratio) {
          best_ratio = ratio;
          best_i = i;
          best_k = k;
        }
      }
    }
    if (best_k < 0) return;
    const auto cur = static_cast<std::size_t>(choice[best_i]);
    choice[best_i] = best_k;
    // Guard the exact invariant after float accumulation.
    const double exact = row_sum_spend(p, choice);
    if (exact > p.budget) {
      choice[best_i] = static_cast<int>(cur);
      spend = row_sum_spend(p, choice);
      return;
    }
    spend = exact;
  }
}

}  // namespace

void AllocationProblem::validate() const {
  if (value.size() != cost.size() || value.size() != trip_ids.size()) {
    throw std::invalid_argument("allocation problem shape mismatch");
  }
  if (budget < 0.0 || !std::isfinite(budget)) {
    throw std::invalid_argument("allocation budget must be >= 0");
  }
  for (std::size_t i = 0; i < value.size(); ++i) {
    bool has_zero_cost = false;
    for (int k = 0; k < sim::kNumActions; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      if (!std::isfinite(value[i][kk]) || !std::isfinite(cost[i][kk])) {
        throw std::invalid_argument("allocation matrices must be finite");
      }
      if (cost[i][kk] < 0.0) {
        throw std::invalid_argument("allocation costs must be >= 0");
      }
      if (cost[i][kk] == 0.0) has_zero_cost = true;
    }
    if (!has_zero_cost) {
      throw std::invalid_argument(
          "every trip needs a zero-cost option (the no-discount column)");
    }
  }
}

std::array<double, sim::kNumActions> value_row(const TripEval& trip, double beta,
                                               double gamma,
                                               bool symmetric_variant) {
  const double flow = trip.done ? 0.0 : gamma * trip.v_s_next;
  const double core = symmetric_variant
                          ? beta * trip.fare + (1.0 - beta) * (flow - trip.v_s)
                          : beta * trip.fare + (1.0 - beta) * flow - trip.v_s;
  std::array<double, sim::kNumActions> row{};
  for (int k = 0; k < sim::kNumActions; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    row[kk] = trip.delta_ecr[kk] * trip.cr * core;
  }
  return row;
}

std::array<double, sim::kNumActions> cost_row(double fare) {
  std::array<double, sim::kNumActions> row{};
  for (int k = 0; k < sim::kNumActions; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    row[kk] = (1.0 - sim::kActionMenu[kk]) * fare;
  }
  row[sim::kNoDiscountIndex] = 0.0;  // exact zero, no residual rounding
  return row;
}

AllocationProblem build_problem(const std::vector<TripEval>& trips, double beta,
                                double gamma, double budget,
                                bool symmetric_variant) {
  if (beta < 0.0 || beta > 1.0) {
    throw std::invalid_argument("beta must be in [0, 1]");
  }
  AllocationProblem p;
  p.budget = budget;
  p.value.reserve(trips.size());
  p.cost.reserve(trips.size());
  p.trip_ids.reserve(trips.size());
  for (const TripEval& t : trips) {
    p.value.push_back(value_row(t, beta, gamma, symmetric_variant));
    p.cost.push_back(cost_row(t.fare));
    p.trip_ids.push_back(t.trip_id);
  }
  p.validate();
  return p;
}

namespace {

AllocationSolution solve_enumeration(const AllocationProblem& p) {
  const std::size_t n = p.size();
  std::uint64_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= sim::kNumActions;

  std::vector<int> best(n, sim::kNoDiscountIndex);
  double best_obj = kNegInf;
  std::vector<int> digits(n, 0);
  for (std::uint64_t code = 0; code < total; ++code) {
    double obj = 0.0;
    double spend = 0.0;
    std::uint64_t c = code;
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(c % sim::kNumActions);
      c /= sim::kNumActions;
      obj += p.value[i][k];
      spend += p.cost[i][k];
      digits[i] = static_cast<int>(k);
    }
    if (spend <= p.budget && obj > best_obj) {
      best_obj = obj;
      best = digits;
    }
  }
  return finish(p, std::move(best), "enumeration", 0.0);
}

AllocationSolution solve_dp(const AllocationProblem& p, double eps) {
  const std::size_t n = p.size();
  // Costs round up so a unit-feasible plan is always currency-feasible; the
  // budget rounds down for the same reason.
  std::vector<std::array<std::int64_t, sim::kNumActions>> units(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < sim::kNumActions; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      auto u = static_cast<std::int64_t>(std::ceil(p.cost[i][kk] / eps));
      if (u < 0) u = 0;
      while (static_cast<double>(u) * eps < p.cost[i][kk]) ++u;
      units[i][kk] = u;
    }
  }
  const auto budget_units = static_cast<std::int64_t>(std::floor(p.budget / eps));
  // The optimum under true costs fits within budget_units + n + 1 units, so
  // the dp value there bounds the discretization loss.
  const auto width = static_cast<std::size_t>(budget_units) +
                     static_cast<std::size_t>(n) + 2;
  if (width * n > kDpMemoryCapBytes) {
    throw std::runtime_error(
        "allocation dp table exceeds the memory cap; increase the cost "
        "quantum or use the lagrangian solver");
  }

  std::vector<double> dp_prev(width, 0.0), dp_next(width, kNegInf);
  std::vector<std::uint8_t> choices(n * width);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(dp_next.begin(), dp_next.end(), kNegInf);
    for (int k = 0; k < sim::kNumActions; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      const auto shift = static_cast<std::size_t>(units[i][kk]);
      kernels::shift_add_max(dp_next.data(), dp_prev.data(), width, shift,
                             p.value[i][kk]);
    }
    // Re-derive which action produced each cell; the arithmetic matches the
    // kernel exactly (one addition), so equality comparison is reliable.
    std::uint8_t* row = choices.data() + i * width;
    for (std::size_t b = 0; b < width; ++b) {
      for (int k = 0; k < sim::kNumActions; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        const auto shift = static_cast<std::size_t>(units[i][kk]);
        if (shift > b) continue;
        if (dp_prev[b - shift] + p.value[i][kk] == dp_next[b]) {
          row[b] = static_cast<std::uint8_t>(k);
          break;
        }
      }
    }
    std::swap(dp_prev, dp_next);
  }

  const auto main_b = static_cast<std::size_t>(budget_units);
  const double gap_bound = dp_prev[width - 1] - dp_prev[main_b];

  std::vector<int> choice(n, sim::kNoDiscountIndex);
  std::size_t b = main_b;
  for (std::size_t i = n; i-- > 0;) {
    const int k = choices[i * width + b];
    choice[i] = k;
    b -= static_cast<std::size_t>(units[i][static_cast<std::size_t>(k)]);
  }

  AllocationSolution sol = finish(p, std::move(choice), "dp",
                                  std::max(0.0, gap_bound));
  if (sol.spend > p.budget) {
    // Unreachable in practice: the rounded units over-cover the true costs.
    repair_to_budget(p, sol.choice, sol.spend);
    sol.objective = row_sum_objective(p, sol.choice);
  }
  return sol;
}

}  // namespace

AllocationSolution solve_exact(const AllocationProblem& problem,
                               double cost_quantum) {
  problem.validate();
  if (!(cost_quantum > 0.0)) {
    throw std::invalid_argument("cost quantum must be > 0");
  }
  if (problem.size() == 0) return finish(problem, {}, "enumeration", 0.0);
  if (problem.size() <= 8) return solve_enumeration(problem);
  return solve_dp(problem, cost_quantum);
}

namespace {

struct LagrangeEval {
  std::vector<int> choice;
  double spend = 0.0;
  double dual_bound = 0.0;  // sum of row maxima + lambda * budget
};

LagrangeEval eval_lambda(const AllocationProblem& p, double lambda) {
  LagrangeEval e;
  e.choice.resize(p.size());
  double score_sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    int best_k = 0;
    double best_score = p.value[i][0] - lambda * p.cost[i][0];
    for (int k = 1; k < sim::kNumActions; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      const double score = p.value[i][kk] - lambda * p.cost[i][kk];
      if (score > best_score) {  // ties keep the lowest action index
        best_score = score;
        best_k = k;
      }
    }
    e.choice[i] = best_k;
    score_sum += best_score;
    e.spend += p.cost[i][static_cast<std::size_t>(best_k)];
  }
  e.dual_bound = score_sum + lambda * p.budget;
  return e;
}

}  // namespace

AllocationSolution solve_lagrangian(const AllocationProblem& problem,
                                    double lambda_tolerance) {
  problem.validate();
  if (problem.size() == 0) return finish(problem, {}, "lagrangian", 0.0);

  LagrangeEval at_zero = eval_lambda(problem, 0.0);
  double best_bound = at_zero.dual_bound;
  if (at_zero.spend <= problem.budget) {
    // Unconstrained row maxima already fit: provably optimal.
    return finish(problem, std::move(at_zero.choice), "lagrangian", 0.0);
  }

  // Find a multiplier with a feasible selection, then bisect.
  double lo = 0.0;
  double hi = 1.0;
  LagrangeEval at_hi = eval_lambda(problem, hi);
  best_bound = std::min(best_bound, at_hi.dual_bound);
  for (int i = 0; i < 80 && at_hi.spend > problem.budget; ++i) {
    lo = hi;
    hi *= 2.0;
    at_hi = eval_lambda(problem, hi);
    best_bound = std::min(best_bound, at_hi.dual_bound);
  }

  LagrangeEval at_lo = eval_lambda(problem, lo);
  best_bound = std::min(best_bound, at_lo.dual_bound);
  for (int iter = 0; iter < 200 && hi - lo > lambda_tolerance * std::max(1.0, hi);
       ++iter) {
    const double mid = 0.5 * (lo + hi);
    LagrangeEval at_mid = eval_lambda(problem, mid);
    best_bound = std::min(best_bound, at_mid.dual_bound);
    if (at_mid.spend <= problem.budget) {
      hi = mid;
      at_hi = std::move(at_mid);
    } else {
      lo = mid;
      at_lo = std::move(at_mid);
    }
  }

  // Candidate 1: the feasible side of the bisection, topped up.
  std::vector<int> cand_a = at_hi.choice;
  double spend_a = row_sum_spend(problem, cand_a);
  fill_budget(problem, cand_a, spend_a);

  // Candidate 2: the infeasible side repaired back to budget, topped up.
  std::vector<int> cand_b = at_lo.choice;
  double spend_b = row_sum_spend(problem, cand_b);
  repair_to_budget(problem, cand_b, spend_b);
  fill_budget(problem, cand_b, spend_b);

  const double obj_a = row_sum_objective(problem, cand_a);
  const double obj_b = row_sum_objective(problem, cand_b);
  std::vector<int> choice = obj_b > obj_a ? std::move(cand_b) : std::move(cand_a);

  AllocationSolution sol = finish(problem, std::move(choice), "lagrangian", 0.0);
  // Weak duality: best_bound >= optimum >= objective. Sub-ulp negatives are
  // float accumulation noise, not a real violation.
  double gap = best_bound - sol.objective;
  if (gap < 0.0 && gap > -1e-6 * std::max(1.0, std::abs(best_bound))) gap = 0.0;
  sol.gap_bound = gap;
  return sol;
}

AllocationSolution repair_assignment(const AllocationProblem& problem,
                                     std::vector<int> choice) {
  problem.validate();
  if (choice.size() != problem.size()) {
    throw std::invalid_argument("assignment does not match problem size");
  }
  for (int k : choice) {
    if (k < 0 || k >= sim::kNumActions) {
      throw std::invalid_argument("assignment has an out-of-menu action index");
    }
  }
  double spend = row_sum_spend(problem, choice);
  repair_to_budget(problem, choice, spend);
  return finish(problem, std::move(choice), "repair", -1.0);
}

std::unordered_map<std::uint64_t, double> assignment_to_policy(
    const AllocationSolution& solution, const AllocationProblem& problem) {
  if (solution.choice.size() != problem.size()) {
    throw std::invalid_argument("solution does not match problem size");
  }
  std::unordered_map<std::uint64_t, double> out;
  out.reserve(problem.size());
  for (std::size_t i = 0; i < problem.size(); ++i) {
    const int k = solution.choice[i];
    if (k < 0 || k >= sim::kNumActions) {
      throw std::invalid_argument("solution has an out-of-menu action index");
    }
    const auto [it, inserted] = out.emplace(
        problem.trip_ids[i], sim::kActionMenu[static_cast<std::size_t>(k)]);
    if (!inserted) {
      throw std::invalid_argument("duplicate trip id in allocation problem");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON round trip

nlohmann::json AllocationProblem::to_json() const {
  auto matrix = [](const std::vector<std::array<double, sim::kNumActions>>& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : m) {
      rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return rows;
  };
  return nlohmann::json{{"budget", budget},
                        {"trip_ids", trip_ids},
                        {"value", matrix(value)},
                        {"cost", matrix(cost)}};
}

AllocationProblem AllocationProblem::from_json(const nlohmann::json& j) {
  AllocationProblem p;
  p.budget = j.at("budget").get<double>();
  p.trip_ids = j.at("trip_ids").get<std::vector<std::uint64_t>>();
  auto matrix = [](const nlohmann::json& rows) {
    std::vector<std::array<double, sim::kNumActions>> m;
    for (const auto& r : rows) {
      const auto v = r.get<std::vector<double>>();
      if (v.size() != sim::kNumActions) {
        throw std::invalid_argument("allocation matrix row must have 6 entries");
      }
      std::array<double, sim::kNumActions> row{};
      std::copy(v.begin(), v.end(), row.begin());
      m.push_back(row);
    }
    return m;
  };
  p.value = matrix(j.at("value"));
  p.cost = matrix(j.at("cost"));
  p.validate();
  return p;
}

AllocationProblem AllocationProblem::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open allocation problem: " + path);
  nlohmann::json j;
  in >> j;
  return from_json(j);
}

nlohmann::json AllocationSolution::to_json(const AllocationProblem& problem) const {
  std::vector<double> actions;
  actions.reserve(choice.size());
  for (int k : choice) {
    actions.push_back(sim::kActionMenu[static_cast<std::size_t>(k)]);
  }
  return nlohmann::json{{"solver", solver},       {"objective", objective},
                        {"spend", spend},         {"budget", problem.budget},
                        {"gap_bound", gap_bound}, {"choice", choice},
                        {"actions", actions},     {"trip_ids", problem.trip_ids}};
}

AllocationSolution AllocationSolution::from_json(const nlohmann::json& j) {
  AllocationSolution s;
  s.solver = j.at("solver").get<std::string>();
  s.objective = j.at("objective").get<double>();
  s.spend = j.at("spend").get<double>();
  s.gap_bound = j.at("gap_bound").get<double>();
  s.choice = j.at("choice").get<std::vector<int>>();
  return s;
}

}  // namespace fareflow::alloc
