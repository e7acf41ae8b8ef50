#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fareflow/sim.hpp"

namespace fareflow::alloc {

// Per-trip inputs to the value/cost matrices: what the scoring formula needs
// beyond the learned state values.
struct TripEval {
  std::uint64_t trip_id = 0;
  double fare = 0.0;
  double cr = 0.0;
  std::array<double, sim::kNumActions> delta_ecr{};  // per menu action
  double v_s = 0.0;       // value of the origin state
  double v_s_next = 0.0;  // value of the destination state
  bool done = false;      // terminal: no value flows through s_next
};

// One multiple-choice knapsack instance: pick exactly one action per trip,
// total cost within budget, total value maximized.
struct AllocationProblem {
  std::vector<std::array<double, sim::kNumActions>> value;  // A, N x 6
  std::vector<std::array<double, sim::kNumActions>> cost;   // C, N x 6
  double budget = 0.0;
  std::vector<std::uint64_t> trip_ids;

  std::size_t size() const { return value.size(); }
  // Throws std::invalid_argument on shape mismatch, non-finite entries,
  // negative budget, or a row without a zero-cost option.
  void validate() const;

  nlohmann::json to_json() const;
  static AllocationProblem from_json(const nlohmann::json& j);
  static AllocationProblem load(const std::string& path);
};

struct AllocationSolution {
  std::vector<int> choice;  // chosen action index per trip (one-hot row)
  double objective = 0.0;
  double spend = 0.0;
  std::string solver;      // "enumeration" | "dp" | "lagrangian"
  double gap_bound = 0.0;  // objective is within gap_bound of the optimum

  nlohmann::json to_json(const AllocationProblem& problem) const;
  static AllocationSolution from_json(const nlohmann::json& j);
};

// Value matrix row: delta_ecr * cr * (beta*fare + (1-beta)*gamma*(1-done)*
// v_next - v_s). The no-discount column is exactly zero (delta_ecr = 0).
// The symmetric variant groups v_s inside the (1-beta) weight instead:
// beta*fare + (1-beta)*(gamma*(1-done)*v_next - v_s).
std::array<double, sim::kNumActions> value_row(const TripEval& trip, double beta,
                                               double gamma,
                                               bool symmetric_variant = false);
// Cost matrix row: (1 - a) * fare per menu action.
std::array<double, sim::kNumActions> cost_row(double fare);

AllocationProblem build_problem(const std::vector<TripEval>& trips, double beta,
                                double gamma, double budget,
                                bool symmetric_variant = false);

// Exact solver: full enumeration for N <= 8, otherwise a budget-discretized
// dynamic program with costs rounded *up* to multiples of cost_quantum (so
// every returned solution is feasible under the true costs). The reported
// gap bound accounts for the discretization. Throws std::invalid_argument on
// negative budget and std::runtime_error if the DP table would exceed the
// memory cap.
AllocationSolution solve_exact(const AllocationProblem& problem,
                               double cost_quantum = 0.01);

// Scalable solver: bisection on the budget multiplier with per-row argmax of
// (A - lambda*C), a greedy repair pass back to feasibility, and a greedy
// budget-filling pass. gap_bound is the weak-duality bound.
AllocationSolution solve_lagrangian(const AllocationProblem& problem,
                                    double lambda_tolerance = 1e-9);

// Clamps an arbitrary assignment to the budget with the same downgrade rule
// the lagrangian solver uses (least value lost per cost saved); no upgrades
// are added afterwards. gap_bound is -1: no optimality claim is made.
AllocationSolution repair_assignment(const AllocationProblem& problem,
                                     std::vector<int> choice);

// choice -> {trip_id: menu action}; throws on duplicate trip ids.
std::unordered_map<std::uint64_t, double> assignment_to_policy(
    const AllocationSolution& solution, const AllocationProblem& problem);

}  // namespace fareflow::alloc
