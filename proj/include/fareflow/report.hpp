#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fareflow/sim.hpp"
#include "fareflow/tilecoding.hpp"

namespace fareflow::report {

// Aggregation key of the per-cell maps: finest-level hex cell and semi-hour
// slot, kept apart by day kind. Ordered so merged outputs are deterministic.
struct CellSlotKey {
  std::uint8_t day_kind = 0;
  std::int64_t cell_id = 0;
  std::int16_t slot = 0;
  auto operator<=>(const CellSlotKey&) const = default;
};

using CellSlotMap = std::map<CellSlotKey, double>;

// Per-trip action assignment. Trips absent from the map fall back to the
// no-discount action.
using Policy = std::unordered_map<std::uint64_t, double>;

// Aligns a policy with a trip vector; unmapped trips get `fallback`.
std::vector<double> actions_for(const std::vector<sim::TripRecord>& trips,
                                const Policy& policy, double fallback = 1.0);

// Demand-shift inflow per destination cell and arrival slot: the sum of
// delta_ecr under the assigned actions over all trips arriving there. Trips
// whose destination leaves the bounding box are skipped.
CellSlotMap dest_delta_ecr(const std::vector<sim::TripRecord>& trips,
                           const std::vector<double>& actions,
                           const geo::TileCoder& coder);

// Idle-driver supply minus per-day average inquiry demand, per origin cell
// and slot. Supply: the zone's configured idle-driver rate, split evenly
// over the cells whose center lies within the zone disc (nearest zone wins
// on overlap). Only keys with observed demand appear; absent keys cannot be
// in short supply because supply is nonnegative.
CellSlotMap supply_minus_demand(const std::vector<sim::TripRecord>& trips,
                                const sim::CityModel& city,
                                const geo::TileCoder& coder);

// Sum of inflow over the keys in short supply (supply minus demand < 0),
// for a policy and the baseline it is judged against.
struct ShortSupplySummary {
  double policy_sum = 0.0;
  double baseline_sum = 0.0;
  double ratio = 1.0;  // policy_sum / baseline_sum, guarded near zero
};
ShortSupplySummary short_supply(const CellSlotMap& policy_d,
                                const CellSlotMap& baseline_d,
                                const CellSlotMap& smd);

struct NamedPolicy {
  std::string name;
  Policy actions;
};

struct PolicyEvalResult {
  std::string name;
  double expected_gmv = 0.0;
  double spend = 0.0;  // sum of (1 - a) * fare, exact
  double budget = 0.0;
  bool budget_violated = false;
  std::array<std::uint64_t, sim::kNumActions> action_counts{};
  std::array<std::array<std::uint64_t, sim::kNumActions>, 10>
      decile_action_counts{};
  double short_supply_d_sum = 0.0;
  // Deltas against the designated baseline; identity for the baseline row.
  double gmv_delta_pct = 0.0;
  double short_supply_ratio = 1.0;
};

struct ComparisonReport {
  std::string baseline;
  double budget = 0.0;
  std::size_t num_trips = 0;
  // Edges of the evaluation fare deciles; band d covers
  // [edges[d], edges[d+1]) with the last band closed on the right.
  std::array<double, 11> fare_decile_edges{};
  std::vector<PolicyEvalResult> policies;  // baseline row first
  bool any_budget_violation = false;

  nlohmann::json to_json() const;
  static ComparisonReport from_json(const nlohmann::json& j);
  std::string to_markdown() const;
};

// Evaluates every policy on the same trips and budget: expected-mode GMV,
// exact spend, action histograms overall and per fare decile, and the
// short-supply inflow sum against `baseline_name`. A policy spending more
// than the budget is flagged, never clipped.
ComparisonReport compare_policies(const std::vector<sim::TripRecord>& trips,
                                  const std::vector<NamedPolicy>& policies,
                                  double budget, const sim::CityModel& city,
                                  const geo::TileCoder& coder,
                                  const std::string& baseline_name);

// Per-cell detail for external plotting: one row per key in either map,
// ordered by (day_kind, cell_id, slot). `value_of` supplies the learned
// state value for the row's cell/slot (pass nullptr to emit zeros).
using CellValueFn =
    std::function<double(std::int64_t cell_id, int slot, geo::DayKind kind)>;
void write_cell_csv(const std::string& path, const CellSlotMap& smd,
                    const CellSlotMap& d_map, const geo::TileCoder& coder,
                    const CellValueFn& value_of = nullptr);

}  // namespace fareflow::report
