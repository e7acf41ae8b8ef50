#include "fareflow/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fareflow/mdp.hpp"

namespace fareflow::report {

namespace {

CellSlotKey key_of(std::int64_t cell_id, int slot, geo::DayKind kind) {
  return CellSlotKey{static_cast<std::uint8_t>(kind), cell_id,
                     static_cast<std::int16_t>(slot)};
}

}  // namespace

std::vector<double> actions_for(const std::vector<sim::TripRecord>& trips,
                                const Policy& policy, double fallback) {
  std::vector<double> actions;
  actions.reserve(trips.size());
  for (const sim::TripRecord& t : trips) {
    const auto it = policy.find(t.trip_id);
    actions.push_back(it == policy.end() ? fallback : it->second);
  }
  return actions;
}

CellSlotMap dest_delta_ecr(const std::vector<sim::TripRecord>& trips,
                           const std::vector<double>& actions,
                           const geo::TileCoder& coder) {
  if (actions.size() != trips.size()) {
    throw std::invalid_argument("one action per trip required");
  }
  CellSlotMap out;
  for (std::size_t i = 0; i < trips.size(); ++i) {
    const sim::TripRecord& t = trips[i];
    std::int64_t cell = 0;
    try {
      cell = coder.grids().locate(t.dest, 0).cell_id;
    } catch (const std::out_of_range&) {
      continue;  // destination outside the configured box
    }
    const int slot = mdp::arrival_slot(t.request_minute, t.est_travel_slots);
    out[key_of(cell, slot, t.day_kind)] += sim::delta_ecr(t, actions[i]);
  }
  return out;
}

CellSlotMap supply_minus_demand(const std::vector<sim::TripRecord>& trips,
                                const sim::CityModel& city,
                                const geo::TileCoder& coder) {
  const geo::HexGrid& grid = coder.grids().grid(0);

  // Zone membership of every finest-level cell: nearest zone center whose
  // disc contains the cell center.
  std::unordered_map<std::int64_t, int> zone_of_cell;
  std::vector<std::size_t> cells_in_zone(city.zones.size(), 0);
  for (const geo::AxialCoord& c : grid.cells_in_bounds()) {
    const auto xy = grid.axial_center_xy(c);
    int best_zone = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t z = 0; z < city.zones.size(); ++z) {
      const auto zc = grid.project(city.zones[z].center);
      const double dist = std::hypot(xy[0] - zc[0], xy[1] - zc[1]);
      if (dist <= city.zones[z].radius_m && dist < best_dist) {
        best_dist = dist;
        best_zone = static_cast<int>(z);
      }
    }
    if (best_zone >= 0) {
      zone_of_cell.emplace(geo::HexGrid::pack(c), best_zone);
      ++cells_in_zone[static_cast<std::size_t>(best_zone)];
    }
  }

  // Observed inquiries per key, and how many distinct days of each kind the
  // log spans, so multi-day logs average per day.
  CellSlotMap inquiries;
  std::array<std::vector<int>, 2> days_seen;
  for (const sim::TripRecord& t : trips) {
    std::int64_t cell = 0;
    try {
      cell = coder.grids().locate(t.origin, 0).cell_id;
    } catch (const std::out_of_range&) {
      continue;
    }
    const int slot = t.request_minute / geo::kMinutesPerSlot;
    inquiries[key_of(cell, slot, t.day_kind)] += 1.0;
    auto& seen = days_seen[static_cast<std::size_t>(t.day_kind)];
    if (std::find(seen.begin(), seen.end(), t.day_index) == seen.end()) {
      seen.push_back(t.day_index);
    }
  }

  CellSlotMap out;
  for (const auto& [key, count] : inquiries) {
    const auto days =
        static_cast<double>(std::max<std::size_t>(1, days_seen[key.day_kind].size()));
    double supply = 0.0;
    const auto zit = zone_of_cell.find(key.cell_id);
    if (zit != zone_of_cell.end()) {
      const sim::ZoneModel& zone = city.zones[static_cast<std::size_t>(zit->second)];
      const auto& rates = key.day_kind == 0 ? zone.weekday_supply : zone.weekend_supply;
      supply = rates[static_cast<std::size_t>(key.slot)] /
               static_cast<double>(cells_in_zone[static_cast<std::size_t>(zit->second)]);
    }
    out[key] = supply - count / days;
  }
  return out;
}

ShortSupplySummary short_supply(const CellSlotMap& policy_d,
                                const CellSlotMap& baseline_d,
                                const CellSlotMap& smd) {
  auto sum_short = [&smd](const CellSlotMap& d) {
    double total = 0.0;
    for (const auto& [key, value] : d) {
      const auto it = smd.find(key);
      if (it != smd.end() && it->second < 0.0) total += value;
    }
    return total;
  };
  ShortSupplySummary s;
  s.policy_sum = sum_short(policy_d);
  s.baseline_sum = sum_short(baseline_d);
  if (s.baseline_sum > 0.0) {
    s.ratio = s.policy_sum / s.baseline_sum;
  } else {
    s.ratio = s.policy_sum > 0.0 ? std::numeric_limits<double>::max() : 1.0;
  }
  return s;
}

namespace {

std::array<double, 11> decile_edges(const std::vector<sim::TripRecord>& trips) {
  std::array<double, 11> edges{};
  if (trips.empty()) return edges;
  std::vector<double> fares;
  fares.reserve(trips.size());
  for (const auto& t : trips) fares.push_back(t.fare);
  std::sort(fares.begin(), fares.end());
  const std::size_t n = fares.size();
  for (std::size_t i = 0; i <= 10; ++i) {
    edges[i] = fares[std::min(n - 1, i * n / 10)];
  }
  edges[10] = fares[n - 1];
  return edges;
}

std::size_t decile_of(double fare, const std::array<double, 11>& edges) {
  std::size_t d = 0;
  while (d + 1 < 10 && fare >= edges[d + 1]) ++d;
  return d;
}

}  // namespace

ComparisonReport compare_policies(const std::vector<sim::TripRecord>& trips,
                                  const std::vector<NamedPolicy>& policies,
                                  double budget, const sim::CityModel& city,
                                  const geo::TileCoder& coder,
                                  const std::string& baseline_name) {
  if (policies.empty()) {
    throw std::invalid_argument("at least one policy required");
  }
  std::size_t baseline_idx = policies.size();
  for (std::size_t i = 0; i < policies.size(); ++i) {
    if (policies[i].name == baseline_name) baseline_idx = i;
  }
  if (baseline_idx == policies.size()) {
    throw std::invalid_argument("baseline policy not found: " + baseline_name);
  }

  ComparisonReport rep;
  rep.baseline = baseline_name;
  rep.budget = budget;
  rep.num_trips = trips.size();
  rep.fare_decile_edges = decile_edges(trips);

  const CellSlotMap smd = supply_minus_demand(trips, city, coder);

  // Baseline first so its row exists when deltas are computed; the remaining
  // policies keep their given order.
  std::vector<std::size_t> order{baseline_idx};
  for (std::size_t i = 0; i < policies.size(); ++i) {
    if (i != baseline_idx) order.push_back(i);
  }

  CellSlotMap baseline_d;
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const NamedPolicy& np = policies[order[oi]];
    const std::vector<double> actions = actions_for(trips, np.actions);
    const sim::SimResult sim_result = sim::simulate_policy(trips, actions);
    const CellSlotMap d_map = dest_delta_ecr(trips, actions, coder);
    if (oi == 0) baseline_d = d_map;

    PolicyEvalResult r;
    r.name = np.name;
    r.expected_gmv = sim_result.total_expected_gmv;
    r.spend = sim_result.total_spend;
    r.budget = budget;
    r.budget_violated = r.spend > budget;
    for (std::size_t i = 0; i < trips.size(); ++i) {
      const auto a = static_cast<std::size_t>(sim::action_index(actions[i]));
      r.action_counts[a] += 1;
      r.decile_action_counts[decile_of(trips[i].fare, rep.fare_decile_edges)]
                            [a] += 1;
    }
    const ShortSupplySummary ss = short_supply(d_map, baseline_d, smd);
    r.short_supply_d_sum = ss.policy_sum;
    r.short_supply_ratio = ss.ratio;
    const double base_gmv = rep.policies.empty() ? r.expected_gmv
                                                 : rep.policies[0].expected_gmv;
    r.gmv_delta_pct =
        base_gmv != 0.0 ? 100.0 * (r.expected_gmv - base_gmv) / base_gmv : 0.0;
    rep.any_budget_violation = rep.any_budget_violation || r.budget_violated;
    rep.policies.push_back(std::move(r));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json ComparisonReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const PolicyEvalResult& r : policies) {
    nlohmann::json deciles = nlohmann::json::array();
    for (const auto& row : r.decile_action_counts) {
      deciles.push_back(std::vector<std::uint64_t>(row.begin(), row.end()));
    }
    rows.push_back(nlohmann::json{
        {"name", r.name},
        {"expected_gmv", r.expected_gmv},
        {"spend", r.spend},
        {"budget", r.budget},
        {"budget_violated", r.budget_violated},
        {"action_counts",
         std::vector<std::uint64_t>(r.action_counts.begin(),
                                    r.action_counts.end())},
        {"decile_action_counts", deciles},
        {"short_supply_d_sum", r.short_supply_d_sum},
        {"gmv_delta_pct", r.gmv_delta_pct},
        {"short_supply_ratio", r.short_supply_ratio}});
  }
  return nlohmann::json{
      {"baseline", baseline},
      {"budget", budget},
      {"num_trips", num_trips},
      {"fare_decile_edges",
       std::vector<double>(fare_decile_edges.begin(), fare_decile_edges.end())},
      {"policies", rows},
      {"any_budget_violation", any_budget_violation}};
}

ComparisonReport ComparisonReport::from_json(const nlohmann::json& j) {
  ComparisonReport rep;
  rep.baseline = j.at("baseline").get<std::string>();
  rep.budget = j.at("budget").get<double>();
  rep.num_trips = j.at("num_trips").get<std::size_t>();
  const auto edges = j.at("fare_decile_edges").get<std::vector<double>>();
  if (edges.size() != rep.fare_decile_edges.size()) {
    throw std::invalid_argument("fare_decile_edges must have 11 entries");
  }
  std::copy(edges.begin(), edges.end(), rep.fare_decile_edges.begin());
  rep.any_budget_violation = j.at("any_budget_violation").get<bool>();
  for (const auto& row : j.at("policies")) {
    PolicyEvalResult r;
    r.name = row.at("name").get<std::string>();
    r.expected_gmv = row.at("expected_gmv").get<double>();
    r.spend = row.at("spend").get<double>();
    r.budget = row.at("budget").get<double>();
    r.budget_violated = row.at("budget_violated").get<bool>();
    const auto counts = row.at("action_counts").get<std::vector<std::uint64_t>>();
    if (counts.size() != sim::kNumActions) {
      throw std::invalid_argument("action_counts must have 6 entries");
    }
    std::copy(counts.begin(), counts.end(), r.action_counts.begin());
    const auto& deciles = row.at("decile_action_counts");
    if (deciles.size() != r.decile_action_counts.size()) {
      throw std::invalid_argument("decile_action_counts must have 10 rows");
    }
    for (std::size_t d = 0; d < r.decile_action_counts.size(); ++d) {
      const auto dc = deciles[d].get<std::vector<std::uint64_t>>();
      if (dc.size() != sim::kNumActions) {
        throw std::invalid_argument("decile row must have 6 entries");
      }
      std::copy(dc.begin(), dc.end(), r.decile_action_counts[d].begin());
    }
    r.short_supply_d_sum = row.at("short_supply_d_sum").get<double>();
    r.gmv_delta_pct = row.at("gmv_delta_pct").get<double>();
    r.short_supply_ratio = row.at("short_supply_ratio").get<double>();
    rep.policies.push_back(std::move(r));
  }
  return rep;
}

std::string ComparisonReport::to_markdown() const {
  std::string md;
  char buf[256];
  md += "# Policy comparison\n\n";
  std::snprintf(buf, sizeof(buf),
                "Trips: %zu — budget: %.2f — baseline: %s\n\n", num_trips,
                budget, baseline.c_str());
  md += buf;

  md += "| policy | expected GMV | ΔGMV % | spend | over budget | "
        "short-supply D | D ratio |\n";
  md += "|---|---:|---:|---:|---|---:|---:|\n";
  for (const PolicyEvalResult& r : policies) {
    std::snprintf(buf, sizeof(buf),
                  "| %s | %.2f | %+.2f%% | %.2f | %s | %.4f | %.4f |\n",
                  r.name.c_str(), r.expected_gmv, r.gmv_delta_pct, r.spend,
                  r.budget_violated ? "YES" : "no", r.short_supply_d_sum,
                  r.short_supply_ratio);
    md += buf;
  }

  md += "\n## Action distribution\n\n| policy |";
  for (double a : sim::kActionMenu) {
    std::snprintf(buf, sizeof(buf), " %.2f |", a);
    md += buf;
  }
  md += "\n|---|---:|---:|---:|---:|---:|---:|\n";
  for (const PolicyEvalResult& r : policies) {
    md += "| " + r.name + " |";
    for (std::uint64_t c : r.action_counts) {
      std::snprintf(buf, sizeof(buf), " %llu |",
                    static_cast<unsigned long long>(c));
      md += buf;
    }
    md += "\n";
  }

  md += "\n## Discounted-trip share per fare decile\n\n| policy |";
  for (int d = 0; d < 10; ++d) {
    std::snprintf(buf, sizeof(buf), " d%d |", d);
    md += buf;
  }
  md += "\n|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n";
  for (const PolicyEvalResult& r : policies) {
    md += "| " + r.name + " |";
    for (const auto& row : r.decile_action_counts) {
      std::uint64_t total = 0;
      std::uint64_t discounted = 0;
      for (std::size_t k = 0; k < row.size(); ++k) {
        total += row[k];
        if (static_cast<int>(k) != sim::kNoDiscountIndex) discounted += row[k];
      }
      if (total == 0) {
        md += " - |";
      } else {
        std::snprintf(buf, sizeof(buf), " %.1f%% |",
                      100.0 * static_cast<double>(discounted) /
                          static_cast<double>(total));
        md += buf;
      }
    }
    md += "\n";
  }
  return md;
}

void write_cell_csv(const std::string& path, const CellSlotMap& smd,
                    const CellSlotMap& d_map, const geo::TileCoder& coder,
                    const CellValueFn& value_of) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write cell csv: " + path);
  out << "cell_id,lat,lon,slot,day_kind,v_value,d_value,supply_minus_demand\n";

  CellSlotMap keys = smd;  // union of both maps, already ordered
  for (const auto& [key, value] : d_map) keys.emplace(key, 0.0);

  const geo::HexGrid& grid = coder.grids().grid(0);
  char line[256];
  for (const auto& [key, unused] : keys) {
    const geo::LatLon center = grid.cell_center(geo::HexGrid::unpack(key.cell_id));
    const auto kind = static_cast<geo::DayKind>(key.day_kind);
    const auto dit = d_map.find(key);
    const auto sit = smd.find(key);
    const double v =
        value_of ? value_of(key.cell_id, key.slot, kind) : 0.0;
    std::snprintf(line, sizeof(line),
                  "%lld,%.6f,%.6f,%d,%s,%.6f,%.6f,%.6f\n",
                  static_cast<long long>(key.cell_id), center.lat, center.lon,
                  static_cast<int>(key.slot), geo::to_string(kind).c_str(),
                  v, dit == d_map.end() ? 0.0 : dit->second,
                  sit == smd.end() ? 0.0 : sit->second);
    out << line;
  }
  if (!out) throw std::runtime_error("short write on cell csv: " + path);
}

}  // namespace fareflow::report
