#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fareflow/hexgrid.hpp"
#include "fareflow/rng.hpp"
#include "fareflow/tilecoding.hpp"

namespace fareflow::sim {

// Discount menu: a trip priced at fare * a. Index 5 (a = 1.0) is the
// no-discount option with zero cost and zero demand shift.
constexpr std::array<double, 6> kActionMenu = {0.75, 0.8, 0.85, 0.9, 0.95, 1.0};
constexpr int kNumActions = 6;
constexpr int kNoDiscountIndex = 5;

// Menu index of `a`; throws std::invalid_argument if `a` is not on the menu.
int action_index(double a);

// One zone archetype: a disc of the city with its own demand curve, pricing,
// and driver supply. Rates are per semi-hour slot for the whole zone.
struct ZoneModel {
  std::string name;  // e.g. "downtown", "residential", "suburb"
  geo::LatLon center;
  double radius_m = 0.0;
  std::vector<double> weekday_inquiries;  // 48 entries, inquiries per slot
  std::vector<double> weekend_inquiries;  // 48 entries
  std::vector<double> weekday_supply;     // 48 entries, idle drivers per slot
  std::vector<double> weekend_supply;     // 48 entries
  std::vector<double> dest_weights;       // over zones, normalized on load
  double mean_fare = 10.0;
  double fare_sigma_log = 0.3;  // lognormal dispersion of fares
  double cr_alpha = 8.0;        // completion-rate Beta parameters
  double cr_beta = 2.0;
  double base_ecr_min = 0.2;  // no-discount call rate range, uniform
  double base_ecr_max = 0.5;
  double sensitivity_min = 3.0;  // demand-response slope range, uniform
  double sensitivity_max = 8.0;
};

struct CityModel {
  geo::BoundingBox bbox;
  std::vector<ZoneModel> zones;
  // Stochastic baseline pricing observed in the logs; weights over the menu.
  std::array<double, kNumActions> historical_action_weights{};
  double speed_kmh = 25.0;       // converts trip distance to travel time
  double eta_noise_frac = 0.15;  // multiplicative jitter on travel time
  int max_travel_slots = 24;     // hard cap on T (10-minute sub-segments)

  void validate() const;  // throws std::invalid_argument
  static CityModel from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  static CityModel load(const std::string& path);
};

// One historical ride inquiry. Grid cells are derived downstream from the
// exact coordinates and the coding config, so logs stay grid-agnostic.
struct TripRecord {
  std::uint64_t trip_id = 0;
  int day_index = 0;  // which generated day this trip belongs to
  geo::DayKind day_kind = geo::DayKind::weekday;
  geo::LatLon origin;
  geo::LatLon dest;
  int request_minute = 0;    // minutes since midnight, [0, 1440)
  int est_travel_slots = 1;  // T, in 10-minute sub-segments, >= 1
  double fare = 0.0;         // the trip's GMV at no discount
  double base_ecr = 0.0;     // call probability at a = 1.0
  double price_sensitivity = 0.0;
  double cr = 0.0;  // completion probability, unaffected by pricing
  double historical_action = 1.0;
  int origin_zone = -1;  // generator ground truth, -1 if unknown
  int dest_zone = -1;
};

// Demand response: logit(ecr(a)) = logit(base_ecr) + sensitivity * (1 - a).
// ecr(1.0) returns base_ecr exactly; deeper discounts raise the call rate.
double ecr(const TripRecord& trip, double a);
// ecr(a) - ecr(1.0); exactly 0.0 at a = 1.0.
double delta_ecr(const TripRecord& trip, double a);

// One simulated day. Deterministic in (city, kind, seed); each (zone, slot)
// owns a forked substream, so the output is independent of evaluation order.
// day_index tags the records and offsets their trip ids.
std::vector<TripRecord> generate_day(const CityModel& city, geo::DayKind kind,
                                     std::uint64_t seed, int day_index = 0);

struct DayPlan {
  geo::DayKind kind = geo::DayKind::weekday;
  std::uint64_t seed = 0;
};

// Concatenates generate_day over the plan, in order.
std::vector<TripRecord> generate_days(const CityModel& city,
                                      const std::vector<DayPlan>& plan);

struct TripOutcome {
  std::uint64_t trip_id = 0;
  double action = 1.0;
  double expected_gmv = 0.0;  // fare * ecr(a) * cr * a
  double spend = 0.0;         // (1 - a) * fare, the discount commitment
  int called = 0;             // sampled mode only
  int completed = 0;          // sampled mode only
  double realized_gmv = 0.0;  // sampled mode only
};

struct SimResult {
  std::vector<TripOutcome> outcomes;
  double total_expected_gmv = 0.0;
  double total_realized_gmv = 0.0;  // sampled mode
  double total_spend = 0.0;
  std::map<int, double> expected_gmv_by_slot;  // keyed by request slot
};

// Expected mode: deterministic probability-weighted GMV.
SimResult simulate_policy(const std::vector<TripRecord>& trips,
                          const std::vector<double>& actions);
// Sampled mode: Bernoulli call and completion draws; reproducible by seed.
SimResult simulate_policy_sampled(const std::vector<TripRecord>& trips,
                                  const std::vector<double>& actions,
                                  std::uint64_t seed);

// JSONL trip log I/O. Reading skips malformed lines and reports how many.
void write_trips_jsonl(const std::string& path,
                       const std::vector<TripRecord>& trips);
struct TripReadResult {
  std::vector<TripRecord> trips;
  std::size_t skipped = 0;
};
TripReadResult read_trips_jsonl(const std::string& path);

nlohmann::json trip_to_json(const TripRecord& t);
TripRecord trip_from_json(const nlohmann::json& j);

// Outcome log per the documented CSV schema.
void write_outcomes_csv(const std::string& path, const SimResult& result);

}  // namespace fareflow::sim
