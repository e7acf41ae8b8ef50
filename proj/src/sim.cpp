#include "fareflow/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fareflow/hash.hpp"

namespace fareflow::sim {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kMetersPerDegLat = 111320.0;
constexpr double kMinFare = 1.0;
constexpr double kMaxFare = 150.0;

double logit(double p) { return std::log(p / (1.0 - p)); }
double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::vector<double> slot_vector(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  std::vector<double> out;
  if (v.is_number()) {
    out.assign(geo::kSlotsPerDay, v.get<double>());  // scalar broadcasts
  } else {
    out = v.get<std::vector<double>>();
  }
  return out;
}

void check_slot_vector(const std::vector<double>& v, const std::string& what) {
  if (v.size() != static_cast<std::size_t>(geo::kSlotsPerDay)) {
    throw std::invalid_argument("city: " + what + " must have 48 entries");
  }
  for (double x : v) {
    if (!(x >= 0.0) || !std::isfinite(x)) {
      throw std::invalid_argument("city: " + what + " has a negative entry");
    }
  }
}

}  // namespace

int action_index(double a) {
  for (int k = 0; k < kNumActions; ++k) {
    if (std::abs(a - kActionMenu[static_cast<std::size_t>(k)]) < 1e-9) return k;
  }
  throw std::invalid_argument("action " + std::to_string(a) +
                              " is not on the discount menu");
}

void CityModel::validate() const {
  if (bbox.lat_min >= bbox.lat_max || bbox.lon_min >= bbox.lon_max) {
    throw std::invalid_argument("city: degenerate bounding box");
  }
  if (zones.empty()) throw std::invalid_argument("city: no zones");
  if (!(speed_kmh > 0.0)) throw std::invalid_argument("city: speed must be > 0");
  if (eta_noise_frac < 0.0 || eta_noise_frac >= 1.0) {
    throw std::invalid_argument("city: eta_noise_frac must be in [0, 1)");
  }
  if (max_travel_slots < 1) {
    throw std::invalid_argument("city: max_travel_slots must be >= 1");
  }
  double wsum = 0.0;
  for (double w : historical_action_weights) {
    if (w < 0.0) {
      throw std::invalid_argument("city: negative historical action weight");
    }
    wsum += w;
  }
  if (!(wsum > 0.0)) {
    throw std::invalid_argument("city: historical action weights sum to zero");
  }
  for (const ZoneModel& z : zones) {
    if (z.name.empty()) throw std::invalid_argument("city: zone without a name");
    if (!bbox.contains(z.center)) {
      throw std::invalid_argument("city: zone '" + z.name +
                                  "' center outside bounding box");
    }
    if (!(z.radius_m > 0.0)) {
      throw std::invalid_argument("city: zone '" + z.name + "' radius must be > 0");
    }
    check_slot_vector(z.weekday_inquiries, z.name + ".weekday_inquiries");
    check_slot_vector(z.weekend_inquiries, z.name + ".weekend_inquiries");
    check_slot_vector(z.weekday_supply, z.name + ".weekday_supply");
    check_slot_vector(z.weekend_supply, z.name + ".weekend_supply");
    if (z.dest_weights.size() != zones.size()) {
      throw std::invalid_argument("city: zone '" + z.name +
                                  "' dest_weights length != zone count");
    }
    double dsum = 0.0;
    for (double w : z.dest_weights) {
      if (w < 0.0) {
        throw std::invalid_argument("city: zone '" + z.name +
                                    "' has a negative dest weight");
      }
      dsum += w;
    }
    if (!(dsum > 0.0)) {
      throw std::invalid_argument("city: zone '" + z.name +
                                  "' dest weights sum to zero");
    }
    if (!(z.mean_fare > 0.0) || z.fare_sigma_log < 0.0) {
      throw std::invalid_argument("city: zone '" + z.name + "' bad fare params");
    }
    if (!(z.cr_alpha > 0.0) || !(z.cr_beta > 0.0)) {
      throw std::invalid_argument("city: zone '" + z.name + "' bad cr params");
    }
    if (!(z.base_ecr_min > 0.0) || !(z.base_ecr_max < 1.0) ||
        z.base_ecr_min > z.base_ecr_max) {
      throw std::invalid_argument("city: zone '" + z.name +
                                  "' base_ecr range must be inside (0, 1)");
    }
    if (z.sensitivity_min < 0.0 || z.sensitivity_min > z.sensitivity_max) {
      throw std::invalid_argument("city: zone '" + z.name +
                                  "' bad sensitivity range");
    }
  }
}

CityModel CityModel::from_json(const nlohmann::json& j) {
  CityModel city;
  const auto& b = j.at("bbox");
  city.bbox = geo::BoundingBox{
      b.at("lat_min").get<double>(), b.at("lat_max").get<double>(),
      b.at("lon_min").get<double>(), b.at("lon_max").get<double>()};
  city.speed_kmh = j.value("speed_kmh", city.speed_kmh);
  city.eta_noise_frac = j.value("eta_noise_frac", city.eta_noise_frac);
  city.max_travel_slots = j.value("max_travel_slots", city.max_travel_slots);
  const auto w =
      j.at("historical_action_weights").get<std::vector<double>>();
  if (w.size() != kNumActions) {
    throw std::invalid_argument("city: historical_action_weights needs 6 entries");
  }
  std::copy(w.begin(), w.end(), city.historical_action_weights.begin());
  for (const auto& zj : j.at("zones")) {
    ZoneModel z;
    z.name = zj.at("name").get<std::string>();
    z.center = geo::LatLon{zj.at("center_lat").get<double>(),
                           zj.at("center_lon").get<double>()};
    z.radius_m = zj.at("radius_m").get<double>();
    z.weekday_inquiries = slot_vector(zj, "weekday_inquiries");
    z.weekend_inquiries = slot_vector(zj, "weekend_inquiries");
    z.weekday_supply = slot_vector(zj, "weekday_supply");
    z.weekend_supply = slot_vector(zj, "weekend_supply");
    z.dest_weights = zj.at("dest_weights").get<std::vector<double>>();
    z.mean_fare = zj.at("mean_fare").get<double>();
    z.fare_sigma_log = zj.value("fare_sigma_log", z.fare_sigma_log);
    z.cr_alpha = zj.value("cr_alpha", z.cr_alpha);
    z.cr_beta = zj.value("cr_beta", z.cr_beta);
    z.base_ecr_min = zj.value("base_ecr_min", z.base_ecr_min);
    z.base_ecr_max = zj.value("base_ecr_max", z.base_ecr_max);
    z.sensitivity_min = zj.value("sensitivity_min", z.sensitivity_min);
    z.sensitivity_max = zj.value("sensitivity_max", z.sensitivity_max);
    city.zones.push_back(std::move(z));
  }
  city.validate();
  return city;
}

nlohmann::json CityModel::to_json() const {
  nlohmann::json zones_j = nlohmann::json::array();
  for (const ZoneModel& z : zones) {
    zones_j.push_back(nlohmann::json{
        {"name", z.name},
        {"center_lat", z.center.lat},
        {"center_lon", z.center.lon},
        {"radius_m", z.radius_m},
        {"weekday_inquiries", z.weekday_inquiries},
        {"weekend_inquiries", z.weekend_inquiries},
        {"weekday_supply", z.weekday_supply},
        {"weekend_supply", z.weekend_supply},
        {"dest_weights", z.dest_weights},
        {"mean_fare", z.mean_fare},
        {"fare_sigma_log", z.fare_sigma_log},
        {"cr_alpha", z.cr_alpha},
        {"cr_beta", z.cr_beta},
        {"base_ecr_min", z.base_ecr_min},
        {"base_ecr_max", z.base_ecr_max},
        {"sensitivity_min", z.sensitivity_min},
        {"sensitivity_max", z.sensitivity_max}});
  }
  return nlohmann::json{
      {"bbox",
       {{"lat_min", bbox.lat_min},
        {"lat_max", bbox.lat_max},
        {"lon_min", bbox.lon_min},
        {"lon_max", bbox.lon_max}}},
      {"zones", zones_j},
      {"historical_action_weights",
       std::vector<double>(historical_action_weights.begin(),
                           historical_action_weights.end())},
      {"speed_kmh", speed_kmh},
      {"eta_noise_frac", eta_noise_frac},
      {"max_travel_slots", max_travel_slots}};
}

CityModel CityModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open city model: " + path);
  nlohmann::json j;
  in >> j;
  return from_json(j);
}

double ecr(const TripRecord& trip, double a) {
  const int k = action_index(a);
  if (k == kNoDiscountIndex) return trip.base_ecr;  // exact anchor
  const double z =
      logit(trip.base_ecr) + trip.price_sensitivity * (1.0 - kActionMenu[static_cast<std::size_t>(k)]);
  return logistic(z);
}

double delta_ecr(const TripRecord& trip, double a) {
  const int k = action_index(a);
  if (k == kNoDiscountIndex) return 0.0;  // exact zero at no discount
  return ecr(trip, a) - trip.base_ecr;
}

namespace {

geo::LatLon sample_point_in_zone(const ZoneModel& z, const geo::BoundingBox& box,
                                 Rng& rng) {
  const double m_per_deg_lon =
      kMetersPerDegLat * std::cos(z.center.lat * kPi / 180.0);
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double r = z.radius_m * std::sqrt(rng.uniform());
    const double theta = 2.0 * kPi * rng.uniform();
    const geo::LatLon p{z.center.lat + r * std::sin(theta) / kMetersPerDegLat,
                        z.center.lon + r * std::cos(theta) / m_per_deg_lon};
    if (box.contains(p)) return p;
  }
  // Zone discs are configured inside the box; clamping is a final safety net.
  geo::LatLon p = z.center;
  p.lat = std::clamp(p.lat, box.lat_min + 1e-9, box.lat_max - 1e-9);
  p.lon = std::clamp(p.lon, box.lon_min + 1e-9, box.lon_max - 1e-9);
  return p;
}

double planar_distance_m(const geo::LatLon& a, const geo::LatLon& b,
                         double ref_lat) {
  const double m_per_deg_lon = kMetersPerDegLat * std::cos(ref_lat * kPi / 180.0);
  const double dx = (a.lon - b.lon) * m_per_deg_lon;
  const double dy = (a.lat - b.lat) * kMetersPerDegLat;
  return std::hypot(dx, dy);
}

std::size_t sample_categorical(const std::vector<double>& weights, double sum,
                               Rng& rng) {
  double u = rng.uniform() * sum;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    u -= weights[i];
    if (u < 0.0) return i;
  }
  return weights.size() - 1;
}

}  // namespace

std::vector<TripRecord> generate_day(const CityModel& city, geo::DayKind kind,
                                     std::uint64_t seed, int day_index) {
  city.validate();
  const Rng day_rng(seed);
  const double ref_lat = 0.5 * (city.bbox.lat_min + city.bbox.lat_max);
  const double m_per_min = city.speed_kmh * 1000.0 / 60.0;

  double hist_sum = 0.0;
  for (double w : city.historical_action_weights) hist_sum += w;
  const std::vector<double> hist_weights(city.historical_action_weights.begin(),
                                         city.historical_action_weights.end());

  std::vector<TripRecord> out;
  std::uint64_t seq = 0;
  for (std::size_t zi = 0; zi < city.zones.size(); ++zi) {
    const ZoneModel& zone = city.zones[zi];
    const auto& rates = kind == geo::DayKind::weekday ? zone.weekday_inquiries
                                                      : zone.weekend_inquiries;
    double dest_sum = 0.0;
    for (double w : zone.dest_weights) dest_sum += w;
    for (int s = 0; s < geo::kSlotsPerDay; ++s) {
      // One substream per (zone, slot): output independent of loop order.
      Rng rng = day_rng.fork(zi * static_cast<std::size_t>(geo::kSlotsPerDay) +
                             static_cast<std::size_t>(s));
      const std::uint64_t count = rng.poisson(rates[static_cast<std::size_t>(s)]);
      for (std::uint64_t i = 0; i < count; ++i) {
        TripRecord t;
        t.trip_id = static_cast<std::uint64_t>(day_index) * 10'000'000ULL + seq++;
        t.day_index = day_index;
        t.day_kind = kind;
        t.origin_zone = static_cast<int>(zi);
        t.origin = sample_point_in_zone(zone, city.bbox, rng);
        const std::size_t dz = sample_categorical(zone.dest_weights, dest_sum, rng);
        t.dest_zone = static_cast<int>(dz);
        t.dest = sample_point_in_zone(city.zones[dz], city.bbox, rng);
        t.request_minute =
            s * geo::kMinutesPerSlot +
            static_cast<int>(rng.uniform_index(geo::kMinutesPerSlot));
        const double minutes =
            planar_distance_m(t.origin, t.dest, ref_lat) / m_per_min *
            (1.0 + city.eta_noise_frac * (2.0 * rng.uniform() - 1.0));
        t.est_travel_slots = std::clamp(
            static_cast<int>(std::ceil(minutes / 10.0)), 1, city.max_travel_slots);
        t.fare = std::clamp(rng.lognormal_mean(zone.mean_fare, zone.fare_sigma_log),
                            kMinFare, kMaxFare);
        t.base_ecr = rng.uniform(zone.base_ecr_min, zone.base_ecr_max);
        t.price_sensitivity =
            rng.uniform(zone.sensitivity_min, zone.sensitivity_max);
        t.cr = std::clamp(rng.beta(zone.cr_alpha, zone.cr_beta), 0.05, 1.0);
        t.historical_action =
            kActionMenu[sample_categorical(hist_weights, hist_sum, rng)];
        out.push_back(t);
      }
    }
  }
  return out;
}

std::vector<TripRecord> generate_days(const CityModel& city,
                                      const std::vector<DayPlan>& plan) {
  std::vector<TripRecord> out;
  for (std::size_t d = 0; d < plan.size(); ++d) {
    auto day =
        generate_day(city, plan[d].kind, plan[d].seed, static_cast<int>(d));
    out.insert(out.end(), day.begin(), day.end());
  }
  return out;
}

namespace {

TripOutcome expected_outcome(const TripRecord& t, double a) {
  TripOutcome o;
  o.trip_id = t.trip_id;
  o.action = a;
  o.expected_gmv = t.fare * ecr(t, a) * t.cr * a;
  o.spend = (1.0 - a) * t.fare;
  return o;
}

}  // namespace

SimResult simulate_policy(const std::vector<TripRecord>& trips,
                          const std::vector<double>& actions) {
  if (trips.size() != actions.size()) {
    throw std::invalid_argument("simulate_policy: one action per trip required");
  }
  SimResult res;
  res.outcomes.reserve(trips.size());
  for (std::size_t i = 0; i < trips.size(); ++i) {
    TripOutcome o = expected_outcome(trips[i], actions[i]);
    res.total_expected_gmv += o.expected_gmv;
    res.total_spend += o.spend;
    res.expected_gmv_by_slot[trips[i].request_minute / geo::kMinutesPerSlot] +=
        o.expected_gmv;
    res.outcomes.push_back(o);
  }
  return res;
}

SimResult simulate_policy_sampled(const std::vector<TripRecord>& trips,
                                  const std::vector<double>& actions,
                                  std::uint64_t seed) {
  if (trips.size() != actions.size()) {
    throw std::invalid_argument("simulate_policy: one action per trip required");
  }
  const Rng base(seed);
  SimResult res;
  res.outcomes.reserve(trips.size());
  for (std::size_t i = 0; i < trips.size(); ++i) {
    const TripRecord& t = trips[i];
    TripOutcome o = expected_outcome(t, actions[i]);
    // Per-trip substream: outcomes do not shift when other trips are edited.
    Rng rng = base.fork(i);
    o.called = rng.uniform() < ecr(t, actions[i]) ? 1 : 0;
    // The completion draw is consumed either way so the stream position (and
    // thus the completion outcome) is identical across actions of one trip.
    const bool would_complete = rng.uniform() < t.cr;
    o.completed = (o.called && would_complete) ? 1 : 0;
    o.realized_gmv = o.completed ? t.fare * actions[i] : 0.0;
    res.total_expected_gmv += o.expected_gmv;
    res.total_realized_gmv += o.realized_gmv;
    res.total_spend += o.spend;
    res.expected_gmv_by_slot[t.request_minute / geo::kMinutesPerSlot] +=
        o.expected_gmv;
    res.outcomes.push_back(o);
  }
  return res;
}

nlohmann::json trip_to_json(const TripRecord& t) {
  return nlohmann::json{{"trip_id", t.trip_id},
                        {"day_index", t.day_index},
                        {"day_kind", geo::to_string(t.day_kind)},
                        {"origin_lat", t.origin.lat},
                        {"origin_lon", t.origin.lon},
                        {"dest_lat", t.dest.lat},
                        {"dest_lon", t.dest.lon},
                        {"request_minute", t.request_minute},
                        {"est_travel_slots", t.est_travel_slots},
                        {"fare", t.fare},
                        {"base_ecr", t.base_ecr},
                        {"price_sensitivity", t.price_sensitivity},
                        {"cr", t.cr},
                        {"historical_action", t.historical_action},
                        {"origin_zone", t.origin_zone},
                        {"dest_zone", t.dest_zone}};
}

TripRecord trip_from_json(const nlohmann::json& j) {
  TripRecord t;
  t.trip_id = j.at("trip_id").get<std::uint64_t>();
  t.day_index = j.value("day_index", 0);
  t.day_kind = geo::day_kind_from_string(j.at("day_kind").get<std::string>());
  t.origin = geo::LatLon{j.at("origin_lat").get<double>(),
                         j.at("origin_lon").get<double>()};
  t.dest = geo::LatLon{j.at("dest_lat").get<double>(),
                       j.at("dest_lon").get<double>()};
  t.request_minute = j.at("request_minute").get<int>();
  t.est_travel_slots = j.at("est_travel_slots").get<int>();
  t.fare = j.at("fare").get<double>();
  t.base_ecr = j.at("base_ecr").get<double>();
  t.price_sensitivity = j.at("price_sensitivity").get<double>();
  t.cr = j.at("cr").get<double>();
  t.historical_action = j.at("historical_action").get<double>();
  t.origin_zone = j.value("origin_zone", -1);
  t.dest_zone = j.value("dest_zone", -1);
  return t;
}

void write_trips_jsonl(const std::string& path,
                       const std::vector<TripRecord>& trips) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write trip log: " + path);
  for (const TripRecord& t : trips) {
    out << trip_to_json(t).dump() << '\n';
  }
  if (!out) throw std::runtime_error("short write to trip log: " + path);
}

TripReadResult read_trips_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trip log: " + path);
  TripReadResult res;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      res.trips.push_back(trip_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception&) {
      ++res.skipped;
    } catch (const std::invalid_argument&) {
      ++res.skipped;
    }
  }
  return res;
}

void write_outcomes_csv(const std::string& path, const SimResult& result) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write outcome log: " + path);
  out << "trip_id,action,expected_gmv,spend,called,completed\n";
  char buf[160];
  for (const TripOutcome& o : result.outcomes) {
    std::snprintf(buf, sizeof(buf), "%llu,%.2f,%.6f,%.6f,%d,%d\n",
                  static_cast<unsigned long long>(o.trip_id), o.action,
                  o.expected_gmv, o.spend, o.called, o.completed);
    out << buf;
  }
}

}  // namespace fareflow::sim
