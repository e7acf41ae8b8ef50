#include "fareflow/tilecoding.hpp"

#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fareflow/hash.hpp"
#include "fareflow/kernels.hpp"

namespace fareflow::geo {

std::string to_string(DayKind k) {
  return k == DayKind::weekday ? "weekday" : "weekend";
}

DayKind day_kind_from_string(const std::string& s) {
  if (s == "weekday") return DayKind::weekday;
  if (s == "weekend") return DayKind::weekend;
  throw std::invalid_argument("unknown day kind: " + s);
}

void CodingConfig::validate() const {
  if (hex_resolutions_m.empty()) {
    throw std::invalid_argument("coding: hex_resolutions_m is empty");
  }
  for (std::size_t i = 1; i < hex_resolutions_m.size(); ++i) {
    if (hex_resolutions_m[i] <= hex_resolutions_m[i - 1]) {
      throw std::invalid_argument(
          "coding: hex_resolutions_m must be strictly increasing");
    }
  }
  if (num_tilings_per_resolution < 1) {
    throw std::invalid_argument("coding: num_tilings_per_resolution < 1");
  }
  if (time_window_minutes < 1 || time_window_minutes > 24 * 60) {
    throw std::invalid_argument("coding: bad time_window_minutes");
  }
  if (hash_table_size == 0) {
    throw std::invalid_argument("coding: hash_table_size must be > 0");
  }
  if (bbox.lat_min >= bbox.lat_max || bbox.lon_min >= bbox.lon_max) {
    throw std::invalid_argument("coding: degenerate bounding box");
  }
}

CodingConfig CodingConfig::from_json(const nlohmann::json& j) {
  CodingConfig cfg;
  const auto& b = j.at("bbox");
  cfg.bbox = BoundingBox{b.at("lat_min").get<double>(),
                         b.at("lat_max").get<double>(),
                         b.at("lon_min").get<double>(),
                         b.at("lon_max").get<double>()};
  cfg.hex_resolutions_m = j.at("hex_resolutions_m").get<std::vector<double>>();
  cfg.num_tilings_per_resolution =
      j.value("num_tilings_per_resolution", cfg.num_tilings_per_resolution);
  cfg.time_window_minutes =
      j.value("time_window_minutes", cfg.time_window_minutes);
  cfg.hash_table_size = j.value("hash_table_size", cfg.hash_table_size);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

nlohmann::json CodingConfig::to_json() const {
  return nlohmann::json{
      {"bbox",
       {{"lat_min", bbox.lat_min},
        {"lat_max", bbox.lat_max},
        {"lon_min", bbox.lon_min},
        {"lon_max", bbox.lon_max}}},
      {"hex_resolutions_m", hex_resolutions_m},
      {"num_tilings_per_resolution", num_tilings_per_resolution},
      {"time_window_minutes", time_window_minutes},
      {"hash_table_size", hash_table_size},
      {"seed", seed}};
}

CodingConfig CodingConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open coding config: " + path);
  nlohmann::json j;
  in >> j;
  return from_json(j);
}

TileCoder::TileCoder(CodingConfig cfg)
    : cfg_(std::move(cfg)), grids_(cfg_.bbox, cfg_.hex_resolutions_m) {
  cfg_.validate();
  const int k = cfg_.num_tilings_per_resolution;
  offsets_.resize(static_cast<std::size_t>(levels()) * k);
  for (int level = 0; level < levels(); ++level) {
    const double edge = cfg_.hex_resolutions_m[static_cast<std::size_t>(level)];
    for (int j = 0; j < k; ++j) {
      // Structured half-diagonal displacement spreads the tilings evenly;
      // the seeded jitter stays small so the coverage structure survives
      // any seed.
      const double frac = static_cast<double>(j) / k;
      double ox = frac * 1.5 * edge;
      double oy = frac * 0.8660254037844386 * edge;
      std::uint64_t h = hash_combine(cfg_.seed, 0x7411e5u);
      h = hash_combine(h, static_cast<std::uint64_t>(level));
      h = hash_combine(h, static_cast<std::uint64_t>(j));
      Rng jitter(h);
      ox += jitter.uniform(0.0, 0.05 * edge);
      oy += jitter.uniform(0.0, 0.05 * edge);
      offsets_[static_cast<std::size_t>(level) * k + j] = {ox, oy};
    }
  }
}

int TileCoder::num_tilings() const {
  return levels() * cfg_.num_tilings_per_resolution;
}

std::array<double, 2> TileCoder::spatial_offset(int level, int tiling) const {
  return offsets_.at(static_cast<std::size_t>(level) *
                         cfg_.num_tilings_per_resolution +
                     tiling);
}

int TileCoder::time_window_minutes_of(int tiling) const {
  return cfg_.time_window_minutes * (tiling + 1);
}

int TileCoder::time_offset_minutes_of(int tiling) const {
  return tiling * cfg_.time_window_minutes / 2;
}

AxialCoord TileCoder::tiling_cell(const LatLon& p, int level,
                                  int tiling) const {
  const auto off = spatial_offset(level, tiling);
  return grids_.grid(level).axial_at(p, off[0], off[1]);
}

TileSet TileCoder::activate(const LatLon& p, const TimeSlot& t) const {
  if (!cfg_.bbox.contains(p)) {
    throw std::out_of_range("activate_tiles: state location outside bounds");
  }
  if (t.index < 0 || t.index >= kSlotsPerDay) {
    throw std::out_of_range("activate_tiles: slot index out of range");
  }
  TileSet out;
  out.num_tilings = num_tilings();
  out.tile_ids.reserve(static_cast<std::size_t>(out.num_tilings));
  const int k = cfg_.num_tilings_per_resolution;
  const int minute = t.index * kMinutesPerSlot;
  for (int level = 0; level < levels(); ++level) {
    for (int j = 0; j < k; ++j) {
      const AxialCoord c = tiling_cell(p, level, j);
      const int window = time_window_minutes_of(j);
      const int bucket = (minute + time_offset_minutes_of(j)) / window;
      std::uint64_t h = hash_combine(cfg_.seed, 0x71135u);
      h = hash_combine(h, static_cast<std::uint64_t>(level));
      h = hash_combine(h, static_cast<std::uint64_t>(j));
      h = hash_combine(h, static_cast<std::uint64_t>(
                              static_cast<std::int64_t>(c.q)));
      h = hash_combine(h, static_cast<std::uint64_t>(
                              static_cast<std::int64_t>(c.r)));
      h = hash_combine(h, static_cast<std::uint64_t>(bucket));
      h = hash_combine(h, static_cast<std::uint64_t>(t.day_kind));
      out.tile_ids.push_back(static_cast<std::uint32_t>(h % cfg_.hash_table_size));
    }
  }
  return out;
}

void embed(const TileSet& tiles, const EmbeddingTable& table, double* out) {
  for (int d = 0; d < table.dim; ++d) out[d] = 0.0;
  for (std::uint32_t id : tiles.tile_ids) {
    if (id >= table.rows) {
      throw std::out_of_range("embed: tile id beyond table rows");
    }
    kernels::add(table.row(id), out, static_cast<std::size_t>(table.dim));
  }
}

}  // namespace fareflow::geo
