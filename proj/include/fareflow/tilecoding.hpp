#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fareflow/hexgrid.hpp"

namespace fareflow::geo {

enum class DayKind : std::uint8_t { weekday = 0, weekend = 1 };

std::string to_string(DayKind k);
DayKind day_kind_from_string(const std::string& s);

constexpr int kSlotsPerDay = 48;
constexpr int kMinutesPerSlot = 30;

// Semi-hour slot of day; weekday and weekend time are kept apart.
struct TimeSlot {
  int index = 0;  // floor(minutes_since_midnight / 30), in [0, 48)
  DayKind day_kind = DayKind::weekday;
  bool operator==(const TimeSlot&) const = default;
};

inline TimeSlot slot_of_minute(int minutes_since_midnight, DayKind kind) {
  int m = minutes_since_midnight % (kSlotsPerDay * kMinutesPerSlot);
  if (m < 0) m += kSlotsPerDay * kMinutesPerSlot;
  return TimeSlot{m / kMinutesPerSlot, kind};
}

struct CodingConfig {
  BoundingBox bbox;
  std::vector<double> hex_resolutions_m{300.0, 900.0, 2700.0};
  int num_tilings_per_resolution = 2;
  int time_window_minutes = 30;  // tiling j inside a level uses (j+1) windows
  std::uint32_t hash_table_size = 1u << 18;
  std::uint64_t seed = 1;

  void validate() const;  // throws std::invalid_argument

  static CodingConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  static CodingConfig load(const std::string& path);
};

struct TileSet {
  std::vector<std::uint32_t> tile_ids;  // one per tiling, each < table size
  int num_tilings = 0;
};

// CMAC-style activation: overlapping shifted hex tilings per resolution
// level, crossed with coarse time windows and the day kind into joint tile
// ids hashed into a fixed-size table. Deterministic in (input, config).
class TileCoder {
 public:
  explicit TileCoder(CodingConfig cfg);

  const CodingConfig& config() const { return cfg_; }
  const HexGridStack& grids() const { return grids_; }
  int levels() const { return grids_.levels(); }
  int num_tilings() const;

  TileSet activate(const LatLon& p, const TimeSlot& t) const;

  // Tiling geometry, exposed so tests can re-derive assignments
  // independently.
  std::array<double, 2> spatial_offset(int level, int tiling) const;
  int time_window_minutes_of(int tiling) const;
  int time_offset_minutes_of(int tiling) const;
  AxialCoord tiling_cell(const LatLon& p, int level, int tiling) const;

 private:
  CodingConfig cfg_;
  HexGridStack grids_;
  std::vector<std::array<double, 2>> offsets_;  // flattened (level, tiling)
};

struct EmbeddingTable {
  std::uint32_t rows = 0;
  int dim = 0;
  std::vector<double> weights;  // rows * dim, row-major

  EmbeddingTable() = default;
  EmbeddingTable(std::uint32_t rows_, int dim_)
      : rows(rows_), dim(dim_),
        weights(static_cast<std::size_t>(rows_) * dim_, 0.0) {}

  const double* row(std::uint32_t r) const {
    return weights.data() + static_cast<std::size_t>(r) * dim;
  }
  double* row(std::uint32_t r) {
    return weights.data() + static_cast<std::size_t>(r) * dim;
  }
};

// Sum of the activated tiles' rows; linear in the table entries.
void embed(const TileSet& tiles, const EmbeddingTable& table, double* out);

}  // namespace fareflow::geo
