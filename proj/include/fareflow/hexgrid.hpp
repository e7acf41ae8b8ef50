#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace fareflow::geo {

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

struct BoundingBox {
  double lat_min = 0.0;
  double lat_max = 0.0;
  double lon_min = 0.0;
  double lon_max = 0.0;

  bool contains(const LatLon& p) const {
    return p.lat >= lat_min && p.lat <= lat_max && p.lon >= lon_min &&
           p.lon <= lon_max;
  }
};

// Axial coordinates of a flat-top hexagon.
struct AxialCoord {
  std::int32_t q = 0;
  std::int32_t r = 0;
  bool operator==(const AxialCoord&) const = default;
};

struct GridCell {
  std::int64_t cell_id = 0;  // packed (q, r); unique within a level
  LatLon center;
  int resolution_level = 0;
  bool operator==(const GridCell&) const = default;
};

// Flat-top hexagonal grid over a local equirectangular projection of the
// bounding box. Edge length = circumradius, in meters. Pure and
// deterministic; all methods are safe for concurrent use.
class HexGrid {
 public:
  HexGrid(const BoundingBox& box, double edge_m);

  const BoundingBox& bounds() const { return box_; }
  double edge_m() const { return edge_m_; }
  // Center-to-boundary distance (inradius), meters.
  double inradius_m() const;

  // Planar meters relative to the box center; x east, y north.
  std::array<double, 2> project(const LatLon& p) const;
  LatLon unproject(double x, double y) const;

  // Cell containing the (projected) point, with an optional planar offset
  // of the whole lattice (used by shifted tilings).
  AxialCoord axial_at(const LatLon& p, double off_x = 0.0,
                      double off_y = 0.0) const;
  std::array<double, 2> axial_center_xy(const AxialCoord& c, double off_x = 0.0,
                                        double off_y = 0.0) const;
  LatLon cell_center(const AxialCoord& c) const;

  // Six corners of the cell polygon in planar meters, counterclockwise.
  std::array<std::array<double, 2>, 6> cell_corners_xy(
      const AxialCoord& c, double off_x = 0.0, double off_y = 0.0) const;

  static std::int64_t pack(const AxialCoord& c);
  static AxialCoord unpack(std::int64_t id);

  // The six axial neighbors.
  static std::array<AxialCoord, 6> neighbors(const AxialCoord& c);

  // Hex steps between two cells (axial "Manhattan" distance).
  static int axial_distance(const AxialCoord& a, const AxialCoord& b);

  // All cells whose center lies inside the bounding box.
  std::vector<AxialCoord> cells_in_bounds() const;

 private:
  BoundingBox box_;
  double edge_m_;
  double lat0_;
  double lon0_;
  double m_per_deg_lat_;
  double m_per_deg_lon_;
};

// One grid per configured resolution level; throws std::out_of_range when a
// point leaves the bounding box.
class HexGridStack {
 public:
  HexGridStack(const BoundingBox& box, const std::vector<double>& edges_m);

  int levels() const { return static_cast<int>(grids_.size()); }
  const HexGrid& grid(int level) const;

  GridCell locate(const LatLon& p, int level) const;

 private:
  BoundingBox box_;
  std::vector<HexGrid> grids_;
};

}  // namespace fareflow::geo
