#include "fareflow/hexgrid.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fareflow::geo {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kMetersPerDegLat = 111320.0;
constexpr double kSqrt3 = 1.7320508075688772;

AxialCoord cube_round(double qf, double rf) {
  // Cube rounding keeps the containment property at cell boundaries, so the
  // grids of one level form an exact partition of the plane.
  double xf = qf;
  double zf = rf;
  double yf = -xf - zf;
  double rx = std::round(xf);
  double ry = std::round(yf);
  double rz = std::round(zf);
  double dx = std::abs(rx - xf);
  double dy = std::abs(ry - yf);
  double dz = std::abs(rz - zf);
  if (dx > dy && dx > dz) {
    rx = -ry - rz;
  } else if (dy > dz) {
    ry = -rx - rz;
  } else {
    rz = -rx - ry;
  }
  return AxialCoord{static_cast<std::int32_t>(rx),
                    static_cast<std::int32_t>(rz)};
}
}  // namespace

HexGrid::HexGrid(const BoundingBox& box, double edge_m)
    : box_(box), edge_m_(edge_m) {
  if (edge_m <= 0.0) throw std::invalid_argument("hex edge must be positive");
  if (box.lat_min >= box.lat_max || box.lon_min >= box.lon_max) {
    throw std::invalid_argument("degenerate bounding box");
  }
  lat0_ = 0.5 * (box.lat_min + box.lat_max);
  lon0_ = 0.5 * (box.lon_min + box.lon_max);
  m_per_deg_lat_ = kMetersPerDegLat;
  m_per_deg_lon_ = kMetersPerDegLat * std::cos(lat0_ * kPi / 180.0);
}

double HexGrid::inradius_m() const { return edge_m_ * kSqrt3 / 2.0; }

std::array<double, 2> HexGrid::project(const LatLon& p) const {
  return {(p.lon - lon0_) * m_per_deg_lon_, (p.lat - lat0_) * m_per_deg_lat_};
}

LatLon HexGrid::unproject(double x, double y) const {
  return LatLon{lat0_ + y / m_per_deg_lat_, lon0_ + x / m_per_deg_lon_};
}

AxialCoord HexGrid::axial_at(const LatLon& p, double off_x,
                             double off_y) const {
  auto [x, y] = project(p);
  x -= off_x;
  y -= off_y;
  const double qf = (2.0 / 3.0) * x / edge_m_;
  const double rf = (-x / 3.0 + kSqrt3 / 3.0 * y) / edge_m_;
  return cube_round(qf, rf);
}

std::array<double, 2> HexGrid::axial_center_xy(const AxialCoord& c,
                                               double off_x,
                                               double off_y) const {
  const double x = edge_m_ * 1.5 * c.q + off_x;
  const double y = edge_m_ * kSqrt3 * (c.r + 0.5 * c.q) + off_y;
  return {x, y};
}

LatLon HexGrid::cell_center(const AxialCoord& c) const {
  auto [x, y] = axial_center_xy(c);
  return unproject(x, y);
}

std::array<std::array<double, 2>, 6> HexGrid::cell_corners_xy(
    const AxialCoord& c, double off_x, double off_y) const {
  auto [cx, cy] = axial_center_xy(c, off_x, off_y);
  std::array<std::array<double, 2>, 6> out;
  for (int i = 0; i < 6; ++i) {
    const double ang = kPi / 3.0 * i;
    out[i] = {cx + edge_m_ * std::cos(ang), cy + edge_m_ * std::sin(ang)};
  }
  return out;
}

std::int64_t HexGrid::pack(const AxialCoord& c) {
  return (static_cast<std::int64_t>(c.q) << 32) |
         (static_cast<std::uint32_t>(c.r));
}

AxialCoord HexGrid::unpack(std::int64_t id) {
  return AxialCoord{static_cast<std::int32_t>(id >> 32),
                    static_cast<std::int32_t>(id & 0xffffffffLL)};
}

std::array<AxialCoord, 6> HexGrid::neighbors(const AxialCoord& c) {
  return {AxialCoord{c.q + 1, c.r},     AxialCoord{c.q + 1, c.r - 1},
          AxialCoord{c.q, c.r - 1},     AxialCoord{c.q - 1, c.r},
          AxialCoord{c.q - 1, c.r + 1}, AxialCoord{c.q, c.r + 1}};
}

int HexGrid::axial_distance(const AxialCoord& a, const AxialCoord& b) {
  const int dq = a.q - b.q;
  const int dr = a.r - b.r;
  const int ds = -(dq + dr);
  return (std::abs(dq) + std::abs(dr) + std::abs(ds)) / 2;
}

std::vector<AxialCoord> HexGrid::cells_in_bounds() const {
  auto [xmin, ymin] = project(LatLon{box_.lat_min, box_.lon_min});
  auto [xmax, ymax] = project(LatLon{box_.lat_max, box_.lon_max});
  const int q_lo = static_cast<int>(std::floor(xmin / (1.5 * edge_m_))) - 1;
  const int q_hi = static_cast<int>(std::ceil(xmax / (1.5 * edge_m_))) + 1;
  std::vector<AxialCoord> out;
  for (int q = q_lo; q <= q_hi; ++q) {
    const int r_lo =
        static_cast<int>(std::floor(ymin / (kSqrt3 * edge_m_) - 0.5 * q)) - 1;
    const int r_hi =
        static_cast<int>(std::ceil(ymax / (kSqrt3 * edge_m_) - 0.5 * q)) + 1;
    for (int r = r_lo; r <= r_hi; ++r) {
      const AxialCoord c{q, r};
      const LatLon center = cell_center(c);
      if (box_.contains(center)) out.push_back(c);
    }
  }
  return out;
}

HexGridStack::HexGridStack(const BoundingBox& box,
                           const std::vector<double>& edges_m)
    : box_(box) {
  if (edges_m.empty()) throw std::invalid_argument("no hex resolutions given");
  double prev = 0.0;
  for (double e : edges_m) {
    if (e <= prev) {
      throw std::invalid_argument("hex resolutions must be strictly increasing");
    }
    prev = e;
    grids_.emplace_back(box, e);
  }
}

const HexGrid& HexGridStack::grid(int level) const {
  if (level < 0 || level >= static_cast<int>(grids_.size())) {
    throw std::out_of_range("hex resolution level out of range");
  }
  return grids_[static_cast<std::size_t>(level)];
}

GridCell HexGridStack::locate(const LatLon& p, int level) const {
  if (!box_.contains(p)) {
    throw std::out_of_range("point (" + std::to_string(p.lat) + ", " +
                            std::to_string(p.lon) +
                            ") outside the configured bounding box");
  }
  const HexGrid& g = grid(level);
  const AxialCoord c = g.axial_at(p);
  return GridCell{HexGrid::pack(c), g.cell_center(c), level};
}

}  // namespace fareflow::geo
