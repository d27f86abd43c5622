#include "mvpr/geo.hpp"

#include <numbers>

namespace mvpr {

namespace {
constexpr double kDegToRad = std::numbers::pi / 180.0;
}

bool is_valid(GeoPoint p) {
  return p.lat >= -90.0 && p.lat <= 90.0 && p.lon >= -180.0 && p.lon <= 180.0;
}

LocalProjection::LocalProjection(GeoPoint anchor)
    : anchor_(anchor), cos_lat0_(std::cos(anchor.lat * kDegToRad)) {}

Vec2 LocalProjection::to_local(GeoPoint p) const {
  return {(p.lon - anchor_.lon) * cos_lat0_ * kMetersPerDegLon,
          (p.lat - anchor_.lat) * kMetersPerDegLat};
}

GeoPoint LocalProjection::to_geo(Vec2 xy) const {
  return {anchor_.lat + xy.y / kMetersPerDegLat,
          anchor_.lon + xy.x / (cos_lat0_ * kMetersPerDegLon)};
}

double geodesic_distance(GeoPoint a, GeoPoint b) {
  const double mid_lat = 0.5 * (a.lat + b.lat) * kDegToRad;
  const double dx = (b.lon - a.lon) * std::cos(mid_lat) * kMetersPerDegLon;
  const double dy = (b.lat - a.lat) * kMetersPerDegLat;
  return std::hypot(dx, dy);
}

}  // namespace mvpr
