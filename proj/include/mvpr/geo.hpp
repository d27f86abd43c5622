#pragma once

#include "mvpr/vec.hpp"

namespace mvpr {

struct GeoPoint {
  double lat = 0.0;  // degrees
  double lon = 0.0;  // degrees

  friend bool operator==(GeoPoint, GeoPoint) = default;
};

bool is_valid(GeoPoint p);

// Meters per degree used by the local equirectangular projection.
inline constexpr double kMetersPerDegLon = 111320.0;  // at the equator, scaled by cos(lat0)
inline constexpr double kMetersPerDegLat = 110540.0;

// Equirectangular projection about a fixed anchor: x east, y north, meters.
class LocalProjection {
 public:
  LocalProjection() = default;
  explicit LocalProjection(GeoPoint anchor);

  GeoPoint anchor() const { return anchor_; }
  Vec2 to_local(GeoPoint p) const;
  GeoPoint to_geo(Vec2 xy) const;

 private:
  GeoPoint anchor_{};
  double cos_lat0_ = 1.0;
};

// Planar distance in meters under the same equirectangular model, evaluated
// about the midpoint latitude of the two points.
double geodesic_distance(GeoPoint a, GeoPoint b);

}  // namespace mvpr
