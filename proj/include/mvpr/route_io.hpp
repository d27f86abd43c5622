#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mvpr/geo.hpp"
#include "mvpr/route.hpp"

namespace mvpr {

// GeoJSON Feature with a LineString geometry ([lon, lat] pairs) and the
// route lengths and matching flags as properties.
std::string route_to_geojson(const RoutePath& path, const LocalProjection& projection);

struct ViewpointRecord {
  std::size_t index = 0;
  GeoPoint geo;
  Vec2 xy;
  double heading = 0.0;
  double arc = 0.0;

  friend bool operator==(const ViewpointRecord&, const ViewpointRecord&) = default;
};

std::vector<ViewpointRecord> make_viewpoint_records(const std::vector<SampledViewpoint>& samples,
                                                    const LocalProjection& projection);

// CSV with header index,lat,lon,x_m,y_m,heading_rad,arc_m. Values use
// round-trip precision.
std::string format_viewpoint_csv(const std::vector<ViewpointRecord>& rows);
// Columns are located by header name, so extra columns and any order are
// accepted. Throws ParseError on a missing column or a malformed number.
std::vector<ViewpointRecord> parse_viewpoint_csv(const std::string& text);

void write_viewpoint_csv(const std::filesystem::path& path, const std::vector<ViewpointRecord>& rows);
std::vector<ViewpointRecord> read_viewpoint_csv(const std::filesystem::path& path);

}  // namespace mvpr
