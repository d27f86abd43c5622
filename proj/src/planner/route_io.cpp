#include "mvpr/route_io.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"
#include "mvpr/binary.hpp"
#include "mvpr/csv.hpp"
#include "mvpr/error.hpp"

namespace mvpr {

std::string route_to_geojson(const RoutePath& path, const LocalProjection& projection) {
  nlohmann::json coords = nlohmann::json::array();
  for (const auto& p : path.polyline) {
    const auto g = projection.to_geo(p);
    coords.push_back({g.lon, g.lat});
  }
  nlohmann::json transfer = nlohmann::json::array();
  for (std::size_t i = 0; i < path.segment_transfer.size(); ++i) {
    if (path.segment_transfer[i]) transfer.push_back(i);
  }
  const nlohmann::json doc = {
      {"type", "Feature"},
      {"geometry", {{"type", "LineString"}, {"coordinates", coords}}},
      {"properties",
       {{"total_length_m", path.total_length},
        {"capture_length_m", path.capture_length},
        {"matching_cost_m", path.matching_cost},
        {"matching_exact", path.exact},
        {"components", path.components},
        {"steps", path.steps.size()},
        {"transfer_segments", transfer}}}};
  return doc.dump(2) + "\n";
}

std::vector<ViewpointRecord> make_viewpoint_records(const std::vector<SampledViewpoint>& samples,
                                                    const LocalProjection& projection) {
  std::vector<ViewpointRecord> rows;
  rows.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    rows.push_back({i, projection.to_geo(s.xy), s.xy, s.heading, s.arc_position});
  }
  return rows;
}

std::string format_viewpoint_csv(const std::vector<ViewpointRecord>& rows) {
  std::ostringstream out;
  out << "index,lat,lon,x_m,y_m,heading_rad,arc_m\n";
  for (const auto& r : rows) {
    out << r.index << ',' << format_double(r.geo.lat) << ',' << format_double(r.geo.lon) << ','
        << format_double(r.xy.x) << ',' << format_double(r.xy.y) << ','
        << format_double(r.heading) << ',' << format_double(r.arc) << '\n';
  }
  return out.str();
}

std::vector<ViewpointRecord> parse_viewpoint_csv(const std::string& text) {
  const std::string ctx = "viewpoint csv";
  const auto table = parse_csv(text, ctx);
  const auto ci = table.require_column("index", ctx);
  const auto clat = table.require_column("lat", ctx);
  const auto clon = table.require_column("lon", ctx);
  const auto cx = table.require_column("x_m", ctx);
  const auto cy = table.require_column("y_m", ctx);
  const auto ch = table.require_column("heading_rad", ctx);
  const auto ca = table.require_column("arc_m", ctx);
  std::vector<ViewpointRecord> rows;
  for (const auto& f : table.rows) {
    ViewpointRecord r;
    const double idx = parse_double(f[ci], ctx + " index");
    if (idx < 0 || idx != std::floor(idx)) throw ParseError(ctx + ": bad index '" + f[ci] + "'");
    r.index = static_cast<std::size_t>(idx);
    r.geo = {parse_double(f[clat], ctx + " lat"), parse_double(f[clon], ctx + " lon")};
    if (!is_valid(r.geo)) throw ParseError(ctx + ": coordinates out of range at index " + f[ci]);
    r.xy = {parse_double(f[cx], ctx + " x_m"), parse_double(f[cy], ctx + " y_m")};
    r.heading = parse_double(f[ch], ctx + " heading_rad");
    r.arc = parse_double(f[ca], ctx + " arc_m");
    rows.push_back(r);
  }
  return rows;
}

void write_viewpoint_csv(const std::filesystem::path& path,
                         const std::vector<ViewpointRecord>& rows) {
  write_file(path, format_viewpoint_csv(rows));
}

std::vector<ViewpointRecord> read_viewpoint_csv(const std::filesystem::path& path) {
  try {
    return parse_viewpoint_csv(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace mvpr
