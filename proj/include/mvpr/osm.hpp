#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mvpr/geo.hpp"
#include "mvpr/street_graph.hpp"

namespace mvpr {

struct OsmWay {
  std::int64_t id = 0;
  std::vector<NodeId> refs;
  std::map<std::string, std::string> tags;
};

struct OsmDocument {
  std::map<NodeId, GeoPoint> nodes;
  std::vector<OsmWay> ways;
};

// OSM XML (<osm><node/><way><nd/><tag/></way></osm>).
OsmDocument parse_osm_xml(const std::string& text);
// Overpass JSON ({"elements": [{"type": "node"|"way", ...}]}).
OsmDocument parse_overpass_json(const std::string& text);
// Dispatches on the first non-blank character ('<' XML, '{' JSON).
OsmDocument parse_osm_document(const std::string& text);
OsmDocument load_osm_file(const std::filesystem::path& path);

struct GeoBox {
  double min_lat = 0.0;
  double min_lon = 0.0;
  double max_lat = 0.0;
  double max_lon = 0.0;
};

std::string overpass_query(const GeoBox& box);

struct FetchOptions {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};  // doubles after every failed attempt
  std::chrono::seconds timeout{60};
  // Replaceable for tests; defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleep;
};

// POSTs an Overpass query for highway ways in `box`. Network failures,
// non-2xx statuses and unparseable bodies are retried; after the last
// attempt a TransportError is thrown.
OsmDocument fetch_osm(const GeoBox& box, const std::string& endpoint_url,
                      const FetchOptions& options = {});

// Builds the street graph from ways tagged highway=*. Ways are condensed:
// one edge per stretch between way endpoints or nodes shared by several
// ways. Positions are projected about `anchor`, or about the center of the
// used nodes' bounding box when no anchor is given. A highway way that
// references a missing node raises ParseError naming the way.
StreetGraph build_street_graph(const OsmDocument& doc, std::optional<GeoPoint> anchor = {});

}  // namespace mvpr
