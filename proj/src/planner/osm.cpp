#include "mvpr/osm.hpp"

#include <algorithm>
#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <charconv>
#include <cstdio>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "httplib.h"
#include "json.hpp"
#include "mvpr/binary.hpp"
#include "mvpr/error.hpp"

namespace mvpr {

namespace {

namespace pt = boost::property_tree;

template <typename T>
T parse_number(const std::string& s, const char* what) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(std::string("osm: bad ") + what + " '" + s + "'");
  }
  return v;
}

}  // namespace

OsmDocument parse_osm_xml(const std::string& text) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError(std::string("osm xml: ") + e.what());
  }
  const auto root = tree.get_child_optional("osm");
  if (!root) throw ParseError("osm xml: missing <osm> root");

  OsmDocument doc;
  for (const auto& [name, child] : *root) {
    if (name == "node") {
      const auto id = parse_number<NodeId>(child.get<std::string>("<xmlattr>.id", ""), "node id");
      const auto lat = parse_number<double>(child.get<std::string>("<xmlattr>.lat", ""), "lat");
      const auto lon = parse_number<double>(child.get<std::string>("<xmlattr>.lon", ""), "lon");
      doc.nodes[id] = {lat, lon};
    } else if (name == "way") {
      OsmWay way;
      way.id = parse_number<std::int64_t>(child.get<std::string>("<xmlattr>.id", ""), "way id");
      for (const auto& [cname, c] : child) {
        if (cname == "nd") {
          way.refs.push_back(
              parse_number<NodeId>(c.get<std::string>("<xmlattr>.ref", ""), "node ref"));
        } else if (cname == "tag") {
          way.tags[c.get<std::string>("<xmlattr>.k", "")] = c.get<std::string>("<xmlattr>.v", "");
        }
      }
      doc.ways.push_back(std::move(way));
    }
  }
  return doc;
}

OsmDocument parse_overpass_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("overpass json: ") + e.what());
  }
  if (!j.is_object() || !j.contains("elements") || !j["elements"].is_array()) {
    throw ParseError("overpass json: missing 'elements' array");
  }
  OsmDocument doc;
  try {
    for (const auto& el : j["elements"]) {
      const auto type = el.at("type").get<std::string>();
      if (type == "node") {
        doc.nodes[el.at("id").get<NodeId>()] = {el.at("lat").get<double>(),
                                                 el.at("lon").get<double>()};
      } else if (type == "way") {
        OsmWay way;
        way.id = el.at("id").get<std::int64_t>();
        if (el.contains("nodes")) way.refs = el["nodes"].get<std::vector<NodeId>>();
        if (el.contains("tags")) way.tags = el["tags"].get<std::map<std::string, std::string>>();
        doc.ways.push_back(std::move(way));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("overpass json: ") + e.what());
  }
  return doc;
}

OsmDocument parse_osm_document(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) throw ParseError("osm: empty document");
  if (text[first] == '<') return parse_osm_xml(text);
  if (text[first] == '{') return parse_overpass_json(text);
  throw ParseError("osm: unrecognised document format");
}

OsmDocument load_osm_file(const std::filesystem::path& path) {
  try {
    return parse_osm_document(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string overpass_query(const GeoBox& box) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "[out:json][timeout:180];way[\"highway\"](%.7f,%.7f,%.7f,%.7f);(._;>;);out body;",
                box.min_lat, box.min_lon, box.max_lat, box.max_lon);
  return buf;
}

OsmDocument fetch_osm(const GeoBox& box, const std::string& endpoint_url,
                      const FetchOptions& options) {
  if (!(box.min_lat < box.max_lat && box.min_lon < box.max_lon) ||
      !is_valid({box.min_lat, box.min_lon}) || !is_valid({box.max_lat, box.max_lon})) {
    throw RejectedInput("invalid bounding box");
  }
  // Split "scheme://host[:port]/path" into the client base and request path.
  const auto scheme_end = endpoint_url.find("://");
  const auto path_start =
      endpoint_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  const std::string base =
      path_start == std::string::npos ? endpoint_url : endpoint_url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : endpoint_url.substr(path_start);

  const auto sleep = options.sleep ? options.sleep : [](std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  };
  const std::string body = "data=" + httplib::detail::encode_query_param(overpass_query(box));

  std::string last_error = "no attempt made";
  auto backoff = options.initial_backoff;
  for (int attempt = 1; attempt <= options.attempts; ++attempt) {
    try {
      httplib::Client client(base);
      client.set_connection_timeout(options.timeout);
      client.set_read_timeout(options.timeout);
      const auto res = client.Post(path, body, "application/x-www-form-urlencoded");
      if (!res) {
        last_error = "request failed: " + httplib::to_string(res.error());
      } else if (res->status < 200 || res->status >= 300) {
        last_error = "HTTP status " + std::to_string(res->status);
      } else {
        return parse_osm_document(res->body);
      }
    } catch (const ParseError& e) {
      last_error = std::string("malformed body: ") + e.what();
    } catch (const std::exception& e) {
      last_error = e.what();
    }
    if (attempt < options.attempts) {
      sleep(backoff);
      backoff *= 2;
    }
  }
  throw TransportError("fetch_osm: " + last_error + " after " + std::to_string(options.attempts) +
                           " attempts",
                       options.attempts);
}

StreetGraph build_street_graph(const OsmDocument& doc, std::optional<GeoPoint> anchor) {
  std::vector<const OsmWay*> ways;
  for (const auto& w : doc.ways) {
    if (!w.tags.contains("highway")) continue;
    for (auto ref : w.refs) {
      if (!doc.nodes.contains(ref)) {
        throw ParseError("way " + std::to_string(w.id) + " references missing node " +
                         std::to_string(ref));
      }
    }
    ways.push_back(&w);
  }

  // Consecutive repeats carry no geometry.
  std::vector<std::vector<NodeId>> refs;
  for (const auto* w : ways) {
    std::vector<NodeId> r;
    for (auto id : w->refs) {
      if (r.empty() || r.back() != id) r.push_back(id);
    }
    if (r.size() >= 2) refs.push_back(std::move(r));
  }

  if (!anchor) {
    GeoPoint lo{90.0, 180.0}, hi{-90.0, -180.0};
    for (const auto& r : refs) {
      for (auto id : r) {
        const auto g = doc.nodes.at(id);
        lo = {std::min(lo.lat, g.lat), std::min(lo.lon, g.lon)};
        hi = {std::max(hi.lat, g.lat), std::max(hi.lon, g.lon)};
      }
    }
    anchor = refs.empty() ? GeoPoint{} : GeoPoint{0.5 * (lo.lat + hi.lat), 0.5 * (lo.lon + hi.lon)};
  }
  StreetGraph graph{LocalProjection(*anchor)};
  const auto& proj = graph.projection();

  std::unordered_map<NodeId, int> uses;
  for (const auto& r : refs) {
    for (auto id : r) ++uses[id];
  }
  auto ensure_node = [&](NodeId id) {
    if (!graph.index_of(id)) graph.add_node(id, proj.to_local(doc.nodes.at(id)));
  };

  for (const auto& r : refs) {
    NodeId start = r.front();
    std::vector<Vec2> via;
    for (std::size_t i = 1; i < r.size(); ++i) {
      const NodeId id = r[i];
      const bool split = i + 1 == r.size() || uses[id] >= 2;
      if (!split) {
        via.push_back(proj.to_local(doc.nodes.at(id)));
        continue;
      }
      ensure_node(start);
      ensure_node(id);
      const Vec2 pa = graph.position(*graph.index_of(start));
      std::vector<Vec2> pts{pa};
      pts.insert(pts.end(), via.begin(), via.end());
      pts.push_back(graph.position(*graph.index_of(id)));
      if (polyline_length(pts) > 0.0) graph.add_edge(start, id, via);
      start = id;
      via.clear();
    }
  }
  return graph;
}

}  // namespace mvpr
