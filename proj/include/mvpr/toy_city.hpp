#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mvpr/image.hpp"
#include "mvpr/mesh.hpp"
#include "mvpr/osm.hpp"
#include "mvpr/render.hpp"
#include "mvpr/route_io.hpp"

namespace mvpr {

// A square street grid with box buildings on every lot, including a ring of
// lots outside the outermost streets.
struct ToyCityConfig {
  std::uint64_t seed = 1;
  int blocks = 3;             // blocks per side; streets = blocks + 1 per axis
  double block_size = 60.0;   // m between street center lines
  double street_width = 14.0; // m kept free of buildings around each center line
  GeoPoint anchor{37.7749, -122.4194};
};

// Ground quad plus colored boxes. Street center lines run along x = k * block_size
// and y = k * block_size for k = 0..blocks.
TriangleMesh make_toy_city_mesh(const ToyCityConfig& cfg);
// The street grid as OSM XML (highway=residential ways through every
// intersection) plus one building way that a street parser must ignore.
std::string make_toy_city_osm(const ToyCityConfig& cfg);

// Fixed pixel-domain shift standing in for the real-photo domain:
// r' = 255 - g, g' = b, b' = 0.8 r + 25.5, rounded.
RgbImage apply_real_domain(const RgbImage& image);

// Route-inspection viewpoints of the street network in `doc`, projected
// about the network's own center (as build_street_graph does by default).
std::vector<ViewpointRecord> plan_viewpoints(const OsmDocument& doc, double spacing);

// Camera 2.5 m above the mesh at `geo`, looking along `heading`. Empty when
// the ground trace misses the mesh.
std::optional<RenderedImage> render_geo_view(const Bvh& bvh, GeoPoint geo, double heading, int width,
                                             int height, double fov);

inline constexpr const char* kToyArchitecture =
    "input 3 16 16; conv 8; relu; pool; conv 16; relu; pool; dense 32; l2norm";

struct ToyDatasetConfig {
  std::uint64_t seed = 7;
  ToyCityConfig align_city{11, 3, 60.0, 14.0, {37.7749, -122.4194}};
  ToyCityConfig target_city{23, 3, 60.0, 14.0, {37.7899, -122.4094}};
  int width = 48;
  int height = 36;
  double fov_deg = 90.0;
  double align_spacing = 4.0;    // m along the alignment-city route
  double db_spacing = 10.0;      // m along the target-city route
  std::size_t queries = 134;
  double query_jitter_m = 2.0;
  double query_jitter_heading = 0.1;  // rad, uniform half-width
  std::string architecture = kToyArchitecture;
};

// Writes a self-contained offline dataset under `dir`:
//   align_city/, target_city/          mesh.obj (+ .palette), streets.osm
//   alignment/real, alignment/synt     paired manifests keyed on "place"
//   queries/                           real-domain images near the target route
//   real_db/                           real-domain renders of the target route
//   teacher.ckpt                       frozen teacher (seeded initialization)
//   config.json                        run-all configuration
// Output is a pure function of the config.
void generate_toy_dataset(const std::filesystem::path& dir, const ToyDatasetConfig& cfg = {});

}  // namespace mvpr
