#include "mvpr/toy_city.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "json.hpp"
#include "mvpr/dataset.hpp"
#include "mvpr/error.hpp"
#include "mvpr/mesh_io.hpp"
#include "mvpr/model.hpp"
#include "mvpr/rng.hpp"
#include "mvpr/route.hpp"

namespace mvpr {

namespace fs = std::filesystem;

namespace {

struct MeshBuilder {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::vector<Rgb> colors;

  void quad(Vec3 a, Vec3 b, Vec3 c, Vec3 d, Rgb color) {
    const auto base = static_cast<std::uint32_t>(vertices.size());
    vertices.insert(vertices.end(), {a, b, c, d});
    triangles.push_back({base, base + 1, base + 2});
    triangles.push_back({base, base + 2, base + 3});
    colors.push_back(color);
    colors.push_back(color);
  }

  void box(double x0, double y0, double x1, double y1, double h, Rgb wall, Rgb roof) {
    quad({x0, y0, h}, {x1, y0, h}, {x1, y1, h}, {x0, y1, h}, roof);
    quad({x0, y0, 0}, {x1, y0, 0}, {x1, y0, h}, {x0, y0, h}, wall);
    quad({x1, y0, 0}, {x1, y1, 0}, {x1, y1, h}, {x1, y0, h}, wall);
    quad({x1, y1, 0}, {x0, y1, 0}, {x0, y1, h}, {x1, y1, h}, wall);
    quad({x0, y1, 0}, {x0, y0, 0}, {x0, y0, h}, {x0, y1, h}, wall);
  }
};

Rgb random_color(SplitMix64& rng) {
  auto c = [&] { return static_cast<std::uint8_t>(40 + rng.index(200)); };
  const auto r = c();
  const auto g = c();
  return {r, g, c()};
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

std::string id_of(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%05zu", prefix, i);
  return buf;
}

PoseRecord pose_record(const std::string& id, const RenderedImage& img) {
  PoseRecord r;
  r.id = id;
  r.geo = img.pose.geo;
  r.heading = img.pose.yaw;
  r.pitch = img.pose.pitch;
  r.roll = img.pose.roll;
  r.altitude = img.pose.position.z;
  return r;
}

// Writes images plus poses.csv and manifest.json into dir.
void write_dataset(const fs::path& dir, const std::string& name, DatasetRole role,
                   const std::vector<std::pair<PoseRecord, RgbImage>>& items,
                   std::optional<std::string> pair_key, std::optional<Domain> domain = {}) {
  fs::create_directories(dir / "images");
  std::vector<PoseRecord> records;
  for (const auto& [rec, img] : items) {
    save_image(img, dir / "images" / (rec.id + ".png"));
    records.push_back(rec);
  }
  write_pose_csv(dir / "poses.csv", records);
  DatasetManifest m;
  m.name = name;
  m.role = role;
  m.image_dir = dir / "images";
  m.pose_table = dir / "poses.csv";
  m.pair_key = std::move(pair_key);
  m.domain = domain;
  save_manifest(dir / "manifest.json", m);
}

}  // namespace

TriangleMesh make_toy_city_mesh(const ToyCityConfig& cfg) {
  if (cfg.blocks < 1 || !(cfg.block_size > cfg.street_width) || !(cfg.street_width > 0.0)) {
    throw RejectedInput("toy city: need blocks >= 1 and block_size > street_width > 0");
  }
  SplitMix64 rng(cfg.seed);
  MeshBuilder mb;
  const double b = cfg.block_size;
  const double lo = -b, hi = (cfg.blocks + 1) * b;
  mb.quad({lo, lo, 0}, {hi, lo, 0}, {hi, hi, 0}, {lo, hi, 0}, {110, 110, 105});
  const double half = cfg.street_width / 2.0;
  for (int i = -1; i <= cfg.blocks; ++i) {
    for (int j = -1; j <= cfg.blocks; ++j) {
      const double x0 = i * b + half, x1 = (i + 1) * b - half;
      const double y0 = j * b + half, y1 = (j + 1) * b - half;
      // Each lot is split into a 2 x 2 grid; every cell gets a building with
      // probability 3/4.
      const double mx = 0.5 * (x0 + x1), my = 0.5 * (y0 + y1);
      const double xs[3] = {x0, mx, x1}, ys[3] = {y0, my, y1};
      for (int cx = 0; cx < 2; ++cx) {
        for (int cy = 0; cy < 2; ++cy) {
          const bool present = rng.index(4) != 0;
          const double h = 6.0 + 30.0 * rng.uniform();
          const auto wall = random_color(rng);
          const auto roof = random_color(rng);
          if (!present) continue;
          mb.box(xs[cx] + 0.5, ys[cy] + 0.5, xs[cx + 1] - 0.5, ys[cy + 1] - 0.5, h, wall, roof);
        }
      }
    }
  }
  return TriangleMesh(std::move(mb.vertices), std::move(mb.triangles), std::move(mb.colors), cfg.anchor);
}

std::string make_toy_city_osm(const ToyCityConfig& cfg) {
  const LocalProjection proj(cfg.anchor);
  const int n = cfg.blocks + 1;
  auto node_id = [&](int i, int j) { return 1 + j * n + i; };
  std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<osm version=\"0.6\">\n";
  char buf[160];
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const auto g = proj.to_geo({i * cfg.block_size, j * cfg.block_size});
      std::snprintf(buf, sizeof buf, "  <node id=\"%d\" lat=\"%.17g\" lon=\"%.17g\"/>\n", node_id(i, j),
                    g.lat, g.lon);
      s += buf;
    }
  }
  const auto corner = proj.to_geo({0.5 * cfg.block_size, 0.5 * cfg.block_size});
  std::snprintf(buf, sizeof buf, "  <node id=\"%d\" lat=\"%.17g\" lon=\"%.17g\"/>\n", n * n + 1,
                corner.lat, corner.lon);
  s += buf;
  int way = 100;
  auto add_way = [&](const std::vector<int>& refs, const char* key, const char* value) {
    s += "  <way id=\"" + std::to_string(way++) + "\">\n";
    for (int r : refs) s += "    <nd ref=\"" + std::to_string(r) + "\"/>\n";
    s += std::string("    <tag k=\"") + key + "\" v=\"" + value + "\"/>\n  </way>\n";
  };
  for (int j = 0; j < n; ++j) {
    std::vector<int> refs;
    for (int i = 0; i < n; ++i) refs.push_back(node_id(i, j));
    add_way(refs, "highway", "residential");
  }
  for (int i = 0; i < n; ++i) {
    std::vector<int> refs;
    for (int j = 0; j < n; ++j) refs.push_back(node_id(i, j));
    add_way(refs, "highway", "residential");
  }
  add_way({n * n + 1, node_id(0, 0), n * n + 1}, "building", "yes");
  s += "</osm>\n";
  return s;
}

RgbImage apply_real_domain(const RgbImage& image) {
  RgbImage out = image;
  for (std::size_t i = 0; i + 2 < out.pixels.size(); i += 3) {
    const int r = image.pixels[i], g = image.pixels[i + 1], b = image.pixels[i + 2];
    out.pixels[i] = static_cast<std::uint8_t>(255 - g);
    out.pixels[i + 1] = static_cast<std::uint8_t>(b);
    out.pixels[i + 2] = static_cast<std::uint8_t>(std::lround(0.8 * r + 25.5));
  }
  return out;
}

std::vector<ViewpointRecord> plan_viewpoints(const OsmDocument& doc, double spacing) {
  const auto graph = build_street_graph(doc);
  const auto route = plan_route(graph);
  return make_viewpoint_records(sample_path(route, spacing), graph.projection());
}

std::optional<RenderedImage> render_geo_view(const Bvh& bvh, GeoPoint geo, double heading, int width,
                                             int height, double fov) {
  const auto proj = bvh.mesh().projection();
  GroundEstimate ground;
  try {
    ground = estimate_ground(bvh, proj.to_local(geo));
  } catch (const OutsideFootprint&) {
    return std::nullopt;
  }
  const auto pose = make_camera_pose(ground, heading, kDefaultCameraHeight, proj);
  return render_view(bvh, pose, width, height, fov);
}

void generate_toy_dataset(const fs::path& dir, const ToyDatasetConfig& cfg) {
  fs::create_directories(dir);
  const double fov = cfg.fov_deg * std::numbers::pi / 180.0;
  SplitMix64 rng(cfg.seed);

  struct City {
    TriangleMesh mesh;
    OsmDocument osm;
  };
  auto write_city = [&](const ToyCityConfig& c, const std::string& name) {
    fs::create_directories(dir / name);
    City city{make_toy_city_mesh(c), {}};
    save_mesh(city.mesh, dir / name / "mesh.obj");
    const auto osm = make_toy_city_osm(c);
    write_file(dir / name / "streets.osm", osm);
    city.osm = parse_osm_document(osm);
    return city;
  };
  const auto align_city = write_city(cfg.align_city, "align_city");
  const auto target_city = write_city(cfg.target_city, "target_city");

  // Alignment pairs: route viewpoints looking along, across and against the street.
  {
    const Bvh bvh(align_city.mesh);
    std::vector<std::pair<PoseRecord, RgbImage>> real, synt;
    std::size_t place = 0;
    for (const auto& vp : plan_viewpoints(align_city.osm, cfg.align_spacing)) {
      for (int turn = 0; turn < 4; ++turn) {
        const double heading = normalize_angle(vp.heading + turn * std::numbers::pi / 2.0);
        const auto img = render_geo_view(bvh, vp.geo, heading, cfg.width, cfg.height, fov);
        if (!img) continue;
        auto rr = pose_record(id_of("r", place), *img);
        auto sr = pose_record(id_of("s", place), *img);
        rr.extra["place"] = sr.extra["place"] = id_of("p", place);
        real.emplace_back(rr, apply_real_domain(*img));
        synt.emplace_back(sr, *img);
        ++place;
      }
    }
    write_dataset(dir / "alignment" / "real", "alignment_real", DatasetRole::AlignmentReal, real, "place");
    write_dataset(dir / "alignment" / "synt", "alignment_synt", DatasetRole::AlignmentSynt, synt, "place");
  }

  // Target city: real-domain database at the route viewpoints and jittered
  // real-domain queries.
  {
    const Bvh bvh(target_city.mesh);
    const auto vps = plan_viewpoints(target_city.osm, cfg.db_spacing);
    std::vector<std::pair<PoseRecord, RgbImage>> db, queries;
    for (const auto& vp : vps) {
      const auto img = render_geo_view(bvh, vp.geo, vp.heading, cfg.width, cfg.height, fov);
      if (!img) continue;
      db.emplace_back(pose_record(id_of("v", vp.index), *img), apply_real_domain(*img));
    }
    const auto proj = target_city.mesh.projection();
    while (queries.size() < cfg.queries) {
      const auto& vp = vps[rng.index(vps.size())];
      const double along = cfg.query_jitter_m * (2.0 * rng.uniform() - 1.0);
      const double dh = cfg.query_jitter_heading * (2.0 * rng.uniform() - 1.0);
      const Vec2 dir2{std::sin(vp.heading), std::cos(vp.heading)};
      const auto geo = proj.to_geo(proj.to_local(vp.geo) + along * dir2);
      const auto img = render_geo_view(bvh, geo, normalize_angle(vp.heading + dh), cfg.width, cfg.height, fov);
      if (!img) continue;
      queries.emplace_back(pose_record(id_of("q", queries.size()), *img), apply_real_domain(*img));
    }
    write_dataset(dir / "real_db", "real_db", DatasetRole::TargetDb, db, std::nullopt, Domain::Real);
    write_dataset(dir / "queries", "queries", DatasetRole::Queries, queries, std::nullopt);
  }

  const auto arch = Architecture::parse(cfg.architecture);
  save_checkpoint(dir / "teacher.ckpt", init_model(arch, cfg.seed));

  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["osm"] = "target_city/streets.osm";
  j["mesh"] = "target_city/mesh.obj";
  j["spacing_m"] = cfg.db_spacing;
  j["render"] = {{"width", cfg.width}, {"height", cfg.height}, {"fov_deg", cfg.fov_deg}};
  j["teacher"] = "teacher.ckpt";
  j["alignment_real"] = "alignment/real/manifest.json";
  j["alignment_synt"] = "alignment/synt/manifest.json";
  j["queries"] = "queries/manifest.json";
  j["real_db"] = "real_db/manifest.json";
  j["train"] = {{"iterations", 3000}, {"batch_size", 16},  {"learning_rate", 1e-3},
                {"holdout_fraction", 0.1}, {"log_every", 100}};
  j["ks"] = {1, 5, 10, 20, 100};
  j["threshold_m"] = 25.0;
  j["output_dir"] = "run";
  write_file(dir / "config.json", j.dump(2) + "\n");
}

}  // namespace mvpr
