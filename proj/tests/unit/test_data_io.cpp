#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "mvpr/dataset.hpp"
#include "mvpr/error.hpp"
#include "mvpr/osm.hpp"
#include "mvpr/route.hpp"
#include "mvpr/toy_city.hpp"
#include "support.hpp"

using namespace mvpr;
using namespace mvpr::testing;
namespace fs = std::filesystem;

namespace {

void write(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

RgbImage solid(int w, int h, Rgb c) {
  RgbImage img{w, h, {}};
  for (int i = 0; i < w * h; ++i) img.pixels.insert(img.pixels.end(), {c.r, c.g, c.b});
  return img;
}

// Writes a dataset of n records with ids prefix0.. and returns the manifest path.
fs::path make_dataset(const fs::path& dir, const std::string& role, std::size_t n, const std::string& prefix,
                      bool with_pair = false, bool with_heading = true) {
  std::vector<PoseRecord> recs;
  for (std::size_t i = 0; i < n; ++i) {
    PoseRecord r;
    r.id = prefix + std::to_string(i);
    r.geo = {37.77 + 1e-4 * static_cast<double>(i), -122.41};
    if (with_heading) r.heading = 0.25 * static_cast<double>(i);
    if (with_pair) r.extra["place"] = "p" + std::to_string(i);
    recs.push_back(r);
    fs::create_directories(dir / "images");
    save_image(solid(4, 3, {static_cast<std::uint8_t>(i), 10, 20}), dir / "images" / (r.id + ".png"));
  }
  write_pose_csv(dir / "poses.csv", recs);
  nlohmann::json j{{"name", dir.filename().string()}, {"role", role}, {"images", "images"}, {"poses", "poses.csv"}};
  if (with_pair) j["pair_key"] = "place";
  write(dir / "manifest.json", j.dump());
  return dir / "manifest.json";
}

}  // namespace

TEST_CASE("pose csv: examples and optional columns") {
  const auto recs = parse_pose_csv("id,lat,lon\na,37.5,-122.25\n", "t");
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].id == "a");
  CHECK(recs[0].geo.lat == 37.5);
  CHECK_FALSE(recs[0].heading.has_value());

  const auto more = parse_pose_csv("lon,id,heading_rad,lat,place\n1,b,,2,x\n3,c,0.5,4,y\n", "t");
  CHECK_FALSE(more[0].heading.has_value());
  CHECK(*more[1].heading == 0.5);
  CHECK(more[1].geo.lat == 4.0);
  CHECK(more[1].extra.at("place") == "y");

  CHECK_THROWS_AS(parse_pose_csv("id,lat\na,1\n", "t"), ParseError);
  CHECK_THROWS_AS(parse_pose_csv("id,lat,lon\na,x,1\n", "t"), ParseError);
  CHECK_THROWS_AS(parse_pose_csv("id,lat,lon\na,95,1\n", "t"), ParseError);
  CHECK_THROWS_AS(parse_pose_csv("id,lat,lon\n,1,1\n", "t"), ParseError);
  CHECK_THROWS_AS(parse_pose_csv("id,lat,lon\na,1\n", "t"), ParseError);
}

TEST_CASE("pose csv: random tables round-trip losslessly") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    std::vector<PoseRecord> recs;
    for (int i = 0; i < 20; ++i) {
      PoseRecord r;
      r.id = "img," + std::to_string(t) + "\"" + std::to_string(i);
      r.geo = {80.0 * u(rng), 170.0 * u(rng)};
      if (rng() % 2) r.heading = 3.0 * u(rng) + 3.0;
      if (rng() % 2) r.pitch = u(rng);
      if (rng() % 2) r.roll = u(rng);
      if (rng() % 2) r.altitude = 100.0 * u(rng);
      if (rng() % 2) r.extra["place"] = "p" + std::to_string(rng() % 100);
      recs.push_back(r);
    }
    auto back = parse_pose_csv(format_pose_csv(recs), "rt");
    // Columns absent from a record come back as empty strings.
    for (auto& r : back) {
      for (auto it = r.extra.begin(); it != r.extra.end();) it = it->second.empty() ? r.extra.erase(it) : ++it;
    }
    CHECK(back == recs);
  }
  TempDir dir("pose");
  std::vector<PoseRecord> one{{"x", {1.5, 2.5}, 0.1, {}, {}, 12.0, {}}};
  write_pose_csv(dir.path() / "p.csv", one);
  CHECK(read_pose_csv(dir.path() / "p.csv") == one);
}

TEST_CASE("load_manifest: minimal manifest and validation errors") {
  TempDir dir("manifest");
  const auto q = make_dataset(dir.path() / "q", "queries", 3, "q", false, false);
  const auto m = load_manifest(q);
  CHECK(m.role == DatasetRole::Queries);
  CHECK(m.records.size() == 3);
  CHECK(m.domain_of() == Domain::Real);
  CHECK(load_images(m)[2].at(0, 0) == Rgb{2, 10, 20});

  // Heading is mandatory for database and alignment records.
  const auto db = make_dataset(dir.path() / "db", "target_db", 2, "d", false, false);
  CHECK_THROWS_WITH_AS(load_manifest(db), doctest::Contains("heading"), RejectedInput);

  const auto a = make_dataset(dir.path() / "a", "alignment_real", 2, "r", false);
  CHECK_THROWS_WITH_AS(load_manifest(a), doctest::Contains("pair_key"), RejectedInput);

  fs::remove(dir.path() / "q" / "images" / "q1.png");
  CHECK_THROWS_WITH_AS(load_manifest(q), doctest::Contains("q1.png"), RejectedInput);
  CHECK_THROWS_AS(load_manifest(dir.path() / "nope.json"), RejectedInput);
  write(dir.path() / "bad.json", "{\"name\": 1}");
  CHECK_THROWS_AS(load_manifest(dir.path() / "bad.json"), RejectedInput);
  write(dir.path() / "junk.json", "{");
  CHECK_THROWS_AS(load_manifest(dir.path() / "junk.json"), ParseError);

  const auto dup = make_dataset(dir.path() / "dup", "queries", 2, "z", false, false);
  write(dir.path() / "dup" / "poses.csv", "id,lat,lon\nz0,1,1\nz0,1,1\n");
  CHECK_THROWS_WITH_AS(load_manifest(dup), doctest::Contains("duplicate id"), RejectedInput);
}

TEST_CASE("load_manifest: 134 query records") {
  TempDir dir("q134");
  const auto m = load_manifest(make_dataset(dir.path(), "queries", 134, "q"));
  CHECK(m.records.size() == 134);
  CHECK(query_labels(m).size() == 134);
}

TEST_CASE("save_manifest round trip") {
  TempDir dir("save");
  const auto p = make_dataset(dir.path() / "s", "alignment_synt", 2, "s", true);
  auto m = load_manifest(p);
  m.domain = Domain::Real;
  save_manifest(dir.path() / "s" / "copy.json", m);
  const auto back = load_manifest(dir.path() / "s" / "copy.json");
  CHECK(back.records == m.records);
  CHECK(back.pair_key == m.pair_key);
  CHECK(back.domain_of() == Domain::Real);
  CHECK(fs::equivalent(back.image_dir, m.image_dir));
}

TEST_CASE("join_pairs: key based, order independent, names the missing key") {
  TempDir dir("join");
  const auto r = load_manifest(make_dataset(dir.path() / "r", "alignment_real", 5, "r", true));
  auto s = load_manifest(make_dataset(dir.path() / "s", "alignment_synt", 5, "s", true));
  const auto j = join_pairs(r, s);
  CHECK(j.keys == std::vector<std::string>{"p0", "p1", "p2", "p3", "p4"});
  for (std::size_t k = 0; k < 5; ++k) CHECK(r.pair_value(j.real[k]) == s.pair_value(j.synt[k]));

  // Reversing one table's record order changes nothing downstream.
  auto rev = s;
  std::reverse(rev.records.begin(), rev.records.end());
  const auto j2 = join_pairs(r, rev);
  CHECK(j2.keys == j.keys);
  for (std::size_t k = 0; k < 5; ++k) CHECK(rev.records[j2.synt[k]].id == s.records[j.synt[k]].id);
  const auto a = load_paired_set(r, s, 3, 4);
  const auto b = load_paired_set(r, rev, 3, 4);
  CHECK(a.synt.data == b.synt.data);
  CHECK(a.ids == b.ids);

  s.records.erase(s.records.begin() + 3);
  CHECK_THROWS_WITH_AS(join_pairs(r, s), doctest::Contains("'p3'"), RejectedInput);
  CHECK_THROWS_WITH_AS(join_pairs(s, r), doctest::Contains("'p3'"), RejectedInput);
}

TEST_CASE("png: round trip and corrupt file") {
  TempDir dir("png");
  std::mt19937_64 rng(9);
  RgbImage img{7, 5, {}};
  for (int i = 0; i < 7 * 5 * 3; ++i) img.pixels.push_back(static_cast<std::uint8_t>(rng()));
  save_image(img, dir.path() / "a.png");
  CHECK(load_image(dir.path() / "a.png") == img);
  save_image(img, dir.path() / "a.ppm");
  CHECK(load_image(dir.path() / "a.ppm") == img);
  write(dir.path() / "bad.png", "\x89PNG\r\n\x1a\n garbage");
  CHECK_THROWS_AS(load_image(dir.path() / "bad.png"), ParseError);
  CHECK_THROWS_AS(load_image(dir.path() / "none.png"), RejectedInput);
}

TEST_CASE("toy city: street graph, mesh footprint, domain shift") {
  const ToyCityConfig cfg;
  const auto doc = parse_osm_document(make_toy_city_osm(cfg));
  const auto g = build_street_graph(doc, cfg.anchor);
  // 4 x 4 intersections, 3 edges per street line, 8 lines.
  CHECK(g.node_count() == 16);
  CHECK(g.edge_count() == 24);
  CHECK(g.total_length() == doctest::Approx(24 * cfg.block_size).epsilon(1e-9));
  // Outer non-corner intersections are odd: 8 of them, paired along the border.
  CHECK(odd_degree_nodes(g).size() == 8);
  CHECK(plan_route(g).total_length == doctest::Approx(28 * cfg.block_size).epsilon(1e-9));

  const auto mesh = make_toy_city_mesh(cfg);
  CHECK(mesh == make_toy_city_mesh(cfg));
  const Bvh bvh(mesh);
  // Every street center point has open ground below the camera.
  for (int k = 0; k <= cfg.blocks; ++k) {
    const auto ground = estimate_ground(bvh, {k * cfg.block_size, 0.5 * cfg.block_size});
    CHECK(ground.ground_point.z == 0.0);
  }
  auto other = cfg;
  other.seed = 2;
  CHECK_FALSE(mesh == make_toy_city_mesh(other));

  const auto img = solid(2, 1, {10, 100, 200});
  const auto real = apply_real_domain(img);
  CHECK(real.at(0, 0) == Rgb{155, 200, 34});
  CHECK(real.width == 2);
}

TEST_CASE("toy dataset: generated manifests load and pair up") {
  TempDir dir("toy");
  ToyDatasetConfig cfg;
  cfg.align_city.blocks = 1;
  cfg.target_city.blocks = 1;
  cfg.align_spacing = 20.0;
  cfg.queries = 10;
  generate_toy_dataset(dir.path(), cfg);
  const auto r = load_manifest(dir.path() / "alignment" / "real" / "manifest.json");
  const auto s = load_manifest(dir.path() / "alignment" / "synt" / "manifest.json");
  CHECK(join_pairs(r, s).keys.size() == r.records.size());
  CHECK(r.records.size() == s.records.size());
  CHECK(r.domain_of() == Domain::Real);
  CHECK(load_manifest(dir.path() / "queries" / "manifest.json").records.size() == 10);
  CHECK(load_manifest(dir.path() / "real_db" / "manifest.json").domain_of() == Domain::Real);
  CHECK(fs::exists(dir.path() / "teacher.ckpt"));
  CHECK(fs::exists(dir.path() / "config.json"));
  // The real image of a pair is the shifted synthetic one.
  const auto ri = load_image(r.image_path(0));
  const auto si = load_image(s.image_path(0));
  CHECK(ri == apply_real_domain(si));
}
