#include "mvpr/pipeline.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

#include "mvpr/csv.hpp"
#include "mvpr/dataset.hpp"
#include "mvpr/mesh_io.hpp"
#include "mvpr/retrieval.hpp"
#include "mvpr/route.hpp"
#include "mvpr/route_io.hpp"
#include "mvpr/toy_city.hpp"

namespace mvpr {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(const std::exception& e) {
  if (const auto* s = dynamic_cast<const StageFailure*>(&e)) return s->exit_code();
  if (dynamic_cast<const RejectedInput*>(&e) || dynamic_cast<const ParseError*>(&e)) return 2;
  return 3;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RejectedInput("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw RejectedInput(what + " " + p.string() + " not found");
}

}  // namespace

std::uint64_t content_hash(const fs::path& path) {
  if (fs::is_regular_file(path)) return fnv1a(read_text(path));
  if (!fs::is_directory(path)) throw RejectedInput("cannot hash missing path " + path.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(path)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::uint64_t h = fnv1a("dir");
  for (const auto& f : files) {
    h = fnv1a(f.lexically_relative(path).generic_string(), h);
    h = fnv1a(hex64(fnv1a(read_text(f))), h);
  }
  return h;
}

void cmd_plan_route(const PlanRouteOptions& o) {
  if (o.osm.has_value() == o.bbox.has_value()) throw RejectedInput("give exactly one of --osm or --bbox");
  const auto doc = o.osm ? load_osm_file(*o.osm) : fetch_osm(*o.bbox, o.endpoint);
  const auto graph = build_street_graph(doc);
  const auto route = plan_route(graph);
  const auto samples = sample_path(route, o.spacing);
  fs::create_directories(o.out);
  write_text(o.out / "route.geojson", route_to_geojson(route, graph.projection()));
  write_viewpoint_csv(o.out / "viewpoints.csv", make_viewpoint_records(samples, graph.projection()));
  fmt::print(stderr, "plan-route: {} edges, route {:.1f} m, {} viewpoints\n", graph.edge_count(),
             route.total_length, samples.size());
}

void cmd_render_db(const fs::path& mesh_path, const fs::path& viewpoints, const fs::path& out,
                   const RenderSettings& render) {
  if (render.width <= 0 || render.height <= 0 || !(render.fov_deg > 0.0 && render.fov_deg < 180.0)) {
    throw RejectedInput("render size must be positive and fov in (0, 180) degrees");
  }
  const auto mesh = load_mesh(mesh_path);
  const auto vps = read_viewpoint_csv(viewpoints);
  const Bvh bvh(mesh);
  const double fov = render.fov_deg * std::numbers::pi / 180.0;
  fs::create_directories(out / "images");
  std::vector<PoseRecord> records;
  std::string skipped = "index,lat,lon,reason\n";
  for (const auto& vp : vps) {
    const auto img = render_geo_view(bvh, vp.geo, vp.heading, render.width, render.height, fov);
    if (!img) {
      skipped += std::to_string(vp.index) + "," + format_double(vp.geo.lat) + "," +
                 format_double(vp.geo.lon) + ",outside mesh footprint\n";
      continue;
    }
    PoseRecord r;
    r.id = fmt::format("v{:05}", vp.index);
    r.geo = img->pose.geo;
    r.heading = img->pose.yaw;
    r.pitch = img->pose.pitch;
    r.roll = img->pose.roll;
    r.altitude = img->pose.position.z;
    save_image(*img, out / "images" / (r.id + ".png"));
    records.push_back(std::move(r));
  }
  write_pose_csv(out / "poses.csv", records);
  write_text(out / "skipped.csv", skipped);
  DatasetManifest m;
  m.name = "rendered_db";
  m.role = DatasetRole::TargetDb;
  m.image_dir = out / "images";
  m.pose_table = out / "poses.csv";
  m.mesh = fs::absolute(mesh_path);
  m.domain = Domain::Synthetic;
  save_manifest(out / "manifest.json", m);
  fmt::print(stderr, "render-db: {} images, {} skipped\n", records.size(), vps.size() - records.size());
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  if (!j.is_object()) throw RejectedInput("training config must be a JSON object");
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "iterations") c.iterations = v.get<std::uint64_t>();
      else if (k == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (k == "learning_rate") c.learning_rate = v.get<double>();
      else if (k == "adam_beta1") c.adam_beta1 = v.get<double>();
      else if (k == "adam_beta2") c.adam_beta2 = v.get<double>();
      else if (k == "adam_eps") c.adam_eps = v.get<double>();
      else if (k == "seed") c.rng_seed = v.get<std::uint64_t>();
      else if (k == "holdout_fraction") c.holdout_fraction = v.get<double>();
      else if (k == "log_every") c.log_every = v.get<std::uint64_t>();
      else throw RejectedInput("unknown training option '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw RejectedInput(std::string("training config: ") + e.what());
  }
  validate(c);
  return c;
}

namespace {

std::pair<std::size_t, std::size_t> input_hw(const EmbeddingModel& m) {
  const auto s = m.arch.shapes().front();
  return {s.h, s.w};
}

}  // namespace

AlignOutcome cmd_align(const fs::path& real, const fs::path& synt, const fs::path& init,
                       const TrainConfig& cfg, const fs::path& out, const fs::path& loss_csv) {
  require_file(init, "checkpoint");
  const auto teacher = load_checkpoint(init);
  const auto [h, w] = input_hw(teacher);
  const auto rm = load_manifest(real);
  const auto sm = load_manifest(synt);
  if (rm.role != DatasetRole::AlignmentReal || sm.role != DatasetRole::AlignmentSynt) {
    throw RejectedInput("align needs an alignment_real and an alignment_synt manifest");
  }
  const auto data = load_paired_set(rm, sm, h, w);
  const auto result = align(teacher, teacher, data, cfg);
  if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
  if (!loss_csv.parent_path().empty()) fs::create_directories(loss_csv.parent_path());
  save_checkpoint(out, result.student);
  write_text(loss_csv, format_training_log(result.log));
  fmt::print(stderr, "align: {} pairs, held-out loss {:.4g} -> {:.4g}\n", data.size(),
             result.initial_holdout_loss, result.final_holdout_loss);
  return {result.initial_holdout_loss, result.final_holdout_loss};
}

void cmd_build_index(const fs::path& model_path, const fs::path& images, const fs::path& out) {
  require_file(model_path, "checkpoint");
  const auto model = load_checkpoint(model_path);
  const auto [h, w] = input_hw(model);
  const auto m = load_manifest(images);
  const auto store = build_store(model, load_batch(m, h, w), store_items(m));
  if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
  save_store(out, store);
  fmt::print(stderr, "build-index: {} rows x {}\n", store.size(), store.dim());
}

std::vector<int> parse_ks(const std::string& text) {
  std::vector<int> ks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int k = 0;
    try {
      k = std::stoi(item, &used);
    } catch (const std::exception&) {
      throw RejectedInput("bad K value '" + item + "'");
    }
    if (used != item.size() || k <= 0) throw RejectedInput("bad K value '" + item + "'");
    if (!ks.empty() && k <= ks.back()) throw RejectedInput("K values must be strictly increasing");
    ks.push_back(k);
  }
  if (ks.empty()) throw RejectedInput("empty K list");
  return ks;
}

namespace {

json table_json(const RecallTable& t) {
  json j = json::object();
  for (std::size_t i = 0; i < t.ks.size(); ++i) {
    j["R@" + std::to_string(t.ks[i])] = std::round(t.recall[i] * 10.0) / 10.0;
  }
  return j;
}

}  // namespace

void cmd_evaluate(const EvaluateOptions& o) {
  if (o.aligned && !o.compare) throw RejectedInput("--aligned needs --compare");
  if (!(o.threshold_m > 0.0)) throw RejectedInput("threshold must be positive");
  require_file(o.query_model, "checkpoint");
  const auto model = load_checkpoint(o.query_model);
  const auto [h, w] = input_hw(model);
  const auto qm = load_manifest(o.queries);
  const auto queries = forward(model, load_batch(qm, h, w));
  const auto labels = query_labels(qm);
  const std::size_t kmax = static_cast<std::size_t>(o.ks.back());

  auto evaluate_store = [&](const fs::path& p) {
    require_file(p, "descriptor store");
    const auto store = load_store(p);
    if (store.dim() != queries.cols) {
      throw RejectedInput("store " + p.string() + " has dimension " + std::to_string(store.dim()) +
                          " but the query model outputs " + std::to_string(queries.cols));
    }
    return recall_at_k(knn_batch(store, queries, kmax), labels, store, o.ks, o.threshold_m);
  };

  fs::create_directories(o.report);
  std::vector<std::pair<std::string, RecallTable>> tables;
  json summary;
  summary["queries"] = labels.size();
  summary["threshold_m"] = o.threshold_m;
  if (!o.compare) {
    tables.emplace_back(o.db.stem().string(), evaluate_store(o.db));
  } else {
    const auto synt = evaluate_store(o.db);
    const auto real = evaluate_store(*o.compare);
    std::optional<RecallTable> aligned;
    tables.emplace_back("real", real);
    tables.emplace_back("synthetic", synt);
    if (o.aligned) {
      aligned = evaluate_store(*o.aligned);
      tables.emplace_back("synthetic_aligned", *aligned);
    }
    const auto gap = gap_report(real, synt, aligned);
    write_text(o.report / "gap.md", gap_markdown(gap));
    write_text(o.report / "gap.csv", gap_csv(gap));
    json g = json::object();
    for (std::size_t i = 0; i < o.ks.size(); ++i) {
      json row;
      row["gap"] = std::round(gap.gap[i] * 10.0) / 10.0;
      if (!std::isnan(gap.recovered[i])) row["recovered_pct"] = std::round(gap.recovered[i] * 10.0) / 10.0;
      g["R@" + std::to_string(o.ks[i])] = row;
    }
    summary["gap"] = g;
  }
  for (const auto& [name, t] : tables) summary["recall"][name] = table_json(t);
  write_text(o.report / "recall.md", recall_markdown(tables));
  write_text(o.report / "recall.csv", recall_csv(tables));
  if (o.json) write_text(o.report / "recall.json", summary.dump(2) + "\n");
  for (const auto& [name, t] : tables) {
    fmt::print(stderr, "evaluate: {} R@{} = {:.1f}\n", name, t.ks.front(), t.recall.front());
  }
}

json default_pipeline_config() {
  return json{
      {"seed", 0},
      {"osm", ""},
      {"mesh", ""},
      {"spacing_m", 10.0},
      {"render", {{"width", 128}, {"height", 96}, {"fov_deg", 90.0}}},
      {"teacher", ""},
      {"alignment_real", ""},
      {"alignment_synt", ""},
      {"queries", ""},
      {"real_db", ""},
      {"train",
       {{"iterations", 50000}, {"batch_size", 32}, {"learning_rate", 1e-5}, {"holdout_fraction", 0.1},
        {"log_every", 100}}},
      {"ks", {1, 5, 10, 20, 100}},
      {"threshold_m", 25.0},
      {"output_dir", "run"},
  };
}

namespace {

void apply_env_overrides(json& j, const std::string& prefix) {
  for (auto& [k, v] : j.items()) {
    std::string name = prefix + "_" + k;
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::toupper(c); });
    if (v.is_object()) {
      apply_env_overrides(v, name);
      continue;
    }
    const char* env = std::getenv(name.c_str());
    if (!env) continue;
    const auto parsed = json::parse(env, nullptr, false);
    v = parsed.is_discarded() ? json(env) : parsed;
    fmt::print(stderr, "config: {} overridden from the environment\n", name);
  }
}

}  // namespace

json load_pipeline_config(const fs::path& path) {
  require_file(path, "config");
  json file;
  try {
    file = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw RejectedInput("config " + path.string() + ": " + e.what());
  }
  if (!file.is_object()) throw RejectedInput("config must be a JSON object");
  auto cfg = default_pipeline_config();
  for (const auto& [k, v] : file.items()) {
    if (!cfg.contains(k)) throw RejectedInput("unknown config key '" + k + "'");
    if (k == "train" || k == "render") {
      if (!v.is_object()) throw RejectedInput("config key '" + k + "' must be an object");
      for (const auto& [k2, v2] : v.items()) cfg[k][k2] = v2;
    } else {
      cfg[k] = v;
    }
  }
  apply_env_overrides(cfg, "MVPR");
  return cfg;
}

namespace {

// Per-stage cache record in <output_dir>/cache/<stage>.json.
class StageCache {
 public:
  explicit StageCache(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  bool fresh(const std::string& stage, const std::string& key, const std::vector<fs::path>& outputs) const {
    const auto p = dir_ / (stage + ".json");
    if (!fs::exists(p)) return false;
    const auto rec = json::parse(read_text(p), nullptr, false);
    if (rec.is_discarded() || rec.value("key", "") != key) return false;
    for (const auto& o : outputs) {
      if (!fs::exists(o)) return false;
      if (!rec.contains("outputs") || rec["outputs"].value(o.filename().string(), "") != hex64(content_hash(o))) {
        return false;
      }
    }
    return true;
  }

  void record(const std::string& stage, const std::string& key, const std::vector<fs::path>& outputs) const {
    json rec;
    rec["key"] = key;
    for (const auto& o : outputs) rec["outputs"][o.filename().string()] = hex64(content_hash(o));
    write_text(dir_ / (stage + ".json"), rec.dump(2) + "\n");
  }

 private:
  fs::path dir_;
};

}  // namespace

RunAllResult cmd_run_all(const fs::path& config_path) {
  const auto cfg = run_stage("config", [&] { return load_pipeline_config(config_path); });
  const auto base = config_path.parent_path();
  auto path_of = [&](const std::string& key) -> fs::path {
    const auto s = cfg.at(key).get<std::string>();
    if (s.empty()) throw RejectedInput("config key '" + key + "' is required");
    const fs::path p(s);
    return p.is_absolute() ? p : base / p;
  };

  struct Inputs {
    fs::path osm, mesh, teacher, real, synt, queries, out;
    std::optional<fs::path> real_db;
    RenderSettings render;
    TrainConfig train;
    std::vector<int> ks;
    double spacing = 10.0, threshold = 25.0;
  };
  const auto in = run_stage("config", [&] {
    Inputs i;
    i.osm = path_of("osm");
    i.mesh = path_of("mesh");
    i.teacher = path_of("teacher");
    i.real = path_of("alignment_real");
    i.synt = path_of("alignment_synt");
    i.queries = path_of("queries");
    i.out = path_of("output_dir");
    if (!cfg.at("real_db").get<std::string>().empty()) i.real_db = path_of("real_db");
    for (const auto& p : {i.osm, i.mesh, i.teacher, i.real, i.synt, i.queries}) require_file(p, "input");
    if (i.real_db) require_file(*i.real_db, "input");
    try {
      i.render = {cfg["render"].at("width").get<int>(), cfg["render"].at("height").get<int>(),
                  cfg["render"].at("fov_deg").get<double>()};
      auto train = cfg.at("train");
      train["seed"] = cfg.at("seed");
      i.train = train_config_from_json(train);
      i.ks = cfg.at("ks").get<std::vector<int>>();
      i.spacing = cfg.at("spacing_m").get<double>();
      i.threshold = cfg.at("threshold_m").get<double>();
    } catch (const json::exception& e) {
      throw RejectedInput(std::string("config: ") + e.what());
    }
    parse_ks([&] {
      std::string s;
      for (int k : i.ks) s += (s.empty() ? "" : ",") + std::to_string(k);
      return s;
    }());
    if (!(i.spacing > 0.0)) throw RejectedInput("spacing_m must be positive");
    // Manifests are validated up front so no stage starts on broken inputs.
    load_manifest(i.real);
    load_manifest(i.synt);
    load_manifest(i.queries);
    if (i.real_db) load_manifest(*i.real_db);
    return i;
  });

  RunAllResult result;
  StageCache cache(in.out / "cache");
  // key = hash of the stage name, its parameters and every input's content.
  auto stage = [&](const std::string& name, const json& params, const std::vector<fs::path>& inputs,
                   const std::vector<fs::path>& outputs, const std::function<void()>& fn) {
    run_stage(name, [&] {
      std::uint64_t h = fnv1a(name);
      h = fnv1a(params.dump(), h);
      for (const auto& p : inputs) h = fnv1a(hex64(content_hash(p)), h);
      const auto key = hex64(h);
      if (cache.fresh(name, key, outputs)) {
        fmt::print(stderr, "{}: cached\n", name);
        result.cached.push_back(name);
        return;
      }
      fmt::print(stderr, "{}: running\n", name);
      fn();
      cache.record(name, key, outputs);
      result.ran.push_back(name);
    });
  };
  auto dir_of = [](const fs::path& manifest) { return manifest.parent_path(); };

  const auto route_dir = in.out / "route";
  stage("plan-route", {{"spacing", in.spacing}}, {in.osm}, {route_dir / "route.geojson", route_dir / "viewpoints.csv"},
        [&] { cmd_plan_route({in.osm, std::nullopt, "", in.spacing, route_dir}); });

  const auto db_dir = in.out / "db";
  stage("render-db", {{"w", in.render.width}, {"h", in.render.height}, {"fov", in.render.fov_deg}},
        {in.mesh, route_dir / "viewpoints.csv"}, {db_dir},
        [&] {
          fs::remove_all(db_dir);
          cmd_render_db(in.mesh, route_dir / "viewpoints.csv", db_dir, in.render);
        });

  const auto student = in.out / "align" / "student.ckpt";
  const auto& t = in.train;
  const json train_params{{"iterations", t.iterations}, {"batch", t.batch_size}, {"lr", t.learning_rate},
                          {"b1", t.adam_beta1},         {"b2", t.adam_beta2},    {"eps", t.adam_eps},
                          {"seed", t.rng_seed},         {"holdout", t.holdout_fraction}};
  const auto holdout = in.out / "align" / "holdout.json";
  stage("align", train_params, {in.teacher, dir_of(in.real), dir_of(in.synt)}, {student, holdout}, [&] {
    const auto r = cmd_align(in.real, in.synt, in.teacher, in.train, student, in.out / "align" / "loss.csv");
    write_text(holdout, json{{"initial_holdout_loss", r.initial_holdout_loss},
                             {"final_holdout_loss", r.final_holdout_loss}}.dump(2) + "\n");
  });

  const auto index_dir = in.out / "index";
  const auto synt_store = index_dir / "synthetic.mvpr";
  const auto aligned_store = index_dir / "synthetic_aligned.mvpr";
  const auto real_store = index_dir / "real.mvpr";
  stage("build-index-synthetic", json::object(), {in.teacher, db_dir}, {synt_store},
        [&] { cmd_build_index(in.teacher, db_dir / "manifest.json", synt_store); });
  stage("build-index-aligned", json::object(), {student, db_dir}, {aligned_store},
        [&] { cmd_build_index(student, db_dir / "manifest.json", aligned_store); });
  if (in.real_db) {
    stage("build-index-real", json::object(), {in.teacher, dir_of(*in.real_db)}, {real_store},
          [&] { cmd_build_index(in.teacher, *in.real_db, real_store); });
  }

  result.report_dir = in.out / "report";
  std::vector<fs::path> eval_inputs{in.teacher, dir_of(in.queries), synt_store, aligned_store};
  if (in.real_db) eval_inputs.push_back(real_store);
  stage("evaluate", {{"ks", in.ks}, {"threshold", in.threshold}}, eval_inputs, {result.report_dir},
        [&] {
          fs::remove_all(result.report_dir);
          EvaluateOptions o;
          o.queries = in.queries;
          o.query_model = in.teacher;
          o.ks = in.ks;
          o.threshold_m = in.threshold;
          o.report = result.report_dir;
          o.json = true;
          if (in.real_db) {
            o.db = synt_store;
            o.compare = real_store;
            o.aligned = aligned_store;
            cmd_evaluate(o);
          } else {
            o.db = aligned_store;
            cmd_evaluate(o);
          }
        });
  return result;
}

}  // namespace mvpr
