#include <fmt/core.h>

#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "mvpr/dataset.hpp"
#include "mvpr/pipeline.hpp"
#include "mvpr/toy_city.hpp"

#ifndef MVPR_VERSION
#define MVPR_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace mvpr;

namespace {

GeoBox parse_bbox(const std::string& text) {
  double v[4];
  char tail = 0;
  if (std::sscanf(text.c_str(), "%lf,%lf,%lf,%lf%c", &v[0], &v[1], &v[2], &v[3], &tail) != 4) {
    throw RejectedInput("--bbox expects min_lat,min_lon,max_lat,max_lon");
  }
  if (!(v[0] < v[2] && v[1] < v[3])) throw RejectedInput("--bbox minimum must lie below maximum");
  return {v[0], v[1], v[2], v[3]};
}

nlohmann::json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw RejectedInput("cannot read " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw RejectedInput(p.string() + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mesh-based visual place recognition pipeline"};
  app.set_version_flag("--version", std::string("mvpr ") + MVPR_VERSION);
  app.require_subcommand(1);

  PlanRouteOptions plan;
  std::string osm, bbox;
  auto* plan_cmd = app.add_subcommand("plan-route", "Plan a covering route and sample viewpoints");
  auto* osm_opt = plan_cmd->add_option("--osm", osm, "OSM XML or Overpass JSON file");
  auto* bbox_opt = plan_cmd->add_option("--bbox", bbox, "min_lat,min_lon,max_lat,max_lon to fetch");
  osm_opt->excludes(bbox_opt);
  plan_cmd->add_option("--endpoint", plan.endpoint, "Overpass endpoint URL");
  plan_cmd->add_option("--spacing", plan.spacing, "Viewpoint spacing in meters")->capture_default_str();
  plan_cmd->add_option("--out", plan.out, "Output directory")->required();

  fs::path mesh, viewpoints, render_out;
  RenderSettings render;
  auto* render_cmd = app.add_subcommand("render-db", "Render a synthetic database at viewpoints");
  render_cmd->add_option("--mesh", mesh, "OBJ or PLY mesh")->required();
  render_cmd->add_option("--viewpoints", viewpoints, "Viewpoint CSV")->required();
  render_cmd->add_option("--out", render_out, "Output directory")->required();
  render_cmd->add_option("--width", render.width)->capture_default_str();
  render_cmd->add_option("--height", render.height)->capture_default_str();
  render_cmd->add_option("--fov-deg", render.fov_deg)->capture_default_str();

  fs::path real, synt, init, train_json, align_out, loss_csv;
  auto* align_cmd = app.add_subcommand("align", "Align a student to the teacher on paired images");
  align_cmd->add_option("--real", real, "alignment_real manifest")->required();
  align_cmd->add_option("--synt", synt, "alignment_synt manifest")->required();
  align_cmd->add_option("--init", init, "Teacher checkpoint, also the student's start")->required();
  align_cmd->add_option("--config", train_json, "Training config JSON");
  align_cmd->add_option("--out", align_out, "Student checkpoint")->required();
  align_cmd->add_option("--loss-csv", loss_csv, "Training log (default: <out>.loss.csv)");

  fs::path model, images, store_out;
  auto* index_cmd = app.add_subcommand("build-index", "Embed a manifest into a descriptor store");
  index_cmd->add_option("--model", model)->required();
  index_cmd->add_option("--images", images, "Dataset manifest")->required();
  index_cmd->add_option("--out", store_out)->required();

  EvaluateOptions eval;
  std::string ks = "1,5,10,20,100";
  fs::path compare, aligned;
  auto* eval_cmd = app.add_subcommand("evaluate", "Recall@K of queries against a store");
  eval_cmd->add_option("--db", eval.db)->required();
  eval_cmd->add_option("--queries", eval.queries, "Query manifest")->required();
  eval_cmd->add_option("--query-model", eval.query_model)->required();
  eval_cmd->add_option("--ks", ks)->capture_default_str();
  eval_cmd->add_option("--threshold-m", eval.threshold_m)->capture_default_str();
  eval_cmd->add_option("--report", eval.report, "Report directory")->required();
  eval_cmd->add_option("--compare", compare, "Real-image store; --db is then the synthetic one");
  eval_cmd->add_option("--aligned", aligned, "Aligned synthetic store, with --compare");
  eval_cmd->add_flag("--json", eval.json, "Also write recall.json");

  fs::path config;
  auto* all_cmd = app.add_subcommand("run-all", "Run every stage with cached intermediates");
  all_cmd->add_option("--config", config)->required();

  fs::path toy_out;
  ToyDatasetConfig toy;
  auto* toy_cmd = app.add_subcommand("make-toy-city", "Generate the offline toy-city dataset");
  toy_cmd->add_option("--out", toy_out)->required();
  toy_cmd->add_option("--seed", toy.seed)->capture_default_str();
  toy_cmd->add_option("--queries", toy.queries)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  std::string stage = app.get_subcommands().front()->get_name();
  try {
    if (*plan_cmd) {
      if (!osm.empty()) plan.osm = osm;
      if (!bbox.empty()) plan.bbox = parse_bbox(bbox);
      cmd_plan_route(plan);
    } else if (*render_cmd) {
      cmd_render_db(mesh, viewpoints, render_out, render);
    } else if (*align_cmd) {
      const auto cfg = train_json.empty() ? TrainConfig{} : train_config_from_json(read_json_file(train_json));
      if (loss_csv.empty()) loss_csv = fs::path(align_out.string() + ".loss.csv");
      cmd_align(real, synt, init, cfg, align_out, loss_csv);
    } else if (*index_cmd) {
      cmd_build_index(model, images, store_out);
    } else if (*eval_cmd) {
      eval.ks = parse_ks(ks);
      if (!compare.empty()) eval.compare = compare;
      if (!aligned.empty()) eval.aligned = aligned;
      cmd_evaluate(eval);
    } else if (*all_cmd) {
      const auto r = cmd_run_all(config);
      fmt::print(stderr, "run-all: {} stages ran, {} cached, report in {}\n", r.ran.size(), r.cached.size(),
                 r.report_dir.string());
    } else if (*toy_cmd) {
      generate_toy_dataset(toy_out, toy);
    }
  } catch (const StageFailure& e) {
    fmt::print(stderr, "mvpr: stage {} failed: {}\n", e.stage(), e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    fmt::print(stderr, "mvpr: stage {} failed: {}\n", stage, e.what());
    return exit_code_for(e);
  }
  return 0;
}
