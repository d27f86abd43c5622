#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mvpr/align.hpp"
#include "mvpr/error.hpp"
#include "mvpr/osm.hpp"

namespace mvpr {

// An error tagged with the pipeline stage it came from. exit_code is 2 for
// usage or input problems and 3 for runtime failures.
class StageFailure : public Error {
 public:
  StageFailure(std::string stage, int exit_code, const std::string& message)
      : Error(stage + ": " + message), stage_(std::move(stage)), exit_code_(exit_code) {}
  const std::string& stage() const { return stage_; }
  int exit_code() const { return exit_code_; }

 private:
  std::string stage_;
  int exit_code_;
};

// 2 for RejectedInput / ParseError (bad input), 3 otherwise.
int exit_code_for(const std::exception& e);

// Runs fn, converting any exception into a StageFailure for `stage`.
template <class Fn>
auto run_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageFailure&) {
    throw;
  } catch (const std::exception& e) {
    throw StageFailure(stage, exit_code_for(e), e.what());
  }
}

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull);
std::string hex64(std::uint64_t v);
// Hash of a file's bytes, or of a directory's sorted relative paths and file
// contents. Throws RejectedInput when the path does not exist.
std::uint64_t content_hash(const std::filesystem::path& path);

struct RenderSettings {
  int width = 128;
  int height = 96;
  double fov_deg = 90.0;
};

struct PlanRouteOptions {
  std::optional<std::filesystem::path> osm;
  std::optional<GeoBox> bbox;
  std::string endpoint = "https://overpass-api.de/api/interpreter";
  double spacing = 10.0;
  std::filesystem::path out;
};
// Writes route.geojson and viewpoints.csv into out.
void cmd_plan_route(const PlanRouteOptions& o);

// Renders one image per viewpoint (ids v00000...) into out/images and writes
// poses.csv, manifest.json (role target_db, synthetic) and skipped.csv for
// viewpoints whose ground trace misses the mesh.
void cmd_render_db(const std::filesystem::path& mesh, const std::filesystem::path& viewpoints,
                   const std::filesystem::path& out, const RenderSettings& render);

// TrainConfig from a JSON object; absent keys keep their defaults. "seed"
// sets the sampling seed.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct AlignOutcome {
  double initial_holdout_loss = 0.0;
  double final_holdout_loss = 0.0;
};
// Teacher and initial student are both `init`. Writes the student checkpoint
// to out and the training log CSV to loss_csv.
AlignOutcome cmd_align(const std::filesystem::path& real, const std::filesystem::path& synt,
                       const std::filesystem::path& init, const TrainConfig& cfg,
                       const std::filesystem::path& out, const std::filesystem::path& loss_csv);

void cmd_build_index(const std::filesystem::path& model, const std::filesystem::path& images,
                     const std::filesystem::path& out);

struct EvaluateOptions {
  std::filesystem::path db;
  std::filesystem::path queries;
  std::filesystem::path query_model;
  std::vector<int> ks{1, 5, 10, 20, 100};
  double threshold_m = 25.0;
  std::filesystem::path report;
  // With compare set, db is treated as the synthetic store and compare as the
  // real-image store; aligned adds the recovered-gap row.
  std::optional<std::filesystem::path> compare;
  std::optional<std::filesystem::path> aligned;
  bool json = false;
};
// Writes recall.md and recall.csv (plus gap.md / gap.csv with compare, and
// recall.json with json) into the report directory.
void cmd_evaluate(const EvaluateOptions& o);

// Parses "1,5,10"; throws RejectedInput on junk, non-positive or unsorted values.
std::vector<int> parse_ks(const std::string& text);

// run-all configuration: the file's JSON merged over these defaults, then
// MVPR_<PATH> environment overrides (path segments upper-cased and joined by
// '_', e.g. MVPR_TRAIN_ITERATIONS). Override values are parsed as JSON and
// fall back to a plain string.
nlohmann::json default_pipeline_config();
nlohmann::json load_pipeline_config(const std::filesystem::path& path);

struct RunAllResult {
  std::vector<std::string> ran;     // stages executed
  std::vector<std::string> cached;  // stages skipped thanks to the cache
  std::filesystem::path report_dir;
};

// Chains plan-route, render-db, align, build-index and evaluate. Relative
// paths in the config resolve against the config file's directory. Each
// stage is skipped when its input key and recorded output hashes match.
RunAllResult cmd_run_all(const std::filesystem::path& config_path);

}  // namespace mvpr
