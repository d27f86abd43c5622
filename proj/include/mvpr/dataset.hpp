#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mvpr/align.hpp"
#include "mvpr/geo.hpp"
#include "mvpr/image.hpp"
#include "mvpr/retrieval.hpp"

namespace mvpr {

enum class DatasetRole { AlignmentReal, AlignmentSynt, TargetDb, Queries };

std::string to_string(DatasetRole r);
// "alignment_real", "alignment_synt", "target_db", "queries".
DatasetRole parse_dataset_role(const std::string& s);

struct PoseRecord {
  std::string id;
  GeoPoint geo;
  std::optional<double> heading;  // radians
  std::optional<double> pitch;
  std::optional<double> roll;
  std::optional<double> altitude;  // meters
  std::map<std::string, std::string> extra;  // any further columns, by header name

  friend bool operator==(const PoseRecord&, const PoseRecord&) = default;
};

// Pose table CSV. Header is mandatory; id, lat and lon columns are required,
// heading_rad, pitch_rad, roll_rad and alt_m are optional (empty field ->
// absent). Unknown columns are kept in `extra`.
std::vector<PoseRecord> parse_pose_csv(const std::string& text, const std::string& context);
// Fixed columns first, then the sorted union of extra column names.
std::string format_pose_csv(const std::vector<PoseRecord>& records);
std::vector<PoseRecord> read_pose_csv(const std::filesystem::path& path);
void write_pose_csv(const std::filesystem::path& path, const std::vector<PoseRecord>& records);

struct DatasetManifest {
  std::string name;
  DatasetRole role = DatasetRole::Queries;
  std::filesystem::path image_dir;
  std::filesystem::path pose_table;
  std::optional<std::filesystem::path> mesh;
  std::optional<std::string> pair_key;  // required for alignment roles
  std::string image_extension = ".png";
  std::optional<Domain> domain;  // defaults by role, see domain_of
  std::vector<PoseRecord> records;

  std::filesystem::path image_path(std::size_t i) const;
  // Value of the pair-key column for record i ("id" names the id column).
  std::string pair_value(std::size_t i) const;
  Domain domain_of() const;
};

// Reads the JSON manifest and its pose table. Relative paths resolve against
// the manifest's directory. Throws RejectedInput when a referenced file is
// missing, a required column or heading is absent, or ids / pair keys repeat.
DatasetManifest load_manifest(const std::filesystem::path& path);
// Writes the JSON manifest (not the pose table). Paths are stored relative
// to the manifest directory when they lie below it.
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

struct PairJoin {
  std::vector<std::string> keys;  // ascending
  std::vector<std::size_t> real;  // record index per key
  std::vector<std::size_t> synt;
};

// Key-based 1:1 join, independent of record order. Throws RejectedInput
// naming the pair key value that lacks a counterpart.
PairJoin join_pairs(const DatasetManifest& real, const DatasetManifest& synt);

std::vector<RgbImage> load_images(const DatasetManifest& manifest);
ImageBatch load_batch(const DatasetManifest& manifest, std::size_t h, std::size_t w);
PairedAlignmentSet load_paired_set(const DatasetManifest& real, const DatasetManifest& synt,
                                   std::size_t h, std::size_t w);
std::vector<StoreItem> store_items(const DatasetManifest& manifest);
std::vector<GeoPoint> query_labels(const DatasetManifest& manifest);

}  // namespace mvpr
