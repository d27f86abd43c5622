#include "mvpr/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mvpr/csv.hpp"
#include "mvpr/error.hpp"
#include "mvpr/image_tensor.hpp"

namespace mvpr {

namespace fs = std::filesystem;

std::string to_string(DatasetRole r) {
  switch (r) {
    case DatasetRole::AlignmentReal: return "alignment_real";
    case DatasetRole::AlignmentSynt: return "alignment_synt";
    case DatasetRole::TargetDb: return "target_db";
    case DatasetRole::Queries: return "queries";
  }
  return "queries";
}

DatasetRole parse_dataset_role(const std::string& s) {
  for (auto r : {DatasetRole::AlignmentReal, DatasetRole::AlignmentSynt, DatasetRole::TargetDb,
                 DatasetRole::Queries}) {
    if (to_string(r) == s) return r;
  }
  throw RejectedInput("unknown dataset role '" + s + "'");
}

namespace {

const std::vector<std::string> kFixedColumns{"id", "lat", "lon", "heading_rad", "pitch_rad",
                                             "roll_rad", "alt_m"};

std::optional<double> optional_double(const std::string& field, const std::string& what) {
  if (field.empty()) return std::nullopt;
  return parse_double(field, what);
}

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

}  // namespace

std::vector<PoseRecord> parse_pose_csv(const std::string& text, const std::string& context) {
  const auto table = parse_csv(text, context);
  const auto id = table.require_column("id", context);
  const auto lat = table.require_column("lat", context);
  const auto lon = table.require_column("lon", context);
  const auto heading = table.column("heading_rad");
  const auto pitch = table.column("pitch_rad");
  const auto roll = table.column("roll_rad");
  const auto alt = table.column("alt_m");
  std::vector<PoseRecord> out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto where = context + " row " + std::to_string(r + 1);
    PoseRecord rec;
    rec.id = row[id];
    if (rec.id.empty()) throw ParseError(where + ": empty id");
    rec.geo = {parse_double(row[lat], where + " lat"), parse_double(row[lon], where + " lon")};
    if (!is_valid(rec.geo)) throw ParseError(where + ": coordinates out of range");
    if (heading) rec.heading = optional_double(row[*heading], where + " heading_rad");
    if (pitch) rec.pitch = optional_double(row[*pitch], where + " pitch_rad");
    if (roll) rec.roll = optional_double(row[*roll], where + " roll_rad");
    if (alt) rec.altitude = optional_double(row[*alt], where + " alt_m");
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      if (std::find(kFixedColumns.begin(), kFixedColumns.end(), table.header[c]) ==
          kFixedColumns.end()) {
        rec.extra[table.header[c]] = row[c];
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::string format_pose_csv(const std::vector<PoseRecord>& records) {
  std::set<std::string> extra;
  for (const auto& r : records) {
    for (const auto& [k, v] : r.extra) extra.insert(k);
  }
  std::string s;
  for (std::size_t i = 0; i < kFixedColumns.size(); ++i) s += (i ? "," : "") + kFixedColumns[i];
  for (const auto& k : extra) s += "," + csv_escape(k);
  s += "\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : records) {
    s += csv_escape(r.id) + "," + format_double(r.geo.lat) + "," + format_double(r.geo.lon) + "," +
         opt(r.heading) + "," + opt(r.pitch) + "," + opt(r.roll) + "," + opt(r.altitude);
    for (const auto& k : extra) {
      const auto it = r.extra.find(k);
      s += "," + (it == r.extra.end() ? std::string() : csv_escape(it->second));
    }
    s += "\n";
  }
  return s;
}

std::vector<PoseRecord> read_pose_csv(const fs::path& path) {
  return parse_pose_csv(read_text(path), path.string());
}

void write_pose_csv(const fs::path& path, const std::vector<PoseRecord>& records) {
  write_text(path, format_pose_csv(records));
}

fs::path DatasetManifest::image_path(std::size_t i) const {
  return image_dir / (records[i].id + image_extension);
}

std::string DatasetManifest::pair_value(std::size_t i) const {
  if (!pair_key) throw ContractViolation("manifest '" + name + "' has no pair key");
  if (*pair_key == "id") return records[i].id;
  const auto it = records[i].extra.find(*pair_key);
  if (it == records[i].extra.end()) {
    throw RejectedInput("manifest '" + name + "': record " + records[i].id + " lacks pair key column '" +
                        *pair_key + "'");
  }
  return it->second;
}

Domain DatasetManifest::domain_of() const {
  if (domain) return *domain;
  return role == DatasetRole::AlignmentReal || role == DatasetRole::Queries ? Domain::Real
                                                                            : Domain::Synthetic;
}

DatasetManifest load_manifest(const fs::path& path) {
  const auto where = "manifest " + path.string();
  if (!fs::exists(path)) throw RejectedInput(where + ": file not found");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  DatasetManifest m;
  try {
    m.name = j.at("name").get<std::string>();
    m.role = parse_dataset_role(j.at("role").get<std::string>());
    m.image_dir = resolve(j.at("images").get<std::string>());
    m.pose_table = resolve(j.at("poses").get<std::string>());
    if (j.contains("mesh")) m.mesh = resolve(j.at("mesh").get<std::string>());
    if (j.contains("pair_key")) m.pair_key = j.at("pair_key").get<std::string>();
    if (j.contains("image_extension")) m.image_extension = j.at("image_extension").get<std::string>();
    if (j.contains("domain")) m.domain = parse_domain(j.at("domain").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw RejectedInput(where + ": " + e.what());
  }

  if (!fs::is_directory(m.image_dir)) {
    throw RejectedInput(where + ": image directory " + m.image_dir.string() + " not found");
  }
  if (!fs::exists(m.pose_table)) {
    throw RejectedInput(where + ": pose table " + m.pose_table.string() + " not found");
  }
  if (m.mesh && !fs::exists(*m.mesh)) {
    throw RejectedInput(where + ": mesh " + m.mesh->string() + " not found");
  }
  try {
    m.records = read_pose_csv(m.pose_table);
  } catch (const ParseError& e) {
    throw RejectedInput(where + ": " + e.what());
  }

  const bool alignment = m.role == DatasetRole::AlignmentReal || m.role == DatasetRole::AlignmentSynt;
  if (alignment && !m.pair_key) throw RejectedInput(where + ": alignment manifest needs pair_key");
  const bool needs_heading = alignment || m.role == DatasetRole::TargetDb;
  std::set<std::string> ids, pairs;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& r = m.records[i];
    if (!ids.insert(r.id).second) throw RejectedInput(where + ": duplicate id " + r.id);
    if (needs_heading && !r.heading) throw RejectedInput(where + ": record " + r.id + " has no heading");
    if (m.pair_key && !pairs.insert(m.pair_value(i)).second) {
      throw RejectedInput(where + ": duplicate pair key '" + m.pair_value(i) + "'");
    }
    if (!fs::exists(m.image_path(i))) {
      throw RejectedInput(where + ": image " + m.image_path(i).string() + " not found");
    }
  }
  return m;
}

void save_manifest(const fs::path& path, const DatasetManifest& m) {
  const auto base = path.parent_path();
  auto rel = [&](const fs::path& p) {
    const auto r = p.lexically_relative(base);
    return (r.empty() || *r.begin() == "..") ? p.string() : r.string();
  };
  nlohmann::ordered_json j;
  j["name"] = m.name;
  j["role"] = to_string(m.role);
  j["images"] = rel(m.image_dir);
  j["poses"] = rel(m.pose_table);
  if (m.mesh) j["mesh"] = rel(*m.mesh);
  if (m.pair_key) j["pair_key"] = *m.pair_key;
  j["image_extension"] = m.image_extension;
  if (m.domain) j["domain"] = to_string(*m.domain);
  write_text(path, j.dump(2) + "\n");
}

PairJoin join_pairs(const DatasetManifest& real, const DatasetManifest& synt) {
  std::map<std::string, std::size_t> a, b;
  for (std::size_t i = 0; i < real.records.size(); ++i) a[real.pair_value(i)] = i;
  for (std::size_t i = 0; i < synt.records.size(); ++i) b[synt.pair_value(i)] = i;
  for (const auto& [k, i] : a) {
    if (!b.count(k)) {
      throw RejectedInput("pair key '" + k + "' of " + real.name + " has no counterpart in " + synt.name);
    }
  }
  for (const auto& [k, i] : b) {
    if (!a.count(k)) {
      throw RejectedInput("pair key '" + k + "' of " + synt.name + " has no counterpart in " + real.name);
    }
  }
  PairJoin join;
  for (const auto& [k, i] : a) {
    join.keys.push_back(k);
    join.real.push_back(i);
    join.synt.push_back(b.at(k));
  }
  return join;
}

std::vector<RgbImage> load_images(const DatasetManifest& manifest) {
  std::vector<RgbImage> out;
  out.reserve(manifest.records.size());
  for (std::size_t i = 0; i < manifest.records.size(); ++i) out.push_back(load_image(manifest.image_path(i)));
  return out;
}

ImageBatch load_batch(const DatasetManifest& manifest, std::size_t h, std::size_t w) {
  return images_to_batch(load_images(manifest), h, w);
}

PairedAlignmentSet load_paired_set(const DatasetManifest& real, const DatasetManifest& synt,
                                   std::size_t h, std::size_t w) {
  const auto join = join_pairs(real, synt);
  std::vector<RgbImage> ri, si;
  for (std::size_t k = 0; k < join.keys.size(); ++k) {
    ri.push_back(load_image(real.image_path(join.real[k])));
    si.push_back(load_image(synt.image_path(join.synt[k])));
  }
  PairedAlignmentSet set{images_to_batch(ri, h, w), images_to_batch(si, h, w), join.keys};
  validate(set);
  return set;
}

std::vector<StoreItem> store_items(const DatasetManifest& manifest) {
  std::vector<StoreItem> items;
  const auto d = manifest.domain_of();
  for (const auto& r : manifest.records) items.push_back({r.id, r.geo, r.heading.value_or(0.0), d});
  return items;
}

std::vector<GeoPoint> query_labels(const DatasetManifest& manifest) {
  std::vector<GeoPoint> out;
  for (const auto& r : manifest.records) out.push_back(r.geo);
  return out;
}

}  // namespace mvpr
