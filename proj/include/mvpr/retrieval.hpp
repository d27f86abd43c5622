#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvpr/geo.hpp"
#include "mvpr/losses.hpp"
#include "mvpr/model.hpp"

namespace mvpr {

struct DescriptorMeta {
  std::string id;
  GeoPoint geo;
  double yaw = 0.0;
  Domain domain = Domain::Synthetic;

  friend bool operator==(const DescriptorMeta&, const DescriptorMeta&) = default;
};

std::string to_string(Domain d);
Domain parse_domain(const std::string& s);

// N x D unit-norm descriptors stored as 32-bit floats, with per-row metadata.
class DescriptorStore {
 public:
  DescriptorStore() = default;
  // Rows are rounded to float. Throws RejectedInput when a row norm is not
  // 1 within 1e-6 or the metadata count differs from the row count.
  DescriptorStore(std::size_t dim, std::vector<float> rows, std::vector<DescriptorMeta> meta);
  static DescriptorStore from_matrix(const Matrix& descriptors, std::vector<DescriptorMeta> meta);

  std::size_t size() const { return meta_.size(); }
  std::size_t dim() const { return dim_; }
  const float* row(std::size_t i) const { return rows_.data() + i * dim_; }
  const std::vector<float>& data() const { return rows_; }
  const std::vector<DescriptorMeta>& meta() const { return meta_; }

  // Rows and metadata reordered so that new row i is old row order[i].
  DescriptorStore permuted(const std::vector<std::size_t>& order) const;

  friend bool operator==(const DescriptorStore&, const DescriptorStore&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<float> rows_;
  std::vector<DescriptorMeta> meta_;
};

inline constexpr double kStoreNormTolerance = 1e-6;

struct StoreItem {
  std::string id;
  std::optional<GeoPoint> geo;  // missing pose -> RejectedInput
  double yaw = 0.0;
  Domain domain = Domain::Synthetic;
};

// One row per image, in input order. build_store embeds in parallel;
// build_store_serial is the reference.
DescriptorStore build_store(const EmbeddingModel& model, const ImageBatch& images,
                            const std::vector<StoreItem>& items);
DescriptorStore build_store_serial(const EmbeddingModel& model, const ImageBatch& images,
                                   const std::vector<StoreItem>& items);

struct Candidate {
  std::size_t row = 0;
  double distance = 0.0;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct KnnResult {
  std::vector<Candidate> candidates;  // ascending distance, ties by ascending row
  bool truncated = false;             // k exceeded the store size
};

// Euclidean distance between a stored row and a query, in 64-bit.
double row_distance(const DescriptorStore& store, std::size_t row, std::span<const double> query);

// Exact k nearest rows. The scan is split into blocks that are searched in
// parallel and merged; the result equals knn_reference exactly. Throws
// RejectedInput for k == 0, a dimension mismatch or a non-unit query.
KnnResult knn(const DescriptorStore& store, std::span<const double> query, std::size_t k);
// Full distance computation plus full sort.
KnnResult knn_reference(const DescriptorStore& store, std::span<const double> query, std::size_t k);
// One result per query row, queries processed in parallel.
std::vector<KnnResult> knn_batch(const DescriptorStore& store, const Matrix& queries, std::size_t k);

inline const std::vector<int> kDefaultKs{1, 5, 10, 20, 100};
inline constexpr double kDefaultThresholdM = 25.0;

struct RecallTable {
  std::vector<int> ks;
  std::vector<double> recall;  // percent, unrounded, parallel to ks
  std::size_t queries = 0;
  double threshold_m = kDefaultThresholdM;

  double at(int k) const;
};

// A query is correct at K when any of its first K candidates lies within
// threshold_m of its label. Throws RejectedInput for an empty query set,
// ContractViolation when result and label counts differ.
RecallTable recall_at_k(const std::vector<KnnResult>& results, const std::vector<GeoPoint>& query_geo,
                        const DescriptorStore& store, const std::vector<int>& ks = kDefaultKs,
                        double threshold_m = kDefaultThresholdM);

// Recall table as Markdown / CSV, one row per named table.
std::string recall_markdown(const std::vector<std::pair<std::string, RecallTable>>& tables);
std::string recall_csv(const std::vector<std::pair<std::string, RecallTable>>& tables);

struct GapReport {
  RecallTable real, synt;
  std::optional<RecallTable> aligned;
  std::vector<double> gap;        // real - synt per K
  std::vector<double> recovered;  // (aligned - synt) / gap * 100, NaN when gap == 0 or no aligned
};

// Throws ContractViolation when query counts or K lists differ.
GapReport gap_report(const RecallTable& real, const RecallTable& synt,
                     const std::optional<RecallTable>& aligned = std::nullopt);
std::string gap_markdown(const GapReport& r);
std::string gap_csv(const GapReport& r);

// Store file: "MVPRDESC", u32 version, u64 N, u32 D, N*D little-endian
// float32, then one JSON object per line per row (id, lat, lon, yaw, domain).
inline constexpr std::uint32_t kStoreVersion = 1;
std::string encode_store(const DescriptorStore& store);
DescriptorStore decode_store(const std::string& bytes);
void save_store(const std::filesystem::path& path, const DescriptorStore& store);
DescriptorStore load_store(const std::filesystem::path& path);

}  // namespace mvpr
