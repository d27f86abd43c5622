#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "mvpr/error.hpp"
#include "mvpr/retrieval.hpp"

namespace mvpr {

namespace {

bool closer(const Candidate& a, const Candidate& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.row < b.row);
}

void check_query(const DescriptorStore& store, std::span<const double> q, std::size_t k) {
  if (k == 0) throw RejectedInput("knn: k must be at least 1");
  if (q.size() != store.dim()) {
    throw RejectedInput("knn: query has dimension " + std::to_string(q.size()) + ", store has " +
                        std::to_string(store.dim()));
  }
  double s = 0.0;
  for (const double v : q) s += v * v;
  if (!(std::abs(std::sqrt(s) - 1.0) <= kStoreNormTolerance)) {
    throw RejectedInput("knn: query is not unit norm");
  }
}

// Best k of rows [begin, end) kept in a max-heap under `closer`.
void scan_block(const DescriptorStore& store, std::span<const double> q, std::size_t k,
                std::size_t begin, std::size_t end, std::vector<Candidate>& heap) {
  for (std::size_t r = begin; r < end; ++r) {
    const Candidate c{r, row_distance(store, r, q)};
    if (heap.size() < k) {
      heap.push_back(c);
      std::push_heap(heap.begin(), heap.end(), closer);
    } else if (closer(c, heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), closer);
      heap.back() = c;
      std::push_heap(heap.begin(), heap.end(), closer);
    }
  }
}

constexpr std::size_t kBlockRows = 4096;

KnnResult knn_blocked(const DescriptorStore& store, std::span<const double> q, std::size_t k,
                      bool parallel) {
  const auto n = store.size();
  KnnResult res;
  res.truncated = k > n;
  const auto kk = std::min(k, n);
  if (kk == 0) return res;
  const auto blocks = (n + kBlockRows - 1) / kBlockRows;
  std::vector<std::vector<Candidate>> partial(blocks);
  const auto nb = static_cast<std::ptrdiff_t>(blocks);
#pragma omp parallel for schedule(static) if (parallel && blocks > 1)
  for (std::ptrdiff_t b = 0; b < nb; ++b) {
    const auto begin = static_cast<std::size_t>(b) * kBlockRows;
    scan_block(store, q, kk, begin, std::min(n, begin + kBlockRows),
               partial[static_cast<std::size_t>(b)]);
  }
  for (auto& p : partial) res.candidates.insert(res.candidates.end(), p.begin(), p.end());
  std::sort(res.candidates.begin(), res.candidates.end(), closer);
  res.candidates.resize(kk);
  return res;
}

}  // namespace

double row_distance(const DescriptorStore& store, std::size_t row, std::span<const double> query) {
  const float* x = store.row(row);
  double s = 0.0;
  for (std::size_t k = 0; k < query.size(); ++k) {
    const double d = static_cast<double>(x[k]) - query[k];
    s += d * d;
  }
  return std::sqrt(s);
}

KnnResult knn(const DescriptorStore& store, std::span<const double> query, std::size_t k) {
  check_query(store, query, k);
  return knn_blocked(store, query, k, true);
}

KnnResult knn_reference(const DescriptorStore& store, std::span<const double> query, std::size_t k) {
  check_query(store, query, k);
  KnnResult res;
  res.truncated = k > store.size();
  for (std::size_t r = 0; r < store.size(); ++r) {
    res.candidates.push_back({r, row_distance(store, r, query)});
  }
  std::sort(res.candidates.begin(), res.candidates.end(), closer);
  res.candidates.resize(std::min(k, store.size()));
  return res;
}

std::vector<KnnResult> knn_batch(const DescriptorStore& store, const Matrix& queries, std::size_t k) {
  std::vector<KnnResult> out(queries.rows);
  for (std::size_t i = 0; i < queries.rows; ++i) {
    check_query(store, {queries.row(i), queries.cols}, k);
  }
  const auto n = static_cast<std::ptrdiff_t>(queries.rows);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto q = static_cast<std::size_t>(i);
    out[q] = knn_blocked(store, {queries.row(q), queries.cols}, k, false);
  }
  return out;
}

double RecallTable::at(int k) const {
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == k) return recall[i];
  }
  throw ContractViolation("recall table has no K = " + std::to_string(k));
}

RecallTable recall_at_k(const std::vector<KnnResult>& results, const std::vector<GeoPoint>& query_geo,
                        const DescriptorStore& store, const std::vector<int>& ks,
                        double threshold_m) {
  if (results.empty()) throw RejectedInput("recall_at_k: empty query set");
  if (results.size() != query_geo.size()) {
    throw ContractViolation("recall_at_k: " + std::to_string(results.size()) + " results for " +
                            std::to_string(query_geo.size()) + " query labels");
  }
  if (ks.empty()) throw RejectedInput("recall_at_k: empty K list");
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] < 1 || (i > 0 && ks[i] <= ks[i - 1])) {
      throw RejectedInput("recall_at_k: K values must be positive and increasing");
    }
  }
  RecallTable t;
  t.ks = ks;
  t.queries = results.size();
  t.threshold_m = threshold_m;
  std::vector<std::size_t> hits(ks.size(), 0);
  for (std::size_t q = 0; q < results.size(); ++q) {
    // Rank of the first candidate within the threshold.
    std::size_t first = std::numeric_limits<std::size_t>::max();
    const auto& c = results[q].candidates;
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (geodesic_distance(query_geo[q], store.meta()[c[i].row].geo) <= threshold_m) {
        first = i;
        break;
      }
    }
    for (std::size_t j = 0; j < ks.size(); ++j) {
      if (first < static_cast<std::size_t>(ks[j])) ++hits[j];
    }
  }
  for (const auto h : hits) {
    t.recall.push_back(100.0 * static_cast<double>(h) / static_cast<double>(t.queries));
  }
  return t;
}

namespace {

std::string fmt1(double v) {
  if (std::isnan(v)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

std::string header_row(const std::vector<int>& ks, const std::string& first) {
  std::string s = "| " + first + " |";
  for (int k : ks) s += " R@" + std::to_string(k) + " |";
  s += "\n|---|";
  for (std::size_t i = 0; i < ks.size(); ++i) s += "---:|";
  return s + "\n";
}

std::string md_row(const std::string& name, const std::vector<double>& v) {
  std::string s = "| " + name + " |";
  for (double x : v) s += " " + fmt1(x) + " |";
  return s + "\n";
}

std::string csv_row(const std::string& name, const std::vector<double>& v) {
  std::string s = name;
  for (double x : v) s += "," + fmt1(x);
  return s + "\n";
}

void check_same_ks(const std::vector<std::pair<std::string, RecallTable>>& tables) {
  for (const auto& [name, t] : tables) {
    if (t.ks != tables.front().second.ks) {
      throw ContractViolation("recall tables use different K lists");
    }
  }
}

}  // namespace

std::string recall_markdown(const std::vector<std::pair<std::string, RecallTable>>& tables) {
  if (tables.empty()) return {};
  check_same_ks(tables);
  std::string s = header_row(tables.front().second.ks, "Database");
  for (const auto& [name, t] : tables) s += md_row(name, t.recall);
  const auto& f = tables.front().second;
  s += "\nQueries: " + std::to_string(f.queries) + ", positive threshold: " + fmt1(f.threshold_m) +
       " m\n";
  return s;
}

std::string recall_csv(const std::vector<std::pair<std::string, RecallTable>>& tables) {
  if (tables.empty()) return {};
  check_same_ks(tables);
  std::string s = "database";
  for (int k : tables.front().second.ks) s += ",R@" + std::to_string(k);
  s += "\n";
  for (const auto& [name, t] : tables) s += csv_row(name, t.recall);
  return s;
}

GapReport gap_report(const RecallTable& real, const RecallTable& synt,
                     const std::optional<RecallTable>& aligned) {
  auto same = [](const RecallTable& a, const RecallTable& b) {
    return a.queries == b.queries && a.ks == b.ks;
  };
  if (!same(real, synt) || (aligned && !same(real, *aligned))) {
    throw ContractViolation("gap_report: tables differ in query count or K list");
  }
  GapReport r{real, synt, aligned, {}, {}};
  for (std::size_t i = 0; i < real.ks.size(); ++i) {
    const double gap = real.recall[i] - synt.recall[i];
    r.gap.push_back(gap);
    r.recovered.push_back(aligned && gap != 0.0
                              ? (aligned->recall[i] - synt.recall[i]) / gap * 100.0
                              : std::numeric_limits<double>::quiet_NaN());
  }
  return r;
}

std::string gap_markdown(const GapReport& r) {
  std::string s = header_row(r.real.ks, "Database");
  s += md_row("real", r.real.recall);
  s += md_row("synthetic", r.synt.recall);
  if (r.aligned) s += md_row("synthetic, aligned", r.aligned->recall);
  s += md_row("gap (real - synthetic)", r.gap);
  if (r.aligned) s += md_row("recovered gap (%)", r.recovered);
  s += "\nQueries: " + std::to_string(r.real.queries) + ", positive threshold: " +
       fmt1(r.real.threshold_m) + " m\n";
  return s;
}

std::string gap_csv(const GapReport& r) {
  std::string s = "row";
  for (int k : r.real.ks) s += ",R@" + std::to_string(k);
  s += "\n";
  s += csv_row("real", r.real.recall);
  s += csv_row("synthetic", r.synt.recall);
  if (r.aligned) s += csv_row("synthetic_aligned", r.aligned->recall);
  s += csv_row("gap", r.gap);
  if (r.aligned) s += csv_row("recovered_gap_pct", r.recovered);
  return s;
}

}  // namespace mvpr
