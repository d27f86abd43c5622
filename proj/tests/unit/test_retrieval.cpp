#include <algorithm>
#include <cmath>
#include <numeric>
#include <cstring>
#include <random>

#include "doctest.h"
#include "mvpr/binary.hpp"
#include "mvpr/error.hpp"
#include "mvpr/retrieval.hpp"
#include "support.hpp"

using namespace mvpr;
using namespace mvpr::testing;

namespace {

std::vector<double> random_unit_vec(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> n(0, 1);
  std::vector<double> v(d);
  double s = 0;
  for (auto& x : v) {
    x = n(rng);
    s += x * x;
  }
  for (auto& x : v) x /= std::sqrt(s);
  return v;
}

DescriptorStore random_store(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  Matrix m(n, d);
  std::vector<DescriptorMeta> meta;
  std::uniform_real_distribution<double> lat(37.70, 37.80), lon(-122.50, -122.40);
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = random_unit_vec(rng, d);
    std::copy(v.begin(), v.end(), m.row(i));
    meta.push_back({"db" + std::to_string(i), {lat(rng), lon(rng)}, 0.1 * static_cast<double>(i % 60),
                    i % 3 ? Domain::Synthetic : Domain::Real});
  }
  return DescriptorStore::from_matrix(m, std::move(meta));
}

// The float row promoted to double and renormalized, so it is a valid query.
std::vector<double> row_as_query(const DescriptorStore& s, std::size_t r) {
  std::vector<double> q(s.row(r), s.row(r) + s.dim());
  return q;
}

// Independent oracle: every distance, then a full sort by (distance, row).
std::vector<Candidate> full_sort(const DescriptorStore& s, const std::vector<double>& q, std::size_t k) {
  std::vector<Candidate> all;
  for (std::size_t r = 0; r < s.size(); ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < s.dim(); ++j) {
      const double d = static_cast<double>(s.row(r)[j]) - q[j];
      acc += d * d;
    }
    all.push_back({r, std::sqrt(acc)});
  }
  std::sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.row < b.row;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

double haversine(GeoPoint a, GeoPoint b) {
  const double r = 6371008.8;
  const double p1 = deg(a.lat), p2 = deg(b.lat);
  const double dp = p2 - p1, dl = deg(b.lon - a.lon);
  const double h = std::sin(dp / 2) * std::sin(dp / 2) +
                   std::cos(p1) * std::cos(p2) * std::sin(dl / 2) * std::sin(dl / 2);
  return 2 * r * std::asin(std::sqrt(h));
}

// Queries with labels near random db rows so recalls are non-trivial.
struct Scenario {
  DescriptorStore store;
  Matrix queries;
  std::vector<KnnResult> results;
  std::vector<GeoPoint> labels;
};

Scenario scenario(std::mt19937_64& rng, std::size_t n, std::size_t q) {
  Scenario s{random_store(rng, n, 16), Matrix(q, 16), {}, {}};
  std::normal_distribution<double> jitter(0.0, 0.0002);
  for (std::size_t i = 0; i < q; ++i) {
    const auto target = rng() % n;
    auto v = row_as_query(s.store, target);
    std::normal_distribution<double> noise(0.0, 0.3);
    double norm2 = 0;
    for (auto& x : v) {
      x += noise(rng) / 4.0;
      norm2 += x * x;
    }
    for (auto& x : v) x /= std::sqrt(norm2);
    std::copy(v.begin(), v.end(), s.queries.row(i));
    s.results.push_back(knn(s.store, v, 100));
    const auto g = s.store.meta()[target].geo;
    s.labels.push_back({g.lat + jitter(rng), g.lon + jitter(rng)});
  }
  return s;
}

}  // namespace

TEST_CASE("geodesic_distance: examples and haversine agreement") {
  CHECK(geodesic_distance({37.7, -122.4}, {37.7, -122.4}) == 0.0);
  CHECK(std::abs(geodesic_distance({0, 0}, {0, 1}) - 111320.0) < 1.0);
  CHECK(std::abs(geodesic_distance({0, 0}, {1, 0}) - 110540.0) < 1.0);
  // City-scale fixture pairs: San Francisco and Berlin.
  const std::vector<std::pair<GeoPoint, GeoPoint>> pairs{
      {{37.7749, -122.4194}, {37.7849, -122.4068}},
      {{52.5200, 13.4050}, {52.5163, 13.3777}},
      {{37.7599, -122.4370}, {37.7599, -122.4100}},
  };
  for (const auto& [a, b] : pairs) {
    const double ours = geodesic_distance(a, b), ref = haversine(a, b);
    CHECK(std::abs(ours - ref) / ref < 0.005);
    CHECK(geodesic_distance(b, a) == ours);
  }
}

TEST_CASE("knn: self query, tie-break, truncation") {
  std::mt19937_64 rng(1);
  const auto s = random_store(rng, 20, 8);
  const auto q = row_as_query(s, 7);
  std::vector<double> qn = q;
  const auto r = knn(s, qn, 3);
  CHECK(r.candidates.front().row == 7);
  CHECK(r.candidates.front().distance == 0.0);

  // Two identical rows at 2 and 5: the lower id comes first.
  Matrix m(6, 2);
  for (std::size_t i = 0; i < 6; ++i) {
    const double a = 0.3 * static_cast<double>(i);
    m(i, 0) = std::cos(a);
    m(i, 1) = std::sin(a);
  }
  m(5, 0) = m(2, 0);
  m(5, 1) = m(2, 1);
  std::vector<DescriptorMeta> meta(6);
  const auto t = DescriptorStore::from_matrix(m, meta);
  const auto tie = knn(t, row_as_query(t, 5), 2);
  CHECK(tie.candidates[0].row == 2);
  CHECK(tie.candidates[1].row == 5);
  CHECK(tie.candidates[0].distance == tie.candidates[1].distance);

  const auto all = knn(t, row_as_query(t, 0), 50);
  CHECK(all.truncated);
  CHECK(all.candidates.size() == 6);
  CHECK_FALSE(knn(t, row_as_query(t, 0), 6).truncated);

  CHECK_THROWS_AS(knn(t, row_as_query(t, 0), 0), RejectedInput);
  CHECK_THROWS_AS(knn(t, std::vector<double>{1.0, 0.0, 0.0}, 1), RejectedInput);
  CHECK_THROWS_AS(knn(t, std::vector<double>{2.0, 0.0}, 1), RejectedInput);
  CHECK(knn(DescriptorStore(2, {}, {}), std::vector<double>{1.0, 0.0}, 3).candidates.empty());
}

TEST_CASE("knn: accelerated scan equals the full-sort oracle") {
  std::mt19937_64 rng(2);
  for (std::size_t n : {1000u, 9000u}) {
    const auto s = random_store(rng, n, 32);
    Matrix queries(50, 32);
    for (std::size_t i = 0; i < 50; ++i) {
      const auto q = random_unit_vec(rng, 32);
      std::copy(q.begin(), q.end(), queries.row(i));
    }
    const auto batch = knn_batch(s, queries, 100);
    for (std::size_t i = 0; i < 50; ++i) {
      const std::vector<double> q(queries.row(i), queries.row(i) + 32);
      const auto oracle = full_sort(s, q, 100);
      CHECK(knn(s, q, 100).candidates == oracle);
      CHECK(knn_reference(s, q, 100).candidates == oracle);
      CHECK(batch[i].candidates == oracle);
    }
  }
}

TEST_CASE("knn: Euclidean and cosine rankings agree on unit vectors") {
  std::mt19937_64 rng(3);
  const auto s = random_store(rng, 300, 16);
  for (int t = 0; t < 10; ++t) {
    const auto q = random_unit_vec(rng, 16);
    const auto r = knn(s, q, 300);
    std::vector<std::pair<double, std::size_t>> cos;
    for (std::size_t i = 0; i < s.size(); ++i) {
      double c = 0;
      for (std::size_t j = 0; j < 16; ++j) c += s.row(i)[j] * q[j];
      cos.emplace_back(-c, i);
    }
    std::sort(cos.begin(), cos.end());
    std::size_t agree = 0;
    for (std::size_t i = 0; i < 300; ++i) agree += r.candidates[i].row == cos[i].second;
    // Rows are floats, not exactly unit; near-ties may swap, nothing more.
    CHECK(agree >= 295);
  }
}

TEST_CASE("recall_at_k: hand-counted fixtures") {
  // Db rows 0..2 at distinct places 1 km apart; query labels at rows' places.
  Matrix m(3, 2);
  m(0, 0) = 1;
  m(1, 1) = 1;
  m(2, 0) = -1;
  std::vector<DescriptorMeta> meta{{"a", {37.70, -122.40}, 0, Domain::Synthetic},
                                   {"b", {37.71, -122.40}, 0, Domain::Synthetic},
                                   {"c", {37.72, -122.40}, 0, Domain::Synthetic}};
  const auto s = DescriptorStore::from_matrix(m, meta);
  auto res = [](std::vector<std::size_t> rows) {
    KnnResult r;
    for (auto x : rows) r.candidates.push_back({x, 0.0});
    return r;
  };
  // q0 correct at 1; q1 correct at rank 2; q2 never.
  const std::vector<KnnResult> results{res({0, 1, 2}), res({0, 1, 2}), res({0, 1})};
  const std::vector<GeoPoint> labels{{37.70, -122.40}, {37.71, -122.40}, {37.90, -122.40}};
  const auto t = recall_at_k(results, labels, s);
  CHECK(t.at(1) == doctest::Approx(100.0 / 3));
  CHECK(t.at(5) == doctest::Approx(200.0 / 3));
  CHECK(t.at(100) == doctest::Approx(200.0 / 3));
  const auto md = recall_markdown({{"synthetic", t}});
  CHECK(md.find("| synthetic | 33.3 | 66.7 | 66.7 | 66.7 | 66.7 |") != std::string::npos);
  CHECK(recall_csv({{"synthetic", t}}) == "database,R@1,R@5,R@10,R@20,R@100\nsynthetic,33.3,66.7,66.7,66.7,66.7\n");

  const auto all = recall_at_k({res({0}), res({1})}, {{37.70, -122.40}, {37.71, -122.40}}, s);
  for (double v : all.recall) CHECK(v == 100.0);
  const auto none = recall_at_k({res({2}), res({2})}, {{37.70, -122.40}, {37.71, -122.40}}, s);
  for (double v : none.recall) CHECK(v == 0.0);

  const auto one = recall_at_k(results, labels, s, {1});
  CHECK(one.ks == std::vector<int>{1});
  CHECK(recall_csv({{"x", one}}) == "database,R@1\nx,33.3\n");

  CHECK_THROWS_AS(recall_at_k({}, {}, s), RejectedInput);
  CHECK_THROWS_AS(recall_at_k(results, {labels[0]}, s), ContractViolation);
  CHECK_THROWS_AS(recall_at_k(results, labels, s, {5, 1}), RejectedInput);
}

TEST_CASE("recall_at_k: monotone in K and threshold, invariant to db order") {
  std::mt19937_64 rng(4);
  const std::vector<int> ks{1, 2, 5, 10, 20, 50, 100};
  for (int trial = 0; trial < 10; ++trial) {
    const auto sc = scenario(rng, 400, 60);
    std::vector<double> prev;
    for (double thr : {5.0, 25.0, 100.0, 400.0, 2000.0}) {
      const auto t = recall_at_k(sc.results, sc.labels, sc.store, ks, thr);
      for (std::size_t i = 1; i < ks.size(); ++i) CHECK(t.recall[i] >= t.recall[i - 1]);
      for (double v : t.recall) CHECK((v >= 0.0 && v <= 100.0));
      for (std::size_t i = 0; i < prev.size(); ++i) CHECK(t.recall[i] >= prev[i]);
      prev = t.recall;
    }

    std::vector<std::size_t> order(sc.store.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const auto shuffled = sc.store.permuted(order);
    const auto base = recall_at_k(sc.results, sc.labels, sc.store, ks);
    const auto again = recall_at_k(knn_batch(shuffled, sc.queries, 100), sc.labels, shuffled, ks);
    CHECK(again.recall == base.recall);
  }
}

TEST_CASE("gap_report: examples") {
  RecallTable real{{1}, {96.3}, 100, 25.0};
  RecallTable synt{{1}, {76.9}, 100, 25.0};
  const auto r = gap_report(real, synt);
  CHECK(r.gap[0] == doctest::Approx(19.4).epsilon(1e-12));
  CHECK(std::isnan(r.recovered[0]));
  CHECK(gap_csv(r).find("gap,19.4") != std::string::npos);
  CHECK(gap_csv(r).find("recovered_gap_pct") == std::string::npos);
  CHECK(gap_csv(gap_report(real, real, real)).find("recovered_gap_pct,n/a") != std::string::npos);

  const auto same = gap_report(real, real, real);
  CHECK(same.gap[0] == 0.0);
  CHECK(std::isnan(same.recovered[0]));

  RecallTable aligned{{1}, {86.6}, 100, 25.0};
  const auto with = gap_report(real, synt, aligned);
  CHECK(with.recovered[0] == doctest::Approx(50.0));
  CHECK((with.recovered[0] > 0.0 && with.recovered[0] < 100.0));
  const auto md = gap_markdown(with);
  CHECK(md.find("| synthetic, aligned | 86.6 |") != std::string::npos);
  CHECK(md.find("| recovered gap (%) | 50.0 |") != std::string::npos);
  CHECK(md.find("Queries: 100, positive threshold: 25.0 m") != std::string::npos);

  RecallTable other{{1}, {50.0}, 99, 25.0};
  CHECK_THROWS_AS(gap_report(real, other), ContractViolation);
  RecallTable other_k{{5}, {50.0}, 100, 25.0};
  CHECK_THROWS_AS(gap_report(real, other_k), ContractViolation);
}

TEST_CASE("build_store: sizes, parallel equals serial, missing pose") {
  const auto model = init_model(Architecture::parse("input 3 8 8; conv 4; relu; pool; dense 8; l2norm"), 11);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> px(0.0f, 1.0f);
  auto images = [&](std::size_t n) {
    ImageBatch b(n, 3, 8, 8);
    for (auto& v : b.data) v = px(rng);
    return b;
  };
  auto items = [](std::size_t n) {
    std::vector<StoreItem> it;
    for (std::size_t i = 0; i < n; ++i) {
      it.push_back({"img" + std::to_string(i), GeoPoint{37.7 + 1e-4 * static_cast<double>(i), -122.4},
                    0.5, Domain::Real});
    }
    return it;
  };
  CHECK(build_store(model, images(0), items(0)).size() == 0);
  const auto one = build_store(model, images(1), items(1));
  CHECK(one.size() == 1);
  CHECK(one.dim() == 8);
  CHECK(one.meta()[0].id == "img0");

  const auto batch = images(37);
  const auto par = build_store(model, batch, items(37));
  CHECK(par == build_store_serial(model, batch, items(37)));
  const auto direct = forward(model, batch);
  for (std::size_t i = 0; i < 37; ++i) {
    for (std::size_t j = 0; j < 8; ++j) CHECK(par.row(i)[j] == static_cast<float>(direct(i, j)));
  }

  auto bad = items(3);
  bad[1].geo.reset();
  try {
    build_store(model, images(3), bad);
    FAIL("expected RejectedInput");
  } catch (const RejectedInput& e) {
    CHECK(std::string(e.what()).find("img1") != std::string::npos);
  }
  CHECK_THROWS_AS(build_store(model, images(3), items(2)), RejectedInput);
}

TEST_CASE("DescriptorStore: norm validation") {
  CHECK_THROWS_AS(DescriptorStore(2, {1.0f, 1.0f}, {DescriptorMeta{}}), RejectedInput);
  CHECK_THROWS_AS(DescriptorStore(2, {1.0f, 0.0f}, {}), RejectedInput);
  CHECK_NOTHROW(DescriptorStore(2, {0.6f, 0.8f}, {DescriptorMeta{}}));
}

TEST_CASE("store file: round trips and corruption") {
  std::mt19937_64 rng(6);
  const DescriptorStore empty(64, {}, {});
  CHECK(decode_store(encode_store(empty)) == empty);

  auto big = random_store(rng, 1000, 64);
  const auto bytes = encode_store(big);
  const auto back = decode_store(bytes);
  CHECK(back == big);
  CHECK(std::memcmp(back.data().data(), big.data().data(), big.data().size() * sizeof(float)) == 0);

  TempDir dir("store");
  save_store(dir.path() / "db.mvpr", big);
  CHECK(load_store(dir.path() / "db.mvpr") == big);
  CHECK_THROWS_AS(load_store(dir.path() / "missing.mvpr"), Error);

  CHECK_THROWS_AS(decode_store(bytes.substr(0, bytes.size() / 2)), ParseError);
  CHECK_THROWS_AS(decode_store(bytes.substr(0, 10)), ParseError);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_store(magic), ParseError);
  auto version = bytes;
  version[8] = 2;
  CHECK_THROWS_AS(decode_store(version), UnsupportedVersion);
  auto meta = bytes;
  meta[meta.size() - 5] = '{';
  CHECK_THROWS_AS(decode_store(meta), ParseError);
  auto row = bytes;
  row[8 + 4 + 8 + 4 + 2] ^= 0x40;
  CHECK_THROWS_AS(decode_store(row), Error);
}
