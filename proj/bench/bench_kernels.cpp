// Serial reference vs OpenMP kernel, one pair per hot path. Pass
// OMP_NUM_THREADS to compare thread counts.

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "mvpr/model.hpp"
#include "mvpr/render.hpp"
#include "mvpr/retrieval.hpp"
#include "mvpr/toy_city.hpp"

using namespace mvpr;

namespace {

Matrix unit_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += (m(i, j) = n01(rng)) * m(i, j);
    for (std::size_t j = 0; j < d; ++j) m(i, j) /= std::sqrt(s);
  }
  return m;
}

const DescriptorStore& store() {
  static const auto s = DescriptorStore::from_matrix(unit_rows(20000, 64, 1), std::vector<DescriptorMeta>(20000));
  return s;
}

const Matrix& queries() {
  static const auto q = unit_rows(32, 64, 2);
  return q;
}

void BM_knn_reference(benchmark::State& st) {
  for (auto _ : st) {
    for (std::size_t i = 0; i < queries().rows; ++i) {
      benchmark::DoNotOptimize(knn_reference(store(), {queries().row(i), 64}, 100));
    }
  }
}
void BM_knn(benchmark::State& st) {
  for (auto _ : st) {
    for (std::size_t i = 0; i < queries().rows; ++i) {
      benchmark::DoNotOptimize(knn(store(), {queries().row(i), 64}, 100));
    }
  }
}
void BM_knn_batch(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(knn_batch(store(), queries(), 100));
}

// The Bvh points into mesh, so the scene is built in place.
struct Scene {
  TriangleMesh mesh = make_toy_city_mesh({});
  Bvh bvh{mesh};
  CameraPose pose;
  Scene() { pose.position = {0.0, 30.0, 2.5}; }
};

const Scene& scene() {
  static const Scene s;
  return s;
}

void BM_render_view_serial(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(render_view_serial(scene().bvh, scene().pose, 128, 96, 1.5707963));
}
void BM_render_view(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(render_view(scene().bvh, scene().pose, 128, 96, 1.5707963));
}

const EmbeddingModel& model() {
  static const auto m = init_model(Architecture::parse(kToyArchitecture), 3);
  return m;
}

const ImageBatch& batch() {
  static const ImageBatch b = [] {
    ImageBatch b(64, 3, 16, 16);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : b.data) v = u(rng);
    return b;
  }();
  return b;
}

const std::vector<StoreItem>& items() {
  static const std::vector<StoreItem> v(64, StoreItem{"x", GeoPoint{37.7, -122.4}, 0.0, Domain::Synthetic});
  return v;
}

void BM_forward_serial(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(forward_serial(model(), batch()));
}
void BM_forward(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(forward(model(), batch()));
}
void BM_build_store_serial(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(build_store_serial(model(), batch(), items()));
}
void BM_build_store(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(build_store(model(), batch(), items()));
}

}  // namespace

BENCHMARK(BM_knn_reference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_knn)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_knn_batch)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_render_view_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_render_view)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_forward_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_forward)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_build_store_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_build_store)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
