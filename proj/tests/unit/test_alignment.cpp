#include <cmath>
#include <random>

#include "doctest.h"
#include "mvpr/align.hpp"
#include "mvpr/binary.hpp"
#include "mvpr/error.hpp"
#include "mvpr/image_tensor.hpp"
#include "mvpr/losses.hpp"
#include "mvpr/model.hpp"
#include "mvpr/optim.hpp"
#include "support.hpp"

using namespace mvpr;
using namespace mvpr::testing;

namespace {

ImageBatch random_batch(std::mt19937_64& rng, std::size_t n, Shape s, double lo = 0.0,
                        double hi = 1.0) {
  ImageBatch b(n, s.c, s.h, s.w);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : b.data) v = u(rng);
  return b;
}

Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Matrix m(r, c);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : m.data) v = n(rng);
  return m;
}

double row_norm(const Matrix& m, std::size_t r) {
  double s = 0.0;
  for (std::size_t k = 0; k < m.cols; ++k) s += m(r, k) * m(r, k);
  return std::sqrt(s);
}

// Straightforward same-padded 3x3 convolution, written independently of the
// library kernel.
std::vector<double> naive_conv(const std::vector<double>& in, Shape s, const double* w,
                               const double* b, std::size_t out_c) {
  std::vector<double> out(out_c * s.h * s.w);
  for (std::size_t o = 0; o < out_c; ++o) {
    for (std::size_t y = 0; y < s.h; ++y) {
      for (std::size_t x = 0; x < s.w; ++x) {
        double acc = b[o];
        for (std::size_t i = 0; i < s.c; ++i) {
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const long yy = static_cast<long>(y) + dy, xx = static_cast<long>(x) + dx;
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(s.h) || xx >= static_cast<long>(s.w)) continue;
              acc += w[((o * s.c + i) * 3 + (dy + 1)) * 3 + (dx + 1)] * in[(i * s.h + yy) * s.w + xx];
            }
          }
        }
        out[(o * s.h + y) * s.w + x] = acc;
      }
    }
  }
  return out;
}

// Multiplies the first layer input by a per-pixel affine channel map.
ImageBatch channel_affine(const ImageBatch& b) {
  ImageBatch out = b;
  const auto hw = b.h * b.w;
  for (std::size_t i = 0; i < b.n; ++i) {
    const double* s = b.sample(i);
    double* d = out.sample(i);
    for (std::size_t p = 0; p < hw; ++p) {
      const double r = s[p], g = s[hw + p], bl = s[2 * hw + p];
      d[p] = 1.0 - g;
      d[hw + p] = bl;
      d[2 * hw + p] = 0.8 * r + 0.1;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("architecture: parse, format and parameter count") {
  const auto a = Architecture::parse("input 3 4 4; conv 2; relu; pool; dense 3; l2norm");
  CHECK(a.param_count() == (2 * 3 * 9 + 2) + (3 * 8 + 3));
  CHECK(a.output_dim() == 3);
  CHECK(a.shapes()[3] == Shape{2, 2, 2});
  CHECK(Architecture::parse(a.to_string()) == a);
  CHECK(a.to_string() == "input 3 4 4; conv 2; relu; pool; dense 3; l2norm");

  const auto d = Architecture::parse(kDefaultArchitecture);
  CHECK(d.output_dim() == 64);
  CHECK(d.input() == Shape{3, 32, 32});

  for (const char* bad : {"", "conv 3; l2norm", "input 3 4 4; conv 2", "input 3 4 4; l2norm; relu",
                          "input 3 5 5; pool; l2norm", "input 3 4 4; conv 0; l2norm",
                          "input 3 4 4; conv -2; l2norm", "input 3 4 4; fancy; l2norm",
                          "input 3 4; l2norm", "input 3 4 4; dense x; l2norm"}) {
    CHECK_THROWS_AS(Architecture::parse(bad), RejectedInput);
  }
}

TEST_CASE("forward: unit rows, guard, determinism") {
  std::mt19937_64 rng(1);
  const auto arch = Architecture::parse("input 3 8 8; conv 4; relu; pool; conv 4; relu; pool; dense 6; l2norm");
  const auto model = init_model(arch, 42);
  CHECK(init_model(arch, 42) == model);
  CHECK_FALSE(init_model(arch, 43) == model);
  const auto batch = random_batch(rng, 9, arch.input());
  const auto out = forward(model, batch);
  for (std::size_t i = 0; i < out.rows; ++i) CHECK(std::abs(row_norm(out, i) - 1.0) < 1e-9);
  CHECK(forward(model, batch) == out);
  CHECK(forward_serial(model, batch) == out);

  EmbeddingModel zero{Architecture::parse("input 3 2 2; dense 4; l2norm"), {}};
  zero.params.assign(zero.arch.param_count(), 0.0);
  const auto g = forward(zero, ImageBatch(2, 3, 2, 2));
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(g(i, 0) == 1.0);
    CHECK(g(i, 1) == 0.0);
    CHECK(g(i, 2) == 0.0);
    CHECK(g(i, 3) == 0.0);
  }

  CHECK_THROWS_AS(forward(model, ImageBatch(1, 3, 4, 4)), ContractViolation);
  auto broken = model;
  broken.params.pop_back();
  CHECK_THROWS_AS(forward(broken, batch), ContractViolation);
}

TEST_CASE("forward: conv layer equals the direct formula") {
  std::mt19937_64 rng(2);
  const auto arch = Architecture::parse("input 2 5 6; conv 3; dense 4; l2norm");
  auto model = init_model(arch, 9);
  std::normal_distribution<double> n(0, 1);
  for (auto& p : model.params) p = n(rng);
  const auto batch = random_batch(rng, 1, arch.input(), -1, 1);
  const std::vector<double> in(batch.data.begin(), batch.data.end());
  const auto conv = naive_conv(in, arch.input(), model.params.data(),
                               model.params.data() + 3 * 2 * 9, 3);
  // Dense head over the oracle activations, then normalize.
  const double* w = model.params.data() + arch.offsets()[1];
  std::vector<double> y(4);
  double sq = 0.0;
  for (std::size_t j = 0; j < 4; ++j) {
    y[j] = w[4 * conv.size() + j];
    for (std::size_t k = 0; k < conv.size(); ++k) y[j] += w[j * conv.size() + k] * conv[k];
    sq += y[j] * y[j];
  }
  const auto out = forward(model, batch);
  for (std::size_t j = 0; j < 4; ++j) CHECK(out(0, j) == doctest::Approx(y[j] / std::sqrt(sq)).epsilon(1e-12));
}

TEST_CASE("backward: parallel equals serial and matches finite differences") {
  std::mt19937_64 rng(3);
  const auto arch = Architecture::parse("input 2 4 4; conv 3; relu; pool; dense 5; l2norm");
  auto model = init_model(arch, 5);
  for (std::size_t k = 0; k < model.params.size(); ++k) model.params[k] += 0.01 * static_cast<double>(k % 7);
  const auto batch = random_batch(rng, 4, arch.input(), -1, 1);
  const auto g = random_matrix(rng, 4, 5);
  const auto a = backward(model, batch, g);
  CHECK(backward_serial(model, batch, g) == a);

  const DifferentiableFn fn = [&](const std::vector<double>& th, std::vector<double>* grad) {
    EmbeddingModel m{arch, th};
    const auto out = forward(m, batch);
    double s = 0.0;
    for (std::size_t k = 0; k < out.data.size(); ++k) s += g.data[k] * out.data[k];
    if (grad) *grad = backward(m, batch, g);
    return s;
  };
  CHECK(finite_difference_check(fn, model.params).max_relative_error < 1e-6);
}

TEST_CASE("finite_difference_check: quadratic and subsampling") {
  std::mt19937_64 rng(4);
  std::vector<double> theta(40);
  for (auto& t : theta) t = std::uniform_real_distribution<double>(-3, 3)(rng);
  const DifferentiableFn quad = [](const std::vector<double>& th, std::vector<double>* grad) {
    double s = 0.0;
    for (double t : th) s += t * t;
    if (grad) {
      grad->resize(th.size());
      for (std::size_t k = 0; k < th.size(); ++k) (*grad)[k] = 2.0 * th[k];
    }
    return s;
  };
  const auto r = finite_difference_check(quad, theta);
  CHECK(r.coordinates == 40);
  CHECK(r.max_relative_error < 1e-9);

  theta.resize(1000, 0.5);
  CHECK(finite_difference_check(quad, theta).coordinates == 256);
  // A wrong gradient is caught.
  const DifferentiableFn wrong = [&](const std::vector<double>& th, std::vector<double>* grad) {
    const double v = quad(th, grad);
    if (grad) (*grad)[3] += 1.0;
    return v;
  };
  CHECK(finite_difference_check(wrong, std::vector<double>(10, 1.0)).max_relative_error > 0.1);
}

TEST_CASE("mse_alignment_loss: examples, symmetry, gradient") {
  std::mt19937_64 rng(5);
  const auto a = random_matrix(rng, 3, 4);
  const auto same = mse_alignment_loss(a, a);
  CHECK(same.value == 0.0);
  for (double g : same.grad.data) CHECK(g == 0.0);

  Matrix t(1, 4), s(1, 4);
  t(0, 0) = 1.0;
  s(0, 1) = 1.0;
  CHECK(mse_alignment_loss(t, s).value == 0.5);

  for (int trial = 0; trial < 20; ++trial) {
    const auto tm = random_matrix(rng, 8, 16);
    const auto sm = random_matrix(rng, 8, 16);
    CHECK(mse_alignment_loss(tm, sm).value == mse_alignment_loss(sm, tm).value);
    CHECK(mse_alignment_loss(tm, sm).value >= 0.0);
    const DifferentiableFn fn = [&](const std::vector<double>& th, std::vector<double>* grad) {
      Matrix st(8, 16);
      st.data = th;
      const auto l = mse_alignment_loss(tm, st);
      if (grad) *grad = l.grad.data;
      return l.value;
    };
    CHECK(finite_difference_check(fn, sm.data).max_relative_error < 1e-6);
  }
  CHECK_THROWS_AS(mse_alignment_loss(Matrix(2, 3), Matrix(3, 2)), ContractViolation);
}

TEST_CASE("metric losses: contrastive examples") {
  Matrix e(3, 2, 0.0);
  for (std::size_t i = 0; i < 3; ++i) e(i, 0) = 1.0;
  CHECK(metric_loss(MetricLossKind::Contrastive, e, {1, 1, 1}).value == 0.0);

  Matrix two(2, 2, 0.0);
  two(0, 0) = 1.0;
  two(1, 1) = 1.0;  // distance sqrt(2) > margin
  const auto r = metric_loss(MetricLossKind::Contrastive, two, {0, 1});
  CHECK(r.value == 0.0);
  for (double g : r.grad.data) CHECK(g == 0.0);

  // Inside the margin: (m - d)^2 with one pair.
  Matrix close(2, 1, 0.0);
  close(1, 0) = 0.04;
  CHECK(metric_loss(MetricLossKind::Contrastive, close, {0, 1}).value ==
        doctest::Approx(0.06 * 0.06).epsilon(1e-12));
  // Same label at distance d: d^2.
  CHECK(metric_loss(MetricLossKind::Contrastive, close, {4, 4}).value ==
        doctest::Approx(0.0016).epsilon(1e-12));
}

TEST_CASE("metric losses: degenerate batches warn with zero loss") {
  Matrix e(3, 2, 0.0);
  e(0, 0) = e(1, 1) = 1.0;
  e(2, 0) = -1.0;
  const auto t = metric_loss(MetricLossKind::Triplet, e, {0, 1, 2});
  CHECK(t.warning);
  CHECK(t.value == 0.0);
  const auto n = metric_loss(MetricLossKind::NTXent, e, {0, 1, 2});
  CHECK(n.warning);
  CHECK(n.value == 0.0);
  // Triplet with domains: anchors must be real, positives/negatives synthetic.
  const auto d = metric_loss(MetricLossKind::Triplet, e, {0, 0, 1},
                             {Domain::Synthetic, Domain::Synthetic, Domain::Synthetic});
  CHECK(d.warning);
  CHECK_THROWS_AS(metric_loss(MetricLossKind::Triplet, Matrix(1, 2), {0}), ContractViolation);
  CHECK_THROWS_AS(metric_loss(MetricLossKind::Triplet, e, {0, 1}), ContractViolation);
  CHECK(parse_metric_loss_kind("ntxent") == MetricLossKind::NTXent);
  CHECK_THROWS_AS(parse_metric_loss_kind("lifted"), RejectedInput);
}

TEST_CASE("metric losses: triplet hand value") {
  // a = (0), p = (0.3), n = (0.25): d(a,p) - d(a,n) + 0.1 = 0.15.
  Matrix e(3, 1);
  e(0, 0) = 0.0;
  e(1, 0) = 0.3;
  e(2, 0) = 0.25;
  const auto r = metric_loss(MetricLossKind::Triplet, e, {7, 7, 8},
                             {Domain::Real, Domain::Synthetic, Domain::Synthetic});
  CHECK(r.value == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(r.grad(0, 0) == doctest::Approx(0.0).epsilon(1e-12));  // -1 + 1
  CHECK(r.grad(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.grad(2, 0) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("metric losses: gradients match finite differences, losses non-negative") {
  std::mt19937_64 rng(6);
  const MetricLossParams prm;
  for (auto kind : {MetricLossKind::Contrastive, MetricLossKind::Triplet, MetricLossKind::NTXent,
                    MetricLossKind::MultiSimilarity}) {
    for (int trial = 0; trial < 20; ++trial) {
      // A tight cluster keeps distances near the margin so hinges are active.
      auto e = random_matrix(rng, 8, 8, 0.05);
      for (std::size_t i = 0; i < 8; ++i) e(i, 0) += 1.0;
      const std::vector<int> labels{0, 0, 1, 1, 2, 2, 3, 0};
      const std::vector<Domain> dom{Domain::Real, Domain::Synthetic, Domain::Real, Domain::Synthetic,
                                    Domain::Real, Domain::Synthetic, Domain::Synthetic, Domain::Synthetic};
      const DifferentiableFn fn = [&](const std::vector<double>& th, std::vector<double>* grad) {
        Matrix m(8, 8);
        m.data = th;
        const auto l = metric_loss(kind, m, labels, dom, prm);
        if (grad) *grad = l.grad.data;
        return l.value;
      };
      const auto l = metric_loss(kind, e, labels, dom, prm);
      INFO(to_string(kind) << " trial " << trial);
      CHECK(l.value >= 0.0);
      CHECK_FALSE(l.warning);
      CHECK(finite_difference_check(fn, e.data).max_relative_error < 1e-5);
    }
  }
}

TEST_CASE("adam: zero gradient, scalar recurrence, divergence") {
  AdamConfig cfg{1e-3, 0.9, 0.999, 1e-8};
  std::vector<double> th{1.5, -2.0};
  AdamState st;
  adam_step(th, {0.0, 0.0}, st, cfg);
  CHECK(th == std::vector<double>{1.5, -2.0});
  CHECK(st.step == 1);

  // Scalar by hand: t = 1 gives m_hat = g, v_hat = g^2.
  std::vector<double> x{0.7};
  AdamState s1;
  const double g1 = 0.25;
  adam_step(x, {g1}, s1, cfg);
  CHECK(x[0] == doctest::Approx(0.7 - 1e-3 * g1 / (std::abs(g1) + 1e-8)).epsilon(1e-15));
  // t = 2 with g2.
  const double g2 = -0.5;
  const double m2 = 0.9 * (0.1 * g1) + 0.1 * g2;
  const double v2 = 0.999 * (0.001 * g1 * g1) + 0.001 * g2 * g2;
  const double expect = x[0] - 1e-3 * (m2 / (1 - 0.81)) / (std::sqrt(v2 / (1 - 0.999 * 0.999)) + 1e-8);
  adam_step(x, {g2}, s1, cfg);
  CHECK(x[0] == doctest::Approx(expect).epsilon(1e-14));

  // Moments decay toward zero under zero gradient.
  const double m_before = std::abs(s1.m[0]);
  adam_step(x, {0.0}, s1, cfg);
  CHECK(std::abs(s1.m[0]) < m_before);

  auto y = x;
  const auto s_before = s1;
  CHECK_THROWS_AS(adam_step(y, {std::nan("")}, s1, cfg), TrainingDiverged);
  CHECK(y == x);
  CHECK(s1.step == s_before.step);
  CHECK_THROWS_AS(adam_step(y, {1.0, 2.0}, s1, cfg), ContractViolation);
}

TEST_CASE("align: teacher equal to student is a fixed point") {
  std::mt19937_64 rng(7);
  const auto arch = Architecture::parse("input 3 4 4; conv 2; relu; dense 4; l2norm");
  const auto teacher = init_model(arch, 1);
  PairedAlignmentSet data;
  data.real = random_batch(rng, 20, arch.input());
  data.synt = data.real;
  for (int i = 0; i < 20; ++i) data.ids.push_back("p" + std::to_string(i));
  TrainConfig cfg;
  cfg.iterations = 50;
  cfg.batch_size = 8;
  cfg.learning_rate = 1e-2;
  const auto r = align(teacher, teacher, data, cfg);
  CHECK(r.initial_holdout_loss == 0.0);
  CHECK(r.student == teacher);
  CHECK(r.log.front().loss == 0.0);
}

TEST_CASE("align: linear student recovers an affine pixel transform") {
  std::mt19937_64 rng(8);
  const auto arch = Architecture::parse("input 3 4 4; dense 8; l2norm");
  const auto teacher = init_model(arch, 3);
  const auto teacher_copy = teacher;
  PairedAlignmentSet data;
  data.synt = random_batch(rng, 256, arch.input());
  data.real = channel_affine(data.synt);
  for (int i = 0; i < 256; ++i) data.ids.push_back("v" + std::to_string(i));
  TrainConfig cfg;
  cfg.iterations = 2000;
  cfg.batch_size = 32;
  cfg.learning_rate = 1e-2;
  cfg.holdout_fraction = 0.25;
  cfg.rng_seed = 11;
  const auto r = align(teacher, teacher, data, cfg);
  MESSAGE("held-out loss " << r.initial_holdout_loss << " -> " << r.final_holdout_loss);
  CHECK(r.holdout_pairs.size() == 64);
  CHECK(r.final_holdout_loss * 10.0 <= r.initial_holdout_loss);
  CHECK(r.log.front().step == 0);
  CHECK(r.log.back().step == cfg.iterations - 1);
  CHECK(r.log.size() == 21);
  CHECK(r.log.front().loss >= r.log.back().loss);
  CHECK(teacher == teacher_copy);

  // Same seed, same data: bit-identical parameters.
  cfg.iterations = 200;
  const auto a = align(teacher, teacher, data, cfg);
  const auto b = align(teacher, teacher, data, cfg);
  CHECK(a.student == b.student);
  CHECK(format_training_log(a.log).rfind("step,loss,wallclock_s\n", 0) == 0);
}

TEST_CASE("align: input validation and divergence") {
  std::mt19937_64 rng(9);
  const auto arch = Architecture::parse("input 3 4 4; dense 4; l2norm");
  const auto teacher = init_model(arch, 1);
  PairedAlignmentSet data;
  data.real = random_batch(rng, 10, arch.input());
  data.synt = random_batch(rng, 10, arch.input());
  for (int i = 0; i < 10; ++i) data.ids.push_back(std::to_string(i));
  TrainConfig cfg;
  cfg.iterations = 5;
  cfg.batch_size = 20;
  CHECK_THROWS_AS(align(teacher, teacher, data, cfg), RejectedInput);
  cfg.batch_size = 4;
  data.ids.pop_back();
  CHECK_THROWS_AS(align(teacher, teacher, data, cfg), RejectedInput);
  data.ids.push_back("9");
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(align(teacher, teacher, data, cfg), RejectedInput);
  cfg.learning_rate = 1e-3;
  const auto other = init_model(Architecture::parse("input 3 4 4; dense 5; l2norm"), 1);
  CHECK_THROWS_AS(align(teacher, other, data, cfg), ContractViolation);

  data.synt.data[3] = std::nan("");
  try {
    align(teacher, teacher, data, cfg);
    // The poisoned pair may be held out; then training stays finite.
  } catch (const AlignmentDiverged& e) {
    CHECK(e.last_good().params.size() == teacher.params.size());
  }
}

TEST_CASE("split_pairs: sizes and determinism") {
  const auto [tr, ho] = split_pairs(100, 0.1, 3);
  CHECK(tr.size() == 90);
  CHECK(ho.size() == 10);
  CHECK(split_pairs(100, 0.1, 3) == std::make_pair(tr, ho));
  CHECK(split_pairs(1, 0.5, 0).second.empty());
  CHECK(split_pairs(3, 0.01, 0).second.size() == 1);
  CHECK(split_pairs(3, 0.99, 0).first.size() == 1);
}

TEST_CASE("checkpoint: round trip and corruption") {
  const auto arch = Architecture::parse("input 3 4 4; conv 2; relu; pool; dense 3; l2norm");
  auto model = init_model(arch, 77);
  model.params[0] = -0.0;
  model.params[1] = 1e-310;
  const auto bytes = encode_checkpoint(model);
  CHECK(bytes.substr(0, 8) == "MVPRMODL");
  const auto back = decode_checkpoint(bytes);
  CHECK(back.arch == model.arch);
  CHECK(std::memcmp(back.params.data(), model.params.data(), model.params.size() * 8) == 0);
  CHECK(std::signbit(back.params[0]));

  TempDir dir("ckpt");
  save_checkpoint(dir / "m.ckpt", model);
  CHECK(load_checkpoint(dir / "m.ckpt") == model);

  for (std::size_t n = 0; n < bytes.size(); n += 7) {
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, n)), ParseError);
  }
  auto v2 = bytes;
  v2[8] = 2;
  CHECK_THROWS_AS(decode_checkpoint(v2), UnsupportedVersion);
  write_file(dir / "v2.ckpt", v2);
  CHECK_THROWS_AS(load_checkpoint(dir / "v2.ckpt"), UnsupportedVersion);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(magic), ParseError);
  CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), ParseError);
  // Descriptor corrupted into an invalid architecture.
  auto desc = bytes;
  desc[16] = '#';
  CHECK_THROWS_AS(decode_checkpoint(desc), ParseError);
  // Random byte flips never crash.
  std::mt19937_64 rng(10);
  for (int i = 0; i < 300; ++i) {
    auto c = bytes;
    c[rng() % c.size()] = static_cast<char>(rng());
    try {
      (void)decode_checkpoint(c);
    } catch (const ParseError&) {
    }
  }
}

TEST_CASE("image_to_tensor: identity and box downsample") {
  RgbImage img{4, 2, std::vector<std::uint8_t>(4 * 2 * 3)};
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 10);
  std::vector<double> same(3 * 2 * 4);
  image_to_tensor(img, 2, 4, same.data());
  CHECK(same[0] == 0.0);
  CHECK(same[1] == doctest::Approx(30.0 / 255.0).epsilon(1e-15));
  CHECK(same[8] == doctest::Approx(10.0 / 255.0).epsilon(1e-15));  // green channel, pixel 0

  std::vector<double> half(3 * 1 * 2);
  image_to_tensor(img, 1, 2, half.data());
  // Red of the left 2x2 block: pixels 0, 1, 4, 5 -> values 0, 30, 120, 150.
  CHECK(half[0] == doctest::Approx(75.0 / 255.0).epsilon(1e-12));
  CHECK_THROWS_AS(image_to_tensor(img, 0, 2, half.data()), RejectedInput);
}
