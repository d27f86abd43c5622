#include "mvpr/align.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mvpr/csv.hpp"
#include "mvpr/losses.hpp"
#include "mvpr/rng.hpp"

namespace mvpr {

void validate(const PairedAlignmentSet& data) {
  const auto& r = data.real;
  const auto& s = data.synt;
  if (r.n != data.ids.size() || s.n != data.ids.size()) {
    throw RejectedInput("alignment set: " + std::to_string(r.n) + " real and " +
                        std::to_string(s.n) + " synthetic images for " +
                        std::to_string(data.ids.size()) + " pair ids");
  }
  if (r.c != s.c || r.h != s.h || r.w != s.w) {
    throw RejectedInput("alignment set: real and synthetic image shapes differ");
  }
}

void validate(const TrainConfig& cfg) {
  if (cfg.iterations == 0 || cfg.batch_size == 0 || cfg.log_every == 0) {
    throw RejectedInput("train config: iterations, batch_size and log_every must be positive");
  }
  if (!(cfg.learning_rate > 0.0) || !(cfg.adam_eps > 0.0) || !(cfg.adam_beta1 > 0.0) ||
      !(cfg.adam_beta1 < 1.0) || !(cfg.adam_beta2 > 0.0) || !(cfg.adam_beta2 < 1.0)) {
    throw RejectedInput("train config: learning rate, eps must be positive and betas in (0, 1)");
  }
  if (!(cfg.holdout_fraction >= 0.0 && cfg.holdout_fraction < 1.0)) {
    throw RejectedInput("train config: holdout_fraction must be in [0, 1)");
  }
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_pairs(std::size_t n,
                                                                          double holdout_fraction,
                                                                          std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 rng(seed ^ 0xa5a5a5a5a5a5a5a5ull);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  std::size_t h = 0;
  if (n >= 2 && holdout_fraction > 0.0) {
    h = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(n))), 1, n - 1);
  }
  std::vector<std::size_t> holdout(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(h));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(h), order.end());
  std::sort(holdout.begin(), holdout.end());
  std::sort(train.begin(), train.end());
  return {train, holdout};
}

double alignment_loss(const EmbeddingModel& teacher, const EmbeddingModel& student,
                      const PairedAlignmentSet& data, const std::vector<std::size_t>& pairs) {
  if (pairs.empty()) return 0.0;
  const auto t = forward(teacher, select(data.real, pairs));
  const auto s = forward(student, select(data.synt, pairs));
  return mse_alignment_loss(t, s).value;
}

AlignResult align(const EmbeddingModel& teacher, const EmbeddingModel& student,
                  const PairedAlignmentSet& data, const TrainConfig& cfg) {
  validate(data);
  validate(cfg);
  if (!(teacher.arch == student.arch)) {
    throw ContractViolation("align: teacher and student architectures differ");
  }
  AlignResult result;
  std::tie(result.train_pairs, result.holdout_pairs) =
      split_pairs(data.size(), cfg.holdout_fraction, cfg.rng_seed);
  if (cfg.batch_size > result.train_pairs.size()) {
    throw RejectedInput("train config: batch_size " + std::to_string(cfg.batch_size) +
                        " exceeds the " + std::to_string(result.train_pairs.size()) +
                        " training pairs");
  }
  const auto& eval_pairs = result.holdout_pairs.empty() ? result.train_pairs : result.holdout_pairs;

  // The teacher is frozen, so its embeddings of the real images are fixed.
  const Matrix teacher_out = forward(teacher, data.real);
  const auto holdout_loss = [&](const EmbeddingModel& m) {
    const auto s = forward(m, select(data.synt, eval_pairs));
    return mse_alignment_loss(select_rows(teacher_out, eval_pairs), s).value;
  };

  result.student = student;
  auto& theta = result.student.params;
  result.initial_holdout_loss = holdout_loss(result.student);

  AdamState state;
  const auto adam = cfg.adam();
  SplitMix64 rng(cfg.rng_seed);
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::size_t> batch(cfg.batch_size);
  std::vector<double> last_good = theta;
  for (std::uint64_t step = 0; step < cfg.iterations; ++step) {
    for (auto& b : batch) b = result.train_pairs[rng.index(result.train_pairs.size())];
    const auto rec = forward_record(result.student, select(data.synt, batch));
    const auto loss = mse_alignment_loss(select_rows(teacher_out, batch), rec.output);
    if (!std::isfinite(loss.value)) {
      throw AlignmentDiverged("align: non-finite loss at step " + std::to_string(step),
                              {result.student.arch, last_good}, step);
    }
    last_good = theta;
    if (step % cfg.log_every == 0 || step + 1 == cfg.iterations) {
      const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
      result.log.push_back({step, loss.value, dt.count()});
    }
    const auto grad = backward(result.student, rec, loss.grad);
    try {
      adam_step(theta, grad, state, adam);
    } catch (const TrainingDiverged& e) {
      throw AlignmentDiverged(std::string("align: ") + e.what() + " at step " +
                                  std::to_string(step),
                              {result.student.arch, last_good}, step);
    }
  }
  result.final_holdout_loss = holdout_loss(result.student);
  return result;
}

std::string format_training_log(const std::vector<LogEntry>& log) {
  std::ostringstream out;
  out << "step,loss,wallclock_s\n";
  for (const auto& e : log) {
    out << e.step << ',' << format_double(e.loss) << ',' << format_double(e.wallclock_s) << '\n';
  }
  return out.str();
}

FdReport finite_difference_check(const DifferentiableFn& fn, const std::vector<double>& theta,
                                 double epsilon, std::uint64_t seed) {
  std::vector<double> analytic;
  fn(theta, &analytic);
  if (analytic.size() != theta.size()) {
    throw ContractViolation("finite_difference_check: gradient size mismatch");
  }
  std::vector<std::size_t> coords(theta.size());
  std::iota(coords.begin(), coords.end(), 0);
  constexpr std::size_t kSample = 256;
  if (coords.size() > kSample) {
    SplitMix64 rng(seed);
    for (std::size_t i = 0; i < kSample; ++i) {
      std::swap(coords[i], coords[i + rng.index(coords.size() - i)]);
    }
    coords.resize(kSample);
    std::sort(coords.begin(), coords.end());
  }
  double diff = 0.0, amax = 0.0, nmax = 0.0;
  auto probe = theta;
  for (const auto k : coords) {
    probe[k] = theta[k] + epsilon;
    const double fp = fn(probe, nullptr);
    probe[k] = theta[k] - epsilon;
    const double fm = fn(probe, nullptr);
    probe[k] = theta[k];
    const double numeric = (fp - fm) / (2.0 * epsilon);
    diff = std::max(diff, std::abs(analytic[k] - numeric));
    amax = std::max(amax, std::abs(analytic[k]));
    nmax = std::max(nmax, std::abs(numeric));
  }
  const double scale = std::max(amax, nmax);
  return {scale > 0.0 ? diff / scale : 0.0, coords.size()};
}

}  // namespace mvpr
