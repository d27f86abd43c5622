#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mvpr/error.hpp"
#include "mvpr/model.hpp"
#include "mvpr/optim.hpp"

namespace mvpr {

// Real/synthetic image pairs taken from the same viewpoints.
struct PairedAlignmentSet {
  ImageBatch real;
  ImageBatch synt;
  std::vector<std::string> ids;  // viewpoint id per pair

  std::size_t size() const { return ids.size(); }
};

// Throws RejectedInput when counts or shapes disagree.
void validate(const PairedAlignmentSet& data);

struct TrainConfig {
  std::uint64_t iterations = 50000;
  std::size_t batch_size = 32;
  double learning_rate = 1e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t rng_seed = 0;
  double holdout_fraction = 0.1;  // pairs kept out of training for the held-out loss
  std::uint64_t log_every = 100;

  AdamConfig adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_eps}; }
};

// Throws RejectedInput for non-positive values or a holdout fraction outside [0, 1).
void validate(const TrainConfig& cfg);

struct LogEntry {
  std::uint64_t step = 0;
  double loss = 0.0;  // minibatch loss before that step's update
  double wallclock_s = 0.0;
};

struct AlignResult {
  EmbeddingModel student;
  std::vector<LogEntry> log;
  std::vector<std::size_t> train_pairs;
  std::vector<std::size_t> holdout_pairs;
  double initial_holdout_loss = 0.0;
  double final_holdout_loss = 0.0;
};

// Raised when the loss or gradient becomes non-finite; carries the last
// parameters that produced a finite loss.
class AlignmentDiverged : public TrainingDiverged {
 public:
  AlignmentDiverged(const std::string& what, EmbeddingModel last_good, std::uint64_t step)
      : TrainingDiverged(what), last_good_(std::move(last_good)), step_(step) {}
  const EmbeddingModel& last_good() const { return last_good_; }
  std::uint64_t step() const { return step_; }

 private:
  EmbeddingModel last_good_;
  std::uint64_t step_;
};

// Seeded split of the pair indices into (train, holdout). With N >= 2 the
// holdout has between 1 and N - 1 pairs; with a zero fraction or a single
// pair it is empty and held-out losses use the training pairs.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_pairs(std::size_t n,
                                                                          double holdout_fraction,
                                                                          std::uint64_t seed);

// Mean squared difference between teacher(real) and student(synt) over the
// listed pairs.
double alignment_loss(const EmbeddingModel& teacher, const EmbeddingModel& student,
                      const PairedAlignmentSet& data, const std::vector<std::size_t>& pairs);

// MSE feature alignment: the teacher embeds real images and stays frozen;
// the student embeds the synthetic counterparts and is trained with Adam on
// minibatches drawn uniformly with replacement from the training split.
// `student` is the starting point (pass the teacher to start from
// theta_synt = theta_real). Throws AlignmentDiverged on a non-finite loss.
AlignResult align(const EmbeddingModel& teacher, const EmbeddingModel& student,
                  const PairedAlignmentSet& data, const TrainConfig& cfg);

std::string format_training_log(const std::vector<LogEntry>& log);

// Loss at theta; writes the analytic gradient when `grad` is non-null.
using DifferentiableFn = std::function<double(const std::vector<double>& theta,
                                              std::vector<double>* grad)>;

struct FdReport {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

// Central differences (f(theta + e) - f(theta - e)) / 2e over every
// coordinate, or over a seeded sample of 256 when there are more. The error
// is ||analytic - numeric||_inf / max(||analytic||_inf, ||numeric||_inf)
// over the checked coordinates (0 when both are zero).
FdReport finite_difference_check(const DifferentiableFn& fn, const std::vector<double>& theta,
                                 double epsilon = 1e-5, std::uint64_t seed = 0);

}  // namespace mvpr
