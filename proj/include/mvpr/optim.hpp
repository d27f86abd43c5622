#pragma once

#include <cstdint>
#include <vector>

namespace mvpr {

struct AdamConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

// One bias-corrected Adam update:
//   m = b1 m + (1 - b1) g,  v = b2 v + (1 - b2) g^2,
//   theta -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps).
// Empty moments are initialized to zero. Throws ContractViolation on a size
// mismatch and TrainingDiverged (leaving theta and state untouched) on a
// non-finite gradient.
void adam_step(std::vector<double>& theta, const std::vector<double>& grad, AdamState& state,
               const AdamConfig& config);

}  // namespace mvpr
