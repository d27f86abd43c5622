#include "mvpr/optim.hpp"

#include <cmath>
#include <string>

#include "mvpr/error.hpp"

namespace mvpr {

void adam_step(std::vector<double>& theta, const std::vector<double>& grad, AdamState& state,
               const AdamConfig& config) {
  const auto n = theta.size();
  if (grad.size() != n) throw ContractViolation("adam_step: gradient size mismatch");
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  }
  if (state.m.size() != n || state.v.size() != n) {
    throw ContractViolation("adam_step: optimizer state size mismatch");
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (!std::isfinite(grad[k])) {
      throw TrainingDiverged("non-finite gradient at parameter " + std::to_string(k));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < n; ++k) {
    const double g = grad[k];
    state.m[k] = config.beta1 * state.m[k] + (1.0 - config.beta1) * g;
    state.v[k] = config.beta2 * state.v[k] + (1.0 - config.beta2) * g * g;
    const double mhat = state.m[k] / c1;
    const double vhat = state.v[k] / c2;
    theta[k] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.eps);
  }
}

}  // namespace mvpr
