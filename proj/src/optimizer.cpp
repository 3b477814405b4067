#include "nbode/optimizer.hpp"

#include <cmath>

#include "nbode/errors.hpp"

namespace nbode {

AdaBeliefState adabelief_init(std::size_t n) { return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0}; }

void adabelief_step(std::span<double> params, std::span<const double> grads, AdaBeliefState& state, double lr,
                    const AdaBeliefConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.s.size()) {
    throw ArgumentError("optimizer state, parameters and gradients differ in length");
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    const double r = g - state.m[i];
    state.s[i] = cfg.beta2 * state.s[i] + (1.0 - cfg.beta2) * r * r + cfg.eps_root;
    const double m_hat = state.m[i] / c1;
    const double s_hat = state.s[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(s_hat) + cfg.eps);
  }
}

}  // namespace nbode
