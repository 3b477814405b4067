#pragma once

#include <span>
#include <vector>

namespace nbode {

struct AdaBeliefConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-16;       // added to the denominator
  double eps_root = 1e-16;  // added to the second-moment estimate
};

struct AdaBeliefState {
  std::vector<double> m;
  std::vector<double> s;
  long t = 0;
};

AdaBeliefState adabelief_init(std::size_t n);

/// One AdaBelief update, in place:
///   m = b1 m + (1-b1) g;  s = b2 s + (1-b2) (g-m)^2 + eps_root
///   p -= lr * (m / (1-b1^t)) / (sqrt(s / (1-b2^t)) + eps)
void adabelief_step(std::span<double> params, std::span<const double> grads, AdaBeliefState& state, double lr,
                    const AdaBeliefConfig& cfg = {});

}  // namespace nbode
