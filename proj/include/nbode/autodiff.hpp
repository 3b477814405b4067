#pragma once

#include <string>
#include <string_view>
#include <utility>

#include "nbode/dual.hpp"
#include "nbode/errors.hpp"
#include "nbode/jet.hpp"
#include "nbode/tape.hpp"
#include "nbode/tensor.hpp"

namespace nbode::ad {

/// Directional derivative df(x)[v]. `f` must be generic in its value type so
/// that it can be evaluated on Dual<T>; T may itself be a Var, which makes
/// the result differentiable in reverse mode.
template <class F, class T>
T jvp(F&& f, const T& x, const T& v) {
  return std::forward<F>(f)(Dual<T>{x, v}).t;
}

/// Second directional derivative d2f(x)[v, v] by tangent-of-tangent.
template <class F, class T>
T bilinear_hvp(F&& f, const T& x, const T& v) {
  using D = Dual<T>;
  const Dual<D> seed{D{x, v}, D{v, zeros_like(x)}};
  return std::forward<F>(f)(seed).t.t;
}

/// Gradient of a scalar-valued f (Var -> 1x1 Var) at x.
/// Throws ArgumentError if f returns a non-scalar.
template <class F>
Tensor grad(F&& f, const Tensor& x) {
  Tape tape;
  const Var xv = tape.leaf(x.value());
  const Var y = std::forward<F>(f)(xv);
  tape.backward(y);
  return Tensor(tape.grad(xv));
}

/// Elementwise primitive chosen by name; throws EngineError for names outside
/// the supported set {identity, neg, tanh, exp}.
template <class T>
T apply_unary(std::string_view name, const T& x) {
  if (name == "identity") return x;
  if (name == "neg") return -x;
  if (name == "tanh") return tanh(x);
  if (name == "exp") return exp(x);
  throw EngineError("unsupported primitive '" + std::string(name) + "'");
}

}  // namespace nbode::ad
