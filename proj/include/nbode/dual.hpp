#pragma once

#include <cmath>
#include <utility>

namespace nbode::ad {

// Scalar instances of the primitives so that Dual<double> works.
inline double tanh(double x) { return std::tanh(x); }
inline double exp(double x) { return std::exp(x); }
inline double sum(double x) { return x; }
inline double zeros_like(double) { return 0.0; }

/// Forward-mode dual number over any value type with elementwise arithmetic
/// (double, Tensor, Var, or another Dual). Nesting Dual<Dual<T>> gives
/// directional second derivatives.
template <class T>
struct Dual {
  T p;  // primal
  T t;  // tangent
};

template <class T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
  return {a.p + b.p, a.t + b.t};
}
template <class T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
  return {a.p - b.p, a.t - b.t};
}
template <class T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  return {a.p * b.p, a.p * b.t + a.t * b.p};
}
template <class T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  T q = a.p / b.p;
  T tq = (a.t - q * b.t) / b.p;
  return {std::move(q), std::move(tq)};
}
template <class T>
Dual<T> operator-(const Dual<T>& a) {
  return {-a.p, -a.t};
}

template <class T>
Dual<T> operator+(const Dual<T>& a, double c) {
  return {a.p + c, a.t};
}
template <class T>
Dual<T> operator+(double c, const Dual<T>& a) {
  return {c + a.p, a.t};
}
template <class T>
Dual<T> operator-(const Dual<T>& a, double c) {
  return {a.p - c, a.t};
}
template <class T>
Dual<T> operator-(double c, const Dual<T>& a) {
  return {c - a.p, -a.t};
}
template <class T>
Dual<T> operator*(const Dual<T>& a, double c) {
  return {a.p * c, a.t * c};
}
template <class T>
Dual<T> operator*(double c, const Dual<T>& a) {
  return {c * a.p, c * a.t};
}
template <class T>
Dual<T> operator/(const Dual<T>& a, double c) {
  return {a.p / c, a.t / c};
}
template <class T>
Dual<T> operator/(double c, const Dual<T>& a) {
  T q = c / a.p;
  T tq = -(q * a.t) / a.p;
  return {std::move(q), std::move(tq)};
}

template <class T>
Dual<T> tanh(const Dual<T>& x) {
  T y = tanh(x.p);
  T ty = (1.0 - y * y) * x.t;
  return {std::move(y), std::move(ty)};
}
template <class T>
Dual<T> exp(const Dual<T>& x) {
  T y = exp(x.p);
  T ty = y * x.t;
  return {std::move(y), std::move(ty)};
}
template <class T>
Dual<T> sum(const Dual<T>& x) {
  return {sum(x.p), sum(x.t)};
}
// Parameters are never dual: W and b have the innermost value type.
template <class T, class P>
Dual<T> affine(const Dual<T>& x, const P& w, const P& b) {
  return {affine(x.p, w, b), linear(x.t, w)};
}
template <class T, class P>
Dual<T> linear(const Dual<T>& x, const P& w) {
  return {linear(x.p, w), linear(x.t, w)};
}
template <class T>
Dual<T> zeros_like(const Dual<T>& x) {
  return {zeros_like(x.p), zeros_like(x.t)};
}

}  // namespace nbode::ad

