#pragma once

#include <optional>

namespace nbode::ad {

/// Second-order Taylor jet of a map along a line x(e) = x0 + e*w.
///
/// `v` is the value at e = 0, `d1` the first directional derivative and `d2`
/// the second (absent means zero). This is the tangent-of-tangent of a nested
/// dual number seeded with equal directions, with the duplicate first-order
/// component shared. `v` may have fewer rows than `d1`/`d2`: many directions
/// can be attached to one base point (grouped broadcast).
template <class T>
struct Jet {
  T v;
  T d1;
  std::optional<T> d2;
};

template <class T, class P>
Jet<T> affine(const Jet<T>& x, const P& w, const P& b) {
  Jet<T> out{affine(x.v, w, b), linear(x.d1, w), std::nullopt};
  if (x.d2) out.d2 = linear(*x.d2, w);
  return out;
}

template <class T, class P>
Jet<T> linear(const Jet<T>& x, const P& w) {
  Jet<T> out{linear(x.v, w), linear(x.d1, w), std::nullopt};
  if (x.d2) out.d2 = linear(*x.d2, w);
  return out;
}

template <class T>
Jet<T> tanh(const Jet<T>& x) {
  T y = tanh(x.v);
  T t1 = tanh_tangent(y, x.d1);
  T t2 = tanh_curvature(y, x.d1, x.d2 ? &*x.d2 : nullptr);
  return {std::move(y), std::move(t1), std::move(t2)};
}

}  // namespace nbode::ad
