#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nbode/autodiff.hpp"
#include "nbode/errors.hpp"
#include "nbode/types.hpp"

namespace nbode {

enum class Activation { Tanh, Identity };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

/// Multilayer perceptron f: R^d -> R^d. Hidden layers use `activation`, the
/// output layer is affine. Layer l maps dims[l] -> dims[l+1] with weights of
/// shape dims[l+1] x dims[l] and a 1 x dims[l+1] bias row.
struct MlpVectorField {
  std::vector<int> dims;
  Activation activation = Activation::Tanh;
  std::uint64_t seed = 0;
  std::vector<RowMat> weights;
  std::vector<RowMat> biases;

  int dim() const { return dims.front(); }
  std::size_t param_count() const;
  // Layer-major: W0 (row-major), b0, W1, b1, ...
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);
};

std::vector<int> default_dims(int d);

// Weights uniform in +-sqrt(1/fan_in), biases zero.
MlpVectorField init_params(std::uint64_t seed, const std::vector<int>& dims,
                           Activation activation = Activation::Tanh);

template <class P>
struct LayerParams {
  std::vector<P> w;
  std::vector<P> b;
  Activation activation = Activation::Tanh;
};

LayerParams<ad::Tensor> tensor_params(const MlpVectorField& m);
// Registers every weight and bias as a leaf on `tape`.
LayerParams<ad::Var> tape_params(const MlpVectorField& m, ad::Tape& tape);
// Parameter adjoints after a backward pass, in flatten() order.
std::vector<double> gather_grads(const LayerParams<ad::Var>& p, const ad::Tape& tape);

/// Forward pass for any value type with affine/linear/tanh overloads
/// (Tensor, Var, Dual<...>, Jet<...>).
template <class X, class P>
X mlp_forward(const LayerParams<P>& p, const X& x) {
  X h = x;
  const std::size_t layers = p.w.size();
  for (std::size_t l = 0; l < layers; ++l) {
    h = affine(h, p.w[l], p.b[l]);
    if (l + 1 < layers && p.activation == Activation::Tanh) h = tanh(h);
  }
  return h;
}

Vec model_field(const MlpVectorField& m, const Vec& u);
RowMat model_field_batch(const MlpVectorField& m, const RowMat& u);
// Columns are jvp's along the basis directions, computed in one forward pass.
Mat model_jacobian(const MlpVectorField& m, const Vec& u);

namespace detail {

template <class T>
bool all_finite(const T& x) {
  return x.value().allFinite();
}

template <class T>
T rk4_combine(const T& u, const T& k1, const T& k2, const T& k3, const T& k4, double h) {
  return u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

/// States after 1..steps intervals of length dt, each covered by n_sub RK4
/// substeps. Rows of u0 are independent initial states.
/// Throws RolloutError with the offending step when a state becomes non-finite.
template <class T, class P>
std::vector<T> rollout_center(const LayerParams<P>& p, const T& u0, int steps, double dt, int n_sub) {
  if (!(dt > 0.0) || n_sub < 1 || steps < 0) throw ArgumentError("rollout needs dt > 0, n_sub >= 1");
  const double h = dt / n_sub;
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(steps));
  T u = u0;
  for (int s = 1; s <= steps; ++s) {
    for (int k = 0; k < n_sub; ++k) {
      const T k1 = mlp_forward(p, u);
      const T k2 = mlp_forward(p, T(u + (0.5 * h) * k1));
      const T k3 = mlp_forward(p, T(u + (0.5 * h) * k2));
      const T k4 = mlp_forward(p, T(u + h * k3));
      u = detail::rk4_combine(u, k1, k2, k3, k4, h);
    }
    if (!detail::all_finite(u)) throw RolloutError("non-finite state at step " + std::to_string(s), s);
    out.push_back(u);
  }
  return out;
}

template <class T>
struct NeighborhoodRollout {
  std::vector<T> center;     // steps entries of B x d
  std::vector<T> perturb;    // steps entries of (B*K) x d
  std::vector<T> neighbors;  // center + perturbation, (B*K) x d
};

/// Center states (B x d) advanced together with K perturbations per center
/// ((B*K) x d, center-major rows). Perturbations follow
///   dw/dt = df(u)[w] + 1/2 d2f(u)[w, w]
/// (the second term is dropped for taylor_order 1), evaluated with a
/// second-order jet at the current center state.
template <class T, class P>
NeighborhoodRollout<T> rollout_neighborhood(const LayerParams<P>& p, const T& u0, const T& w0, int steps,
                                            double dt, int n_sub, int taylor_order = 2) {
  if (!(dt > 0.0) || n_sub < 1 || steps < 0) throw ArgumentError("rollout needs dt > 0, n_sub >= 1");
  if (taylor_order != 1 && taylor_order != 2) throw ArgumentError("taylor_order must be 1 or 2");
  const double h = dt / n_sub;
  auto rhs = [&](const T& u, const T& w, T& ku, T& kw) {
    ad::Jet<T> j = mlp_forward(p, ad::Jet<T>{u, w, std::nullopt});
    ku = std::move(j.v);
    kw = (taylor_order == 2 && j.d2) ? T(j.d1 + 0.5 * *j.d2) : std::move(j.d1);
  };
  NeighborhoodRollout<T> out;
  T u = u0, w = w0;
  for (int s = 1; s <= steps; ++s) {
    for (int k = 0; k < n_sub; ++k) {
      T ku1, kw1, ku2, kw2, ku3, kw3, ku4, kw4;
      rhs(u, w, ku1, kw1);
      rhs(T(u + (0.5 * h) * ku1), T(w + (0.5 * h) * kw1), ku2, kw2);
      rhs(T(u + (0.5 * h) * ku2), T(w + (0.5 * h) * kw2), ku3, kw3);
      rhs(T(u + h * ku3), T(w + h * kw3), ku4, kw4);
      u = detail::rk4_combine(u, ku1, ku2, ku3, ku4, h);
      w = detail::rk4_combine(w, kw1, kw2, kw3, kw4, h);
    }
    if (!detail::all_finite(u) || !detail::all_finite(w)) {
      throw RolloutError("non-finite state at step " + std::to_string(s), s);
    }
    out.center.push_back(u);
    out.perturb.push_back(w);
    out.neighbors.push_back(w + u);
  }
  return out;
}

struct CheckpointInfo {
  long step = 0;
  double val_loss = 0.0;
};

// model.json + params.bin (flatten() order, little-endian f64).
void save_model(const MlpVectorField& m, const std::filesystem::path& dir, const CheckpointInfo& info = {});
MlpVectorField load_model(const std::filesystem::path& dir, CheckpointInfo* info = nullptr);

}  // namespace nbode
