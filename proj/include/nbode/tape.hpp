#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "nbode/tensor.hpp"
#include "nbode/types.hpp"

namespace nbode::ad {

class Tape;

/// Handle to a tensor-valued node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  const RowMat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool needs_grad() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode record of tensor operations.
///
/// Nodes are appended in evaluation order, so the reverse sweep is a single
/// backwards pass over the node list. Nodes that depend on no leaf are
/// constants and record no backward rule. backward() releases intermediate
/// values as it goes; a tape supports one backward pass.
class Tape {
 public:
  // Receives the node's own value and its accumulated adjoint.
  using Backward = std::function<void(Tape& tape, const RowMat& value, const RowMat& adjoint)>;

  Var leaf(RowMat value);
  Var constant(RowMat value);
  Var constant(double value) { return constant(RowMat::Constant(1, 1, value)); }

  // Appends a node; `parents` are the ids the backward rule may accumulate into.
  Var record(RowMat value, std::span<const int> parents, Backward backward);

  const RowMat& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  // Adds `g` into the adjoint of `id` (no-op for constants).
  void accumulate(int id, const RowMat& g);

  // Seeds d(root)/d(root) = 1 for a 1x1 root and sweeps backwards.
  void backward(const Var& root);
  // Adjoint of a node after backward(); zeros if nothing flowed into it.
  RowMat grad(const Var& v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    RowMat value;
    RowMat adjoint;
    Eigen::Index rows = 0, cols = 0;
    bool needs_grad = false;
    bool is_leaf = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
  bool swept_ = false;
};

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator+(const Var& a, double c);
Var operator+(double c, const Var& a);
Var operator-(const Var& a, double c);
Var operator-(double c, const Var& a);
Var operator*(const Var& a, double c);
Var operator*(double c, const Var& a);
Var operator/(const Var& a, double c);
Var operator/(double c, const Var& a);

Var tanh(const Var& x);
Var exp(const Var& x);
Var sum(const Var& x);
Var affine(const Var& x, const Var& w, const Var& b);
Var linear(const Var& x, const Var& w);
Var zeros_like(const Var& x);
Var tanh_tangent(const Var& y0, const Var& a1);
Var tanh_curvature(const Var& y0, const Var& a1, const Var* a2);

// sum((pred - target)^2) as a 1x1 node.
Var squared_error_sum(const Var& pred, const RowMat& target);

}  // namespace nbode::ad
