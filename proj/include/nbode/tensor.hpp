#pragma once

#include "nbode/types.hpp"

namespace nbode::ad {

/// Shape rules shared by every elementwise binary op.
///
/// Operands must have the same number of columns, or one of them is 1x1 and
/// acts as a scalar. If row counts differ, the larger must be a multiple g of
/// the smaller, and row r of the larger pairs with row r / g of the smaller
/// (consecutive blocks of g rows share one row).
enum class BinOp { Add, Sub, Mul, Div };

RowMat broadcast_binary(const RowMat& a, const RowMat& b, BinOp op);
// Sums a gradient of the broadcast result shape back to an operand of `rows` x `cols`.
RowMat reduce_to(const RowMat& g, Eigen::Index rows, Eigen::Index cols);
// Repeats the rows of `small` in blocks so that it has `rows` rows.
RowMat expand_rows(const RowMat& small, Eigen::Index rows);
bool is_scalar(const RowMat& a);

/// Dense value with elementwise arithmetic (not matrix products).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(RowMat v) : v_(std::move(v)) {}
  static Tensor scalar(double s);
  static Tensor zeros(Eigen::Index rows, Eigen::Index cols);

  const RowMat& value() const { return v_; }
  RowMat& value() { return v_; }
  Eigen::Index rows() const { return v_.rows(); }
  Eigen::Index cols() const { return v_.cols(); }

 private:
  RowMat v_;
};

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a);
Tensor operator+(const Tensor& a, double c);
Tensor operator+(double c, const Tensor& a);
Tensor operator-(const Tensor& a, double c);
Tensor operator-(double c, const Tensor& a);
Tensor operator*(const Tensor& a, double c);
Tensor operator*(double c, const Tensor& a);
Tensor operator/(const Tensor& a, double c);
Tensor operator/(double c, const Tensor& a);

Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor sum(const Tensor& x);  // 1x1
// x * W^T + b with W of shape out x in and b of shape 1 x out.
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor linear(const Tensor& x, const Tensor& w);
Tensor zeros_like(const Tensor& x);

// Derivative pieces of tanh along a curve a(e) = a0 + e a1 + e^2 a2 / 2, given y0 = tanh(a0):
//   first  = (1 - y0^2) a1
//   second = (1 - y0^2) a2 - 2 y0 (1 - y0^2) a1^2
// y0 may have fewer rows than a1/a2 (grouped broadcast). A null a2 means zero.
Tensor tanh_tangent(const Tensor& y0, const Tensor& a1);
Tensor tanh_curvature(const Tensor& y0, const Tensor& a1, const Tensor* a2);

// Vectorized elementwise tanh shared by all tensor types.
void tanh_inplace(RowMat& x);

namespace detail {
// Kernels shared with the tape implementation.
RowMat tanh_tangent(const RowMat& y0, const RowMat& a1);
RowMat tanh_curvature(const RowMat& y0, const RowMat& a1, const RowMat* a2);
// Adjoints of the two kernels above; null outputs are skipped.
void tanh_tangent_backward(const RowMat& y0, const RowMat& a1, const RowMat& adj, RowMat* g_a1, RowMat* g_y0);
void tanh_curvature_backward(const RowMat& y0, const RowMat& a1, const RowMat* a2, const RowMat& adj, RowMat* g_a1,
                             RowMat* g_a2, RowMat* g_y0);
}  // namespace detail

}  // namespace nbode::ad

namespace nbode::ad {
// sum((pred - target)^2) as a 1x1 tensor.
Tensor squared_error_sum(const Tensor& pred, const RowMat& target);
}  // namespace nbode::ad
