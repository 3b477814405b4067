#include "nbode/tensor.hpp"

#include <cmath>
#include <string>

#include "nbode/errors.hpp"

namespace nbode::ad {

namespace {

std::string shape(const RowMat& a) { return std::to_string(a.rows()) + "x" + std::to_string(a.cols()); }

[[noreturn]] void shape_error(const RowMat& a, const RowMat& b) {
  throw ArgumentError("incompatible shapes " + shape(a) + " and " + shape(b));
}

template <class Op>
RowMat combine(const RowMat& a, const RowMat& b, Op op) {
  if (is_scalar(b)) return op(a.array(), b(0, 0)).matrix();
  if (is_scalar(a)) return op(a(0, 0), b.array()).matrix();
  if (a.cols() != b.cols()) shape_error(a, b);
  if (a.rows() == b.rows()) return op(a.array(), b.array()).matrix();
  const bool a_big = a.rows() > b.rows();
  const RowMat& big = a_big ? a : b;
  const RowMat& small = a_big ? b : a;
  if (small.rows() == 0 || big.rows() % small.rows() != 0) shape_error(a, b);
  const Eigen::Index g = big.rows() / small.rows();
  RowMat out(big.rows(), big.cols());
  for (Eigen::Index k = 0; k < small.rows(); ++k) {
    const auto rep = small.row(k).replicate(g, 1).array();
    const auto blk = big.middleRows(k * g, g).array();
    if (a_big) {
      out.middleRows(k * g, g) = op(blk, rep).matrix();
    } else {
      out.middleRows(k * g, g) = op(rep, blk).matrix();
    }
  }
  return out;
}

}  // namespace

bool is_scalar(const RowMat& a) { return a.rows() == 1 && a.cols() == 1; }

RowMat broadcast_binary(const RowMat& a, const RowMat& b, BinOp op) {
  switch (op) {
    case BinOp::Add: return combine(a, b, [](const auto& x, const auto& y) { return x + y; });
    case BinOp::Sub: return combine(a, b, [](const auto& x, const auto& y) { return x - y; });
    case BinOp::Mul: return combine(a, b, [](const auto& x, const auto& y) { return x * y; });
    case BinOp::Div: return combine(a, b, [](const auto& x, const auto& y) { return x / y; });
  }
  throw EngineError("unknown binary op");
}

RowMat reduce_to(const RowMat& g, Eigen::Index rows, Eigen::Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return RowMat::Constant(1, 1, g.sum());
  if (cols != g.cols() || rows == 0 || g.rows() % rows != 0) {
    throw EngineError("cannot reduce gradient of shape " + shape(g) + " to " + std::to_string(rows) + "x" +
                      std::to_string(cols));
  }
  const Eigen::Index grp = g.rows() / rows;
  RowMat out(rows, cols);
  for (Eigen::Index k = 0; k < rows; ++k) out.row(k) = g.middleRows(k * grp, grp).colwise().sum();
  return out;
}

RowMat expand_rows(const RowMat& small, Eigen::Index rows) {
  if (small.rows() == rows) return small;
  if (small.rows() == 0 || rows % small.rows() != 0) throw ArgumentError("cannot expand rows");
  const Eigen::Index g = rows / small.rows();
  RowMat out(rows, small.cols());
  for (Eigen::Index k = 0; k < small.rows(); ++k) out.middleRows(k * g, g) = small.row(k).replicate(g, 1);
  return out;
}

void tanh_inplace(RowMat& x) {
  Eigen::Map<Eigen::ArrayXd> a(x.data(), x.size());
  const Eigen::ArrayXd in = a;
  a = 1.0 - 2.0 / ((2.0 * in).exp() + 1.0);
  // Odd Taylor series near zero, where the closed form loses relative accuracy.
  const double* src = in.data();
  double* dst = x.data();
  const Eigen::Index n = x.size();
  for (Eigen::Index k = 0; k < n; ++k) {
    const double v = src[k], v2 = v * v;
    const double p = v * (1.0 + v2 * (-1.0 / 3.0 + v2 * (2.0 / 15.0 + v2 * (-17.0 / 315.0 + v2 * (62.0 / 2835.0)))));
    dst[k] = std::abs(v) < 0.05 ? p : dst[k];
  }
}

Tensor Tensor::scalar(double s) { return Tensor(RowMat::Constant(1, 1, s)); }
Tensor Tensor::zeros(Eigen::Index rows, Eigen::Index cols) { return Tensor(RowMat::Zero(rows, cols)); }

Tensor operator+(const Tensor& a, const Tensor& b) { return Tensor(broadcast_binary(a.value(), b.value(), BinOp::Add)); }
Tensor operator-(const Tensor& a, const Tensor& b) { return Tensor(broadcast_binary(a.value(), b.value(), BinOp::Sub)); }
Tensor operator*(const Tensor& a, const Tensor& b) { return Tensor(broadcast_binary(a.value(), b.value(), BinOp::Mul)); }
Tensor operator/(const Tensor& a, const Tensor& b) { return Tensor(broadcast_binary(a.value(), b.value(), BinOp::Div)); }
Tensor operator-(const Tensor& a) { return Tensor(-a.value()); }
Tensor operator+(const Tensor& a, double c) { return Tensor((a.value().array() + c).matrix()); }
Tensor operator+(double c, const Tensor& a) { return a + c; }
Tensor operator-(const Tensor& a, double c) { return Tensor((a.value().array() - c).matrix()); }
Tensor operator-(double c, const Tensor& a) { return Tensor((c - a.value().array()).matrix()); }
Tensor operator*(const Tensor& a, double c) { return Tensor(a.value() * c); }
Tensor operator*(double c, const Tensor& a) { return a * c; }
Tensor operator/(const Tensor& a, double c) { return Tensor(a.value() / c); }
Tensor operator/(double c, const Tensor& a) { return Tensor((c / a.value().array()).matrix()); }

Tensor tanh(const Tensor& x) {
  RowMat v = x.value();
  tanh_inplace(v);
  return Tensor(std::move(v));
}

Tensor exp(const Tensor& x) { return Tensor(x.value().array().exp().matrix()); }

Tensor sum(const Tensor& x) { return Tensor::scalar(x.value().sum()); }

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.cols() != w.cols() || b.rows() != 1 || b.cols() != w.rows()) shape_error(x.value(), w.value());
  RowMat out = x.value() * w.value().transpose();
  out.rowwise() += b.value().row(0);
  return Tensor(std::move(out));
}

Tensor linear(const Tensor& x, const Tensor& w) {
  if (x.cols() != w.cols()) shape_error(x.value(), w.value());
  return Tensor(x.value() * w.value().transpose());
}

Tensor zeros_like(const Tensor& x) { return Tensor::zeros(x.rows(), x.cols()); }

namespace detail {

namespace {

Eigen::Index group_size(const RowMat& y0, const RowMat& a) {
  if (y0.cols() != a.cols() || y0.rows() == 0 || a.rows() % y0.rows() != 0) {
    throw ArgumentError("incompatible shapes " + shape(y0) + " and " + shape(a));
  }
  return a.rows() / y0.rows();
}

}  // namespace

RowMat tanh_tangent(const RowMat& y0, const RowMat& a1) {
  const Eigen::Index g = group_size(y0, a1), c = a1.cols();
  RowMat out(a1.rows(), c);
  for (Eigen::Index r = 0; r < y0.rows(); ++r) {
    const double* y = y0.data() + r * c;
    for (Eigen::Index k = r * g; k < (r + 1) * g; ++k) {
      const double* a = a1.data() + k * c;
      double* o = out.data() + k * c;
      for (Eigen::Index j = 0; j < c; ++j) o[j] = (1.0 - y[j] * y[j]) * a[j];
    }
  }
  return out;
}

RowMat tanh_curvature(const RowMat& y0, const RowMat& a1, const RowMat* a2) {
  const Eigen::Index g = group_size(y0, a1), c = a1.cols();
  const bool second = a2 != nullptr && a2->size() > 0;
  if (second && (a2->rows() != a1.rows() || a2->cols() != c)) throw ArgumentError("jet components differ in shape");
  RowMat out(a1.rows(), c);
  for (Eigen::Index r = 0; r < y0.rows(); ++r) {
    const double* y = y0.data() + r * c;
    for (Eigen::Index k = r * g; k < (r + 1) * g; ++k) {
      const double* a = a1.data() + k * c;
      double* o = out.data() + k * c;
      if (second) {
        const double* b = a2->data() + k * c;
        for (Eigen::Index j = 0; j < c; ++j) {
          const double s = 1.0 - y[j] * y[j];
          o[j] = s * (b[j] - 2.0 * y[j] * a[j] * a[j]);
        }
      } else {
        for (Eigen::Index j = 0; j < c; ++j) o[j] = -2.0 * y[j] * (1.0 - y[j] * y[j]) * a[j] * a[j];
      }
    }
  }
  return out;
}

void tanh_tangent_backward(const RowMat& y0, const RowMat& a1, const RowMat& adj, RowMat* g_a1, RowMat* g_y0) {
  const Eigen::Index g = group_size(y0, a1), c = a1.cols();
  if (g_a1) g_a1->resize(a1.rows(), c);
  if (g_y0) g_y0->setZero(y0.rows(), c);
  for (Eigen::Index r = 0; r < y0.rows(); ++r) {
    const double* y = y0.data() + r * c;
    for (Eigen::Index k = r * g; k < (r + 1) * g; ++k) {
      const double* a = a1.data() + k * c;
      const double* d = adj.data() + k * c;
      if (g_a1) {
        double* o = g_a1->data() + k * c;
        for (Eigen::Index j = 0; j < c; ++j) o[j] = d[j] * (1.0 - y[j] * y[j]);
      }
      if (g_y0) {
        double* o = g_y0->data() + r * c;
        for (Eigen::Index j = 0; j < c; ++j) o[j] += d[j] * a[j];
      }
    }
    if (g_y0) {
      double* o = g_y0->data() + r * c;
      for (Eigen::Index j = 0; j < c; ++j) o[j] *= -2.0 * y[j];
    }
  }
}

void tanh_curvature_backward(const RowMat& y0, const RowMat& a1, const RowMat* a2, const RowMat& adj, RowMat* g_a1,
                             RowMat* g_a2, RowMat* g_y0) {
  const Eigen::Index g = group_size(y0, a1), c = a1.cols();
  const bool second = a2 != nullptr && a2->size() > 0;
  if (g_a1) g_a1->resize(a1.rows(), c);
  if (g_a2) g_a2->resize(a1.rows(), c);
  RowMat acc_sq, acc_lin;  // per group: sum adj * a1^2 and sum adj * a2
  if (g_y0) {
    acc_sq.setZero(y0.rows(), c);
    acc_lin.setZero(y0.rows(), c);
  }
  for (Eigen::Index r = 0; r < y0.rows(); ++r) {
    const double* y = y0.data() + r * c;
    for (Eigen::Index k = r * g; k < (r + 1) * g; ++k) {
      const double* a = a1.data() + k * c;
      const double* d = adj.data() + k * c;
      if (g_a1) {
        double* o = g_a1->data() + k * c;
        for (Eigen::Index j = 0; j < c; ++j) o[j] = -4.0 * y[j] * (1.0 - y[j] * y[j]) * a[j] * d[j];
      }
      if (g_a2) {
        double* o = g_a2->data() + k * c;
        for (Eigen::Index j = 0; j < c; ++j) o[j] = d[j] * (1.0 - y[j] * y[j]);
      }
      if (g_y0) {
        double* q = acc_sq.data() + r * c;
        for (Eigen::Index j = 0; j < c; ++j) q[j] += d[j] * a[j] * a[j];
        if (second) {
          const double* b = a2->data() + k * c;
          double* l = acc_lin.data() + r * c;
          for (Eigen::Index j = 0; j < c; ++j) l[j] += d[j] * b[j];
        }
      }
    }
  }
  if (g_y0) {
    // d/dy of -2y(1-y^2) is 6y^2 - 2; d/dy of (1-y^2) is -2y.
    *g_y0 = ((6.0 * y0.array().square() - 2.0) * acc_sq.array() - 2.0 * y0.array() * acc_lin.array()).matrix();
  }
}

}  // namespace detail

Tensor tanh_tangent(const Tensor& y0, const Tensor& a1) {
  return Tensor(detail::tanh_tangent(y0.value(), a1.value()));
}

Tensor tanh_curvature(const Tensor& y0, const Tensor& a1, const Tensor* a2) {
  return Tensor(detail::tanh_curvature(y0.value(), a1.value(), a2 ? &a2->value() : nullptr));
}

}  // namespace nbode::ad

namespace nbode::ad {
Tensor squared_error_sum(const Tensor& pred, const RowMat& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ArgumentError("squared_error_sum: prediction and target shapes differ");
  }
  return Tensor::scalar((pred.value() - target).squaredNorm());
}
}  // namespace nbode::ad
