#include "nbode/systems.hpp"

#include <cmath>

#include "nbode/errors.hpp"

namespace nbode {

namespace {

void check_dim(const SystemSpec& spec, Eigen::Index n) {
  if (n != spec.dim) {
    throw ArgumentError("state has dimension " + std::to_string(n) + ", system expects " +
                        std::to_string(spec.dim));
  }
}

struct Lorenz63Coef {
  double sigma, rho, beta;
};
struct ChenCoef {
  double a, b, c, d, r;
};

Lorenz63Coef lorenz63_coef(const SystemSpec& s) {
  return {s.param("sigma"), s.param("rho"), s.param("beta")};
}
ChenCoef chen_coef(const SystemSpec& s) {
  return {s.param("a"), s.param("b"), s.param("c"), s.param("d"), s.param("r")};
}

// Raw-pointer kernels shared by the single-state and batched entry points.
void lorenz63_rhs(const Lorenz63Coef& k, const double* u, double* du) {
  du[0] = k.sigma * (u[1] - u[0]);
  du[1] = u[0] * (k.rho - u[2]) - u[1];
  du[2] = u[0] * u[1] - k.beta * u[2];
}

void chen_rhs(const ChenCoef& k, const double* u, double* du) {
  du[0] = k.a * (u[1] - u[0]) + u[3];
  du[1] = u[0] * (k.d - u[2]) + k.c * u[1];
  du[2] = u[0] * u[1] - k.b * u[2];
  du[3] = u[1] * u[2] + k.r * u[3];
}

void lorenz96_rhs(double forcing, int d, const double* u, double* du) {
  for (int i = 0; i < d; ++i) {
    const double up1 = u[(i + 1) % d];
    const double um1 = u[(i - 1 + d) % d];
    const double um2 = u[(i - 2 + 2 * d) % d];
    du[i] = (up1 - um2) * um1 - u[i] + forcing;
  }
}

}  // namespace

double SystemSpec::param(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw ArgumentError("system has no parameter '" + name + "'");
  return it->second;
}

SystemSpec make_system(SystemKind kind, int lorenz96_dim) {
  SystemSpec s;
  s.kind = kind;
  switch (kind) {
    case SystemKind::Lorenz63:
      s.dim = 3;
      s.params = {{"sigma", 10.0}, {"rho", 28.0}, {"beta", 8.0 / 3.0}};
      s.init_mean = Vec::Zero(3);
      s.init_std = Vec::Ones(3);
      s.burn_in = 50.0;
      break;
    case SystemKind::ChenHyper:
      s.dim = 4;
      s.params = {{"a", 35.0}, {"b", 3.0}, {"c", 12.0}, {"d", 7.0}, {"r", 0.58}};
      s.init_mean = Vec::Zero(4);
      s.init_mean(2) = 20.0;
      s.init_std = Vec::Ones(4);
      s.burn_in = 100.0;
      break;
    case SystemKind::Lorenz96:
      if (lorenz96_dim < 4) throw ArgumentError("lorenz96 needs at least 4 nodes");
      s.dim = lorenz96_dim;
      s.params = {{"F", 10.0}};
      s.init_mean = Vec::Zero(lorenz96_dim);
      s.init_std = Vec::Ones(lorenz96_dim);
      s.burn_in = 1000.0;
      break;
  }
  return s;
}

SystemSpec system_from_name(std::string_view name) {
  if (name == "lorenz63") return make_system(SystemKind::Lorenz63);
  if (name == "chen_hyper") return make_system(SystemKind::ChenHyper);
  if (name == "lorenz96") return make_system(SystemKind::Lorenz96);
  throw ArgumentError("unknown system '" + std::string(name) +
                      "' (expected lorenz63, chen_hyper or lorenz96)");
}

std::string_view system_name(SystemKind kind) {
  switch (kind) {
    case SystemKind::Lorenz63:
      return "lorenz63";
    case SystemKind::ChenHyper:
      return "chen_hyper";
    case SystemKind::Lorenz96:
      return "lorenz96";
  }
  return "unknown";
}

Vec eval_vector_field(const SystemSpec& spec, const Vec& u) {
  check_dim(spec, u.size());
  Vec du(spec.dim);
  switch (spec.kind) {
    case SystemKind::Lorenz63:
      lorenz63_rhs(lorenz63_coef(spec), u.data(), du.data());
      break;
    case SystemKind::ChenHyper:
      chen_rhs(chen_coef(spec), u.data(), du.data());
      break;
    case SystemKind::Lorenz96:
      lorenz96_rhs(spec.param("F"), spec.dim, u.data(), du.data());
      break;
  }
  return du;
}

void eval_vector_field_batch(const SystemSpec& spec, const RowMat& states, RowMat& out) {
  check_dim(spec, states.cols());
  out.resize(states.rows(), states.cols());
  const Eigen::Index n = states.rows();
  switch (spec.kind) {
    case SystemKind::Lorenz63: {
      const auto k = lorenz63_coef(spec);
      for (Eigen::Index r = 0; r < n; ++r) lorenz63_rhs(k, states.row(r).data(), out.row(r).data());
      break;
    }
    case SystemKind::ChenHyper: {
      const auto k = chen_coef(spec);
      for (Eigen::Index r = 0; r < n; ++r) chen_rhs(k, states.row(r).data(), out.row(r).data());
      break;
    }
    case SystemKind::Lorenz96: {
      const double f = spec.param("F");
      for (Eigen::Index r = 0; r < n; ++r)
        lorenz96_rhs(f, spec.dim, states.row(r).data(), out.row(r).data());
      break;
    }
  }
}

Mat eval_jacobian(const SystemSpec& spec, const Vec& u) {
  check_dim(spec, u.size());
  const int d = spec.dim;
  Mat j = Mat::Zero(d, d);
  switch (spec.kind) {
    case SystemKind::Lorenz63: {
      const auto k = lorenz63_coef(spec);
      j << -k.sigma, k.sigma, 0.0,
           k.rho - u(2), -1.0, -u(0),
           u(1), u(0), -k.beta;
      break;
    }
    case SystemKind::ChenHyper: {
      const auto k = chen_coef(spec);
      j << -k.a, k.a, 0.0, 1.0,
           k.d - u(2), k.c, -u(0), 0.0,
           u(1), u(0), -k.b, 0.0,
           0.0, u(2), u(1), k.r;
      break;
    }
    case SystemKind::Lorenz96: {
      // du_i = (u_{i+1} - u_{i-2}) u_{i-1} - u_i + F
      for (int i = 0; i < d; ++i) {
        const int ip1 = (i + 1) % d;
        const int im1 = (i - 1 + d) % d;
        const int im2 = (i - 2 + 2 * d) % d;
        j(i, ip1) += u(im1);
        j(i, im2) -= u(im1);
        j(i, im1) += u(ip1) - u(im2);
        j(i, i) -= 1.0;
      }
      break;
    }
  }
  return j;
}

AffineTransform AffineTransform::identity(int dim) {
  return {Vec::Zero(dim), Vec::Ones(dim)};
}

bool AffineTransform::is_identity() const {
  return (shift.array() == 0.0).all() && (scale.array() == 1.0).all();
}

void AffineTransform::validate() const {
  if (shift.size() != scale.size()) throw ArgumentError("transform shift/scale size mismatch");
  for (Eigen::Index i = 0; i < scale.size(); ++i) {
    if (!(scale(i) != 0.0) || !std::isfinite(scale(i))) {
      throw ArgumentError("transform scale component " + std::to_string(i) + " is zero or non-finite");
    }
  }
}

Vec AffineTransform::apply(const Vec& u) const {
  return ((u - shift).array() / scale.array()).matrix();
}

Vec AffineTransform::invert(const Vec& v) const {
  return (scale.array() * v.array() + shift.array()).matrix();
}

RowMat AffineTransform::apply_rows(const RowMat& u) const {
  RowMat out(u.rows(), u.cols());
  for (Eigen::Index r = 0; r < u.rows(); ++r)
    out.row(r) = (u.row(r) - shift.transpose()).array() / scale.transpose().array();
  return out;
}

RowMat AffineTransform::invert_rows(const RowMat& v) const {
  RowMat out(v.rows(), v.cols());
  for (Eigen::Index r = 0; r < v.rows(); ++r)
    out.row(r) = scale.transpose().array() * v.row(r).array() + shift.transpose().array();
  return out;
}

Vec transform_field(const SystemSpec& spec, const AffineTransform& t, const Vec& v) {
  t.validate();
  check_dim(spec, v.size());
  if (t.is_identity()) return eval_vector_field(spec, v);
  const Vec u = t.invert(v);
  return (eval_vector_field(spec, u).array() / t.scale.array()).matrix();
}

Mat transform_jacobian(const SystemSpec& spec, const AffineTransform& t, const Vec& v) {
  t.validate();
  check_dim(spec, v.size());
  if (t.is_identity()) return eval_jacobian(spec, v);
  const Mat j = eval_jacobian(spec, t.invert(v));
  return t.scale.cwiseInverse().asDiagonal() * j * t.scale.asDiagonal();
}

void transform_field_batch(const SystemSpec& spec, const AffineTransform& t, const RowMat& v,
                           RowMat& out) {
  if (t.is_identity()) {
    eval_vector_field_batch(spec, v, out);
    return;
  }
  t.validate();
  eval_vector_field_batch(spec, t.invert_rows(v), out);
  for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r).array() /= t.scale.transpose().array();
}

}  // namespace nbode
