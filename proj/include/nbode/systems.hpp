#pragma once

#include <map>
#include <string>
#include <string_view>

#include "nbode/types.hpp"

namespace nbode {

enum class SystemKind { Lorenz63, ChenHyper, Lorenz96 };

/// A ground-truth chaotic system together with its data-generation settings.
struct SystemSpec {
  SystemKind kind = SystemKind::Lorenz63;
  int dim = 3;
  std::map<std::string, double> params;
  Vec init_mean;
  Vec init_std;
  double burn_in = 50.0;

  double param(const std::string& name) const;
};

SystemSpec make_system(SystemKind kind, int lorenz96_dim = 6);

// Accepts "lorenz63", "chen_hyper", "lorenz96"; throws ArgumentError otherwise.
SystemSpec system_from_name(std::string_view name);
std::string_view system_name(SystemKind kind);

Vec eval_vector_field(const SystemSpec& spec, const Vec& u);
Mat eval_jacobian(const SystemSpec& spec, const Vec& u);

// Row-wise field evaluation for ensembles of states.
void eval_vector_field_batch(const SystemSpec& spec, const RowMat& states, RowMat& out);

/// Componentwise affine map v = (u - shift) / scale.
struct AffineTransform {
  Vec shift;
  Vec scale;

  static AffineTransform identity(int dim);
  int dim() const { return static_cast<int>(shift.size()); }
  bool is_identity() const;
  void validate() const;

  Vec apply(const Vec& u) const;
  Vec invert(const Vec& v) const;
  RowMat apply_rows(const RowMat& u) const;
  RowMat invert_rows(const RowMat& v) const;
};

// Vector field and Jacobian of the dynamics expressed in transformed coordinates.
Vec transform_field(const SystemSpec& spec, const AffineTransform& t, const Vec& v);
Mat transform_jacobian(const SystemSpec& spec, const AffineTransform& t, const Vec& v);
void transform_field_batch(const SystemSpec& spec, const AffineTransform& t, const RowMat& v,
                           RowMat& out);

}  // namespace nbode
