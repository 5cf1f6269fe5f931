#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "regpca/panel.hpp"

namespace regpca {

enum class SieveKind {
  Linear,         // phi_m(z) = z
  BSplineLinear,  // piecewise-linear hat functions on equidistant knots
  Quadratic,      // phi_m(z) = (z, z^2)
};

const char* to_string(SieveKind kind);
SieveKind sieve_kind_from_string(const std::string& name);

struct Interval {
  double lo = -0.5;
  double hi = 0.5;
};

/// Additive sieve basis: an optional global intercept followed by one block
/// of J functions per characteristic.
struct SieveSpec {
  SieveKind kind = SieveKind::Linear;
  std::size_t n_chars = 1;
  bool include_intercept = true;
  std::size_t n_internal_knots = 1;  // BSplineLinear only
  std::vector<Interval> domain;      // per characteristic; empty = [-0.5, 0.5]

  static SieveSpec linear(std::size_t n_chars, bool intercept = true);
  static SieveSpec bspline(std::size_t n_chars, std::size_t n_internal_knots,
                           bool intercept = true);
  static SieveSpec quadratic(std::size_t n_chars, bool intercept = false);

  /// J, basis functions per characteristic.
  std::size_t per_char_dim() const;
  /// J * M + intercept.
  std::size_t total_dim() const;
  Interval domain_of(std::size_t m) const;
  bool is_linear() const { return kind == SieveKind::Linear; }

  /// Throws Error(Config) on inconsistent fields.
  void validate() const;

  friend bool operator==(const SieveSpec&, const SieveSpec&);
};

inline bool operator==(const Interval& a, const Interval& b) {
  return a.lo == b.lo && a.hi == b.hi;
}

/// phi(z). For BSplineLinear, z outside the domain is clamped to it; the
/// global polynomial kinds have no domain restriction.
Eigen::VectorXd eval_basis(const SieveSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& z);

/// Writes phi(z) into `out` (length total_dim) without allocating.
using RowRef = Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;
using ConstRowRef = Eigen::Ref<const Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

void eval_basis_into(const SieveSpec& spec, const ConstRowRef& z, RowRef out);

/// One-dimensional linear B-spline values psi_1..psi_J at z, with knots
/// z_1 < ... < z_{J+1} equidistant over `dom` and J = n_internal_knots + 1.
/// psi_j (j < J) rises on (z_j, z_{j+1}] and falls on (z_{j+1}, z_{j+2}];
/// psi_J only rises. Intervals are half-open on the left.
void bspline_values(double z, const Interval& dom, std::size_t n_internal_knots,
                    double* out);

/// Phi(Z_t): row i is phi(z_it) when asset i is observed at t, zero
/// otherwise (intercept included).
Eigen::MatrixXd design_matrix(const SieveSpec& spec, const Panel& panel, std::size_t t);

/// The linear design on raw characteristics that nests the null model of
/// the linearity test: intercept iff `spec` has one.
SieveSpec linear_counterpart(const SieveSpec& spec);

}  // namespace regpca
