#include "regpca/sieve.hpp"

#include <algorithm>
#include <cmath>

#include "regpca/error.hpp"

namespace regpca {

const char* to_string(SieveKind kind) {
  switch (kind) {
    case SieveKind::Linear: return "linear";
    case SieveKind::BSplineLinear: return "bspline_linear";
    case SieveKind::Quadratic: return "quadratic";
  }
  return "unknown";
}

SieveKind sieve_kind_from_string(const std::string& name) {
  if (name == "linear" || name == "Linear") return SieveKind::Linear;
  if (name == "bspline_linear" || name == "BSplineLinear" || name == "bspline") {
    return SieveKind::BSplineLinear;
  }
  if (name == "quadratic" || name == "Quadratic") return SieveKind::Quadratic;
  throw Error(ErrorKind::Config, "unknown sieve kind '" + name + "'");
}

SieveSpec SieveSpec::linear(std::size_t n_chars, bool intercept) {
  SieveSpec s;
  s.kind = SieveKind::Linear;
  s.n_chars = n_chars;
  s.include_intercept = intercept;
  s.n_internal_knots = 0;
  return s;
}

SieveSpec SieveSpec::bspline(std::size_t n_chars, std::size_t n_internal_knots, bool intercept) {
  SieveSpec s;
  s.kind = SieveKind::BSplineLinear;
  s.n_chars = n_chars;
  s.include_intercept = intercept;
  s.n_internal_knots = n_internal_knots;
  return s;
}

SieveSpec SieveSpec::quadratic(std::size_t n_chars, bool intercept) {
  SieveSpec s;
  s.kind = SieveKind::Quadratic;
  s.n_chars = n_chars;
  s.include_intercept = intercept;
  s.n_internal_knots = 0;
  return s;
}

std::size_t SieveSpec::per_char_dim() const {
  switch (kind) {
    case SieveKind::Linear: return 1;
    case SieveKind::BSplineLinear: return n_internal_knots + 1;
    case SieveKind::Quadratic: return 2;
  }
  return 0;
}

std::size_t SieveSpec::total_dim() const {
  return per_char_dim() * n_chars + (include_intercept ? 1 : 0);
}

Interval SieveSpec::domain_of(std::size_t m) const {
  if (domain.empty()) return {};
  if (domain.size() == 1) return domain.front();
  return domain.at(m);
}

void SieveSpec::validate() const {
  if (n_chars == 0) throw Error(ErrorKind::Config, "sieve: n_chars must be positive");
  if (!domain.empty() && domain.size() != 1 && domain.size() != n_chars) {
    throw Error(ErrorKind::Config, "sieve: domain must have one interval or one per characteristic");
  }
  for (const auto& d : domain) {
    if (!(d.lo < d.hi) || !std::isfinite(d.lo) || !std::isfinite(d.hi)) {
      throw Error(ErrorKind::Config, "sieve: domain intervals need lo < hi");
    }
  }
  if (total_dim() == 0) throw Error(ErrorKind::Config, "sieve: empty basis");
}

bool operator==(const SieveSpec& a, const SieveSpec& b) {
  return a.kind == b.kind && a.n_chars == b.n_chars && a.include_intercept == b.include_intercept &&
         a.per_char_dim() == b.per_char_dim() && a.domain == b.domain;
}

void bspline_values(double z, const Interval& dom, std::size_t n_internal_knots, double* out) {
  const std::size_t J = n_internal_knots + 1;
  const double h = (dom.hi - dom.lo) / static_cast<double>(J);
  z = std::clamp(z, dom.lo, dom.hi);
  // knot(j) is z_j in 1-based notation, j = 1..J+1; the last knot is pinned
  // to dom.hi so that z = hi falls in the last piece exactly.
  auto knot = [&](std::size_t j) {
    return j == J + 1 ? dom.hi : dom.lo + h * static_cast<double>(j - 1);
  };
  for (std::size_t j = 1; j <= J; ++j) {
    const double zj = knot(j);
    const double zj1 = knot(j + 1);
    double v = 0.0;
    if (z > zj && z <= zj1) {
      v = (z - zj) / (zj1 - zj);
    } else if (j < J) {
      const double zj2 = knot(j + 2);
      if (z > zj1 && z <= zj2) v = (zj2 - z) / (zj2 - zj1);
    }
    out[j - 1] = v;
  }
}

void eval_basis_into(const SieveSpec& spec, const ConstRowRef& z, RowRef out) {
  const std::size_t J = spec.per_char_dim();
  double spline[64];
  if (spec.kind == SieveKind::BSplineLinear && J > 64) {
    throw Error(ErrorKind::Config, "sieve: at most 63 internal knots are supported");
  }
  Eigen::Index col = 0;
  if (spec.include_intercept) out(col++) = 1.0;
  for (std::size_t m = 0; m < spec.n_chars; ++m) {
    const double x = z(static_cast<Eigen::Index>(m));
    switch (spec.kind) {
      case SieveKind::Linear:
        out(col) = x;
        break;
      case SieveKind::Quadratic:
        out(col) = x;
        out(col + 1) = x * x;
        break;
      case SieveKind::BSplineLinear:
        bspline_values(x, spec.domain_of(m), spec.n_internal_knots, spline);
        for (std::size_t j = 0; j < J; ++j) out(col + static_cast<Eigen::Index>(j)) = spline[j];
        break;
    }
    col += static_cast<Eigen::Index>(J);
  }
}

Eigen::VectorXd eval_basis(const SieveSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& z) {
  if (static_cast<std::size_t>(z.size()) != spec.n_chars) {
    throw Error(ErrorKind::Config, "eval_basis: expected " + std::to_string(spec.n_chars) +
                                       " characteristics, got " + std::to_string(z.size()));
  }
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(spec.total_dim()));
  eval_basis_into(spec, z.transpose(), row);
  return row.transpose();
}

Eigen::MatrixXd design_matrix(const SieveSpec& spec, const Panel& panel, std::size_t t) {
  if (t >= panel.n_periods) throw Error(ErrorKind::Config, "design_matrix: period out of range");
  if (spec.n_chars != panel.n_chars) {
    throw Error(ErrorKind::Config, "design_matrix: sieve expects " + std::to_string(spec.n_chars) +
                                       " characteristics, panel has " +
                                       std::to_string(panel.n_chars));
  }
  const auto n = static_cast<Eigen::Index>(panel.n_assets);
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(spec.total_dim()));
  const auto& z = panel.characteristics[t];
  for (Eigen::Index i = 0; i < n; ++i) {
    if (panel.mask[t](i)) eval_basis_into(spec, z.row(i), phi.row(i));
  }
  return phi;
}

SieveSpec linear_counterpart(const SieveSpec& spec) {
  return SieveSpec::linear(spec.n_chars, spec.include_intercept);
}

}  // namespace regpca
