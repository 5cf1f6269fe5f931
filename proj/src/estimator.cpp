#include "regpca/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "regpca/error.hpp"

namespace regpca {

namespace {

Eigen::VectorXd solve_gram(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs,
                           Eigen::LLT<Eigen::MatrixXd>& llt, std::size_t t) {
  llt.compute(gram);
  if (llt.info() == Eigen::Success && llt.rcond() >= kMinRcond) return llt.solve(rhs);

  // Cholesky failed or looks ill-conditioned: measure the condition number
  // properly and, if acceptable, solve with a rank-revealing factorization.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
  const double hi = es.eigenvalues().cwiseAbs().maxCoeff();
  const double lo = es.eigenvalues().minCoeff();
  const double cond = (lo > 0.0) ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(cond <= 1.0 / kMinRcond)) {
    std::ostringstream msg;
    msg << "period " << t << ": cross-sectional Gram matrix is singular or ill-conditioned "
        << "(condition estimate " << cond << ")";
    throw Error(ErrorKind::Numeric, msg.str());
  }
  return gram.colPivHouseholderQr().solve(rhs);
}

}  // namespace

CrossSectionMoments::CrossSectionMoments(const Panel& panel, const SieveSpec& spec,
                                         std::size_t cache_budget_bytes)
    : panel_(&panel),
      spec_(spec),
      dim_(spec.total_dim()),
      n_periods_(panel.n_periods),
      block_(dim_ * (dim_ + 1) / 2 + dim_),
      cached_(false) {
  spec_.validate();
  if (spec_.n_chars != panel.n_chars) {
    throw Error(ErrorKind::Config, "sieve expects " + std::to_string(spec_.n_chars) +
                                       " characteristics, panel has " + std::to_string(panel.n_chars));
  }
  const double bytes = 8.0 * static_cast<double>(panel.n_assets) *
                       static_cast<double>(n_periods_) * static_cast<double>(block_);
  if (bytes > static_cast<double>(cache_budget_bytes)) return;

  cached_ = true;
  const auto n = static_cast<Eigen::Index>(panel.n_assets);
  const auto q = static_cast<Eigen::Index>(block_);
  const auto p = static_cast<Eigen::Index>(dim_);
  moments_ = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(n_periods_) * q);
  Eigen::RowVectorXd phi(p);
  for (std::size_t t = 0; t < n_periods_; ++t) {
    const Eigen::Index base = static_cast<Eigen::Index>(t) * q;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!panel.mask[t](i)) continue;
      eval_basis_into(spec_, panel.characteristics[t].row(i), phi);
      Eigen::Index c = base;
      for (Eigen::Index a = 0; a < p; ++a) {
        for (Eigen::Index b = a; b < p; ++b) moments_(i, c++) = phi(a) * phi(b);
      }
      const double y = panel.returns[t](i);
      for (Eigen::Index a = 0; a < p; ++a) moments_(i, c++) = phi(a) * y;
    }
  }
}

void CrossSectionMoments::sums_for_period(std::size_t t, const Eigen::VectorXd& weights,
                                          Eigen::MatrixXd& gram, Eigen::VectorXd& rhs) const {
  const Eigen::MatrixXd phi = design_matrix(spec_, *panel_, t);
  const Eigen::MatrixXd wphi = phi.array().colwise() * weights.array();
  gram.noalias() = wphi.transpose() * phi;
  rhs.noalias() = wphi.transpose() * panel_->returns[t];
}

Eigen::MatrixXd CrossSectionMoments::solve(const Eigen::VectorXd& weights) const {
  if (static_cast<std::size_t>(weights.size()) != panel_->n_assets) {
    throw Error(ErrorKind::Config, "weights must have one entry per asset");
  }
  const auto p = static_cast<Eigen::Index>(dim_);
  const auto q = static_cast<Eigen::Index>(block_);
  Eigen::MatrixXd out(p, static_cast<Eigen::Index>(n_periods_));
  Eigen::MatrixXd gram(p, p);
  Eigen::VectorXd rhs(p);
  Eigen::LLT<Eigen::MatrixXd> llt(p);

  Eigen::VectorXd sums;
  if (cached_) sums.noalias() = moments_.transpose() * weights;

  for (std::size_t t = 0; t < n_periods_; ++t) {
    if (cached_) {
      Eigen::Index c = static_cast<Eigen::Index>(t) * q;
      for (Eigen::Index a = 0; a < p; ++a) {
        for (Eigen::Index b = a; b < p; ++b) {
          gram(a, b) = sums(c);
          gram(b, a) = sums(c);
          ++c;
        }
      }
      for (Eigen::Index a = 0; a < p; ++a) rhs(a) = sums(c++);
    } else {
      sums_for_period(t, weights, gram, rhs);
    }
    out.col(static_cast<Eigen::Index>(t)) = solve_gram(gram, rhs, llt, t);
  }
  return out;
}

ManagedPanel ManagedPanel::window(std::size_t t_end) const {
  if (t_end > n_periods()) throw Error(ErrorKind::Config, "window end beyond sample");
  ManagedPanel w;
  w.ytilde = ytilde.leftCols(static_cast<Eigen::Index>(t_end));
  w.n_obs.assign(n_obs.begin(), n_obs.begin() + static_cast<std::ptrdiff_t>(t_end));
  w.spec = spec;
  w.nbar = 0.0;
  for (auto n : w.n_obs) w.nbar = std::max(w.nbar, static_cast<double>(n));
  return w;
}

ManagedPanel first_stage(const Panel& panel, const SieveSpec& spec) {
  spec.validate();
  const std::size_t dim = spec.total_dim();
  ManagedPanel out;
  out.spec = spec;
  for (std::size_t t = 0; t < panel.n_periods; ++t) {
    const std::size_t nt = panel.n_observed(t);
    if (nt < dim) {
      throw Error(ErrorKind::Numeric, "period " + std::to_string(t) + ": " + std::to_string(nt) +
                                          " observed assets, fewer than the basis dimension " +
                                          std::to_string(dim));
    }
    out.n_obs.push_back(nt);
    out.nbar = std::max(out.nbar, static_cast<double>(nt));
  }
  // One pass over the data is all that is needed here, so skip the cache.
  CrossSectionMoments moments(panel, spec, 0);
  out.ytilde = moments.solve(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(panel.n_assets)));
  return out;
}

Eigen::MatrixXd managed_covariance(const Eigen::MatrixXd& ytilde) {
  const Eigen::VectorXd mean = ytilde.rowwise().mean();
  const Eigen::MatrixXd centered = ytilde.colwise() - mean;
  Eigen::MatrixXd s = centered * centered.transpose() / static_cast<double>(ytilde.cols());
  return 0.5 * (s + s.transpose());
}

namespace {

struct SortedEigen {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // matching columns
};

SortedEigen sorted_eigen(const Eigen::MatrixXd& s, bool with_vectors) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      s, with_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw Error(ErrorKind::Numeric, "eigendecomposition failed");
  SortedEigen out;
  out.values = es.eigenvalues().reverse();
  if (with_vectors) out.vectors = es.eigenvectors().rowwise().reverse();
  return out;
}

}  // namespace

Eigen::VectorXd managed_eigenvalues(const ManagedPanel& managed) {
  return sorted_eigen(managed_covariance(managed.ytilde), false).values;
}

FactorFit fit(const ManagedPanel& managed, std::size_t k) {
  const auto& y = managed.ytilde;
  const auto dim = static_cast<std::size_t>(y.rows());
  const std::size_t T = managed.n_periods();
  if (k == 0) throw Error(ErrorKind::Config, "number of factors must be positive");
  if (k > dim) {
    throw Error(ErrorKind::Config, "number of factors " + std::to_string(k) +
                                       " exceeds the basis dimension " + std::to_string(dim));
  }
  if (T < k + 1) {
    throw Error(ErrorKind::Numeric, "need at least k + 1 = " + std::to_string(k + 1) +
                                        " periods, have " + std::to_string(T));
  }
  if (!y.allFinite()) throw Error(ErrorKind::Numeric, "managed panel has non-finite entries");

  const auto kk = static_cast<Eigen::Index>(k);
  SortedEigen eig = sorted_eigen(managed_covariance(y), true);

  FactorFit out;
  out.k = k;
  out.spec = managed.spec;
  out.eigenvalues = eig.values;
  out.b_hat = eig.vectors.leftCols(kk);
  for (Eigen::Index j = 0; j < kk; ++j) {
    Eigen::Index arg = 0;
    out.b_hat.col(j).cwiseAbs().maxCoeff(&arg);
    if (out.b_hat(arg, j) < 0.0) out.b_hat.col(j) *= -1.0;
  }
  const Eigen::VectorXd mean = y.rowwise().mean();
  out.a_hat = mean - out.b_hat * (out.b_hat.transpose() * mean);
  out.f_hat = y.transpose() * out.b_hat;
  if (k < dim) {
    const double gap = eig.values(kk - 1) - eig.values(kk);
    out.near_tie = gap < 1e-12 * std::abs(eig.values(0));
  }
  return out;
}

double eval_alpha(const FactorFit& fit, const Eigen::Ref<const Eigen::VectorXd>& z) {
  return eval_basis(fit.spec, z).dot(fit.a_hat);
}

Eigen::VectorXd eval_beta(const FactorFit& fit, const Eigen::Ref<const Eigen::VectorXd>& z) {
  return fit.b_hat.transpose() * eval_basis(fit.spec, z);
}

namespace {

Eigen::MatrixXd demean_columns(const Eigen::MatrixXd& f) {
  return f.rowwise() - f.colwise().mean();
}

Eigen::LDLT<Eigen::MatrixXd> factor_gram(const Eigen::MatrixXd& centered) {
  const Eigen::MatrixXd g = centered.transpose() * centered;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(g);
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() >= kMinRcond) ||
      !(ldlt.vectorD().minCoeff() > 0.0)) {
    throw Error(ErrorKind::Numeric, "F_hat' M_T F_hat is singular");
  }
  return ldlt;
}

}  // namespace

RotationMatrix rotation(const Eigen::MatrixXd& f_true, const FactorFit& fit) {
  if (f_true.rows() != fit.f_hat.rows()) {
    throw Error(ErrorKind::Config, "rotation: true and estimated factors have different lengths");
  }
  const Eigen::MatrixXd fh = demean_columns(fit.f_hat);
  const Eigen::MatrixXd ft = demean_columns(f_true);
  const auto ldlt = factor_gram(fh);
  // H = (F' M F_hat) G^{-1} = (G^{-1} F_hat' M F)'
  RotationMatrix r;
  r.h = ldlt.solve(fh.transpose() * ft).transpose();
  return r;
}

Eigen::MatrixXd loading_projector(const Eigen::MatrixXd& f_hat) {
  const Eigen::MatrixXd fh = demean_columns(f_hat);
  const auto ldlt = factor_gram(fh);
  return ldlt.solve(fh.transpose()).transpose();
}

FactorFit fix_factor_signs(FactorFit fit) {
  for (Eigen::Index j = 0; j < fit.f_hat.cols(); ++j) {
    if (fit.f_hat.col(j).mean() < 0.0) {
      fit.f_hat.col(j) *= -1.0;
      fit.b_hat.col(j) *= -1.0;
    }
  }
  return fit;
}

std::size_t select_k_ratio(const Eigen::VectorXd& eigenvalues) {
  const auto dim = static_cast<std::size_t>(eigenvalues.size());
  if (dim < 2) throw Error(ErrorKind::Config, "eigenvalue-ratio selection needs dimension >= 2");
  const double floor = 1e-14 * eigenvalues(0);
  std::size_t best = 1;
  double best_ratio = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k <= dim / 2; ++k) {
    double den = eigenvalues(static_cast<Eigen::Index>(k));
    if (den < floor) den = floor;
    const double ratio = eigenvalues(static_cast<Eigen::Index>(k - 1)) / den;
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = k;
    }
  }
  return best;
}

std::size_t select_k_ratio(const ManagedPanel& managed) {
  if (managed.n_periods() < 2) throw Error(ErrorKind::Config, "eigenvalue-ratio selection needs T >= 2");
  return select_k_ratio(managed_eigenvalues(managed));
}

std::size_t select_k_threshold(const Eigen::VectorXd& eigenvalues, double lambda_nt) {
  if (!(lambda_nt > 0.0)) throw Error(ErrorKind::Config, "threshold must be positive");
  return static_cast<std::size_t>((eigenvalues.array() >= lambda_nt).count());
}

std::size_t select_k_threshold(const ManagedPanel& managed, double lambda_nt) {
  return select_k_threshold(managed_eigenvalues(managed), lambda_nt);
}

}  // namespace regpca
