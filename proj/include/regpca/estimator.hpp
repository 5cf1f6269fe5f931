#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "regpca/panel.hpp"
#include "regpca/sieve.hpp"

namespace regpca {

/// Gram matrices with reciprocal condition below this are rejected.
inline constexpr double kMinRcond = 1e-12;

/// Cached cross-products for repeated weighted cross-sectional regressions
/// of returns on a sieve design, one regression per period.
///
/// For every period the per-asset terms phi_i phi_i' (upper triangle) and
/// phi_i y_i are stored side by side, so the weighted sums for all periods
/// come out of a single matrix-vector product with the asset weights. Panels
/// too large for the cache fall back to forming each Gram matrix on demand.
class CrossSectionMoments {
 public:
  CrossSectionMoments(const Panel& panel, const SieveSpec& spec,
                      std::size_t cache_budget_bytes = std::size_t{1} << 29);

  std::size_t dim() const { return dim_; }
  std::size_t n_periods() const { return n_periods_; }
  const SieveSpec& spec() const { return spec_; }

  /// dim x T matrix whose column t is
  /// (sum_i w_i phi_i phi_i')^{-1} sum_i w_i phi_i y_i over observed i.
  /// Throws Error(Numeric) naming the period when a Gram matrix is singular
  /// or its condition number exceeds 1 / kMinRcond.
  Eigen::MatrixXd solve(const Eigen::VectorXd& weights) const;

 private:
  void sums_for_period(std::size_t t, const Eigen::VectorXd& weights,
                       Eigen::MatrixXd& gram, Eigen::VectorXd& rhs) const;

  const Panel* panel_;
  SieveSpec spec_;
  std::size_t dim_;
  std::size_t n_periods_;
  std::size_t block_;  // dim*(dim+1)/2 + dim
  bool cached_;
  Eigen::MatrixXd moments_;  // N x (T * block_) when cached_
};

/// The T columns of first-stage coefficients (managed portfolio returns).
struct ManagedPanel {
  Eigen::MatrixXd ytilde;           // total_dim x T
  std::vector<std::size_t> n_obs;   // N_t
  SieveSpec spec;
  double nbar = 0.0;                // max_t N_t

  std::size_t n_periods() const { return static_cast<std::size_t>(ytilde.cols()); }
  /// The first `t_end` periods, as if the panel had been truncated.
  ManagedPanel window(std::size_t t_end) const;
};

/// Per-period OLS of Y_t on Phi(Z_t) over observed assets.
ManagedPanel first_stage(const Panel& panel, const SieveSpec& spec);

struct FactorFit {
  std::size_t k = 0;
  Eigen::VectorXd a_hat;        // total_dim
  Eigen::MatrixXd b_hat;        // total_dim x K, orthonormal columns
  Eigen::MatrixXd f_hat;        // T x K
  Eigen::VectorXd eigenvalues;  // all eigenvalues of Y M_T Y' / T, descending
  SieveSpec spec;
  bool near_tie = false;        // lambda_K - lambda_{K+1} < 1e-12 lambda_1

  std::size_t n_periods() const { return static_cast<std::size_t>(f_hat.rows()); }
};

/// Demeaned second-moment matrix Y M_T Y' / T of the managed panel.
Eigen::MatrixXd managed_covariance(const Eigen::MatrixXd& ytilde);

/// Eigenvalues of managed_covariance, in descending order.
Eigen::VectorXd managed_eigenvalues(const ManagedPanel& managed);

/// Regressed-PCA second stage: B_hat holds the top-k eigenvectors of
/// Y M_T Y' / T (each with its largest-magnitude entry made positive),
/// a_hat = (I - B_hat B_hat') mean_t(Y_t) and F_hat = Y' B_hat.
FactorFit fit(const ManagedPanel& managed, std::size_t k);

double eval_alpha(const FactorFit& fit, const Eigen::Ref<const Eigen::VectorXd>& z);
Eigen::VectorXd eval_beta(const FactorFit& fit, const Eigen::Ref<const Eigen::VectorXd>& z);

struct RotationMatrix {
  Eigen::MatrixXd h;
};

/// H = (F' M_T F_hat)(F_hat' M_T F_hat)^{-1}.
RotationMatrix rotation(const Eigen::MatrixXd& f_true, const FactorFit& fit);

/// Flips each factor (and its loading column) whose sample mean is negative.
FactorFit fix_factor_signs(FactorFit fit);

/// argmax_{1 <= k <= floor(dim/2)} lambda_k / lambda_{k+1}, smallest k on
/// ties. Denominators below 1e-14 lambda_1 are clamped to that value.
std::size_t select_k_ratio(const Eigen::VectorXd& eigenvalues);
std::size_t select_k_ratio(const ManagedPanel& managed);

/// #{k : lambda_k >= lambda_nt}.
std::size_t select_k_threshold(const Eigen::VectorXd& eigenvalues, double lambda_nt);
std::size_t select_k_threshold(const ManagedPanel& managed, double lambda_nt);

/// M_T F (F' M_T F)^{-1}: maps a dim x T coefficient panel onto loadings
/// that share F's rotation.
Eigen::MatrixXd loading_projector(const Eigen::MatrixXd& f_hat);

}  // namespace regpca
