#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "regpca/estimator.hpp"
#include "regpca/panel.hpp"
#include "regpca/rng.hpp"
#include "regpca/sieve.hpp"

namespace regpca {

/// Variance of the Exp(1) bootstrap weights.
inline constexpr double kOmega0 = 1.0;

/// One weighted-bootstrap replicate of the estimators.
struct BootstrapDraw {
  Eigen::VectorXd a_star;          // total_dim
  Eigen::MatrixXd b_star;          // total_dim x K
  Eigen::VectorXd gamma_star;      // linearity test only
  Eigen::MatrixXd gamma_mat_star;  // linearity test only
};

struct TestReport {
  std::string test;
  double statistic = 0.0;
  std::vector<double> boot_stats;
  double critical_value = 0.0;
  double p_value = 1.0;
  double level = 0.05;
  bool reject = false;
  std::size_t n_boot = 0;
  std::uint64_t seed = 0;
};

struct BootstrapOptions {
  std::size_t n_boot = 499;
  double level = 0.05;
  std::uint64_t seed = 0;
  unsigned threads = 1;  // 0 = all cores

  void validate() const;
};

/// n i.i.d. Exp(1) weights by inversion, w = -log(1 - U).
Eigen::VectorXd draw_weights(std::size_t n, Engine& rng);

/// Weighted first stage with per-asset weights, then
/// B* = Y* M_T F (F' M_T F)^{-1} with the original F_hat and
/// a* = (I - B* (B*'B*)^{-1} B*') mean_t(Y*_t).
BootstrapDraw bootstrap_fit(const Panel& panel, const SieveSpec& spec,
                            const FactorFit& fit, const Eigen::VectorXd& weights);

/// Index (1-based) of the order statistic used as critical value:
/// ceil((B + 1)(1 - level)). May exceed B, in which case nothing rejects.
std::size_t critical_rank(std::size_t n_boot, double level);

/// Fills critical value, p-value (1 + #{boot >= stat}) / (B + 1) and the
/// decision statistic > critical value.
TestReport make_report(std::string test, double statistic, std::vector<double> boot_stats,
                       double level, std::uint64_t seed);

/// H0: alpha(.) = 0. Statistic N T a'a against N T |a* - a|^2 / omega0.
TestReport alpha_test(const Panel& panel, const SieveSpec& spec, const FactorFit& fit,
                      const BootstrapOptions& options);

enum class CoefficientTarget { AlphaRows, BetaRows };

struct CoefficientSelection {
  CoefficientTarget target = CoefficientTarget::AlphaRows;
  std::vector<std::size_t> rows;
};

/// Joint significance of selected sieve rows of a_hat or B_hat.
TestReport coefficient_test(const Panel& panel, const SieveSpec& spec, const FactorFit& fit,
                            const CoefficientSelection& selection,
                            const BootstrapOptions& options);

/// Null-model estimators of the linearity test.
struct LinearNull {
  Eigen::VectorXd gamma;      // m
  Eigen::MatrixXd gamma_mat;  // m x K
};

/// H0: alpha(.) and beta(.) linear in z. Requires a non-linear sieve; the
/// null regression uses raw characteristics with an intercept iff `spec`
/// has one.
TestReport linearity_test(const Panel& panel, const SieveSpec& spec, const FactorFit& fit,
                          const BootstrapOptions& options);

/// gamma_hat and Gamma_hat of the linearity test on the original data.
LinearNull linear_null(const Panel& panel, const SieveSpec& spec, const FactorFit& fit);

/// The linearity statistic S for given null and sieve coefficients.
double linearity_statistic(const Panel& panel, const SieveSpec& spec, const FactorFit& fit,
                           const LinearNull& null);

}  // namespace regpca
