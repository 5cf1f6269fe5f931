#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "regpca/estimator.hpp"
#include "regpca/panel.hpp"
#include "regpca/sieve.hpp"

namespace regpca {

// Characteristics stored in row t of a panel are taken to be the predictors
// of the row-t returns; lagging them (z_{i,t-1} for r_it) is done upstream.

/// Total, per-asset (time-series) and per-period (cross-sectional) R^2,
/// with and without the fitted intercept alpha.
struct R2Suite {
  double r2_total = 0.0;
  double r2_tn = 0.0;
  double r2_nt = 0.0;
  double r2f_total = 0.0;
  double r2f_tn = 0.0;
  double r2f_nt = 0.0;
};

/// Predictive R^2 triple over the evaluation periods.
struct R2Triple {
  double total = 0.0;
  double tn = 0.0;
  double nt = 0.0;
};

/// Per-asset and per-period averages skip assets (periods) with no
/// observations or a zero sum of squared returns.
R2Suite r2_insample(const Panel& panel, const FactorFit& fit);

/// Expanding-window out-of-sample prediction for periods t >= t0, each
/// window fitted on periods [0, t):
/// alpha_{t-1}(z) + beta_{t-1}(z)' lambda_t with lambda_t = mean of F_hat.
R2Triple oos_predict(const Panel& panel, const SieveSpec& spec, std::size_t k, std::size_t t0);

struct OosFactors {
  std::vector<std::size_t> periods;  // evaluated periods (t >= t0)
  Eigen::MatrixXd factors;           // rows aligned with `periods`, K columns
  R2Triple r2;
};

/// Out-of-sample realized factors by cross-sectional regression of
/// alpha-adjusted returns on the previous window's beta(z).
OosFactors oos_factor_fit(const Panel& panel, const SieveSpec& spec, std::size_t k,
                          std::size_t t0);

struct PortfolioSeries {
  std::vector<std::size_t> periods;
  std::vector<double> returns;
  double ann_mean = 0.0;
  double ann_std = 0.0;
  double sharpe = 0.0;
};

/// Annualized mean (factor * mean), std (sqrt(factor) * sample std, n - 1)
/// and their ratio. sharpe is 0 when the std is 0.
void summarize(PortfolioSeries& series, double periods_per_year = 12.0);

/// Pure-alpha strategy: weights Phi_t (Phi_t' Phi_t)^{-1} a_{t-1} from the
/// window ending before t, realized on the period-t returns.
PortfolioSeries arbitrage_portfolio(const Panel& panel, const SieveSpec& spec, std::size_t k,
                                    std::size_t t0, double periods_per_year = 12.0);

/// Expanding-window mean-variance efficient combination of factor returns
/// (rows = periods). Row s >= min_history is traded with weights
/// var_s^{-1} E_s from rows [0, s); min_history = 0 means K + 2.
PortfolioSeries mve_portfolio(const Eigen::MatrixXd& factors, double periods_per_year = 12.0,
                              std::size_t min_history = 0);

}  // namespace regpca
