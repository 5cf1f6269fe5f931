#include "regpca/evaluation.hpp"

#include <cmath>

#include "regpca/error.hpp"

namespace regpca {

namespace {

/// Accumulates squared residuals and squared returns by asset, by period
/// and overall.
class R2Accumulator {
 public:
  explicit R2Accumulator(std::size_t n_assets)
      : res_asset_(n_assets, 0.0), ysq_asset_(n_assets, 0.0), count_asset_(n_assets, 0) {}

  void add(std::size_t i, double y, double resid) {
    const double r2 = resid * resid;
    const double y2 = y * y;
    res_total_ += r2;
    ysq_total_ += y2;
    res_asset_[i] += r2;
    ysq_asset_[i] += y2;
    ++count_asset_[i];
    res_period_ += r2;
    ysq_period_ += y2;
    ++count_period_;
  }

  void end_period() {
    if (count_period_ > 0 && ysq_period_ > 0.0) {
      period_ratio_sum_ += res_period_ / ysq_period_;
      ++n_periods_;
    }
    res_period_ = ysq_period_ = 0.0;
    count_period_ = 0;
  }

  R2Triple result() const {
    if (!(ysq_total_ > 0.0)) {
      throw Error(ErrorKind::Numeric, "R^2 undefined: all returns in the evaluation sample are zero");
    }
    R2Triple r;
    r.total = 1.0 - res_total_ / ysq_total_;
    double asset_sum = 0.0;
    std::size_t n_assets = 0;
    for (std::size_t i = 0; i < res_asset_.size(); ++i) {
      if (count_asset_[i] == 0 || !(ysq_asset_[i] > 0.0)) continue;
      asset_sum += res_asset_[i] / ysq_asset_[i];
      ++n_assets;
    }
    r.tn = 1.0 - asset_sum / static_cast<double>(n_assets);
    r.nt = 1.0 - period_ratio_sum_ / static_cast<double>(n_periods_);
    return r;
  }

 private:
  double res_total_ = 0.0, ysq_total_ = 0.0;
  std::vector<double> res_asset_, ysq_asset_;
  std::vector<std::size_t> count_asset_;
  double res_period_ = 0.0, ysq_period_ = 0.0;
  std::size_t count_period_ = 0;
  double period_ratio_sum_ = 0.0;
  std::size_t n_periods_ = 0;
};

void check_window_start(const Panel& panel, std::size_t k, std::size_t t0) {
  if (t0 < k + 2) {
    throw Error(ErrorKind::Config, "burn-in t0 = " + std::to_string(t0) +
                                       " too short for k = " + std::to_string(k) +
                                       " (need t0 >= k + 2)");
  }
  if (t0 >= panel.n_periods) {
    throw Error(ErrorKind::Config, "burn-in t0 = " + std::to_string(t0) +
                                       " leaves no out-of-sample periods");
  }
}

/// Calls body(t, window_fit) for each t in [t0, T) with a fit on periods [0, t).
template <class Body>
void for_each_window(const Panel& panel, const SieveSpec& spec, std::size_t k, std::size_t t0,
                     Body&& body) {
  check_window_start(panel, k, t0);
  // First-stage coefficients of a period do not depend on the window, so the
  // full-sample managed panel is truncated instead of re-regressed.
  const ManagedPanel managed = first_stage(panel, spec);
  for (std::size_t t = t0; t < panel.n_periods; ++t) {
    FactorFit window_fit;
    try {
      window_fit = fit(managed.window(t), k);
    } catch (const Error& e) {
      throw Error(e.kind(), "window ending before period " + std::to_string(t) + ": " + e.what());
    }
    body(t, window_fit);
  }
}

}  // namespace

R2Suite r2_insample(const Panel& panel, const FactorFit& fit) {
  if (fit.n_periods() != panel.n_periods) {
    throw Error(ErrorKind::Config, "fit and panel cover different numbers of periods");
  }
  if (fit.spec.n_chars != panel.n_chars) {
    throw Error(ErrorKind::Config, "fit and panel have different characteristics");
  }
  R2Accumulator with_alpha(panel.n_assets), factors_only(panel.n_assets);
  const auto dim = static_cast<Eigen::Index>(fit.spec.total_dim());
  Eigen::RowVectorXd phi(dim);
  for (std::size_t t = 0; t < panel.n_periods; ++t) {
    const Eigen::VectorXd ft = fit.f_hat.row(static_cast<Eigen::Index>(t)).transpose();
    for (std::size_t i = 0; i < panel.n_assets; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      if (!panel.mask[t](ii)) continue;
      eval_basis_into(fit.spec, panel.characteristics[t].row(ii), phi);
      const double alpha = phi.dot(fit.a_hat);
      const double common = (phi * fit.b_hat).dot(ft);
      const double y = panel.returns[t](ii);
      with_alpha.add(i, y, y - alpha - common);
      factors_only.add(i, y, y - common);
    }
    with_alpha.end_period();
    factors_only.end_period();
  }
  const R2Triple a = with_alpha.result();
  const R2Triple f = factors_only.result();
  return {a.total, a.tn, a.nt, f.total, f.tn, f.nt};
}

R2Triple oos_predict(const Panel& panel, const SieveSpec& spec, std::size_t k, std::size_t t0) {
  R2Accumulator acc(panel.n_assets);
  Eigen::RowVectorXd phi(static_cast<Eigen::Index>(spec.total_dim()));
  for_each_window(panel, spec, k, t0, [&](std::size_t t, const FactorFit& w) {
    const Eigen::VectorXd lambda = w.f_hat.colwise().mean().transpose();
    // alpha(z) + beta(z)' lambda = phi(z)' (a + B lambda)
    const Eigen::VectorXd coef = w.a_hat + w.b_hat * lambda;
    for (std::size_t i = 0; i < panel.n_assets; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      if (!panel.mask[t](ii)) continue;
      eval_basis_into(spec, panel.characteristics[t].row(ii), phi);
      const double y = panel.returns[t](ii);
      acc.add(i, y, y - phi.dot(coef));
    }
    acc.end_period();
  });
  return acc.result();
}

OosFactors oos_factor_fit(const Panel& panel, const SieveSpec& spec, std::size_t k,
                          std::size_t t0) {
  OosFactors out;
  R2Accumulator acc(panel.n_assets);
  const auto kk = static_cast<Eigen::Index>(k);
  std::vector<Eigen::VectorXd> rows;
  Eigen::RowVectorXd phi(static_cast<Eigen::Index>(spec.total_dim()));
  for_each_window(panel, spec, k, t0, [&](std::size_t t, const FactorFit& w) {
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(kk, kk);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(kk);
    for (std::size_t i = 0; i < panel.n_assets; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      if (!panel.mask[t](ii)) continue;
      eval_basis_into(spec, panel.characteristics[t].row(ii), phi);
      const Eigen::VectorXd beta = w.b_hat.transpose() * phi.transpose();
      gram.noalias() += beta * beta.transpose();
      rhs.noalias() += beta * (panel.returns[t](ii) - phi.dot(w.a_hat));
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() >= kMinRcond)) {
      throw Error(ErrorKind::Numeric,
                  "period " + std::to_string(t) + ": sum of beta beta' is singular");
    }
    const Eigen::VectorXd f = ldlt.solve(rhs);
    for (std::size_t i = 0; i < panel.n_assets; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      if (!panel.mask[t](ii)) continue;
      eval_basis_into(spec, panel.characteristics[t].row(ii), phi);
      const double y = panel.returns[t](ii);
      acc.add(i, y, y - (phi * w.b_hat).dot(f));
    }
    acc.end_period();
    out.periods.push_back(t);
    rows.push_back(f);
  });
  out.factors.resize(static_cast<Eigen::Index>(rows.size()), kk);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.factors.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
  }
  out.r2 = acc.result();
  return out;
}

void summarize(PortfolioSeries& series, double periods_per_year) {
  const auto n = static_cast<double>(series.returns.size());
  if (series.returns.empty()) {
    series.ann_mean = series.ann_std = series.sharpe = 0.0;
    return;
  }
  double mean = 0.0;
  for (double r : series.returns) mean += r;
  mean /= n;
  double ss = 0.0;
  for (double r : series.returns) ss += (r - mean) * (r - mean);
  const double sd = series.returns.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  series.ann_mean = periods_per_year * mean;
  series.ann_std = std::sqrt(periods_per_year) * sd;
  series.sharpe = series.ann_std > 0.0 ? series.ann_mean / series.ann_std : 0.0;
}

PortfolioSeries arbitrage_portfolio(const Panel& panel, const SieveSpec& spec, std::size_t k,
                                    std::size_t t0, double periods_per_year) {
  PortfolioSeries out;
  for_each_window(panel, spec, k, t0, [&](std::size_t t, const FactorFit& w) {
    const Eigen::MatrixXd phi = design_matrix(spec, panel, t);
    const Eigen::MatrixXd gram = phi.transpose() * phi;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success || !(llt.rcond() >= kMinRcond)) {
      throw Error(ErrorKind::Numeric, "period " + std::to_string(t) + ": Gram matrix is singular");
    }
    const Eigen::VectorXd weights = phi * llt.solve(w.a_hat);  // zero on unobserved rows
    out.periods.push_back(t);
    out.returns.push_back(panel.returns[t].dot(weights));
  });
  summarize(out, periods_per_year);
  return out;
}

PortfolioSeries mve_portfolio(const Eigen::MatrixXd& factors, double periods_per_year,
                              std::size_t min_history) {
  const auto n = static_cast<std::size_t>(factors.rows());
  const auto k = static_cast<std::size_t>(factors.cols());
  if (k == 0) throw Error(ErrorKind::Config, "MVE portfolio needs at least one factor");
  if (min_history == 0) min_history = k + 2;
  if (min_history < 2) min_history = 2;
  if (n <= min_history) {
    throw Error(ErrorKind::Config, "MVE portfolio needs more than " + std::to_string(min_history) +
                                       " factor observations");
  }
  PortfolioSeries out;
  for (std::size_t s = min_history; s < n; ++s) {
    const auto hist = factors.topRows(static_cast<Eigen::Index>(s));
    const Eigen::VectorXd mean = hist.colwise().mean().transpose();
    const Eigen::MatrixXd centered = hist.rowwise() - mean.transpose();
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(s - 1);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() >= kMinRcond)) {
      throw Error(ErrorKind::Numeric,
                  "factor covariance is singular at observation " + std::to_string(s));
    }
    const Eigen::VectorXd w = ldlt.solve(mean);
    out.periods.push_back(s);
    out.returns.push_back(w.dot(factors.row(static_cast<Eigen::Index>(s)).transpose()));
  }
  summarize(out, periods_per_year);
  return out;
}

}  // namespace regpca
