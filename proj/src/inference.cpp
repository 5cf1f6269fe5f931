#include "regpca/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>

#include "regpca/error.hpp"
#include "regpca/parallel.hpp"

namespace regpca {

void BootstrapOptions::validate() const {
  if (n_boot == 0) throw Error(ErrorKind::Config, "number of bootstrap draws must be positive");
  if (!(level > 0.0 && level < 1.0)) {
    throw Error(ErrorKind::Config, "test level must lie in (0, 1)");
  }
}

Eigen::VectorXd draw_weights(std::size_t n, Engine& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd w(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    double v = 0.0;
    while (v <= 0.0) v = -std::log1p(-unif(rng));
    w(i) = v;
  }
  return w;
}

std::size_t critical_rank(std::size_t n_boot, double level) {
  const double x = static_cast<double>(n_boot + 1) * (1.0 - level);
  // Guard against 500 * 0.95 landing a hair above 475.
  return static_cast<std::size_t>(std::ceil(x - 1e-9));
}

TestReport make_report(std::string test, double statistic, std::vector<double> boot_stats,
                       double level, std::uint64_t seed) {
  TestReport r;
  r.test = std::move(test);
  r.statistic = statistic;
  r.level = level;
  r.seed = seed;
  r.n_boot = boot_stats.size();
  std::vector<double> sorted = boot_stats;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t rank = critical_rank(r.n_boot, level);
  r.critical_value = (rank >= 1 && rank <= sorted.size())
                         ? sorted[rank - 1]
                         : std::numeric_limits<double>::infinity();
  const auto exceed = std::count_if(boot_stats.begin(), boot_stats.end(),
                                    [&](double b) { return b >= statistic; });
  r.p_value = (1.0 + static_cast<double>(exceed)) / (static_cast<double>(r.n_boot) + 1.0);
  r.reject = statistic > r.critical_value;
  r.boot_stats = std::move(boot_stats);
  return r;
}

namespace {

void check_inputs(const Panel& panel, const SieveSpec& spec, const FactorFit& fit) {
  if (!(fit.spec == spec)) throw Error(ErrorKind::Config, "fit was produced with a different sieve");
  if (fit.n_periods() != panel.n_periods) {
    throw Error(ErrorKind::Config, "fit and panel cover different numbers of periods");
  }
  if (static_cast<std::size_t>(fit.a_hat.size()) != spec.total_dim()) {
    throw Error(ErrorKind::Config, "fit dimension does not match the sieve");
  }
}

/// Everything a bootstrap replicate needs that does not depend on weights.
class BootstrapEngine {
 public:
  BootstrapEngine(const Panel& panel, const SieveSpec& spec, const FactorFit& fit,
                  bool with_linear)
      : sieve_(panel, spec), projector_(loading_projector(fit.f_hat)) {
    if (with_linear) linear_.emplace(panel, linear_counterpart(spec));
  }

  BootstrapDraw draw(const Eigen::VectorXd& weights) const {
    BootstrapDraw d;
    const Eigen::MatrixXd ystar = sieve_.solve(weights);
    const Eigen::VectorXd ybar = ystar.rowwise().mean();
    d.b_star = ystar * projector_;
    const Eigen::MatrixXd btb = d.b_star.transpose() * d.b_star;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(btb);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() >= kMinRcond)) {
      throw Error(ErrorKind::Numeric, "bootstrap loadings B*'B* are singular");
    }
    // (B*'B*)^{-1} B*' ybar*, the bootstrap analogue of mean_t f_t.
    const Eigen::VectorXd fbar = ldlt.solve(d.b_star.transpose() * ybar);
    d.a_star = ybar - d.b_star * fbar;
    if (linear_) {
      const Eigen::MatrixXd vstar = linear_->solve(weights);
      d.gamma_mat_star = vstar * projector_;
      d.gamma_star = vstar.rowwise().mean() - d.gamma_mat_star * fbar;
    }
    return d;
  }

 private:
  CrossSectionMoments sieve_;
  std::optional<CrossSectionMoments> linear_;
  Eigen::MatrixXd projector_;
};

/// Runs `n_boot` draws; draw b uses weights from stream (seed, b).
template <class Stat>
std::vector<double> run_bootstrap(const BootstrapEngine& engine, std::size_t n_assets,
                                  const BootstrapOptions& opt, Stat&& stat) {
  std::vector<double> out(opt.n_boot);
  parallel_for(opt.n_boot, opt.threads, [&](std::size_t b) {
    Engine rng = make_engine(opt.seed, b);
    const Eigen::VectorXd w = draw_weights(n_assets, rng);
    try {
      out[b] = stat(engine.draw(w));
    } catch (const Error& e) {
      throw Error(e.kind(), "bootstrap draw " + std::to_string(b) + ": " + e.what());
    }
  });
  return out;
}

double scale_nt(const Panel& panel, const FactorFit& fit) {
  return static_cast<double>(panel.max_observed()) * static_cast<double>(fit.n_periods());
}

/// Sum over observed (i, t) of u u' with u = (x_it, phi_it).
Eigen::MatrixXd stacked_gram(const Panel& panel, const SieveSpec& linear, const SieveSpec& sieve) {
  const auto m = static_cast<Eigen::Index>(linear.total_dim());
  const auto d = static_cast<Eigen::Index>(sieve.total_dim());
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m + d, m + d);
  for (std::size_t t = 0; t < panel.n_periods; ++t) {
    Eigen::MatrixXd u(static_cast<Eigen::Index>(panel.n_assets), m + d);
    u.leftCols(m) = design_matrix(linear, panel, t);
    u.rightCols(d) = design_matrix(sieve, panel, t);
    g.noalias() += u.transpose() * u;
  }
  return 0.5 * (g + g.transpose());
}

/// (c'Gc + tr(C'GC)) / J for c = (dgamma, -da), C = (dGamma, -dB).
double stacked_quadratic(const Eigen::MatrixXd& g, const Eigen::VectorXd& dgamma,
                         const Eigen::VectorXd& da, const Eigen::MatrixXd& dgamma_mat,
                         const Eigen::MatrixXd& db, double per_char_dim) {
  const Eigen::Index m = dgamma.size();
  const Eigen::Index d = da.size();
  Eigen::VectorXd c(m + d);
  c << dgamma, -da;
  Eigen::MatrixXd cm(m + d, db.cols());
  cm << dgamma_mat, -db;
  const double s = c.dot(g * c) + (cm.transpose() * g * cm).trace();
  return s / per_char_dim;
}

}  // namespace

BootstrapDraw bootstrap_fit(const Panel& panel, const SieveSpec& spec, const FactorFit& fit,
                            const Eigen::VectorXd& weights) {
  check_inputs(panel, spec, fit);
  if (static_cast<std::size_t>(weights.size()) != panel.n_assets) {
    throw Error(ErrorKind::Config, "weights must have one entry per asset");
  }
  if (!(weights.array() > 0.0).all()) throw Error(ErrorKind::Config, "weights must be positive");
  BootstrapEngine engine(panel, spec, fit, false);
  return engine.draw(weights);
}

TestReport alpha_test(const Panel& panel, const SieveSpec& spec, const FactorFit& fit,
                      const BootstrapOptions& options) {
  options.validate();
  check_inputs(panel, spec, fit);
  const double nt = scale_nt(panel, fit);
  const double stat = nt * fit.a_hat.squaredNorm();
  BootstrapEngine engine(panel, spec, fit, false);
  auto boot = run_bootstrap(engine, panel.n_assets, options, [&](const BootstrapDraw& d) {
    return nt * (d.a_star - fit.a_hat).squaredNorm() / kOmega0;
  });
  return make_report("alpha", stat, std::move(boot), options.level, options.seed);
}

TestReport coefficient_test(const Panel& panel, const SieveSpec& spec, const FactorFit& fit,
                            const CoefficientSelection& selection,
                            const BootstrapOptions& options) {
  options.validate();
  check_inputs(panel, spec, fit);
  const std::size_t dim = spec.total_dim();
  if (selection.rows.empty()) throw Error(ErrorKind::Config, "coefficient test: empty row selection");
  std::set<std::size_t> unique(selection.rows.begin(), selection.rows.end());
  if (unique.size() != selection.rows.size()) {
    throw Error(ErrorKind::Config, "coefficient test: duplicate row index");
  }
  if (*unique.rbegin() >= dim) {
    throw Error(ErrorKind::Config, "coefficient test: row index out of range");
  }
  const bool beta = selection.target == CoefficientTarget::BetaRows;
  if (beta && unique.size() == dim) {
    throw Error(ErrorKind::Config,
                "coefficient test: beta(.) = 0 cannot be tested (loadings must have full rank)");
  }

  auto selected_sq = [&](const Eigen::VectorXd& a, const Eigen::MatrixXd& b) {
    double s = 0.0;
    for (std::size_t r : selection.rows) {
      const auto rr = static_cast<Eigen::Index>(r);
      s += beta ? b.row(rr).squaredNorm() : a(rr) * a(rr);
    }
    return s;
  };
  const double nt = scale_nt(panel, fit);
  const double stat = nt * selected_sq(fit.a_hat, fit.b_hat);
  BootstrapEngine engine(panel, spec, fit, false);
  auto boot = run_bootstrap(engine, panel.n_assets, options, [&](const BootstrapDraw& d) {
    return nt * selected_sq(d.a_star - fit.a_hat, d.b_star - fit.b_hat) / kOmega0;
  });
  return make_report(beta ? "coefficient_beta" : "coefficient_alpha", stat, std::move(boot),
                     options.level, options.seed);
}

LinearNull linear_null(const Panel& panel, const SieveSpec& spec, const FactorFit& fit) {
  check_inputs(panel, spec, fit);
  const ManagedPanel lin = first_stage(panel, linear_counterpart(spec));
  LinearNull null;
  null.gamma_mat = lin.ytilde * loading_projector(fit.f_hat);
  const Eigen::VectorXd fbar = fit.f_hat.colwise().mean().transpose();
  null.gamma = lin.ytilde.rowwise().mean() - null.gamma_mat * fbar;
  return null;
}

double linearity_statistic(const Panel& panel, const SieveSpec& spec, const FactorFit& fit,
                           const LinearNull& null) {
  const Eigen::MatrixXd g = stacked_gram(panel, linear_counterpart(spec), spec);
  return stacked_quadratic(g, null.gamma, fit.a_hat, null.gamma_mat, fit.b_hat,
                           static_cast<double>(spec.per_char_dim()));
}

TestReport linearity_test(const Panel& panel, const SieveSpec& spec, const FactorFit& fit,
                          const BootstrapOptions& options) {
  options.validate();
  check_inputs(panel, spec, fit);
  if (spec.is_linear()) {
    throw Error(ErrorKind::Config,
                "linearity test needs a non-linear sieve (null and alternative coincide)");
  }
  const LinearNull null = linear_null(panel, spec, fit);
  const Eigen::MatrixXd g = stacked_gram(panel, linear_counterpart(spec), spec);
  const double per_char = static_cast<double>(spec.per_char_dim());
  const double stat =
      stacked_quadratic(g, null.gamma, fit.a_hat, null.gamma_mat, fit.b_hat, per_char);

  BootstrapEngine engine(panel, spec, fit, true);
  auto boot = run_bootstrap(engine, panel.n_assets, options, [&](const BootstrapDraw& d) {
    return stacked_quadratic(g, d.gamma_star - null.gamma, d.a_star - fit.a_hat,
                             d.gamma_mat_star - null.gamma_mat, d.b_star - fit.b_hat, per_char) /
           kOmega0;
  });
  return make_report("linearity", stat, std::move(boot), options.level, options.seed);
}

}  // namespace regpca
