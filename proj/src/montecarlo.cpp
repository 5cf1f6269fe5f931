#include "regpca/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "regpca/error.hpp"
#include "regpca/estimator.hpp"
#include "regpca/inference.hpp"
#include "regpca/parallel.hpp"
#include "regpca/rng.hpp"

namespace regpca {

namespace {

// Independent generator streams of one simulated draw.
enum Stream : std::uint64_t {
  kStreamU = 1,
  kStreamSigma = 2,
  kStreamZ0 = 3,
  kStreamEta = 4,
  kStreamF0 = 5,
  kStreamE = 6,
  kStreamEps0 = 7,
  kStreamBootstrap = 101,
};

constexpr double kCharAr = 0.3;
constexpr double kFactorAr = 0.3;

bool finite_nonneg(double x) { return std::isfinite(x) && x >= 0.0; }

}  // namespace

void DgpParams::validate() const {
  if (n == 0 || t == 0) throw Error(ErrorKind::Config, "dgp: n and t must be positive");
  if (!finite_nonneg(theta)) throw Error(ErrorKind::Config, "dgp: theta must be >= 0");
  if (!finite_nonneg(delta)) throw Error(ErrorKind::Config, "dgp: delta must be >= 0");
  if (!(rho >= 0.0 && rho < 1.0)) throw Error(ErrorKind::Config, "dgp: rho must lie in [0, 1)");
  if (!finite_nonneg(noise_scale)) {
    throw Error(ErrorKind::Config, "dgp: noise_scale must be >= 0");
  }
}

SieveSpec oracle_spec() { return SieveSpec::quadratic(kDgpChars, false); }

SimDraw simulate(const DgpParams& params) {
  params.validate();
  const auto n = static_cast<Eigen::Index>(params.n);
  const auto tt = static_cast<Eigen::Index>(params.t);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(1.0, 2.0);

  SimDraw out;
  out.a_true = Eigen::VectorXd::Zero(6);
  out.a_true << params.theta, params.delta, 0.0, 0.0, 0.0, 0.0;
  out.b_true = Eigen::MatrixXd::Zero(6, 2);
  out.b_true(2, 0) = 1.0;
  out.b_true(3, 0) = params.delta;
  out.b_true(4, 1) = 2.0;
  out.b_true(5, 1) = 2.0 * params.delta;

  Engine rng_sigma = make_engine(params.seed, kStreamSigma);
  Eigen::VectorXd sigma(tt);
  for (Eigen::Index t = 0; t < tt; ++t) sigma(t) = unif(rng_sigma);

  Engine rng_f0 = make_engine(params.seed, kStreamF0);
  Engine rng_eta = make_engine(params.seed, kStreamEta);
  Eigen::Vector2d f;
  for (int k = 0; k < 2; ++k) f(k) = normal(rng_f0) / std::sqrt(1.0 - kFactorAr * kFactorAr);
  out.f_true.resize(tt, 2);
  for (Eigen::Index t = 0; t < tt; ++t) {
    for (int k = 0; k < 2; ++k) f(k) = kFactorAr * f(k) + normal(rng_eta);
    out.f_true.row(t) = f.transpose();
  }

  Engine rng_eps0 = make_engine(params.seed, kStreamEps0);
  Engine rng_e = make_engine(params.seed, kStreamE);
  Eigen::VectorXd eps(n);
  const double eps0_sd = 1.0 / std::sqrt(1.0 - params.rho * params.rho);
  for (Eigen::Index i = 0; i < n; ++i) eps(i) = eps0_sd * normal(rng_eps0);
  out.noise.resize(tt, n);
  for (Eigen::Index t = 0; t < tt; ++t) {
    for (Eigen::Index i = 0; i < n; ++i) eps(i) = params.rho * eps(i) + normal(rng_e);
    out.noise.row(t) = params.noise_scale * eps.transpose();
  }

  Engine rng_z0 = make_engine(params.seed, kStreamZ0);
  Engine rng_u = make_engine(params.seed, kStreamU);
  Eigen::VectorXd z2(n);
  for (Eigen::Index i = 0; i < n; ++i) z2(i) = normal(rng_z0);

  const SieveSpec spec = oracle_spec();
  std::vector<Eigen::VectorXd> returns(params.t);
  std::vector<Eigen::MatrixXd> chars(params.t);
  std::vector<Mask> mask(params.t, Mask::Constant(n, true));
  Eigen::RowVectorXd phi(6);
  for (Eigen::Index t = 0; t < tt; ++t) {
    Eigen::MatrixXd z(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double u1 = normal(rng_u);
      const double u2 = normal(rng_u);
      const double u3 = normal(rng_u);
      z2(i) = kCharAr * z2(i) + u2;
      z(i, 0) = sigma(t) * u1;
      z(i, 1) = z2(i);
      z(i, 2) = u3;
    }
    const Eigen::VectorXd coef_a = out.a_true;
    const Eigen::VectorXd coef_f = out.b_true * out.f_true.row(t).transpose();
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      eval_basis_into(spec, z.row(i), phi);
      y(i) = phi.dot(coef_a) + phi.dot(coef_f) + out.noise(t, i);
    }
    const auto ts = static_cast<std::size_t>(t);
    returns[ts] = std::move(y);
    chars[ts] = std::move(z);
  }
  out.panel = make_panel(std::move(returns), std::move(chars), std::move(mask));
  out.panel.char_names = {"z1", "z2", "z3"};
  return out;
}

const char* to_string(Experiment experiment) {
  switch (experiment) {
    case Experiment::Mse: return "mse";
    case Experiment::KSelect: return "kselect";
    case Experiment::AlphaTest: return "alpha";
    case Experiment::LinearityTest: return "linearity";
  }
  return "unknown";
}

Experiment experiment_from_string(const std::string& name) {
  if (name == "mse") return Experiment::Mse;
  if (name == "kselect") return Experiment::KSelect;
  if (name == "alpha") return Experiment::AlphaTest;
  if (name == "linearity") return Experiment::LinearityTest;
  throw Error(ErrorKind::Config, "unknown experiment '" + name +
                                     "' (expected mse, kselect, alpha or linearity)");
}

std::vector<std::string> replication_columns(Experiment experiment) {
  switch (experiment) {
    case Experiment::Mse: return {"err_a", "err_b", "err_f"};
    case Experiment::KSelect: return {"khat", "ktilde"};
    case Experiment::AlphaTest:
    case Experiment::LinearityTest:
      return {"statistic", "critical_value", "p_value", "reject"};
  }
  return {};
}

std::vector<std::string> table_columns(Experiment experiment) {
  switch (experiment) {
    case Experiment::Mse: return {"mse_a", "mse_b", "mse_f"};
    case Experiment::KSelect: return {"rate_khat", "rate_ktilde"};
    case Experiment::AlphaTest:
    case Experiment::LinearityTest:
      return {"rejection_rate"};
  }
  return {};
}

void ExperimentConfig::validate() const {
  if (grid.empty()) throw Error(ErrorKind::Config, "experiment: empty grid");
  for (const auto& cell : grid) cell.validate();
  if (n_reps == 0) throw Error(ErrorKind::Config, "experiment: reps must be positive");
  const std::size_t end = effective_rep_end();
  if (end > n_reps || rep_begin >= end) {
    throw Error(ErrorKind::Config, "experiment: replication range must satisfy begin < end <= reps");
  }
  if (k == 0) throw Error(ErrorKind::Config, "experiment: k must be positive");
  if (experiment == Experiment::AlphaTest || experiment == Experiment::LinearityTest) {
    BootstrapOptions{n_boot, level, seed, 1}.validate();
  }
}

std::uint64_t replication_seed(std::uint64_t seed, std::size_t rep) {
  return derive_seed(seed, static_cast<std::uint64_t>(rep));
}

namespace {

std::vector<double> replication_values(const ExperimentConfig& config, const DgpParams& cell,
                                       std::uint64_t rep_seed) {
  DgpParams params = cell;
  params.seed = rep_seed;
  const SimDraw draw = simulate(params);
  const SieveSpec spec = oracle_spec();
  const ManagedPanel managed = first_stage(draw.panel, spec);

  if (config.experiment == Experiment::KSelect) {
    const Eigen::VectorXd eigs = managed_eigenvalues(managed);
    const double lambda_nt = 1.0 / std::log(static_cast<double>(params.n));
    return {static_cast<double>(select_k_ratio(eigs)),
            static_cast<double>(select_k_threshold(eigs, lambda_nt))};
  }

  const FactorFit est = fit(managed, config.k);
  switch (config.experiment) {
    case Experiment::Mse: {
      const Eigen::MatrixXd h = rotation(draw.f_true, est).h;
      const double err_a = (est.a_hat - draw.a_true).squaredNorm();
      const double err_b = (est.b_hat - draw.b_true * h).squaredNorm();
      const Eigen::MatrixXd f_rot = draw.f_true * h.transpose().inverse();
      const double err_f =
          (est.f_hat - f_rot).squaredNorm() / static_cast<double>(params.t);
      return {err_a, err_b, err_f};
    }
    case Experiment::AlphaTest:
    case Experiment::LinearityTest: {
      BootstrapOptions opt;
      opt.n_boot = config.n_boot;
      opt.level = config.level;
      opt.seed = derive_seed(rep_seed, kStreamBootstrap);
      opt.threads = 1;
      const TestReport r = config.experiment == Experiment::AlphaTest
                               ? alpha_test(draw.panel, spec, est, opt)
                               : linearity_test(draw.panel, spec, est, opt);
      return {r.statistic, r.critical_value, r.p_value, r.reject ? 1.0 : 0.0};
    }
    case Experiment::KSelect: break;
  }
  return {};
}

}  // namespace

ReplicationRecord run_replication(const ExperimentConfig& config, std::size_t cell,
                                  std::size_t rep) {
  if (cell >= config.grid.size()) throw Error(ErrorKind::Config, "experiment: cell out of range");
  ReplicationRecord rec;
  rec.cell = cell;
  rec.rep = rep;
  try {
    rec.values = replication_values(config, config.grid[cell], replication_seed(config.seed, rep));
  } catch (const Error& e) {
    if (config.abort_on_failure || e.kind() != ErrorKind::Numeric) {
      throw Error(e.kind(), "cell " + std::to_string(cell) + ", replication " +
                                std::to_string(rep) + ": " + e.what());
    }
    rec.failed = true;
    rec.values.assign(replication_columns(config.experiment).size(),
                      std::numeric_limits<double>::quiet_NaN());
  }
  return rec;
}

std::vector<ReplicationRecord> run_replications(const ExperimentConfig& config) {
  config.validate();
  const std::size_t begin = config.rep_begin;
  const std::size_t per_cell = config.effective_rep_end() - begin;
  std::vector<ReplicationRecord> out(config.grid.size() * per_cell);
  parallel_for(out.size(), config.threads, [&](std::size_t idx) {
    out[idx] = run_replication(config, idx / per_cell, begin + idx % per_cell);
  });
  return out;
}

std::vector<TableRow> summarize(const ExperimentConfig& config,
                                std::vector<ReplicationRecord> records) {
  const std::size_t width = replication_columns(config.experiment).size();
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    return a.cell != b.cell ? a.cell < b.cell : a.rep < b.rep;
  });
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.cell >= config.grid.size()) {
      throw Error(ErrorKind::Data, "replication record refers to unknown cell " +
                                       std::to_string(rec.cell));
    }
    if (!rec.failed && rec.values.size() != width) {
      throw Error(ErrorKind::Data, "replication record has " + std::to_string(rec.values.size()) +
                                       " values, expected " + std::to_string(width));
    }
    if (r > 0 && records[r - 1].cell == rec.cell && records[r - 1].rep == rec.rep) {
      throw Error(ErrorKind::Data, "duplicate replication " + std::to_string(rec.rep) +
                                       " in cell " + std::to_string(rec.cell));
    }
  }

  std::vector<TableRow> rows(config.grid.size());
  std::vector<std::vector<double>> sums(config.grid.size(), std::vector<double>(width, 0.0));
  for (std::size_t c = 0; c < rows.size(); ++c) rows[c].cell = config.grid[c];
  for (const auto& rec : records) {
    TableRow& row = rows[rec.cell];
    if (rec.failed) {
      ++row.n_failed;
      continue;
    }
    ++row.n_reps;
    auto& s = sums[rec.cell];
    for (std::size_t j = 0; j < width; ++j) {
      double v = rec.values[j];
      if (config.experiment == Experiment::KSelect) {
        v = v == static_cast<double>(kDgpFactors) ? 1.0 : 0.0;
      }
      s[j] += v;
    }
  }
  for (std::size_t c = 0; c < rows.size(); ++c) {
    TableRow& row = rows[c];
    const double n = static_cast<double>(row.n_reps);
    const auto nan = std::numeric_limits<double>::quiet_NaN();
    switch (config.experiment) {
      case Experiment::Mse:
      case Experiment::KSelect:
        for (double s : sums[c]) row.values.push_back(row.n_reps ? s / n : nan);
        break;
      case Experiment::AlphaTest:
      case Experiment::LinearityTest:
        row.values.push_back(row.n_reps ? sums[c][3] / n : nan);
        break;
    }
  }
  return rows;
}

namespace {

std::vector<TableRow> run_table(ExperimentConfig config) {
  config.abort_on_failure = false;
  return summarize(config, run_replications(config));
}

}  // namespace

MseResult mse_experiment(const DgpParams& params, std::size_t n_reps, std::size_t k,
                         unsigned threads) {
  ExperimentConfig config;
  config.experiment = Experiment::Mse;
  config.grid = {params};
  config.n_reps = n_reps;
  config.k = k;
  config.seed = params.seed;
  config.threads = threads;
  const TableRow row = run_table(config).front();
  return {row.values[0], row.values[1], row.values[2], row.n_failed};
}

KSelectResult kselect_experiment(const DgpParams& params, std::size_t n_reps, unsigned threads) {
  ExperimentConfig config;
  config.experiment = Experiment::KSelect;
  config.grid = {params};
  config.n_reps = n_reps;
  config.seed = params.seed;
  config.threads = threads;
  const TableRow row = run_table(config).front();
  return {row.values[0], row.values[1], row.n_failed};
}

std::vector<double> rejection_experiment(const std::vector<DgpParams>& grid, Experiment test,
                                         std::size_t n_reps, std::size_t n_boot, double level,
                                         std::uint64_t seed, unsigned threads) {
  if (test != Experiment::AlphaTest && test != Experiment::LinearityTest) {
    throw Error(ErrorKind::Config, "rejection_experiment needs the alpha or linearity test");
  }
  ExperimentConfig config;
  config.experiment = test;
  config.grid = grid;
  config.n_reps = n_reps;
  config.n_boot = n_boot;
  config.level = level;
  config.seed = seed;
  config.threads = threads;
  std::vector<double> rates;
  for (const auto& row : run_table(config)) rates.push_back(row.values.front());
  return rates;
}

}  // namespace regpca
