#include <doctest.h>

#include <cmath>
#include <cstring>

#include "oracles.hpp"
#include "regpca/error.hpp"
#include "regpca/montecarlo.hpp"
#include "regpca/rng.hpp"

using namespace regpca;

namespace {

DgpParams cell(std::size_t n, std::size_t t, double theta = 1.0, double delta = 0.5,
               double rho = 0.0, std::uint64_t seed = 1) {
  DgpParams p;
  p.n = n;
  p.t = t;
  p.theta = theta;
  p.delta = delta;
  p.rho = rho;
  p.seed = seed;
  return p;
}

ExperimentConfig small_config(Experiment e) {
  ExperimentConfig c;
  c.experiment = e;
  c.grid = {cell(50, 10), cell(60, 12, 1.0, 0.5, 0.3)};
  c.n_reps = 12;
  c.n_boot = 19;
  c.seed = 77;
  return c;
}

bool same_records(const std::vector<ReplicationRecord>& a, const std::vector<ReplicationRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].cell != b[i].cell || a[i].rep != b[i].rep || a[i].failed != b[i].failed) return false;
    if (a[i].values.size() != b[i].values.size()) return false;
    for (std::size_t j = 0; j < a[i].values.size(); ++j)
      if (std::memcmp(&a[i].values[j], &b[i].values[j], sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("seed derivation") {
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) != derive_seed(2, 2));
  CHECK(replication_seed(5, 3) == derive_seed(5, 3));
}

TEST_CASE("simulate shapes and truths") {
  const SimDraw d = simulate(cell(30, 7));
  CHECK(d.panel.n_assets == 30);
  CHECK(d.panel.n_periods == 7);
  CHECK(d.panel.n_chars == 3);
  CHECK(d.f_true.rows() == 7);
  CHECK(d.f_true.cols() == 2);
  CHECK(d.noise.rows() == 7);
  CHECK(d.noise.cols() == 30);
  Eigen::VectorXd a(6);
  a << 1.0, 0.5, 0, 0, 0, 0;
  CHECK(d.a_true == a);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(6, 2);
  b(2, 0) = 1.0;
  b(3, 0) = 0.5;
  b(4, 1) = 2.0;
  b(5, 1) = 1.0;
  CHECK(d.b_true == b);
  CHECK(oracle_spec().total_dim() == 6);
  CHECK_FALSE(oracle_spec().include_intercept);
  CHECK(d.panel.char_names == std::vector<std::string>{"z1", "z2", "z3"});
}

TEST_CASE("simulated returns follow the model exactly") {
  const SimDraw d = simulate(cell(25, 9, 0.7, 0.3, 0.4, 5));
  const SieveSpec spec = oracle_spec();
  for (std::size_t t = 0; t < 9; ++t)
    for (std::size_t i = 0; i < 25; ++i) {
      const Eigen::VectorXd z = d.panel.characteristics[t].row(i).transpose();
      const Eigen::VectorXd phi = eval_basis(spec, z);
      const double want = phi.dot(d.a_true) + phi.dot(d.b_true * d.f_true.row(t).transpose()) +
                          d.noise(t, i);
      CHECK(std::abs(d.panel.returns[t](i) - want) < 1e-12);
      CHECK(std::abs(phi.dot(d.a_true) - (0.7 * z(0) + 0.3 * z(0) * z(0))) < 1e-14);
    }
}

TEST_CASE("degenerate parameters") {
  const SimDraw d = simulate(cell(400, 60, 0.0, 0.0, 0.0, 3));
  CHECK(d.a_true.isZero());
  CHECK(d.b_true(3, 0) == 0.0);
  CHECK(d.b_true(5, 1) == 0.0);
  const double var = (d.noise.array() - d.noise.mean()).square().mean();
  CHECK(std::abs(d.noise.mean()) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
  // i.i.d. noise: first-order autocorrelation near zero.
  const double ac = (d.noise.topRows(59).array() * d.noise.bottomRows(59).array()).mean();
  CHECK(std::abs(ac) < 0.02);
}

TEST_CASE("noise autocorrelation and stationary variance") {
  const SimDraw d = simulate(cell(400, 60, 1.0, 0.5, 0.7, 4));
  const double var = d.noise.array().square().mean();
  const double ac = (d.noise.topRows(59).array() * d.noise.bottomRows(59).array()).mean() / var;
  CHECK(std::abs(var - 1.0 / (1.0 - 0.49)) < 0.05 / (1.0 - 0.49));
  CHECK(std::abs(ac - 0.7) < 0.02);
}

TEST_CASE("characteristic moments") {
  const SimDraw d = simulate(cell(10000, 100, 1.0, 0.5, 0.0, 6));
  double s = 0, ss = 0;
  double s1 = 0;
  for (std::size_t t = 0; t < 100; ++t) {
    s += d.panel.characteristics[t].col(2).sum();
    ss += d.panel.characteristics[t].col(2).squaredNorm();
    s1 += d.panel.characteristics[t].col(0).squaredNorm();
  }
  const double n = 1e6;
  const double var3 = ss / n - (s / n) * (s / n);
  CHECK(var3 >= 0.99);
  CHECK(var3 <= 1.01);
  // z1 = sigma u with sigma ~ U(1, 2): E z1^2 = E sigma^2 = 7/3.
  CHECK(std::abs(s1 / n - 7.0 / 3.0) < 0.2);
}

TEST_CASE("factor stationary variance") {
  const SimDraw d = simulate(cell(2, 200000, 1.0, 0.5, 0.0, 8));
  for (Eigen::Index j = 0; j < 2; ++j) {
    const Eigen::VectorXd f = d.f_true.col(j);
    const double var = (f.array() - f.mean()).square().mean();
    CHECK(std::abs(var - 1.0 / 0.91) < 0.02 / 0.91);
  }
}

TEST_CASE("simulate is deterministic") {
  const SimDraw a = simulate(cell(20, 5, 1, 0.5, 0.3, 9));
  const SimDraw b = simulate(cell(20, 5, 1, 0.5, 0.3, 9));
  const SimDraw c = simulate(cell(20, 5, 1, 0.5, 0.3, 10));
  CHECK(a.noise == b.noise);
  CHECK(a.f_true == b.f_true);
  CHECK(a.panel.returns == b.panel.returns);
  CHECK(a.noise != c.noise);
}

TEST_CASE("noiseless experiments") {
  DgpParams p = cell(100, 50);
  p.noise_scale = 0.0;
  const MseResult m = mse_experiment(p, 5);
  CHECK(m.mse_a <= 1e-12);
  CHECK(m.mse_b <= 1e-12);
  CHECK(m.mse_f <= 1e-12);
  CHECK(m.n_failed == 0);
  const KSelectResult k = kselect_experiment(p, 5);
  CHECK(k.rate_khat == 1.0);
  CHECK(k.rate_ktilde == 1.0);

  DgpParams q = cell(100, 10, 0.5, 0.0);
  q.noise_scale = 0.0;
  const auto rates = rejection_experiment({q}, Experiment::AlphaTest, 4, 19);
  CHECK(rates.at(0) == 1.0);
}

TEST_CASE("thread count does not change records") {
  for (Experiment e : {Experiment::Mse, Experiment::KSelect, Experiment::AlphaTest,
                       Experiment::LinearityTest}) {
    ExperimentConfig c = small_config(e);
    if (e == Experiment::LinearityTest) c.grid = {cell(60, 12, 1.0, 0.1, 0.3)};
    const auto one = run_replications(c);
    c.threads = 4;
    const auto four = run_replications(c);
    CHECK(same_records(one, four));
    CHECK(one.size() == c.grid.size() * c.n_reps);
    CHECK(one.front().values.size() == replication_columns(e).size());
  }
}

TEST_CASE("split runs merge to the single run") {
  ExperimentConfig full = small_config(Experiment::Mse);
  const auto rows_full = summarize(full, run_replications(full));
  ExperimentConfig first = full, second = full;
  first.rep_end = 5;
  second.rep_begin = 5;
  auto recs = run_replications(second);
  const auto a = run_replications(first);
  recs.insert(recs.end(), a.begin(), a.end());
  const auto rows_merged = summarize(full, recs);
  REQUIRE(rows_merged.size() == rows_full.size());
  for (std::size_t c = 0; c < rows_full.size(); ++c) {
    CHECK(rows_merged[c].n_reps == rows_full[c].n_reps);
    CHECK(rows_merged[c].values == rows_full[c].values);
  }
  recs.push_back(recs.front());
  CHECK_THROWS_AS(summarize(full, recs), Error);
}

TEST_CASE("replications share seeds across cells") {
  ExperimentConfig c = small_config(Experiment::Mse);
  c.grid = {cell(40, 10), cell(40, 10)};
  const auto recs = run_replications(c);
  for (std::size_t r = 0; r < c.n_reps; ++r) CHECK(recs[r].values == recs[c.n_reps + r].values);
  const ReplicationRecord one = run_replication(c, 1, 3);
  CHECK(one.values == recs[c.n_reps + 3].values);
}

TEST_CASE("table summaries") {
  ExperimentConfig c = small_config(Experiment::KSelect);
  std::vector<ReplicationRecord> recs;
  for (std::size_t r = 0; r < 4; ++r) recs.push_back({0, r, false, {r < 3 ? 2.0 : 1.0, 2.0}});
  recs.push_back({0, 4, true, {}});
  c.n_reps = 5;
  const auto rows = summarize(c, recs);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].n_reps == 4);
  CHECK(rows[0].n_failed == 1);
  CHECK(rows[0].values == std::vector<double>{0.75, 1.0});
  CHECK(rows[1].n_reps == 0);
  CHECK(std::isnan(rows[1].values[0]));

  ExperimentConfig a = small_config(Experiment::AlphaTest);
  const auto arows = summarize(a, {{0, 0, false, {1, 2, 0.5, 0}}, {0, 1, false, {3, 2, 0.05, 1}}});
  CHECK(arows[0].values == std::vector<double>{0.5});
  CHECK_THROWS_AS(summarize(a, {{5, 0, false, {1, 2, 0.5, 0}}}), Error);
  CHECK_THROWS_AS(summarize(a, {{0, 0, false, {1, 2}}}), Error);
}

TEST_CASE("experiment names and columns") {
  for (Experiment e : {Experiment::Mse, Experiment::KSelect, Experiment::AlphaTest,
                       Experiment::LinearityTest})
    CHECK(experiment_from_string(to_string(e)) == e);
  CHECK_THROWS_AS(experiment_from_string("power"), Error);
  CHECK(table_columns(Experiment::Mse) == std::vector<std::string>{"mse_a", "mse_b", "mse_f"});
  CHECK(table_columns(Experiment::KSelect) == std::vector<std::string>{"rate_khat", "rate_ktilde"});
  CHECK(table_columns(Experiment::AlphaTest) == std::vector<std::string>{"rejection_rate"});
}

TEST_CASE("configuration checks") {
  CHECK_THROWS_AS(cell(0, 10).validate(), Error);
  CHECK_THROWS_AS(cell(10, 10, -1.0).validate(), Error);
  CHECK_THROWS_AS(cell(10, 10, 1.0, 0.5, 1.0).validate(), Error);
  ExperimentConfig c = small_config(Experiment::AlphaTest);
  CHECK_NOTHROW(c.validate());
  c.level = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_config(Experiment::Mse);
  c.rep_begin = 12;
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_config(Experiment::Mse);
  c.rep_end = 13;
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_config(Experiment::Mse);
  c.grid.clear();
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK_THROWS_AS(rejection_experiment({cell(50, 10)}, Experiment::Mse, 2), Error);
}

TEST_CASE("failed replications are counted in exploratory runs") {
  // T = 2 cannot support k = 2, which is a numeric failure in every replication.
  ExperimentConfig c = small_config(Experiment::Mse);
  c.grid = {cell(50, 2)};
  c.n_reps = 3;
  CHECK_THROWS_AS(run_replications(c), Error);
  const MseResult m = mse_experiment(cell(50, 2), 3);
  CHECK(m.n_failed == 3);
  CHECK(std::isnan(m.mse_a));
}
