#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "regpca/error.hpp"
#include "regpca/sieve.hpp"

using namespace regpca;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

}  // namespace

TEST_CASE("linear basis") {
  const auto phi = eval_basis(SieveSpec::linear(2), vec({0.1, -0.2}));
  CHECK(phi == vec({1.0, 0.1, -0.2}));
  CHECK(eval_basis(SieveSpec::linear(2, false), vec({0.1, -0.2})) == vec({0.1, -0.2}));
}

TEST_CASE("quadratic basis") {
  const auto phi = eval_basis(SieveSpec::quadratic(2), vec({0.5, -3.0}));
  CHECK(phi == vec({0.5, 0.25, -3.0, 9.0}));
  CHECK(SieveSpec::quadratic(3).total_dim() == 6);
}

TEST_CASE("bspline values at knots") {
  const SieveSpec s = SieveSpec::bspline(1, 1, false);
  REQUIRE(s.per_char_dim() == 2);
  CHECK(eval_basis(s, vec({-0.5})) == vec({0.0, 0.0}));
  CHECK(eval_basis(s, vec({0.0})) == vec({1.0, 0.0}));
  CHECK(eval_basis(s, vec({0.5})) == vec({0.0, 1.0}));
  CHECK(eval_basis(s, vec({0.25})) == vec({0.5, 0.5}));
}

TEST_CASE("bspline clamps outside the domain") {
  const SieveSpec s = SieveSpec::bspline(1, 2);
  CHECK(eval_basis(s, vec({3.0})) == eval_basis(s, vec({0.5})));
  CHECK(eval_basis(s, vec({-7.0})) == eval_basis(s, vec({-0.5})));
}

TEST_CASE("bspline on a custom domain") {
  SieveSpec s = SieveSpec::bspline(1, 1, false);
  s.domain = {{0.0, 4.0}};
  CHECK(eval_basis(s, vec({2.0})) == vec({1.0, 0.0}));
  CHECK(eval_basis(s, vec({3.0})) == vec({0.5, 0.5}));
  CHECK(eval_basis(s, vec({1.0}))(0) == doctest::Approx(0.5));
}

TEST_CASE("bspline matches the tent formula") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.7, 0.7);
  for (std::size_t knots = 0; knots <= 4; ++knots) {
    const SieveSpec s = SieveSpec::bspline(2, knots);
    for (int rep = 0; rep < 200; ++rep) {
      const oracle::Vec z{u(rng), u(rng)};
      const auto got = eval_basis(s, Eigen::Map<const Eigen::VectorXd>(z.data(), 2));
      const auto want = oracle::basis(s, z);
      REQUIRE(static_cast<std::size_t>(got.size()) == want.size());
      for (std::size_t j = 0; j < want.size(); ++j) CHECK(got(j) == doctest::Approx(want[j]).epsilon(1e-14));
    }
  }
}

TEST_CASE("bspline pieces lie in [0,1] and are continuous inside pieces") {
  const Interval dom{-0.5, 0.5};
  for (std::size_t knots = 0; knots <= 3; ++knots) {
    const std::size_t J = knots + 1;
    std::vector<double> a(J), b(J);
    for (int step = 1; step < 2000; ++step) {
      const double z = -0.5 + step / 2000.0;
      bspline_values(z, dom, knots, a.data());
      bspline_values(z + 1e-9, dom, knots, b.data());
      for (std::size_t j = 0; j < J; ++j) {
        CHECK(a[j] >= 0.0);
        CHECK(a[j] <= 1.0);
        CHECK(std::abs(a[j] - b[j]) < 1e-6);
      }
    }
  }
}

TEST_CASE("dimensions and validation") {
  CHECK(SieveSpec::linear(3).total_dim() == 4);
  CHECK(SieveSpec::bspline(2, 2).total_dim() == 7);
  CHECK(SieveSpec::bspline(2, 2, false).per_char_dim() == 3);
  SieveSpec bad = SieveSpec::linear(2);
  bad.domain = {{0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = SieveSpec::bspline(1, 1);
  bad.domain = {{1.0, 1.0}};
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK_THROWS_AS(eval_basis(SieveSpec::linear(2), vec({1.0})), Error);
  CHECK_THROWS_AS(sieve_kind_from_string("cubic"), Error);
}

TEST_CASE("linear counterpart") {
  const SieveSpec a = linear_counterpart(SieveSpec::bspline(3, 1));
  CHECK(a.kind == SieveKind::Linear);
  CHECK(a.total_dim() == 4);
  const SieveSpec b = linear_counterpart(SieveSpec::quadratic(3));
  CHECK(b.total_dim() == 3);
  CHECK_FALSE(b.include_intercept);
}

TEST_CASE("design matrix") {
  std::vector<Eigen::VectorXd> y{Eigen::Vector3d(1, 2, 3)};
  std::vector<Eigen::MatrixXd> z{Eigen::Vector3d(0.1, 0.2, 0.3)};
  std::vector<Mask> m{Mask::Constant(3, true)};
  Panel p = make_panel(y, z, m);
  const SieveSpec s = SieveSpec::linear(1);

  const Eigen::MatrixXd full = design_matrix(s, p, 0);
  CHECK(full.rows() == 3);
  CHECK(full.cols() == 2);
  CHECK((full.col(0).array() == 1.0).all());
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(full.row(i).transpose() == eval_basis(s, z[0].row(i).transpose()));

  m[0](1) = false;
  p = make_panel(y, z, m);
  const Eigen::MatrixXd masked = design_matrix(s, p, 0);
  CHECK(masked.row(1).isZero());
  Eigen::MatrixXd kept(2, 2);
  kept << 1, 0.1, 1, 0.3;
  CHECK((masked.transpose() * masked - kept.transpose() * kept).norm() < 1e-15);
}

TEST_CASE("ranked linear design columns sum to zero") {
  std::mt19937_64 rng(5);
  const Panel p = rank_transform(testing::random_panel(rng, 9, 2, 2));
  const Eigen::MatrixXd d = design_matrix(SieveSpec::linear(2), p, 1);
  CHECK(std::abs(d.col(1).sum()) < 1e-12);
  CHECK(std::abs(d.col(2).sum()) < 1e-12);
}
