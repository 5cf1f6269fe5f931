#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "regpca/error.hpp"
#include "regpca/panel.hpp"

using namespace regpca;
namespace fs = std::filesystem;

namespace {

fs::path write_tmp(const std::string& name, const std::string& body) {
  const fs::path p = fs::temp_directory_path() / ("regpca_panel_" + name);
  std::ofstream(p) << body;
  return p;
}

const char* kBalanced =
    "period,asset_id,return,size\n"
    "1,a,0.1,1.0\n1,b,0.2,2.0\n1,c,0.3,3.0\n"
    "2,a,0.4,4.0\n2,b,0.5,5.0\n2,c,0.6,6.0\n";

Panel one_char_panel(const std::vector<std::vector<double>>& z) {
  std::vector<Eigen::VectorXd> y;
  std::vector<Eigen::MatrixXd> c;
  std::vector<Mask> m;
  std::size_t n = 0;
  for (const auto& col : z) n = std::max(n, col.size());
  for (const auto& col : z) {
    Eigen::MatrixXd zt = Eigen::MatrixXd::Zero(n, 1);
    Mask mt = Mask::Constant(n, false);
    for (std::size_t i = 0; i < col.size(); ++i) {
      zt(i, 0) = col[i];
      mt(i) = true;
    }
    y.push_back(Eigen::VectorXd::Ones(n).cwiseProduct(mt.cast<double>().matrix()));
    c.push_back(zt);
    m.push_back(mt);
  }
  return make_panel(y, c, m);
}

Panel counts_panel(const std::vector<std::size_t>& counts) {
  std::vector<std::vector<double>> z;
  for (auto c : counts) {
    std::vector<double> col(c);
    for (std::size_t i = 0; i < c; ++i) col[i] = static_cast<double>(i);
    z.push_back(col);
  }
  return one_char_panel(z);
}

}  // namespace

TEST_CASE("load_csv balanced") {
  const Panel p = load_csv(write_tmp("bal.csv", kBalanced));
  CHECK(p.n_periods == 2);
  CHECK(p.n_assets == 3);
  CHECK(p.n_chars == 1);
  CHECK(p.n_observed(0) == 3);
  CHECK(p.n_observed(1) == 3);
  CHECK(p.returns[1](2) == doctest::Approx(0.6));
  CHECK(p.characteristics[0](1, 0) == 2.0);
  CHECK(p.asset_ids == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("load_csv missing row is masked and zero-filled") {
  const Panel p = load_csv(write_tmp("miss.csv",
                                     "period,asset_id,return,size\n"
                                     "1,a,0.1,1.0\n1,b,0.2,2.0\n1,c,0.3,3.0\n"
                                     "2,a,0.4,4.0\n2,b,0.5,5.0\n"));
  CHECK_FALSE(p.mask[1](2));
  CHECK(p.n_observed(1) == 2);
  CHECK(p.returns[1](2) == 0.0);
  CHECK(p.characteristics[1](2, 0) == 0.0);
}

TEST_CASE("load_csv incomplete row counts as missing") {
  const Panel p = load_csv(write_tmp("blank.csv",
                                     "period,asset_id,return,size\n"
                                     "1,a,0.1,1.0\n1,b,,2.0\n"
                                     "2,a,0.4,4.0\n2,b,0.5,\n2,c,0.5,1\n"));
  CHECK_FALSE(p.mask[0](1));
  CHECK_FALSE(p.mask[1](1));
  CHECK(p.n_observed(1) == 2);
}

TEST_CASE("load_csv rejects duplicates, bad cells and missing columns") {
  auto kind_of = [](const fs::path& path) {
    try {
      load_csv(path);
    } catch (const Error& e) {
      return e.kind();
    }
    FAIL("no error");
    return ErrorKind::Numeric;
  };
  CHECK(kind_of(write_tmp("dup.csv", "period,asset_id,return,x\n0,0,1,1\n0,0,2,2\n")) ==
        ErrorKind::Data);
  CHECK(kind_of(write_tmp("nan.csv", "period,asset_id,return,x\n0,0,abc,1\n")) ==
        ErrorKind::Data);
  CHECK(kind_of(write_tmp("col.csv", "period,asset,return,x\n0,0,1,1\n")) == ErrorKind::Data);
  CHECK(kind_of(write_tmp("empty_t.csv", "period,asset_id,return,x\n0,0,1,1\n1,0,,1\n")) ==
        ErrorKind::Data);
  CHECK(kind_of("/nonexistent/regpca.csv") == ErrorKind::Io);
}

TEST_CASE("load_csv honours a column mapping") {
  CsvSchema schema;
  schema.period_column = "date";
  schema.asset_column = "permno";
  schema.return_column = "ret";
  schema.char_columns = {"bm"};
  const Panel p = load_csv(write_tmp("map.csv",
                                     "date,permno,ret,size,bm\n"
                                     "1,x,0.1,9,0.5\n1,y,0.2,9,0.7\n"),
                           schema);
  CHECK(p.n_chars == 1);
  CHECK(p.characteristics[0](1, 0) == doctest::Approx(0.7));
}

TEST_CASE("csv round trip is exact") {
  std::mt19937_64 rng(7);
  const Panel p = testing::random_panel(rng, 9, 4, 2, 0.2, 3);
  const fs::path path = fs::temp_directory_path() / "regpca_panel_rt.csv";
  write_csv(p, path);
  const Panel q = load_csv(path);
  REQUIRE(q.n_periods == p.n_periods);
  REQUIRE(q.n_chars == p.n_chars);
  for (std::size_t t = 0; t < p.n_periods; ++t) {
    // Assets never observed in the first periods are appended later on
    // reload, so compare by label.
    for (std::size_t i = 0; i < p.n_assets; ++i) {
      const auto it = std::find(q.asset_ids.begin(), q.asset_ids.end(), p.asset_ids[i]);
      if (it == q.asset_ids.end()) {
        bool any = false;
        for (std::size_t s = 0; s < p.n_periods; ++s) any = any || p.mask[s](i);
        CHECK_FALSE(any);
        continue;
      }
      const auto j = static_cast<Eigen::Index>(it - q.asset_ids.begin());
      CHECK(q.mask[t](j) == p.mask[t](i));
      CHECK(q.returns[t](j) == p.returns[t](i));
      CHECK((q.characteristics[t].row(j).array() == p.characteristics[t].row(i).array()).all());
    }
  }
}

TEST_CASE("rank_transform examples") {
  SUBCASE("distinct") {
    const Panel r = rank_transform(one_char_panel({{3.0, 1.0, 2.0}}));
    CHECK(r.characteristics[0](0, 0) == 0.5);
    CHECK(r.characteristics[0](1, 0) == -0.5);
    CHECK(r.characteristics[0](2, 0) == 0.0);
  }
  SUBCASE("full tie") {
    const Panel r = rank_transform(one_char_panel({{5.0, 5.0}}));
    CHECK(r.characteristics[0](0, 0) == 0.0);
    CHECK(r.characteristics[0](1, 0) == 0.0);
  }
  SUBCASE("partial tie") {
    const Panel r = rank_transform(one_char_panel({{10, 20, 20, 40}}));
    CHECK(r.characteristics[0](0, 0) == -0.5);
    CHECK(r.characteristics[0](1, 0) == 0.0);
    CHECK(r.characteristics[0](2, 0) == 0.0);
    CHECK(r.characteristics[0](3, 0) == 0.5);
  }
  SUBCASE("single observation") {
    const Panel r = rank_transform(one_char_panel({{4.0, 1.0}, {7.0}}));
    CHECK(r.characteristics[1](0, 0) == 0.0);
    CHECK(r.characteristics[1](1, 0) == 0.0);
    CHECK_FALSE(r.mask[1](1));
  }
}

TEST_CASE("rank_transform properties") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const Panel p = testing::random_panel(rng, 10, 3, 2, 0.3, 2);
    const Panel r = rank_transform(p);
    CHECK_NOTHROW(r.validate());
    for (std::size_t t = 0; t < p.n_periods; ++t) {
      CHECK(r.returns[t] == p.returns[t]);
      CHECK((r.mask[t] == p.mask[t]).all());
      CHECK(r.characteristics[t].maxCoeff() <= 0.5);
      CHECK(r.characteristics[t].minCoeff() >= -0.5);
    }
    const Panel twice = rank_transform(r);
    Panel monotone = p;
    for (auto& z : monotone.characteristics) z = z.array().exp().matrix();
    for (std::size_t t = 0; t < p.n_periods; ++t)
      for (std::size_t i = 0; i < p.n_assets; ++i)
        if (!p.mask[t](i)) monotone.characteristics[t].row(i).setZero();
    const Panel rm = rank_transform(monotone);
    for (std::size_t t = 0; t < p.n_periods; ++t) {
      CHECK(twice.characteristics[t] == r.characteristics[t]);
      CHECK(rm.characteristics[t] == r.characteristics[t]);
    }
  }
}

TEST_CASE("filter_min_cross_section") {
  SUBCASE("prefix drop") {
    const Panel f = filter_min_cross_section(counts_panel({5, 12, 13, 14}), 10);
    CHECK(f.n_periods == 3);
    CHECK(f.period_labels == std::vector<std::string>{"1", "2", "3"});
    CHECK(f.n_observed(0) == 12);
  }
  SUBCASE("identity") {
    const Panel f = filter_min_cross_section(counts_panel({12, 13}), 10);
    CHECK(f.n_periods == 2);
  }
  SUBCASE("gap") {
    CHECK_THROWS_AS(filter_min_cross_section(counts_panel({12, 5, 13}), 10), Error);
  }
  SUBCASE("none") {
    CHECK_THROWS_AS(filter_min_cross_section(counts_panel({2, 3}), 10), Error);
  }
}

TEST_CASE("make_panel validates") {
  std::vector<Eigen::VectorXd> y{Eigen::VectorXd::Ones(2)};
  std::vector<Eigen::MatrixXd> z{Eigen::MatrixXd::Ones(2, 1)};
  std::vector<Mask> m{Mask::Constant(2, false)};
  CHECK_THROWS_AS(make_panel(y, z, m), Error);
  m[0](0) = true;
  const Panel p = make_panel(y, z, m);
  CHECK(p.returns[0](1) == 0.0);
  CHECK(p.characteristics[0](1, 0) == 0.0);
  Panel bad = p;
  bad.returns[0](1) = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}
