#include "regpca/serialize.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

#include "regpca/error.hpp"

namespace regpca {

namespace {

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

template <class T>
T require(const Json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorKind::Config, std::string("missing field '") + key + "'");
  return j.at(key).get<T>();
}

/// Runs `f`, turning JSON type errors into configuration errors.
template <class F>
auto guarded(const char* what, F&& f) {
  if constexpr (std::is_void_v<decltype(f())>) {
    try {
      f();
    } catch (const Json::exception& e) {
      throw Error(ErrorKind::Config, std::string(what) + ": " + e.what());
    }
  } else {
    try {
      return f();
    } catch (const Json::exception& e) {
      throw Error(ErrorKind::Config, std::string(what) + ": " + e.what());
    }
  }
}

Json vector_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd vector_from(const Json& a) {
  const auto vals = a.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

/// Nonfinite numbers are stored as null; infinity is the only one we produce.
Json number_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

double number_from(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  (void)ec;
  return std::string(buf, ptr);
}

Json to_json(const SieveSpec& spec) {
  Json j;
  j["kind"] = to_string(spec.kind);
  j["n_chars"] = spec.n_chars;
  j["include_intercept"] = spec.include_intercept;
  j["n_internal_knots"] = spec.n_internal_knots;
  Json dom = Json::array();
  for (const auto& d : spec.domain) dom.push_back({d.lo, d.hi});
  j["domain"] = dom;
  return j;
}

SieveSpec sieve_spec_from_json(const Json& j) {
  return guarded("sieve spec", [&] {
    SieveSpec s;
    s.kind = sieve_kind_from_string(require<std::string>(j, "kind"));
    s.n_chars = require<std::size_t>(j, "n_chars");
    s.include_intercept = get_or<bool>(j, "include_intercept", s.kind != SieveKind::Quadratic);
    s.n_internal_knots = get_or<std::size_t>(j, "n_internal_knots", 0);
    if (s.kind != SieveKind::BSplineLinear) s.n_internal_knots = 0;
    if (j.contains("domain")) {
      for (const auto& d : j.at("domain")) {
        const auto pair = d.get<std::vector<double>>();
        if (pair.size() != 2) throw Error(ErrorKind::Config, "domain entries must be [lo, hi]");
        s.domain.push_back({pair[0], pair[1]});
      }
    }
    s.validate();
    return s;
  });
}

Json to_json(const FactorFit& fit) {
  Json j;
  j["k"] = fit.k;
  j["spec"] = to_json(fit.spec);
  j["a_hat"] = vector_json(fit.a_hat);
  Json b = Json::array();
  for (Eigen::Index c = 0; c < fit.b_hat.cols(); ++c) b.push_back(vector_json(fit.b_hat.col(c)));
  j["b_hat"] = b;
  Json f = Json::array();
  for (Eigen::Index t = 0; t < fit.f_hat.rows(); ++t) {
    f.push_back(vector_json(fit.f_hat.row(t).transpose()));
  }
  j["f_hat"] = f;
  j["eigenvalues"] = vector_json(fit.eigenvalues);
  j["near_tie"] = fit.near_tie;
  return j;
}

FactorFit factor_fit_from_json(const Json& j) {
  return guarded("factor fit", [&] {
    FactorFit fit;
    fit.k = require<std::size_t>(j, "k");
    fit.spec = sieve_spec_from_json(j.at("spec"));
    fit.a_hat = vector_from(j.at("a_hat"));
    const auto dim = static_cast<Eigen::Index>(fit.spec.total_dim());
    const auto k = static_cast<Eigen::Index>(fit.k);
    if (fit.a_hat.size() != dim) throw Error(ErrorKind::Config, "a_hat has the wrong length");
    const Json& b = j.at("b_hat");
    if (static_cast<Eigen::Index>(b.size()) != k) {
      throw Error(ErrorKind::Config, "b_hat must have k columns");
    }
    fit.b_hat.resize(dim, k);
    for (Eigen::Index c = 0; c < k; ++c) {
      const Eigen::VectorXd col = vector_from(b.at(static_cast<std::size_t>(c)));
      if (col.size() != dim) throw Error(ErrorKind::Config, "b_hat column has the wrong length");
      fit.b_hat.col(c) = col;
    }
    const Json& f = j.at("f_hat");
    fit.f_hat.resize(static_cast<Eigen::Index>(f.size()), k);
    for (std::size_t t = 0; t < f.size(); ++t) {
      const Eigen::VectorXd row = vector_from(f.at(t));
      if (row.size() != k) throw Error(ErrorKind::Config, "f_hat row has the wrong length");
      fit.f_hat.row(static_cast<Eigen::Index>(t)) = row.transpose();
    }
    fit.eigenvalues = vector_from(j.at("eigenvalues"));
    fit.near_tie = get_or<bool>(j, "near_tie", false);
    return fit;
  });
}

Json to_json(const TestReport& r) {
  Json j;
  j["test"] = r.test;
  j["statistic"] = number_or_null(r.statistic);
  j["critical_value"] = number_or_null(r.critical_value);
  j["p_value"] = r.p_value;
  j["level"] = r.level;
  j["reject"] = r.reject;
  j["n_boot"] = r.n_boot;
  j["seed"] = r.seed;
  Json b = Json::array();
  for (double x : r.boot_stats) b.push_back(number_or_null(x));
  j["boot_stats"] = b;
  return j;
}

TestReport test_report_from_json(const Json& j) {
  return guarded("test report", [&] {
    TestReport r;
    r.test = require<std::string>(j, "test");
    r.statistic = number_from(j.at("statistic"));
    r.critical_value = number_from(j.at("critical_value"));
    r.p_value = require<double>(j, "p_value");
    r.level = require<double>(j, "level");
    r.reject = require<bool>(j, "reject");
    r.n_boot = require<std::size_t>(j, "n_boot");
    r.seed = require<std::uint64_t>(j, "seed");
    for (const auto& x : j.at("boot_stats")) r.boot_stats.push_back(number_from(x));
    return r;
  });
}

Json to_json(const DgpParams& p) {
  Json j;
  j["n"] = p.n;
  j["t"] = p.t;
  j["theta"] = p.theta;
  j["delta"] = p.delta;
  j["rho"] = p.rho;
  j["seed"] = p.seed;
  j["noise_scale"] = p.noise_scale;
  return j;
}

DgpParams dgp_params_from_json(const Json& j) {
  return guarded("dgp params", [&] {
    DgpParams p;
    p.n = get_or<std::size_t>(j, "n", p.n);
    p.t = get_or<std::size_t>(j, "t", p.t);
    p.theta = get_or<double>(j, "theta", p.theta);
    p.delta = get_or<double>(j, "delta", p.delta);
    p.rho = get_or<double>(j, "rho", p.rho);
    p.seed = get_or<std::uint64_t>(j, "seed", p.seed);
    p.noise_scale = get_or<double>(j, "noise_scale", p.noise_scale);
    p.validate();
    return p;
  });
}

Json to_json(const ExperimentConfig& c) {
  Json j;
  j["experiment"] = to_string(c.experiment);
  Json grid = Json::array();
  for (const auto& cell : c.grid) {
    Json g = to_json(cell);
    g.erase("seed");
    grid.push_back(g);
  }
  j["grid"] = grid;
  j["reps"] = c.n_reps;
  j["rep_begin"] = c.rep_begin;
  j["rep_end"] = c.effective_rep_end();
  j["k"] = c.k;
  j["boot"] = c.n_boot;
  j["level"] = c.level;
  j["seed"] = c.seed;
  return j;
}

ExperimentConfig experiment_config_from_json(const Json& j) {
  return guarded("experiment config", [&] {
    ExperimentConfig c;
    c.experiment = experiment_from_string(require<std::string>(j, "experiment"));
    for (const auto& cell : j.at("grid")) c.grid.push_back(dgp_params_from_json(cell));
    c.n_reps = require<std::size_t>(j, "reps");
    c.rep_begin = get_or<std::size_t>(j, "rep_begin", 0);
    c.rep_end = get_or<std::size_t>(j, "rep_end", 0);
    c.k = get_or<std::size_t>(j, "k", c.k);
    c.n_boot = get_or<std::size_t>(j, "boot", c.n_boot);
    c.level = get_or<double>(j, "level", c.level);
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
    c.validate();
    return c;
  });
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::Config, path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

}  // namespace regpca
