#include "cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "regpca/error.hpp"
#include "regpca/estimator.hpp"
#include "regpca/evaluation.hpp"
#include "regpca/inference.hpp"
#include "regpca/montecarlo.hpp"
#include "regpca/panel.hpp"
#include "regpca/parallel.hpp"
#include "regpca/serialize.hpp"
#include "regpca/sieve.hpp"

#ifndef REGPCA_VERSION
#define REGPCA_VERSION "0.0.0"
#endif

namespace regpca::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string input;
  std::string spec = "linear";
  std::string k = "auto:ratio";
  std::size_t n_boot = 499;
  double level = 0.05;
  std::size_t t0 = 0;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string out;
  bool rank = false;
};

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned i = 0; i < len; ++i) {
    s += hex[md[i] >> 4];
    s += hex[md[i] & 15];
  }
  return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  return parts;
}

std::size_t parse_count(const std::string& s, const std::string& what) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw Error(ErrorKind::Config, what + ": expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

/// linear | bspline:<knots> | quadratic, optionally followed by
/// ":intercept" or ":nointercept"; anything ending in .json is a file.
SieveSpec parse_spec(const std::string& text, std::size_t n_chars) {
  SieveSpec spec;
  if (text.size() > 5 && text.substr(text.size() - 5) == ".json") {
    spec = sieve_spec_from_json(read_json_file(text));
    if (spec.n_chars != n_chars) {
      throw Error(ErrorKind::Config, "sieve file expects " + std::to_string(spec.n_chars) +
                                         " characteristics, panel has " + std::to_string(n_chars));
    }
    return spec;
  }
  auto parts = split(text, ':');
  if (parts.empty()) throw Error(ErrorKind::Config, "empty --spec");
  std::optional<bool> intercept;
  if (parts.size() > 1 && (parts.back() == "intercept" || parts.back() == "nointercept")) {
    intercept = parts.back() == "intercept";
    parts.pop_back();
  }
  const SieveKind kind = sieve_kind_from_string(parts[0]);
  if (kind == SieveKind::BSplineLinear) {
    if (parts.size() != 2) throw Error(ErrorKind::Config, "--spec bspline needs a knot count, e.g. bspline:3");
    spec = SieveSpec::bspline(n_chars, parse_count(parts[1], "--spec knots"));
  } else {
    if (parts.size() != 1) throw Error(ErrorKind::Config, "unexpected arguments in --spec '" + text + "'");
    spec = kind == SieveKind::Linear ? SieveSpec::linear(n_chars) : SieveSpec::quadratic(n_chars);
  }
  if (intercept) spec.include_intercept = *intercept;
  spec.validate();
  return spec;
}

struct KChoice {
  std::size_t k = 0;
  std::string selector = "fixed";
  double lambda = 0.0;
};

/// <integer> | auto | auto:ratio | auto:threshold | auto:threshold=<lambda>
KChoice resolve_k(const std::string& text, const ManagedPanel& managed) {
  KChoice c;
  if (text.rfind("auto", 0) != 0) {
    c.k = parse_count(text, "--k");
    if (c.k == 0) throw Error(ErrorKind::Config, "--k must be positive");
    return c;
  }
  std::string method = text == "auto" ? "ratio" : text.substr(0, 5) == "auto:" ? text.substr(5) : "";
  const Eigen::VectorXd eigs = managed_eigenvalues(managed);
  if (method == "ratio") {
    c.selector = "ratio";
    c.k = select_k_ratio(eigs);
  } else if (method.rfind("threshold", 0) == 0) {
    c.selector = "threshold";
    c.lambda = 1.0 / std::log(managed.nbar);
    if (method.size() > 9) {
      if (method[9] != '=') throw Error(ErrorKind::Config, "bad --k '" + text + "'");
      try {
        c.lambda = std::stod(method.substr(10));
      } catch (const std::exception&) {
        throw Error(ErrorKind::Config, "bad threshold in --k '" + text + "'");
      }
    }
    c.k = select_k_threshold(eigs, c.lambda);
    if (c.k == 0) {
      throw Error(ErrorKind::Numeric, "threshold selector found no eigenvalue above " +
                                          format_double(c.lambda));
    }
  } else {
    throw Error(ErrorKind::Config, "bad --k '" + text + "' (expected an integer or auto:ratio|threshold)");
  }
  return c;
}

std::vector<std::string> basis_names(const SieveSpec& spec, const std::vector<std::string>& chars) {
  std::vector<std::string> names;
  if (spec.include_intercept) names.push_back("const");
  for (std::size_t m = 0; m < spec.n_chars; ++m) {
    const std::string c = m < chars.size() ? chars[m] : "z" + std::to_string(m + 1);
    switch (spec.kind) {
      case SieveKind::Linear: names.push_back(c); break;
      case SieveKind::Quadratic:
        names.push_back(c);
        names.push_back(c + "_sq");
        break;
      case SieveKind::BSplineLinear:
        for (std::size_t j = 1; j <= spec.per_char_dim(); ++j) names.push_back(c + "_b" + std::to_string(j));
        break;
    }
  }
  return names;
}

class CsvWriter {
 public:
  explicit CsvWriter(const fs::path& path) : path_(path), out_(path) {
    if (!out_) throw Error(ErrorKind::Io, "cannot write " + path.string());
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }
  ~CsvWriter() = default;
  void close() {
    out_.close();
    if (!out_) throw Error(ErrorKind::Io, "failed writing " + path_.string());
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

void prepare_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorKind::Io, "cannot create output directory " + dir);
}

class Manifest {
 public:
  Manifest(std::string command, const std::vector<std::string>& args)
      : start_(std::chrono::steady_clock::now()) {
    j_["command"] = std::move(command);
    j_["version"] = REGPCA_VERSION;
    j_["args"] = args;
    j_["config"] = Json::object();
    j_["inputs"] = Json::array();
    j_["outputs"] = Json::array();
  }
  Json& config() { return j_["config"]; }
  void seed(std::uint64_t s) { j_["seed"] = s; }
  void input(const fs::path& p) { j_["inputs"].push_back({{"path", p.string()}, {"sha256", sha256_file(p)}}); }
  void output(const std::string& name) { j_["outputs"].push_back(name); }
  void write(const fs::path& dir) {
    j_["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_json_file(dir / "manifest.json", j_);
  }

 private:
  Json j_;
  std::chrono::steady_clock::time_point start_;
};

struct LoadedInput {
  Panel panel;
  SieveSpec spec;
};

LoadedInput load_input(const Common& c, Manifest& manifest) {
  if (c.input.empty()) throw Error(ErrorKind::Config, "--input is required");
  LoadedInput in;
  in.panel = load_csv(c.input);
  manifest.input(c.input);
  if (c.rank) in.panel = rank_transform(in.panel);
  in.spec = parse_spec(c.spec, in.panel.n_chars);
  if (c.spec.size() > 5 && c.spec.substr(c.spec.size() - 5) == ".json") manifest.input(c.spec);
  return in;
}

void echo_common(const Common& c, Json& cfg) {
  cfg["input"] = c.input;
  cfg["spec"] = c.spec;
  cfg["k"] = c.k;
  cfg["rank_transform"] = c.rank;
  cfg["out"] = c.out;
}

void add_data_options(CLI::App* app, Common& c) {
  app->add_option("--input", c.input, "Panel CSV (period, asset_id, return, characteristics)")->required();
  app->add_option("--spec", c.spec, "linear | bspline:<knots> | quadratic [:intercept|:nointercept] | file.json");
  app->add_option("--k", c.k, "Number of factors or auto:ratio | auto:threshold[=lambda]");
  app->add_flag("--rank-transform", c.rank, "Map characteristics to cross-sectional ranks in [-0.5, 0.5]");
  app->add_option("--out", c.out, "Output directory")->required();
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const DgpParams& params, const std::string& out, const std::vector<std::string>& args,
                 std::ostream& log) {
  Manifest manifest("simulate", args);
  manifest.config() = to_json(params);
  manifest.config()["out"] = out;
  manifest.seed(params.seed);
  const SimDraw draw = simulate(params);
  prepare_out(out);
  CsvSchema schema;
  write_csv(draw.panel, fs::path(out) / "panel.csv", schema);
  Json truth;
  truth["params"] = to_json(params);
  truth["basis"] = basis_names(oracle_spec(), draw.panel.char_names);
  truth["a_true"] = std::vector<double>(draw.a_true.data(), draw.a_true.data() + draw.a_true.size());
  Json b = Json::array();
  for (Eigen::Index c = 0; c < draw.b_true.cols(); ++c) {
    const Eigen::VectorXd col = draw.b_true.col(c);
    b.push_back(std::vector<double>(col.data(), col.data() + col.size()));
  }
  truth["b_true"] = b;
  Json f = Json::array();
  for (Eigen::Index t = 0; t < draw.f_true.rows(); ++t) f.push_back({draw.f_true(t, 0), draw.f_true(t, 1)});
  truth["f_true"] = f;
  write_json_file(fs::path(out) / "truth.json", truth);
  manifest.output("panel.csv");
  manifest.output("truth.json");
  manifest.write(out);
  log << "simulated " << params.n << " assets x " << params.t << " periods -> " << out << '\n';
  return kExitOk;
}

// --------------------------------------------------------------------- fit

int cmd_fit(const Common& c, const std::vector<std::string>& args, std::ostream& log) {
  Manifest manifest("fit", args);
  echo_common(c, manifest.config());
  const LoadedInput in = load_input(c, manifest);
  const ManagedPanel managed = first_stage(in.panel, in.spec);
  const KChoice k = resolve_k(c.k, managed);
  const FactorFit est = fit(managed, k.k);
  prepare_out(c.out);
  const fs::path dir(c.out);
  write_json_file(dir / "fit.json", to_json(est));

  CsvWriter eig(dir / "eigenvalues.csv");
  eig.row({"index", "eigenvalue"});
  for (Eigen::Index i = 0; i < est.eigenvalues.size(); ++i) {
    eig.row({std::to_string(i + 1), format_double(est.eigenvalues(i))});
  }
  eig.close();

  CsvWriter mp(dir / "managed_panel.csv");
  std::vector<std::string> header{"period"};
  for (auto& n : basis_names(in.spec, in.panel.char_names)) header.push_back(n);
  mp.row(header);
  for (std::size_t t = 0; t < managed.n_periods(); ++t) {
    std::vector<std::string> cells{in.panel.period_labels[t]};
    for (Eigen::Index r = 0; r < managed.ytilde.rows(); ++r) {
      cells.push_back(format_double(managed.ytilde(r, static_cast<Eigen::Index>(t))));
    }
    mp.row(cells);
  }
  mp.close();

  manifest.config()["resolved_k"] = {{"k", k.k}, {"selector", k.selector}};
  if (k.selector == "threshold") manifest.config()["resolved_k"]["lambda"] = k.lambda;
  manifest.config()["sieve"] = to_json(in.spec);
  for (const char* name : {"fit.json", "eigenvalues.csv", "managed_panel.csv"}) manifest.output(name);
  manifest.write(dir);
  log << "fit: k = " << k.k << " (" << k.selector << "), dim = " << in.spec.total_dim() << '\n';
  if (est.near_tie) log << "warning: eigenvalues " << k.k << " and " << k.k + 1 << " nearly tie\n";
  return kExitOk;
}

// -------------------------------------------------------------------- test

struct TestArgs {
  std::string which;
  std::string rows;
  std::string target = "alpha";
};

int cmd_test(const Common& c, const TestArgs& t, const std::vector<std::string>& args,
             std::ostream& log) {
  BootstrapOptions opt{c.n_boot, c.level, c.seed, c.threads};
  opt.validate();
  Manifest manifest("test", args);
  echo_common(c, manifest.config());
  manifest.config()["test"] = t.which;
  manifest.config()["boot"] = c.n_boot;
  manifest.config()["level"] = c.level;
  manifest.config()["seed"] = c.seed;
  manifest.seed(c.seed);
  const LoadedInput in = load_input(c, manifest);
  const ManagedPanel managed = first_stage(in.panel, in.spec);
  const KChoice k = resolve_k(c.k, managed);
  const FactorFit est = fit(managed, k.k);
  TestReport report;
  if (t.which == "alpha") {
    report = alpha_test(in.panel, in.spec, est, opt);
  } else if (t.which == "linearity") {
    report = linearity_test(in.panel, in.spec, est, opt);
  } else {
    CoefficientSelection sel;
    if (t.target == "beta") {
      sel.target = CoefficientTarget::BetaRows;
    } else if (t.target != "alpha") {
      throw Error(ErrorKind::Config, "--target must be alpha or beta");
    }
    if (t.rows.empty()) throw Error(ErrorKind::Config, "coef test needs --rows, e.g. --rows 1,2");
    for (const auto& r : split(t.rows, ',')) sel.rows.push_back(parse_count(r, "--rows"));
    manifest.config()["rows"] = sel.rows;
    manifest.config()["target"] = t.target;
    report = coefficient_test(in.panel, in.spec, est, sel, opt);
  }
  prepare_out(c.out);
  write_json_file(fs::path(c.out) / "test_report.json", to_json(report));
  manifest.config()["resolved_k"] = {{"k", k.k}, {"selector", k.selector}};
  manifest.output("test_report.json");
  manifest.write(c.out);
  log << report.test << ": statistic = " << format_double(report.statistic)
      << ", p = " << format_double(report.p_value) << ", reject = " << (report.reject ? "yes" : "no")
      << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- evaluate

void write_series(const fs::path& path, const std::vector<std::string>& labels,
                  const std::vector<double>& values) {
  CsvWriter w(path);
  w.row({"period", "value"});
  for (std::size_t i = 0; i < values.size(); ++i) w.row({labels[i], format_double(values[i])});
  w.close();
}

int cmd_evaluate(const Common& c, double periods_per_year, const std::vector<std::string>& args,
                 std::ostream& log) {
  Manifest manifest("evaluate", args);
  echo_common(c, manifest.config());
  manifest.config()["t0"] = c.t0;
  manifest.config()["periods_per_year"] = periods_per_year;
  const LoadedInput in = load_input(c, manifest);
  const ManagedPanel managed = first_stage(in.panel, in.spec);
  const KChoice k = resolve_k(c.k, managed);
  const FactorFit est = fit(managed, k.k);
  prepare_out(c.out);
  const fs::path dir(c.out);

  Json metrics;
  metrics["k"] = k.k;
  const R2Suite r2 = r2_insample(in.panel, est);
  metrics["r2_total"] = r2.r2_total;
  metrics["r2_tn"] = r2.r2_tn;
  metrics["r2_nt"] = r2.r2_nt;
  metrics["r2_total_factors"] = r2.r2f_total;
  metrics["r2_tn_factors"] = r2.r2f_tn;
  metrics["r2_nt_factors"] = r2.r2f_nt;

  std::vector<std::string> outputs;
  if (c.t0 > 0) {
    auto label = [&](const std::vector<std::size_t>& idx) {
      std::vector<std::string> l;
      for (auto t : idx) l.push_back(in.panel.period_labels[t]);
      return l;
    };
    const R2Triple pred = oos_predict(in.panel, in.spec, k.k, c.t0);
    metrics["oos_pred_r2_total"] = pred.total;
    metrics["oos_pred_r2_tn"] = pred.tn;
    metrics["oos_pred_r2_nt"] = pred.nt;
    const OosFactors of = oos_factor_fit(in.panel, in.spec, k.k, c.t0);
    metrics["oos_factor_r2_total"] = of.r2.total;
    metrics["oos_factor_r2_tn"] = of.r2.tn;
    metrics["oos_factor_r2_nt"] = of.r2.nt;
    {
      CsvWriter w(dir / "oos_factors.csv");
      std::vector<std::string> header{"period"};
      for (std::size_t j = 1; j <= k.k; ++j) header.push_back("f" + std::to_string(j));
      w.row(header);
      const auto labels = label(of.periods);
      for (Eigen::Index r = 0; r < of.factors.rows(); ++r) {
        std::vector<std::string> cells{labels[static_cast<std::size_t>(r)]};
        for (Eigen::Index j = 0; j < of.factors.cols(); ++j) cells.push_back(format_double(of.factors(r, j)));
        w.row(cells);
      }
      w.close();
      outputs.push_back("oos_factors.csv");
    }
    const PortfolioSeries arb = arbitrage_portfolio(in.panel, in.spec, k.k, c.t0, periods_per_year);
    metrics["arbitrage_ann_mean"] = arb.ann_mean;
    metrics["arbitrage_ann_std"] = arb.ann_std;
    metrics["arbitrage_sharpe"] = arb.sharpe;
    write_series(dir / "arbitrage.csv", label(arb.periods), arb.returns);
    outputs.push_back("arbitrage.csv");
    if (static_cast<std::size_t>(of.factors.rows()) > k.k + 2) {
      const PortfolioSeries mve = mve_portfolio(of.factors, periods_per_year);
      metrics["mve_ann_mean"] = mve.ann_mean;
      metrics["mve_ann_std"] = mve.ann_std;
      metrics["mve_sharpe"] = mve.sharpe;
      std::vector<std::size_t> idx;
      for (auto s : mve.periods) idx.push_back(of.periods[s]);
      write_series(dir / "mve.csv", label(idx), mve.returns);
      outputs.push_back("mve.csv");
    } else {
      log << "warning: too few out-of-sample periods for the MVE portfolio; skipped\n";
    }
  }
  write_json_file(dir / "metrics.json", metrics);
  CsvWriter w(dir / "metrics.csv");
  w.row({"metric", "value"});
  for (auto it = metrics.begin(); it != metrics.end(); ++it) {
    w.row({it.key(), it.value().is_number_float() ? format_double(it.value().get<double>())
                                                  : it.value().dump()});
  }
  w.close();
  manifest.config()["resolved_k"] = {{"k", k.k}, {"selector", k.selector}};
  manifest.output("metrics.json");
  manifest.output("metrics.csv");
  for (auto& o : outputs) manifest.output(o);
  manifest.write(dir);
  log << "evaluate: R2 total = " << format_double(r2.r2_total) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- mc-table

void write_replications(const fs::path& path, const ExperimentConfig& cfg,
                        const std::vector<ReplicationRecord>& recs) {
  CsvWriter w(path);
  std::vector<std::string> header{"cell", "rep", "failed"};
  for (auto& col : replication_columns(cfg.experiment)) header.push_back(col);
  w.row(header);
  for (const auto& r : recs) {
    std::vector<std::string> cells{std::to_string(r.cell), std::to_string(r.rep), r.failed ? "1" : "0"};
    for (double v : r.values) cells.push_back(r.failed ? "" : format_double(v));
    w.row(cells);
  }
  w.close();
}

std::vector<ReplicationRecord> read_replications(const fs::path& path, const ExperimentConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::string> expected{"cell", "rep", "failed"};
  for (auto& col : replication_columns(cfg.experiment)) expected.push_back(col);
  if (split(line, ',') != expected) {
    throw Error(ErrorKind::Data, path.string() + ": header does not match the '" +
                                     to_string(cfg.experiment) + "' experiment");
  }
  std::vector<ReplicationRecord> recs;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = split(line, ',');
    while (cells.size() < expected.size()) cells.emplace_back();
    if (cells.size() != expected.size()) {
      throw Error(ErrorKind::Data, path.string() + ":" + std::to_string(lineno) + ": wrong field count");
    }
    ReplicationRecord r;
    r.cell = parse_count(cells[0], "cell");
    r.rep = parse_count(cells[1], "rep");
    r.failed = cells[2] == "1";
    for (std::size_t j = 3; j < cells.size(); ++j) {
      if (r.failed) {
        r.values.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      double v = 0.0;
      const auto& s = cells[j];
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size()) {
        if (s == "inf") {
          v = std::numeric_limits<double>::infinity();
        } else {
          throw Error(ErrorKind::Data, path.string() + ":" + std::to_string(lineno) + ": bad number '" + s + "'");
        }
      }
      r.values.push_back(v);
    }
    recs.push_back(std::move(r));
  }
  return recs;
}

struct McArgs {
  std::string config;
  std::optional<std::size_t> reps, rep_begin, rep_end, boot;
  std::optional<double> level;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> merge;
};

int cmd_mc_table(const McArgs& a, unsigned threads, const std::string& out,
                 const std::vector<std::string>& args, std::ostream& log) {
  Manifest manifest("mc-table", args);
  ExperimentConfig cfg;
  {
    Json j = read_json_file(a.config);
    manifest.input(a.config);
    if (a.reps) j["reps"] = *a.reps;
    if (a.rep_begin) j["rep_begin"] = *a.rep_begin;
    if (a.rep_end) j["rep_end"] = *a.rep_end;
    if (a.boot) j["boot"] = *a.boot;
    if (a.level) j["level"] = *a.level;
    if (a.seed) j["seed"] = *a.seed;
    cfg = experiment_config_from_json(j);
  }
  cfg.threads = threads;
  cfg.abort_on_failure = false;
  manifest.config() = to_json(cfg);
  manifest.config()["out"] = out;
  manifest.seed(cfg.seed);

  std::vector<ReplicationRecord> recs;
  if (a.merge.empty()) {
    recs = run_replications(cfg);
  } else {
    for (const auto& p : a.merge) {
      auto part = read_replications(p, cfg);
      manifest.input(p);
      recs.insert(recs.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    manifest.config()["merged"] = a.merge;
  }
  const auto rows = summarize(cfg, recs);
  std::sort(recs.begin(), recs.end(), [](const auto& x, const auto& y) {
    return x.cell != y.cell ? x.cell < y.cell : x.rep < y.rep;
  });

  prepare_out(out);
  write_replications(fs::path(out) / "replications.csv", cfg, recs);
  CsvWriter w(fs::path(out) / "table.csv");
  std::vector<std::string> header{"n", "t", "theta", "delta", "rho", "reps", "failed"};
  for (auto& col : table_columns(cfg.experiment)) header.push_back(col);
  w.row(header);
  std::size_t failed = 0;
  for (const auto& r : rows) {
    std::vector<std::string> cells{std::to_string(r.cell.n), std::to_string(r.cell.t),
                                   format_double(r.cell.theta), format_double(r.cell.delta),
                                   format_double(r.cell.rho), std::to_string(r.n_reps),
                                   std::to_string(r.n_failed)};
    for (double v : r.values) cells.push_back(format_double(v));
    w.row(cells);
    failed += r.n_failed;
  }
  w.close();
  manifest.output("replications.csv");
  manifest.output("table.csv");
  manifest.write(out);
  log << "mc-table " << to_string(cfg.experiment) << ": " << rows.size() << " cells, " << recs.size()
      << " replications, " << failed << " failed -> " << out << '\n';
  return kExitOk;
}

int exit_code(ErrorKind kind) { return kind == ErrorKind::Numeric ? kExitNumeric : kExitConfig; }

void report_error(std::ostream& err, const std::string& kind, const std::string& message) {
  Json j;
  j["kind"] = kind;
  j["message"] = message;
  err << j.dump() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Regressed-PCA estimation of semiparametric conditional factor models"};
  app.set_version_flag("--version", REGPCA_VERSION);
  app.require_subcommand(1);

  Common common;
  common.threads = 0;
  std::function<int()> action;

  auto add_threads = [&](CLI::App* sub) {
    sub->add_option("--threads", common.threads, "Worker threads (default: REGPCA_THREADS or all cores)");
  };

  DgpParams dgp;
  std::string sim_out;
  auto* sim = app.add_subcommand("simulate", "Draw a panel from the simulation design");
  sim->add_option("--n", dgp.n, "Assets");
  sim->add_option("--t", dgp.t, "Periods");
  sim->add_option("--theta", dgp.theta, "Alpha slope");
  sim->add_option("--delta", dgp.delta, "Nonlinearity");
  sim->add_option("--rho", dgp.rho, "Error autocorrelation");
  sim->add_option("--noise-scale", dgp.noise_scale, "Multiplier on the idiosyncratic errors");
  sim->add_option("--seed", dgp.seed, "Random seed");
  sim->add_option("--out", sim_out, "Output directory")->required();
  sim->callback([&] { action = [&] { return cmd_simulate(dgp, sim_out, args, out); }; });

  auto* fit_cmd = app.add_subcommand("fit", "Estimate a, B and F");
  add_data_options(fit_cmd, common);
  fit_cmd->callback([&] { action = [&] { return cmd_fit(common, args, out); }; });

  TestArgs test_args;
  auto* test = app.add_subcommand("test", "Weighted-bootstrap tests");
  test->add_option("which", test_args.which, "alpha | linearity | coef")
      ->required()
      ->check(CLI::IsMember({"alpha", "linearity", "coef"}));
  add_data_options(test, common);
  test->add_option("--boot", common.n_boot, "Bootstrap draws");
  test->add_option("--level", common.level, "Significance level");
  test->add_option("--seed", common.seed, "Random seed");
  test->add_option("--rows", test_args.rows, "coef: comma-separated sieve rows");
  test->add_option("--target", test_args.target, "coef: alpha | beta");
  add_threads(test);
  test->callback([&] { action = [&] { return cmd_test(common, test_args, args, out); }; });

  double ppy = 12.0;
  auto* eval = app.add_subcommand("evaluate", "In-sample and out-of-sample evaluation");
  add_data_options(eval, common);
  eval->add_option("--t0", common.t0, "First out-of-sample period (0 = in-sample only)");
  eval->add_option("--periods-per-year", ppy, "Annualization factor");
  eval->callback([&] { action = [&] { return cmd_evaluate(common, ppy, args, out); }; });

  McArgs mc;
  std::string mc_out;
  auto* table = app.add_subcommand("mc-table", "Run a Monte Carlo table experiment");
  table->add_option("--config", mc.config, "Experiment JSON {experiment, grid, reps, boot, level, seed}")
      ->required();
  table->add_option("--reps", mc.reps, "Override replications");
  table->add_option("--rep-begin", mc.rep_begin, "First replication to run");
  table->add_option("--rep-end", mc.rep_end, "One past the last replication to run");
  table->add_option("--boot", mc.boot, "Override bootstrap draws");
  table->add_option("--level", mc.level, "Override significance level");
  table->add_option("--seed", mc.seed, "Override seed");
  table->add_option("--merge", mc.merge, "Summarize existing replications.csv files instead of running")
      ->delimiter(',');
  table->add_option("--out", mc_out, "Output directory")->required();
  add_threads(table);
  table->callback([&] {
    action = [&] { return cmd_mc_table(mc, common.threads, mc_out, args, out); };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    report_error(err, "config", e.what());
    return kExitConfig;
  }

  try {
    return action();
  } catch (const Error& e) {
    report_error(err, to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::bad_alloc&) {
    report_error(err, "numeric", "out of memory");
    return kExitNumeric;
  } catch (const std::exception& e) {
    report_error(err, "numeric", e.what());
    return kExitNumeric;
  }
}

}  // namespace regpca::cli
