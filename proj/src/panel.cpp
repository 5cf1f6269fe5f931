#include "regpca/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <unordered_map>

#include "regpca/error.hpp"

namespace regpca {

std::size_t Panel::n_observed(std::size_t t) const {
  return static_cast<std::size_t>(mask.at(t).count());
}

std::size_t Panel::max_observed() const {
  std::size_t best = 0;
  for (std::size_t t = 0; t < n_periods; ++t) best = std::max(best, n_observed(t));
  return best;
}

std::size_t Panel::min_observed() const {
  std::size_t best = n_assets;
  for (std::size_t t = 0; t < n_periods; ++t) best = std::min(best, n_observed(t));
  return best;
}

void Panel::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::Data, "panel: " + msg); };
  if (n_assets == 0 || n_periods == 0 || n_chars == 0) fail("empty dimensions");
  if (returns.size() != n_periods || characteristics.size() != n_periods ||
      mask.size() != n_periods) {
    fail("per-period arrays do not match n_periods");
  }
  for (std::size_t t = 0; t < n_periods; ++t) {
    if (static_cast<std::size_t>(returns[t].size()) != n_assets ||
        static_cast<std::size_t>(characteristics[t].rows()) != n_assets ||
        static_cast<std::size_t>(characteristics[t].cols()) != n_chars ||
        static_cast<std::size_t>(mask[t].size()) != n_assets) {
      fail("shape mismatch in period " + std::to_string(t));
    }
    if (mask[t].count() == 0) fail("period " + std::to_string(t) + " has no observations");
    for (std::size_t i = 0; i < n_assets; ++i) {
      if (mask[t](i)) {
        if (!std::isfinite(returns[t](i)) || !characteristics[t].row(i).allFinite()) {
          fail("non-finite observed value in period " + std::to_string(t));
        }
      } else if (returns[t](i) != 0.0 || !characteristics[t].row(i).isZero(0.0)) {
        fail("masked-out cell is not zero-filled in period " + std::to_string(t));
      }
    }
  }
}

Panel make_panel(std::vector<Eigen::VectorXd> returns,
                 std::vector<Eigen::MatrixXd> characteristics, std::vector<Mask> mask) {
  Panel p;
  p.n_periods = returns.size();
  p.n_assets = p.n_periods ? static_cast<std::size_t>(returns[0].size()) : 0;
  p.n_chars = characteristics.empty() ? 0 : static_cast<std::size_t>(characteristics[0].cols());
  if (characteristics.size() != p.n_periods || mask.size() != p.n_periods) {
    throw Error(ErrorKind::Data, "panel: per-period arrays have different lengths");
  }
  for (std::size_t t = 0; t < p.n_periods; ++t) {
    if (mask[t].size() != returns[t].size() || characteristics[t].rows() != returns[t].size()) {
      throw Error(ErrorKind::Data, "panel: shape mismatch in period " + std::to_string(t));
    }
    for (Eigen::Index i = 0; i < mask[t].size(); ++i) {
      if (!mask[t](i)) {
        returns[t](i) = 0.0;
        characteristics[t].row(i).setZero();
      }
    }
  }
  p.returns = std::move(returns);
  p.characteristics = std::move(characteristics);
  p.mask = std::move(mask);
  for (std::size_t t = 0; t < p.n_periods; ++t) p.period_labels.push_back(std::to_string(t));
  for (std::size_t i = 0; i < p.n_assets; ++i) p.asset_ids.push_back(std::to_string(i));
  for (std::size_t m = 0; m < p.n_chars; ++m) p.char_names.push_back("char_" + std::to_string(m + 1));
  p.validate();
  return p;
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
  std::string out(s.substr(b, e - b));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(trim(std::string_view(line).substr(start)));
      return out;
    }
    out.push_back(trim(std::string_view(line).substr(start, pos - start)));
    start = pos + 1;
  }
}

bool is_missing_token(const std::string& s) {
  return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan" || s == "null";
}

std::optional<double> parse_number(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

struct Row {
  std::size_t period;
  std::size_t asset;
  bool complete;
  double ret;
  std::vector<double> chars;
};

}  // namespace

Panel load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Data, path.string() + ": empty file");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // BOM
  const std::vector<std::string> header = split_fields(line);

  auto column_index = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw Error(ErrorKind::Data, path.string() + ": missing column '" + name + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_period = column_index(schema.period_column);
  const std::size_t c_asset = column_index(schema.asset_column);
  const std::size_t c_return = column_index(schema.return_column);

  std::vector<std::size_t> c_chars;
  std::vector<std::string> char_names;
  if (schema.char_columns.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c != c_period && c != c_asset && c != c_return) {
        c_chars.push_back(c);
        char_names.push_back(header[c]);
      }
    }
  } else {
    for (const auto& name : schema.char_columns) {
      c_chars.push_back(column_index(name));
      char_names.push_back(name);
    }
  }
  if (c_chars.empty()) throw Error(ErrorKind::Data, path.string() + ": no characteristic columns");

  std::vector<std::string> period_labels;
  std::unordered_map<std::string, std::size_t> period_index;
  std::vector<std::string> asset_ids;
  std::unordered_map<std::string, std::size_t> asset_index;
  std::vector<Row> rows;

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw Error(ErrorKind::Data, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                       std::to_string(header.size()) + " fields, got " +
                                       std::to_string(fields.size()));
    }
    Row row;
    const auto& plabel = fields[c_period];
    const auto& alabel = fields[c_asset];
    if (plabel.empty() || alabel.empty()) {
      throw Error(ErrorKind::Data, path.string() + ":" + std::to_string(line_no) +
                                       ": empty period or asset id");
    }
    auto [pit, pnew] = period_index.emplace(plabel, period_labels.size());
    if (pnew) period_labels.push_back(plabel);
    auto [ait, anew] = asset_index.emplace(alabel, asset_ids.size());
    if (anew) asset_ids.push_back(alabel);
    row.period = pit->second;
    row.asset = ait->second;

    auto cell = [&](std::size_t c) -> std::optional<double> {
      if (is_missing_token(fields[c])) return std::nullopt;
      auto v = parse_number(fields[c]);
      if (!v) {
        throw Error(ErrorKind::Data, path.string() + ":" + std::to_string(line_no) +
                                         ": non-numeric value '" + fields[c] + "' in column '" +
                                         header[c] + "'");
      }
      return v;
    };
    row.complete = true;
    auto r = cell(c_return);
    row.ret = r.value_or(0.0);
    row.complete = row.complete && r.has_value();
    for (std::size_t c : c_chars) {
      auto v = cell(c);
      row.chars.push_back(v.value_or(0.0));
      row.complete = row.complete && v.has_value();
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorKind::Data, path.string() + ": no data rows");

  // Sort periods numerically when every label is a number, lexically otherwise.
  const std::size_t T = period_labels.size();
  std::vector<std::size_t> order(T);
  std::iota(order.begin(), order.end(), 0);
  const bool numeric = std::all_of(period_labels.begin(), period_labels.end(),
                                   [](const std::string& s) { return parse_number(s).has_value(); });
  if (numeric) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return *parse_number(period_labels[a]) < *parse_number(period_labels[b]);
    });
  } else {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return period_labels[a] < period_labels[b]; });
  }
  std::vector<std::size_t> rank(T);
  for (std::size_t r = 0; r < T; ++r) rank[order[r]] = r;

  Panel p;
  p.n_periods = T;
  p.n_assets = asset_ids.size();
  p.n_chars = c_chars.size();
  p.returns.assign(T, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.n_assets)));
  p.characteristics.assign(
      T, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p.n_assets), static_cast<Eigen::Index>(p.n_chars)));
  p.mask.assign(T, Mask::Constant(static_cast<Eigen::Index>(p.n_assets), false));
  std::vector<std::vector<bool>> seen(T, std::vector<bool>(p.n_assets, false));

  for (const Row& row : rows) {
    const std::size_t t = rank[row.period];
    if (seen[t][row.asset]) {
      throw Error(ErrorKind::Data, path.string() + ": duplicate row for period '" +
                                       period_labels[row.period] + "', asset '" +
                                       asset_ids[row.asset] + "'");
    }
    seen[t][row.asset] = true;
    if (!row.complete) continue;
    const auto i = static_cast<Eigen::Index>(row.asset);
    p.mask[t](i) = true;
    p.returns[t](i) = row.ret;
    for (std::size_t m = 0; m < p.n_chars; ++m) p.characteristics[t](i, static_cast<Eigen::Index>(m)) = row.chars[m];
  }
  for (std::size_t t = 0; t < T; ++t) {
    if (p.mask[t].count() == 0) {
      throw Error(ErrorKind::Data,
                  path.string() + ": period '" + period_labels[order[t]] + "' has no complete rows");
    }
  }
  for (std::size_t t = 0; t < T; ++t) p.period_labels.push_back(period_labels[order[t]]);
  p.asset_ids = std::move(asset_ids);
  p.char_names = std::move(char_names);
  p.validate();
  return p;
}

void write_csv(const Panel& panel, const std::filesystem::path& path, const CsvSchema& schema) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  std::vector<std::string> names = schema.char_columns;
  if (names.empty()) names = panel.char_names;
  if (names.size() != panel.n_chars) {
    throw Error(ErrorKind::Config, "write_csv: characteristic name count does not match panel");
  }
  out << schema.period_column << ',' << schema.asset_column << ',' << schema.return_column;
  for (const auto& n : names) out << ',' << n;
  out << '\n';

  char buf[64];
  auto num = [&](double x) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
    (void)ec;
    return std::string_view(buf, static_cast<std::size_t>(ptr - buf));
  };
  for (std::size_t t = 0; t < panel.n_periods; ++t) {
    for (std::size_t i = 0; i < panel.n_assets; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      out << panel.period_labels[t] << ',' << panel.asset_ids[i] << ',';
      if (panel.mask[t](ii)) out << num(panel.returns[t](ii));
      for (std::size_t m = 0; m < panel.n_chars; ++m) {
        out << ',';
        if (panel.mask[t](ii)) out << num(panel.characteristics[t](ii, static_cast<Eigen::Index>(m)));
      }
      out << '\n';
    }
  }
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

Panel rank_transform(const Panel& panel) {
  Panel out = panel;
  std::vector<std::pair<double, Eigen::Index>> vals;
  for (std::size_t t = 0; t < panel.n_periods; ++t) {
    const auto& mask = panel.mask[t];
    const std::size_t nt = panel.n_observed(t);
    for (std::size_t m = 0; m < panel.n_chars; ++m) {
      const auto mm = static_cast<Eigen::Index>(m);
      vals.clear();
      for (Eigen::Index i = 0; i < mask.size(); ++i) {
        if (mask(i)) vals.emplace_back(panel.characteristics[t](i, mm), i);
      }
      std::sort(vals.begin(), vals.end());
      std::size_t a = 0;
      while (a < vals.size()) {
        std::size_t b = a;
        while (b + 1 < vals.size() && vals[b + 1].first == vals[a].first) ++b;
        // 1-based ranks a+1 .. b+1 share their average.
        const double avg_rank = 0.5 * static_cast<double>(a + b) + 1.0;
        const double mapped =
            nt == 1 ? 0.0 : (avg_rank - 1.0) / static_cast<double>(nt - 1) - 0.5;
        for (std::size_t r = a; r <= b; ++r) out.characteristics[t](vals[r].second, mm) = mapped;
        a = b + 1;
      }
    }
  }
  return out;
}

Panel filter_min_cross_section(const Panel& panel, std::size_t n_min) {
  std::vector<std::size_t> keep;
  for (std::size_t t = 0; t < panel.n_periods; ++t) {
    if (panel.n_observed(t) >= n_min) keep.push_back(t);
  }
  if (keep.empty()) {
    throw Error(ErrorKind::Data,
                "no period has at least " + std::to_string(n_min) + " observed assets");
  }
  if (keep.back() - keep.front() + 1 != keep.size()) {
    throw Error(ErrorKind::Data, "periods with at least " + std::to_string(n_min) +
                                     " observed assets are not contiguous");
  }
  Panel out;
  out.n_assets = panel.n_assets;
  out.n_chars = panel.n_chars;
  out.n_periods = keep.size();
  out.asset_ids = panel.asset_ids;
  out.char_names = panel.char_names;
  for (std::size_t t : keep) {
    out.returns.push_back(panel.returns[t]);
    out.characteristics.push_back(panel.characteristics[t]);
    out.mask.push_back(panel.mask[t]);
    out.period_labels.push_back(panel.period_labels[t]);
  }
  return out;
}

}  // namespace regpca
