#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace regpca {

using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Possibly unbalanced panel of returns and characteristics.
///
/// Each period t holds a length-N return vector, an N x M characteristic
/// matrix and an observation mask over the N asset slots. An asset slot is
/// observed at t iff its return and all M characteristics are present.
/// Unobserved cells are stored as exact zeros, so cross-sectional sums can
/// run over all rows without branching.
struct Panel {
  std::size_t n_assets = 0;
  std::size_t n_periods = 0;
  std::size_t n_chars = 0;

  std::vector<Eigen::VectorXd> returns;          // [t] -> N
  std::vector<Eigen::MatrixXd> characteristics;  // [t] -> N x M
  std::vector<Mask> mask;                        // [t] -> N

  // Labels used when writing results back out.
  std::vector<std::string> period_labels;
  std::vector<std::string> asset_ids;
  std::vector<std::string> char_names;

  /// N_t, the number of observed assets in period t.
  std::size_t n_observed(std::size_t t) const;
  /// max_t N_t.
  std::size_t max_observed() const;
  /// min_t N_t.
  std::size_t min_observed() const;

  /// Throws Error(Data) if shapes disagree, some period is empty, or a
  /// masked-out cell is nonzero.
  void validate() const;
};

/// Builds a validated panel from dense per-period arrays. Masked-out cells
/// are zero-filled; default labels ("0", "1", ...) are generated.
Panel make_panel(std::vector<Eigen::VectorXd> returns,
                 std::vector<Eigen::MatrixXd> characteristics,
                 std::vector<Mask> mask);

/// Column mapping for long-format CSV input. Empty `char_columns` means
/// "every column that is not period/asset/return".
struct CsvSchema {
  std::string period_column = "period";
  std::string asset_column = "asset_id";
  std::string return_column = "return";
  std::vector<std::string> char_columns;
};

Panel load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});

/// Writes the full (period, asset) grid in long format. Unobserved cells are
/// left empty, which load_csv reads back as missing. Values are printed with
/// 17 significant digits so a reload reproduces the panel exactly.
void write_csv(const Panel& panel, const std::filesystem::path& path,
               const CsvSchema& schema = {});

/// Replaces each observed characteristic by its cross-sectional rank mapped
/// to [-0.5, 0.5]: (rank - 1) / (N_t - 1) - 0.5 with average ranks for ties;
/// a single observation maps to 0.
Panel rank_transform(const Panel& panel);

/// Keeps the contiguous block of periods with N_t >= n_min. Period labels of
/// the result identify the retained source periods.
Panel filter_min_cross_section(const Panel& panel, std::size_t n_min);

}  // namespace regpca
