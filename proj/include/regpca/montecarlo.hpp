#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "regpca/panel.hpp"
#include "regpca/sieve.hpp"

namespace regpca {

/// Simulation design with K = 2 latent factors and M = 3 characteristics:
///   alpha(z) = theta z1 + delta z1^2
///   beta(z)  = (z2 + delta z2^2, 2 z3 + 2 delta z3^2)'
///   z1 = sigma_t u1 (sigma_t ~ U(1,2)), z2 AR(1) with coefficient 0.3,
///   z3 = u3, f_t AR(1) with coefficient 0.3, eps_t AR(1) with coefficient rho.
struct DgpParams {
  std::size_t n = 200;
  std::size_t t = 10;
  double theta = 1.0;
  double delta = 0.5;
  double rho = 0.0;
  std::uint64_t seed = 0;
  double noise_scale = 1.0;  // multiplies eps; 0 gives noiseless data

  void validate() const;
};

inline constexpr std::size_t kDgpFactors = 2;
inline constexpr std::size_t kDgpChars = 3;

struct SimDraw {
  Panel panel;             // balanced, raw characteristics
  Eigen::MatrixXd f_true;  // T x 2
  Eigen::VectorXd a_true;  // 6, coefficients on (z1, z1^2, z2, z2^2, z3, z3^2)
  Eigen::MatrixXd b_true;  // 6 x 2
  Eigen::MatrixXd noise;   // T x N, the eps_it actually added
};

SimDraw simulate(const DgpParams& params);

/// (z1, z1^2, z2, z2^2, z3, z3^2) without intercept; zero sieve error for
/// the design above.
SieveSpec oracle_spec();

enum class Experiment { Mse, KSelect, AlphaTest, LinearityTest };

const char* to_string(Experiment experiment);
Experiment experiment_from_string(const std::string& name);

/// Columns stored per replication, and the summary columns of the table.
std::vector<std::string> replication_columns(Experiment experiment);
std::vector<std::string> table_columns(Experiment experiment);

struct ExperimentConfig {
  Experiment experiment = Experiment::Mse;
  std::vector<DgpParams> grid;  // per-cell designs; their seed fields are ignored
  std::size_t n_reps = 100;
  std::size_t rep_begin = 0;    // replications [rep_begin, rep_end) are run
  std::size_t rep_end = 0;      // 0 = n_reps
  std::size_t k = 2;
  std::size_t n_boot = 499;
  double level = 0.05;
  std::uint64_t seed = 0;
  unsigned threads = 1;         // 0 = all cores
  bool abort_on_failure = true;

  std::size_t effective_rep_end() const { return rep_end == 0 ? n_reps : rep_end; }
  void validate() const;
};

/// Outcome of one replication in one grid cell.
struct ReplicationRecord {
  std::size_t cell = 0;
  std::size_t rep = 0;
  bool failed = false;
  std::vector<double> values;  // replication_columns(experiment)
};

/// Seed of replication `rep`; shared by every grid cell.
std::uint64_t replication_seed(std::uint64_t seed, std::size_t rep);

/// Runs one replication of one cell.
ReplicationRecord run_replication(const ExperimentConfig& config, std::size_t cell,
                                  std::size_t rep);

/// All (cell, rep) pairs of the configured range, ordered by cell then rep.
/// The records depend only on (config, cell, rep), never on the thread count.
std::vector<ReplicationRecord> run_replications(const ExperimentConfig& config);

struct TableRow {
  DgpParams cell;
  std::size_t n_reps = 0;    // successful replications
  std::size_t n_failed = 0;
  std::vector<double> values;  // table_columns(experiment)
};

/// Reduces replication records (any order, possibly merged from several
/// runs) into one row per cell. Records are summed in replication order.
std::vector<TableRow> summarize(const ExperimentConfig& config,
                                std::vector<ReplicationRecord> records);

struct MseResult {
  double mse_a = 0.0;
  double mse_b = 0.0;
  double mse_f = 0.0;
  std::size_t n_failed = 0;
};

MseResult mse_experiment(const DgpParams& params, std::size_t n_reps, std::size_t k = 2,
                         unsigned threads = 1);

struct KSelectResult {
  double rate_khat = 0.0;
  double rate_ktilde = 0.0;
  std::size_t n_failed = 0;
};

KSelectResult kselect_experiment(const DgpParams& params, std::size_t n_reps,
                                 unsigned threads = 1);

/// Rejection rate per grid cell.
std::vector<double> rejection_experiment(const std::vector<DgpParams>& grid,
                                         Experiment test, std::size_t n_reps,
                                         std::size_t n_boot = 499, double level = 0.05,
                                         std::uint64_t seed = 0, unsigned threads = 1);

}  // namespace regpca
