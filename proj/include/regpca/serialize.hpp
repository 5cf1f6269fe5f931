#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "regpca/estimator.hpp"
#include "regpca/inference.hpp"
#include "regpca/montecarlo.hpp"
#include "regpca/sieve.hpp"

namespace regpca {

using Json = nlohmann::ordered_json;

Json to_json(const SieveSpec& spec);
SieveSpec sieve_spec_from_json(const Json& j);

/// {k, a_hat, b_hat (one array per column), f_hat (one array per period),
///  eigenvalues, spec, near_tie}
Json to_json(const FactorFit& fit);
FactorFit factor_fit_from_json(const Json& j);

Json to_json(const TestReport& report);
TestReport test_report_from_json(const Json& j);

Json to_json(const DgpParams& params);
DgpParams dgp_params_from_json(const Json& j);

/// {experiment, grid, reps, rep_begin, rep_end, k, boot, level, seed}
Json to_json(const ExperimentConfig& config);
ExperimentConfig experiment_config_from_json(const Json& j);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

/// Formats with 17 significant digits (round-trips exactly).
std::string format_double(double x);

}  // namespace regpca
