#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "homolab/twoscale.hpp"

namespace homolab {

/// Artifact version, "0.1.0" plus the commit when built from a checkout.
const char* version_string();

/// Config validation failure; `path` names the offending field ("field.epsilon").
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string path, const std::string& what)
      : std::invalid_argument(path + ": " + what), path(std::move(path)) {}
  std::string path;
};

/// Reads TOML (.toml) or JSON (anything else) into one JSON tree.
nlohmann::json load_config_file(const std::filesystem::path& p);
nlohmann::json parse_toml(const std::string& text);

struct ExperimentConfig {
  std::string kind;  // fluctuation | systematic | localization | homogenization_error | structure | spectral_gap
  std::string name;
  std::uint64_t base_seed = 1;
  int n_samples = 1;
  std::filesystem::path output;

  // [field]
  int d = 1;
  double epsilon = 1.0;
  double L = 0.0;  // single-cell kinds
  MediumSpec medium{};

  // [family]
  std::string family_spec = "rational_uhlenbeck";
  int m = 1;
  nlohmann::json family_params = nlohmann::json::object();

  // [sweep]
  std::vector<double> L_over_eps, T_over_eps2, eps_over_L, xi, radii;

  SolverOptions solver{};
  nlohmann::json section;  // the kind-specific table, e.g. [systematic]
  nlohmann::json check;    // [check] thresholds
  nlohmann::json raw;      // whole validated document

  FamilyPtr family() const;
};

/// Validates the JSON tree. Throws ConfigError with the field path.
ExperimentConfig parse_experiment(const nlohmann::json& doc);

/// Versioned table of reference effective-law values.
struct ReferenceEntry {
  std::string id;
  double value = 0.0;
  double se = 0.0;
  nlohmann::json provenance;
};
std::vector<ReferenceEntry> load_reference_table(const std::filesystem::path& p);

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct RunOptions {
  std::filesystem::path out_dir;  // empty: config `output`, else "out/<name>"
  int workers = 0;                // 0: OpenMP default
  std::filesystem::path reference_table;  // empty: configs/references.json next to the config, if any
};

struct RunResult {
  std::filesystem::path csv, summary;
  nlohmann::json fit;  // also in the summary
  std::vector<CheckResult> checks;
  std::vector<std::string> task_failures;  // "L=.. seed=..: message"
  bool all_pass() const;
};

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

/// Reads a CSV with a header row; `x` groups rows, `y` is a column (group
/// mean) or one of sd / mean / se / abs_mean of `value_column` per group.
RateFit fit_csv(const std::filesystem::path& csv, const std::string& x, const std::string& y,
                const std::string& value_column = "value");

/// rotation(n, angle): n = 1 reflection, n = 2 planar rotation, n = 3 rotation
/// about (1, 1, 1)/sqrt 3; row-major.
std::vector<double> rotation_matrix(int n, double angle);

}  // namespace homolab
