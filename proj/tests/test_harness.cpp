#include <omp.h>

#include <fstream>
#include <sstream>
#include <unordered_set>

#include "doctest.h"
#include "homolab/harness.hpp"
#include "homolab/rng.hpp"

using namespace homolab;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("homolab_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

const char* kSmoke = R"(
kind = "fluctuation"
name = "smoke"
n_samples = 1
base_seed = 3

[field]
d = 1
epsilon = 1.0

[family]
spec = "rational_uhlenbeck"

[sweep]
L_over_eps = [16, 32, 64]
xi = [1.0]
)";

std::string config_error_path(const json& doc) {
  try {
    parse_experiment(doc);
  } catch (const ConfigError& e) {
    return e.path;
  }
  return "";
}

}  // namespace

TEST_CASE("fit_rate examples") {
  std::vector<double> x{2, 4, 8, 16}, y;
  for (double v : x) y.push_back(std::pow(v, -0.5));
  const auto f = fit_rate(x, y);
  CHECK(f.slope == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(f.slope_se < 1e-12);
  CHECK(f.r_squared == doctest::Approx(1.0));
  const auto c = fit_rate(x, std::vector<double>(4, 3.0));
  CHECK(std::abs(c.slope) < 1e-14);
  CHECK_THROWS(fit_rate(std::vector<double>{1, 2}, std::vector<double>{1, 2}));
  CHECK_THROWS(fit_rate(std::vector<double>{1, 2, 3}, std::vector<double>{1, -2, 3}));
}

TEST_CASE("seed_stream is deterministic and collision free") {
  CHECK(seed_stream(7, 12) == seed_stream(7, 12));
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(2'000'000);
  bool all_changed = true;
  for (std::uint64_t i = 0; i < 1'000'000; ++i) {
    seen.insert(seed_stream(42, i));
    if (i < 1000) all_changed = all_changed && seed_stream(42, i) != seed_stream(43, i);
  }
  CHECK(seen.size() == 1'000'000);
  CHECK(all_changed);
}

TEST_CASE("toml and json configs agree") {
  const json t = parse_toml(kSmoke);
  const auto a = parse_experiment(t);
  const auto b = parse_experiment(json::parse(t.dump()));
  CHECK(a.kind == "fluctuation");
  CHECK(a.L_over_eps == b.L_over_eps);
  CHECK(a.n_samples == 1);
  CHECK_THROWS_AS(parse_toml("kind = = 3"), ConfigError);
}

TEST_CASE("config validation names the field") {
  json doc = parse_toml(kSmoke);
  CHECK(config_error_path(doc).empty());
  auto bad = doc;
  bad["field"]["epsilon"] = -1.0;
  CHECK(config_error_path(bad) == "field.epsilon");
  bad = doc;
  bad["kind"] = "teleport";
  CHECK(config_error_path(bad) == "kind");
  bad = doc;
  bad["n_samples"] = 0;
  CHECK(config_error_path(bad) == "n_samples");
  bad = doc;
  bad["sweep"]["L_over_eps"] = json::array();
  CHECK(config_error_path(bad) == "sweep.L_over_eps");
  bad = doc;
  bad["sweep"]["xi"] = {1.0, 2.0};
  CHECK(config_error_path(bad) == "sweep.xi");
  bad = doc;
  bad["field"]["colour"] = "red";
  CHECK(config_error_path(bad) == "field.colour");
  bad = doc;
  bad["family"]["spec"] = "linear:nope";
  CHECK(config_error_path(bad) == "family.spec");
  bad = doc;
  bad["field"]["kernel"] = "square";
  CHECK(config_error_path(bad) == "field.kernel");
  bad = doc;
  bad["solver"]["tol"] = 0.0;
  CHECK(config_error_path(bad) == "solver.tol");
}

TEST_CASE("smoke run: one row per (L, seed), reruns identical across worker counts") {
  const auto cfg = parse_experiment(parse_toml(kSmoke));
  RunOptions o;
  o.out_dir = scratch("smoke_a");
  o.workers = 1;
  const auto a = run_experiment(cfg, o);
  o.out_dir = scratch("smoke_b");
  o.workers = 3;
  const auto b = run_experiment(cfg, o);
  omp_set_num_threads(1);
  const auto csv = slurp(a.csv);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);  // header + 3 rows
  CHECK(csv == slurp(b.csv));
  CHECK(csv.find(version_string()) != std::string::npos);
  const auto summary = json::parse(slurp(a.summary));
  CHECK(summary["version"] == version_string());
  CHECK(summary["config"]["name"] == "smoke");
  CHECK(a.task_failures.empty());
}

TEST_CASE("run checks and fit_csv") {
  auto doc = parse_toml(kSmoke);
  doc["n_samples"] = 8;
  doc["check"] = {{"slope", {-5.0, 5.0}}};
  const auto cfg = parse_experiment(doc);
  RunOptions o;
  o.out_dir = scratch("checks");
  const auto r = run_experiment(cfg, o);
  REQUIRE(r.checks.size() == 1);
  CHECK(r.checks[0].pass);
  const auto f = fit_csv(r.csv, "L", "sd");
  CHECK(f.slope == doctest::Approx(r.fit["slope"].get<double>()).epsilon(1e-12));
  CHECK(f.n_points == 3);
  CHECK_THROWS(fit_csv(r.csv, "nope", "sd"));
}

TEST_CASE("reference table lookup") {
  const auto dir = scratch("refs");
  std::filesystem::create_directories(dir);
  const auto table = dir / "references.json";
  std::ofstream(table) << R"({"entries": [{"id": "x", "value": 0.5, "se": 0.01, "method": "test"}]})";
  const auto e = load_reference_table(table);
  REQUIRE(e.size() == 1);
  CHECK(e[0].provenance["method"] == "test");
  auto doc = parse_toml(kSmoke);
  doc["kind"] = "systematic";
  doc["n_samples"] = 2;
  doc["systematic"] = {{"reference", "table:missing"}, {"control_variate", false}};
  RunOptions o;
  o.out_dir = dir / "out";
  o.reference_table = table;
  CHECK_THROWS_AS(run_experiment(parse_experiment(doc), o), ConfigError);
  doc["systematic"]["reference"] = "table:x";
  const auto r = run_experiment(parse_experiment(doc), o);
  const auto s = json::parse(slurp(r.summary));
  CHECK(s["results"]["reference"]["value"] == 0.5);
}

TEST_CASE("rotation matrices are orthogonal") {
  for (int n : {1, 2, 3}) {
    const auto R = rotation_matrix(n, 0.7);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0;
        for (int k = 0; k < n; ++k) s += R[i * n + k] * R[j * n + k];
        CHECK(s == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-14));
      }
  }
}
