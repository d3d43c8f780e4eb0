#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "homolab/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"homolab: corrector, RVE and homogenization-error experiments"};
  app.set_version_flag("--version", homolab::version_string());
  app.require_subcommand(1);

  std::string config, out, table;
  int workers = 0;
  bool check = false;
  auto* run = app.add_subcommand("run", "run one experiment config (TOML or JSON)");
  run->add_option("config", config, "experiment config")->required()->check(CLI::ExistingFile);
  run->add_flag("--check", check, "exit 1 unless every [check] threshold passes");
  run->add_option("--workers", workers, "OpenMP threads (0: default)")->check(CLI::NonNegativeNumber);
  run->add_option("--out", out, "output directory");
  run->add_option("--references", table, "reference table (default: references.json next to the config)");

  std::string csv, xcol = "L", ycol = "sd", vcol = "value";
  auto* fit = app.add_subcommand("fit", "log-log rate fit of a result CSV");
  fit->add_option("csv", csv, "result CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--x", xcol, "grouping column");
  fit->add_option("--y", ycol, "column, or sd / mean / se / abs_mean of --value per group");
  fit->add_option("--value", vcol, "value column for aggregates");

  std::string vconf;
  auto* validate = app.add_subcommand("validate", "parse and validate a config");
  validate->add_option("config", vconf, "experiment config")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) {
      const auto cfg = homolab::parse_experiment(homolab::load_config_file(config));
      homolab::RunOptions opts;
      opts.out_dir = out;
      opts.workers = workers;
      opts.reference_table = table;
      if (table.empty()) {
        const auto guess = std::filesystem::path(config).parent_path() / "references.json";
        if (std::filesystem::exists(guess)) opts.reference_table = guess;
      }
      const auto res = homolab::run_experiment(cfg, opts);
      std::printf("%s\n%s\n", res.csv.c_str(), res.summary.c_str());
      for (const auto& f : res.task_failures) std::fprintf(stderr, "task failed: %s\n", f.c_str());
      for (const auto& c : res.checks) std::printf("%s %s: %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
      if (check && (!res.all_pass() || !res.task_failures.empty())) return 1;
    } else if (*fit) {
      const auto f = homolab::fit_csv(csv, xcol, ycol, vcol);
      std::printf("slope %.6g +- %.3g  intercept %.6g  R^2 %.4f  points %d\n", f.slope, f.slope_se, f.intercept,
                  f.r_squared, f.n_points);
    } else if (*validate) {
      const auto cfg = homolab::parse_experiment(homolab::load_config_file(vconf));
      std::printf("ok: %s (%s)\n", cfg.name.c_str(), cfg.kind.c_str());
    }
  } catch (const homolab::ConfigError& e) {
    std::fprintf(stderr, "config error at %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
