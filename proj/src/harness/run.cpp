#include <omp.h>

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

#include "homolab/harness.hpp"
#include "homolab/rng.hpp"

#ifndef HOMOLAB_VERSION_STRING
#define HOMOLAB_VERSION_STRING "0.1.0"
#endif

namespace homolab {

using nlohmann::json;

const char* version_string() { return HOMOLAB_VERSION_STRING; }

bool RunResult::all_pass() const {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

std::vector<double> rotation_matrix(int n, double a) {
  const double c = std::cos(a), s = std::sin(a);
  if (n == 1) return {-1.0};
  if (n == 2) return {c, -s, s, c};
  if (n == 3) {
    // Rodrigues about u = (1, 1, 1) / sqrt 3
    const double u = 1.0 / std::sqrt(3.0), t = 1 - c;
    return {c + u * u * t,     u * u * t - u * s, u * u * t + u * s,  //
            u * u * t + u * s, c + u * u * t,     u * u * t - u * s,  //
            u * u * t - u * s, u * u * t + u * s, c + u * u * t};
  }
  throw std::invalid_argument("rotation_matrix: n must be 1, 2 or 3");
}

namespace {

/// Rows with a fixed header; numbers printed with round-trip precision.
class Csv {
 public:
  explicit Csv(std::vector<std::string> header) : header_(std::move(header)) {}
  Csv& add(const std::vector<std::string>& row) {
    if (row.size() != header_.size()) throw std::logic_error("csv: row width");
    rows_.push_back(row);
    return *this;
  }
  void write(const std::filesystem::path& p) const {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
      out << '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
  }
  std::size_t size() const { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip form
  return std::string(buf, r.ptr);
}
std::string num(std::uint64_t v) { return std::to_string(v); }
std::string num(int v) { return std::to_string(v); }

std::string joined(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + num(v[i]);
  return s;
}

const std::vector<std::string> kRveHeader = {"kind", "d", "n", "L", "epsilon", "T", "xi", "component",
                                             "seed", "value", "residual", "tol", "base_seed", "version"};

json fit_json(const std::optional<RateFit>& f) {
  if (!f) return nullptr;
  return {{"slope", f->slope},         {"intercept", f->intercept}, {"slope_se", f->slope_se},
          {"r_squared", f->r_squared}, {"n_points", f->n_points}};
}

json summary_json(const SampleSummary& s) {
  return {{"mean", s.mean}, {"sd", s.sd}, {"se", s.se}, {"sd_se", s.sd_se}, {"n", s.n}};
}

/// [check] interval [lo, hi] on a value.
void check_range(const json& check, const char* key, double v, const std::string& label,
                 std::vector<CheckResult>& out) {
  if (!check.contains(key)) return;
  const auto& r = check.at(key);
  if (!r.is_array() || r.size() != 2) throw ConfigError(std::string("check.") + key, "expected [lo, hi]");
  const double lo = r[0].get<double>(), hi = r[1].get<double>();
  std::ostringstream os;
  os << label << " = " << v << " in [" << lo << ", " << hi << "]";
  out.push_back({key, std::isfinite(v) && v >= lo && v <= hi, os.str()});
}

void check_max(const json& check, const char* key, double v, const std::string& label,
               std::vector<CheckResult>& out) {
  if (!check.contains(key)) return;
  const double hi = check.at(key).get<double>();
  std::ostringstream os;
  os << label << " = " << v << " <= " << hi;
  out.push_back({key, std::isfinite(v) && v <= hi, os.str()});
}

void check_min(const json& check, const char* key, double v, const std::string& label,
               std::vector<CheckResult>& out) {
  if (!check.contains(key)) return;
  const double lo = check.at(key).get<double>();
  std::ostringstream os;
  os << label << " = " << v << " >= " << lo;
  out.push_back({key, std::isfinite(v) && v >= lo, os.str()});
}

void check_flag(const json& check, const char* key, bool v, const std::string& detail,
                std::vector<CheckResult>& out) {
  if (!check.contains(key) || !check.at(key).get<bool>()) return;
  out.push_back({key, v, detail});
}

SweepConfig sweep_of(const ExperimentConfig& c) {
  SweepConfig s;
  s.d = c.d;
  s.epsilon = c.epsilon;
  s.L_over_eps = c.L_over_eps;
  s.n_samples = c.n_samples;
  s.base_seed = c.base_seed;
  s.xi = c.xi;
  s.family = c.family();
  s.medium = c.medium;
  s.opts = c.solver;
  return s;
}

void rve_rows(Csv& csv, const ExperimentConfig& c, const std::vector<McRow>& rows, double T) {
  for (const auto& r : rows) {
    if (!r.error.empty()) continue;
    for (std::size_t a = 0; a < r.value.size(); ++a)
      csv.add({c.kind, num(c.d), num(r.n), num(r.L), num(c.epsilon), num(T), joined(c.xi), num(static_cast<int>(a)),
               num(r.seed), num(r.value[a]), num(r.residual), num(c.solver.tol), num(c.base_seed), version_string()});
  }
}

void collect_failures(const std::vector<McRow>& rows, RunResult& res) {
  for (const auto& r : rows)
    if (!r.error.empty())
      res.task_failures.push_back("L=" + num(r.L) + " seed=" + num(r.seed) + ": " + r.error);
}

double find_reference(const ExperimentConfig& c, const RunOptions& o, const std::string& id, double* se) {
  auto table = o.reference_table;
  if (table.empty()) throw ConfigError(c.kind + ".reference", "no reference table available for " + id);
  for (const auto& e : load_reference_table(table))
    if (e.id == id) {
      if (se) *se = e.se;
      return e.value;
    }
  throw ConfigError(c.kind + ".reference", "unknown table entry '" + id + "'");
}

// --- kinds ---------------------------------------------------------------

json run_fluctuation(const ExperimentConfig& c, Csv& csv, RunResult& res) {
  auto s = sweep_of(c);
  s.component = c.section.value("component", 0);
  const auto r = fluctuation_experiment(s);
  rve_rows(csv, c, r.rows, kInfiniteT);
  collect_failures(r.rows, res);
  json levels = json::array();
  for (const auto& lv : r.levels)
    levels.push_back({{"L", lv.L}, {"stats", summary_json(lv.stats)}, {"failures", lv.failures}});
  check_range(c.check, "slope", r.fit ? r.fit->slope : NAN, "slope of log sd vs log(L/eps)", res.checks);
  return {{"levels", levels}, {"fit", fit_json(r.fit)}};
}

json run_systematic(const ExperimentConfig& c, const RunOptions& o, Csv& csv, RunResult& res) {
  auto s = sweep_of(c);
  const bool scalar = c.d == 1 && c.m == 1 && s.family->k() == 1;
  const auto& ref = c.section.contains("reference") ? c.section.at("reference") : json("oracle");
  double reference = 0.0, reference_se = c.section.value("reference_se", 0.0);
  std::string source;
  if (ref.is_number()) {
    reference = ref.get<double>();
    source = "config";
  } else if (ref.get<std::string>() == "oracle") {
    if (!scalar) throw ConfigError("systematic.reference", "the quadrature oracle needs d = m = k = 1");
    reference = oracle_1d_law(*s.family, c.medium.clamp, c.xi[0]);
    source = "gauss-hermite one-point law";
  } else {
    const auto id = ref.get<std::string>();
    if (id.rfind("table:", 0) != 0) throw ConfigError("systematic.reference", "number, \"oracle\" or \"table:<id>\"");
    reference = find_reference(c, o, id.substr(6), &reference_se);
    source = id;
  }
  if (c.section.value("control_variate", scalar)) {
    if (!scalar) throw ConfigError("systematic.control_variate", "needs d = m = k = 1");
    s.control_flux = ref.is_string() && ref.get<std::string>() == "oracle"
                         ? reference
                         : oracle_1d_law(*s.family, c.medium.clamp, c.xi[0]);
  }
  const auto r = systematic_experiment(s, reference, reference_se);
  rve_rows(csv, c, r.rows, kInfiniteT);
  collect_failures(r.rows, res);
  json levels = json::array();
  for (const auto& lv : r.levels)
    levels.push_back({{"L", lv.L},
                      {"stats", summary_json(lv.stats)},
                      {"bias", lv.bias},
                      {"bias_se", lv.bias_se},
                      {"failures", lv.failures}});
  check_max(c.check, "slope_max", r.fit ? r.fit->slope : NAN, "slope of log |bias| vs log(L/eps)", res.checks);
  std::ostringstream os;
  if (!r.levels.empty()) os << "|bias| = " << std::abs(r.levels.back().bias) << " vs sd = " << r.levels.back().stats.sd;
  check_flag(c.check, "bias_below_sd", r.bias_below_sd, os.str(), res.checks);
  return {{"levels", levels},
          {"fit", fit_json(r.fit)},
          {"reference", {{"value", reference}, {"se", reference_se}, {"source", source}}},
          {"control_variate", s.control_flux.has_value()},
          {"inconclusive", r.inconclusive},
          {"bias_below_sd", r.bias_below_sd}};
}

json run_localization(const ExperimentConfig& c, Csv& csv, RunResult& res) {
  const auto mode = c.section.value("mode", std::string("gap"));
  const auto fam = c.family();
  const int S = c.n_samples;
  if (mode == "gap") {
    const int E = static_cast<int>(c.T_over_eps2.size());
    std::vector<LocalizationGap> gaps(static_cast<std::size_t>(S) * E);
    std::vector<std::string> err(gaps.size());
    std::vector<double> Ls(E);
    for (int i = 0; i < E; ++i) {
      const double sT = std::sqrt(c.T_over_eps2[i]);
      Ls[i] = c.L > 0 ? c.L
                      : c.epsilon * std::max(64.0, 4 * std::pow(2.0, std::ceil(std::log2(8 * std::sqrt(2.0) * sT))));
    }
#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < S * E; ++t) {
      const int i = t / S;
      try {
        const auto om = c.medium.sample(c.d, Ls[i], c.epsilon, seed_stream(c.base_seed, static_cast<std::uint64_t>(t)));
        gaps[t] = localization_gap(om, fam, c.xi, c.T_over_eps2[i] * c.epsilon * c.epsilon, c.solver);
      } catch (const std::exception& e) {
        err[t] = e.what();
      }
    }
    std::vector<double> xs, ys;
    json levels = json::array();
    for (int i = 0; i < E; ++i) {
      std::vector<double> v;
      const double T = c.T_over_eps2[i] * c.epsilon * c.epsilon;
      const int n = static_cast<int>(std::lround(c.medium.resolution * Ls[i] / c.epsilon));
      for (int s = 0; s < S; ++s) {
        const int t = i * S + s;
        const auto seed = seed_stream(c.base_seed, static_cast<std::uint64_t>(t));
        if (!err[t].empty()) {
          res.task_failures.push_back("T=" + num(T) + " seed=" + num(seed) + ": " + err[t]);
          continue;
        }
        v.push_back(gaps[t].gap());
        csv.add({c.kind, num(c.d), num(n), num(Ls[i]), num(c.epsilon), num(T), joined(c.xi), "gap", num(seed),
                 num(gaps[t].gap()), "0", num(c.solver.tol), num(c.base_seed), version_string()});
      }
      const auto st = summarize(v);
      levels.push_back({{"T", T}, {"L", Ls[i]}, {"gap", summary_json(st)}});
      if (!v.empty() && st.mean > 0) {
        xs.push_back(std::sqrt(T));
        ys.push_back(st.mean);
      }
    }
    std::optional<RateFit> fit;
    if (xs.size() >= 3) fit = fit_rate(xs, ys);
    check_range(c.check, "slope", fit ? fit->slope : NAN, "slope of log gap vs log sqrt(T)", res.checks);
    return {{"mode", mode}, {"levels", levels}, {"fit", fit_json(fit)}};
  }
  const double T = c.section.value("T", 16.0) * c.epsilon * c.epsilon;
  if (mode == "response") {
    const double radius = c.section.value("radius", 1.0) * c.epsilon;
    const double value = c.section.value("value", 0.9);
    std::vector<PerturbationResponse> out(S);
    std::vector<std::string> err(S);
#pragma omp parallel for schedule(dynamic)
    for (int s = 0; s < S; ++s) {
      try {
        const auto om = c.medium.sample(c.d, c.L, c.epsilon, seed_stream(c.base_seed, static_cast<std::uint64_t>(s)));
        out[s] = perturbation_response(om, fam, c.xi, T, radius, value, c.solver);
      } catch (const std::exception& e) {
        err[s] = e.what();
      }
    }
    double gmin = INFINITY, r2min = INFINITY, ratio_max = 0.0;
    json samples = json::array();
    const int n = static_cast<int>(std::lround(c.medium.resolution * c.L / c.epsilon));
    for (int s = 0; s < S; ++s) {
      const auto seed = seed_stream(c.base_seed, static_cast<std::uint64_t>(s));
      if (!err[s].empty()) {
        res.task_failures.push_back("seed=" + num(seed) + ": " + err[s]);
        continue;
      }
      const auto& p = out[s];
      gmin = std::min(gmin, p.gamma_hat);
      r2min = std::min(r2min, p.r_squared);
      ratio_max = std::max(ratio_max, p.ratio_at_10);
      for (std::size_t b = 0; b < p.radii.size(); ++b)
        csv.add({c.kind, num(c.d), num(n), num(c.L), num(c.epsilon), num(T), joined(c.xi), "r=" + num(p.radii[b]),
                 num(seed), num(p.density[b]), "0", num(c.solver.tol), num(c.base_seed), version_string()});
      samples.push_back({{"seed", seed},
                         {"gamma_hat", p.gamma_hat},
                         {"r_squared", p.r_squared},
                         {"ratio_at_10", p.ratio_at_10},
                         {"fit_points", p.fit_points}});
    }
    check_min(c.check, "gamma_min", gmin, "min fitted decay rate", res.checks);
    check_min(c.check, "r2_min", r2min, "min R^2", res.checks);
    check_max(c.check, "ratio_at_10_max", ratio_max, "max response ratio at 10 sqrt(T)", res.checks);
    return {{"mode", mode}, {"T", T}, {"samples", samples}};
  }
  // weights
  auto s = sweep_of(c);
  WeightSpec w[2];
  if (c.section.contains("weights")) {
    const auto& ws = c.section.at("weights");
    if (!ws.is_array() || ws.size() != 2) throw ConfigError("localization.weights", "expected two weight tables");
    for (int i = 0; i < 2; ++i) {
      w[i].profile = ws[i].value("profile", std::string("bump"));
      w[i].radius = ws[i].value("radius", 0.0) * c.epsilon;
    }
  } else {
    w[0].profile = "bump";
    w[1].profile = "cosine";
  }
  const auto r = weight_independence(s, c.L / c.epsilon, T, w[0], w[1]);
  const int n = static_cast<int>(std::lround(c.medium.resolution * c.L / c.epsilon));
  const std::pair<const char*, const SampleSummary*> parts[] = {
      {"first", &r.first}, {"second", &r.second}, {"difference", &r.difference}};
  for (const auto& [label, st] : parts)
    csv.add({c.kind, num(c.d), num(n), num(c.L), num(c.epsilon), num(T), joined(c.xi), label, "all", num(st->mean),
             num(st->se), num(c.solver.tol), num(c.base_seed), version_string()});
  std::ostringstream os;
  os << "|mean1 - mean2| / combined se = " << r.z << " over " << r.samples << " samples";
  if (c.check.contains("z_max"))
    res.checks.push_back({"z_max", r.samples > 0 && r.z <= c.check.at("z_max").get<double>(), os.str()});
  check_min(c.check, "samples_min", r.samples, "samples", res.checks);
  return {{"mode", mode},
          {"T", T},
          {"first", summary_json(r.first)},
          {"second", summary_json(r.second)},
          {"difference", summary_json(r.difference)},
          {"combined_se", r.combined_se},
          {"z", r.z},
          {"samples", r.samples}};
}

EffectiveLaw choose_law(const ExperimentConfig& c, const RunOptions& o, FamilyPtr fam, double xi_max) {
  auto law = c.section.value("law", std::string("auto"));
  const bool linear = c.family_spec.rfind("linear:", 0) == 0;
  if (law == "auto") {
    if (c.d == 1 && c.m == 1 && fam->k() == 1)
      law = "tabulated";
    else if (c.d == 2 && c.family_spec == "linear:exp")
      law = "duality";
    else if (linear)
      law = "rve";
    else
      throw ConfigError("homogenization_error.law", "no reference law for this family; give table:<id>");
  }
  std::vector<double> I(static_cast<std::size_t>(c.m * c.d * c.m * c.d), 0.0);
  for (int a = 0; a < c.m * c.d; ++a) I[a * c.m * c.d + a] = 1.0;
  if (law == "tabulated") {
    if (c.d != 1 || c.m != 1) throw ConfigError("homogenization_error.law", "tabulated law needs d = m = 1");
    return tabulated_effective_law_1d(*fam, c.medium.clamp, xi_max);
  }
  if (law == "duality") {
    // a = exp(kappa omega) with omega and -omega equal in law: a and 1/a are
    // equal in law, so in d = 2 the effective coefficient is exactly 1.
    const bool symmetric = c.medium.clamp.kind != ClampKind::half_tanh;
    if (c.d != 2 || c.family_spec != "linear:exp" || !symmetric)
      throw ConfigError("homogenization_error.law", "duality law needs d = 2, linear:exp and a symmetric clamp");
    return linear_effective_law(c.m, c.d, I, "duality: A_hom = 1 for a, 1/a equal in law (d = 2)");
  }
  if (law == "rve") {
    if (!linear) throw ConfigError("homogenization_error.law", "rve law needs a linear family");
    const double Lr = c.section.value("law_L", 32.0) * c.epsilon;
    const int samples = c.section.value("law_samples", 8);
    const auto med = c.medium;
    const int d = c.d;
    const double eps = c.epsilon;
    double se = 0.0;
    auto out = rve_effective_law(
        fam, [&](std::uint64_t s) { return med.sample(d, Lr, eps, s); }, samples,
        seed_stream(c.base_seed, 0xFFFFFFFFull), c.solver, &se);
    out.source += ", max se " + num(se);
    return out;
  }
  double se = 0.0;
  const double v = find_reference(c, o, law.substr(6), &se);
  for (double& x : I) x *= v;
  return linear_effective_law(c.m, c.d, I, law + " (se " + num(se) + ")");
}

json run_homogenization(const ExperimentConfig& c, const RunOptions& o, Csv& csv, RunResult& res) {
  HomogenizationConfig h;
  h.d = c.d;
  h.L = c.section.value("L", 1.0);
  h.eps_over_L = c.eps_over_L;
  h.n_samples = c.n_samples;
  h.base_seed = c.base_seed;
  h.family = c.family();
  h.medium = c.medium;
  h.domain = c.section.value("domain", std::string("torus"));
  h.profile = c.section.value("profile", std::string(h.domain == "box" ? "box_mode" : "mode"));
  h.mass = c.section.value("mass", -1.0);
  h.opts = c.solver;
  h.two_scale_diagnostic = c.section.value("two_scale", false);
  h.delta_power = c.section.value("delta_power", h.domain == "box" ? 0.5 : 1.0);
  // slopes seen by the law: twice the steepest profile slope on the finest grid
  double smallest = *std::min_element(h.eps_over_L.begin(), h.eps_over_L.end());
  const auto gf = h.medium.grid(h.d, h.L, smallest * h.L);
  const double xi_max = std::max(1.0, 2.0 * apply_gradient(macroscopic_profile(gf, h.profile, c.m)).max_abs());
  const auto law = choose_law(c, o, h.family, xi_max);
  const auto r = homogenization_error_experiment(h, law);

  Csv& out = csv;
  bool energy_ok = true;
  for (const auto& row : r.rows) {
    if (!row.error.empty()) {
      res.task_failures.push_back("eps=" + num(row.epsilon) + " seed=" + num(row.seed) + ": " + row.error);
      continue;
    }
    energy_ok = energy_ok && row.grad_norm <= 1.05 * row.grad_bound;
    out.add({c.kind, num(c.d), num(row.n), num(h.L), num(row.epsilon), num(row.seed), num(row.l2_error),
             num(row.lp_error), num(row.residual), num(row.h1_two_scale), num(row.delta), num(row.tau),
             num(row.grad_norm), num(row.grad_bound), num(c.solver.tol), num(c.base_seed), version_string()});
  }
  bool monotone = true;
  json levels = json::array();
  for (std::size_t i = 0; i < r.eps.size(); ++i) {
    levels.push_back({{"epsilon", r.eps[i]}, {"l2_error", summary_json(r.error[i])}});
    if (i > 0) {
      const auto &a = r.error[i - 1], &b = r.error[i];
      monotone = monotone && b.mean <= a.mean + 3 * std::hypot(a.se, b.se);
    }
  }
  check_range(c.check, "slope", r.fit ? r.fit->slope : NAN, "slope of log L2 error vs log eps", res.checks);
  check_flag(c.check, "energy_control", energy_ok, "||D+u|| <= 1.05 x energy bound on every instance", res.checks);
  check_flag(c.check, "monotone", monotone, "seed-mean error non-increasing along the sweep (3 se)", res.checks);
  return {{"levels", levels}, {"fit", fit_json(r.fit)}, {"law", r.law_source}, {"note", r.note},
          {"domain", h.domain}, {"profile", h.profile}, {"delta_power", h.delta_power}};
}

json run_structure(const ExperimentConfig& c, Csv& csv, RunResult& res) {
  const auto fam = c.family();
  StructureConfig s;
  s.n_samples = c.n_samples;
  s.base_seed = c.base_seed;
  s.opts = c.solver;
  s.xi = c.xi;
  const int npairs = c.section.value("n_pairs", 4);
  const double scale = c.section.value("pair_scale", 1.0);
  std::mt19937_64 gen(seed_stream(c.base_seed, 0xABCDEFull));
  std::normal_distribution<double> N01;
  for (int p = 0; p < npairs; ++p) {
    std::vector<double> a(c.xi.size()), b(c.xi.size());
    for (auto& v : a) v = scale * N01(gen);
    for (auto& v : b) v = scale * N01(gen);
    s.xi_pairs.emplace_back(a, b);
  }
  for (const auto& a : c.section.value("frame_angles", std::vector<double>{}))
    s.frame_rotations.push_back(rotation_matrix(c.m, a));
  for (const auto& a : c.section.value("iso_angles", std::vector<double>{}))
    s.isotropy_rotations.push_back(rotation_matrix(c.d, a));
  const auto med = c.medium;
  const int d = c.d;
  const double L = c.L, eps = c.epsilon;
  const auto rep = structure_checks(fam, [&](std::uint64_t seed) { return med.sample(d, L, eps, seed); }, s);
  const int n = static_cast<int>(std::lround(c.medium.resolution * L / eps));
  const std::pair<const char*, double> metrics[] = {
      {"monotone_min", rep.monotone_min},   {"lipschitz_max", rep.lipschitz_max}, {"frame_max_dev", rep.frame_max_dev},
      {"frame_max_z", rep.frame_max_z},     {"iso_max_dev", rep.iso_max_dev},     {"iso_max_z", rep.iso_max_z},
      {"mean_monotone_min", rep.mean_monotone_min}};
  for (const auto& [k, v] : metrics)
    csv.add({c.kind, num(c.d), num(n), num(L), num(eps), "inf", joined(c.xi), k, "all", num(v), "0",
             num(c.solver.tol), num(c.base_seed), version_string()});
  auto flag = [&](const char* key, bool v, const std::string& what) {
    if (c.check.value(key, false)) res.checks.push_back({key, v, what});
  };
  std::ostringstream m1, m2, m3, m4;
  m1 << "min dA.dxi/|dxi|^2 = " << rep.monotone_min << " vs lambda = " << rep.lambda;
  m2 << "max |dA|/|dxi| = " << rep.lipschitz_max << " vs " << rep.lipschitz_bound;
  m3 << "max z = " << rep.frame_max_z << " over " << s.frame_rotations.size() << " rotations";
  m4 << "max z = " << rep.iso_max_z << " over " << s.isotropy_rotations.size() << " rotations";
  flag("monotone", rep.monotone_pass, m1.str());
  flag("lipschitz", rep.lipschitz_pass, m2.str());
  flag("frame", rep.frame_pass && !s.frame_rotations.empty(), m3.str());
  flag("isotropy", rep.iso_pass && !s.isotropy_rotations.empty(), m4.str());
  json j;
  for (const auto& [k, v] : metrics) j[k] = v;
  j["lambda"] = rep.lambda;
  j["Lambda"] = rep.Lambda;
  j["lipschitz_bound"] = rep.lipschitz_bound;
  j["samples"] = rep.samples;
  return j;
}

json run_spectral_gap(const ExperimentConfig& c, Csv& csv, RunResult& res) {
  const auto med = c.medium;
  const int d = c.d;
  const double L = c.L, eps = c.epsilon;
  const int n = static_cast<int>(std::lround(c.medium.resolution * L / eps));
  json levels = json::array();
  double worst = 0.0;
  std::vector<double> xs, ys;
  for (double r : c.radii) {
    const auto e = empirical_spectral_gap_ratio([&](std::uint64_t s) { return med.sample(d, L, eps, s); }, r * eps,
                                                eps, c.n_samples, c.base_seed);
    csv.add({c.kind, num(c.d), num(n), num(L), num(eps), "inf", "", "r=" + num(r * eps), "all", num(e.ratio),
             num(e.ratio_se), "0", num(c.base_seed), version_string()});
    levels.push_back({{"r", r * eps}, {"ratio", e.ratio}, {"ratio_se", e.ratio_se}, {"variance", e.variance}});
    worst = std::max(worst, e.ratio);
    if (e.variance > 0) {
      xs.push_back(r);
      ys.push_back(e.variance);
    }
  }
  std::optional<RateFit> fit;
  if (xs.size() >= 3) fit = fit_rate(xs, ys);
  check_max(c.check, "ratio_max", worst, "max Var[F] (r/eps)^d", res.checks);
  check_range(c.check, "slope", fit ? fit->slope : NAN, "slope of log Var vs log r", res.checks);
  return {{"levels", levels}, {"fit", fit_json(fit)}};
}

std::string timestamp() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& c, const RunOptions& o) {
  if (o.workers > 0) omp_set_num_threads(o.workers);
  auto dir = !o.out_dir.empty() ? o.out_dir : (!c.output.empty() ? c.output : std::filesystem::path("out") / c.name);
  std::filesystem::create_directories(dir);
  RunResult res;
  const auto start = std::chrono::steady_clock::now();
  Csv csv(c.kind == "homogenization_error"
              ? std::vector<std::string>{"kind",  "d",     "n",         "L",          "epsilon", "seed",
                                         "L2_error", "Lp_error", "residual", "h1_two_scale", "delta", "tau",
                                         "grad_norm", "grad_bound", "tol", "base_seed", "version"}
              : kRveHeader);
  json body;
  if (c.kind == "fluctuation")
    body = run_fluctuation(c, csv, res);
  else if (c.kind == "systematic")
    body = run_systematic(c, o, csv, res);
  else if (c.kind == "localization")
    body = run_localization(c, csv, res);
  else if (c.kind == "homogenization_error")
    body = run_homogenization(c, o, csv, res);
  else if (c.kind == "structure")
    body = run_structure(c, csv, res);
  else
    body = run_spectral_gap(c, csv, res);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  res.csv = dir / (c.name + ".csv");
  res.summary = dir / (c.name + ".json");
  csv.write(res.csv);
  res.fit = body.contains("fit") ? body.at("fit") : json(nullptr);
  json checks = json::array();
  for (const auto& ch : res.checks) checks.push_back({{"name", ch.name}, {"pass", ch.pass}, {"detail", ch.detail}});
  json summary = {{"name", c.name},
                  {"kind", c.kind},
                  {"version", version_string()},
                  {"created", timestamp()},
                  {"seconds", secs},
                  {"workers", omp_get_max_threads()},
                  {"rows", csv.size()},
                  {"results", body},
                  {"checks", checks},
                  {"task_failures", res.task_failures},
                  {"config", c.raw}};
  std::ofstream(res.summary) << summary.dump(2) << '\n';
  return res;
}

RateFit fit_csv(const std::filesystem::path& p, const std::string& x, const std::string& y,
                const std::string& value_column) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty csv");
  const auto header = split(line);
  auto col = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::invalid_argument("csv has no column '" + name + "'");
  };
  const bool aggregate = y == "sd" || y == "mean" || y == "se" || y == "abs_mean";
  const std::size_t cx = col(x), cy = col(aggregate ? value_column : y);
  std::map<double, std::vector<double>> groups;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto r = split(line);
    groups[std::stod(r.at(cx))].push_back(std::stod(r.at(cy)));
  }
  std::vector<double> xs, ys;
  for (const auto& [k, v] : groups) {
    const auto s = summarize(v);
    xs.push_back(k);
    ys.push_back(y == "sd" ? s.sd : y == "se" ? s.se : y == "abs_mean" ? std::abs(s.mean) : s.mean);
  }
  return fit_rate(xs, ys);
}

}  // namespace homolab
