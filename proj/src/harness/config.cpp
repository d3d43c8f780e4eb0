#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "homolab/harness.hpp"
#include "toml.hpp"

namespace homolab {

using nlohmann::json;

namespace {

json to_json(const toml::node& node) {
  if (auto t = node.as_table()) {
    json out = json::object();
    for (const auto& [k, v] : *t) out[std::string(k.str())] = to_json(v);
    return out;
  }
  if (auto a = node.as_array()) {
    json out = json::array();
    for (const auto& v : *a) out.push_back(to_json(v));
    return out;
  }
  if (auto v = node.as_integer()) return v->get();
  if (auto v = node.as_floating_point()) return v->get();
  if (auto v = node.as_boolean()) return v->get();
  if (auto v = node.as_string()) return v->get();
  throw ConfigError("<toml>", "dates and times are not supported");
}

/// Typed access with the dotted path carried along for error messages.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected a table");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  T get(const std::string& key, T fallback) const {
    if (!j_.contains(key)) return fallback;
    return as<T>(j_.at(key), at(key));
  }
  template <class T>
  T need(const std::string& key) const {
    if (!j_.contains(key)) throw ConfigError(at(key), "missing");
    return as<T>(j_.at(key), at(key));
  }
  std::vector<double> list(const std::string& key) const {
    if (!j_.contains(key)) return {};
    const auto& a = j_.at(key);
    if (!a.is_array()) throw ConfigError(at(key), "expected an array of numbers");
    std::vector<double> v;
    for (std::size_t i = 0; i < a.size(); ++i) v.push_back(as<double>(a[i], at(key) + "[" + std::to_string(i) + "]"));
    return v;
  }
  void only(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, v] : j_.items())
      if (!ok.count(k)) throw ConfigError(at(k), "unknown key");
  }
  Section sub(const std::string& key) const {
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, at(key));
  }
  const json& raw() const { return j_; }

 private:
  template <class T>
  static T as(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path, "expected true or false");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
      return v.get<T>();
    } else {
      if (!v.is_number()) throw ConfigError(path, "expected a number");
      const double x = v.get<double>();
      if (!std::isfinite(x)) throw ConfigError(path, "must be finite");
      return x;
    }
  }
  const json& j_;
  std::string path_;
};

bool power_of_two(long long v) { return v > 0 && (v & (v - 1)) == 0; }

void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path, what);
}

void positive_list(const std::vector<double>& v, const std::string& path, std::size_t min_size) {
  require(v.size() >= min_size, path, "needs at least " + std::to_string(min_size) + " entries");
  for (double x : v) require(x > 0, path, "entries must be positive");
}

const std::set<std::string> kKinds = {"fluctuation", "systematic",   "localization",
                                      "homogenization_error", "structure", "spectral_gap"};

}  // namespace

json parse_toml(const std::string& text) {
  try {
    return to_json(toml::parse(text));
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "line " << e.source().begin.line << ": " << e.description();
    throw ConfigError("<toml>", os.str());
  }
}

json load_config_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("<file>", "cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  if (p.extension() == ".toml") return parse_toml(ss.str());
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("<json>", e.what());
  }
}

FamilyPtr ExperimentConfig::family() const { return make_family(family_spec, m, d, family_params); }

ExperimentConfig parse_experiment(const json& doc) {
  Section root(doc, "");
  root.only({"kind", "name", "base_seed", "n_samples", "output", "field", "family", "sweep", "solver", "check",
             "fluctuation", "systematic", "localization", "homogenization_error", "structure", "spectral_gap"});
  ExperimentConfig c;
  c.raw = doc;
  c.kind = root.need<std::string>("kind");
  require(kKinds.count(c.kind) > 0, "kind", "unknown experiment kind '" + c.kind + "'");
  c.name = root.get<std::string>("name", c.kind);
  const auto seed = root.get<std::int64_t>("base_seed", 1);
  require(seed >= 0, "base_seed", "must be non-negative");
  c.base_seed = static_cast<std::uint64_t>(seed);
  c.n_samples = root.get<int>("n_samples", 1);
  require(c.n_samples >= 1, "n_samples", "must be >= 1");
  c.output = root.get<std::string>("output", "");

  const auto f = root.sub("field");
  f.only({"d", "n", "L", "epsilon", "k", "kernel", "clamp", "gain", "resolution", "seed"});
  c.d = f.get<int>("d", 1);
  require(c.d >= 1 && c.d <= 3, f.at("d"), "must be 1, 2 or 3");
  c.epsilon = f.get<double>("epsilon", 1.0);
  require(c.epsilon > 0, f.at("epsilon"), "must be positive");
  c.L = f.get<double>("L", 0.0);
  require(c.L >= 0, f.at("L"), "must be positive");
  c.medium.k = f.get<int>("k", 1);
  require(c.medium.k >= 1, f.at("k"), "must be >= 1");
  try {
    c.medium.shape = parse_kernel_shape(f.get<std::string>("kernel", "gaussian-bump"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(f.at("kernel"), e.what());
  }
  try {
    c.medium.clamp.kind = parse_clamp_kind(f.get<std::string>("clamp", "tanh-radial"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(f.at("clamp"), e.what());
  }
  c.medium.clamp.gain = f.get<double>("gain", 1.0);
  require(c.medium.clamp.gain >= 0, f.at("gain"), "must be non-negative");
  c.medium.resolution = f.get<int>("resolution", 4);
  if (f.has("n")) {
    const int n = f.need<int>("n");
    require(c.L > 0, f.at("L"), "needed together with field.n");
    const double r = n * c.epsilon / c.L;
    require(std::abs(r - std::round(r)) < 1e-9, f.at("n"), "n eps / L must be an integer");
    c.medium.resolution = static_cast<int>(std::lround(r));
  }
  require(power_of_two(c.medium.resolution), f.at("resolution"), "eps / h must be a power of two");
  if (c.L > 0) {
    const double n = c.medium.resolution * c.L / c.epsilon;
    require(std::abs(n - std::round(n)) < 1e-9 && power_of_two(std::llround(n)) && n >= 4, f.at("L"),
            "resolution * L / eps must be a power of two >= 4");
  }

  const auto fam = root.sub("family");
  fam.only({"spec", "m", "params"});
  c.family_spec = fam.get<std::string>("spec", "rational_uhlenbeck");
  c.m = fam.get<int>("m", 1);
  require(c.m >= 1, fam.at("m"), "must be >= 1");
  if (fam.has("params")) c.family_params = fam.raw().at("params");
  FamilyPtr family;
  try {
    family = c.family();
  } catch (const std::exception& e) {
    throw ConfigError(fam.at("spec"), e.what());
  }
  require(family->k() <= c.medium.k || family->k() == 1, f.at("k"), "family needs more medium channels");

  const auto sw = root.sub("sweep");
  sw.only({"L_over_eps", "T", "eps_over_L", "xi", "radii"});
  c.L_over_eps = sw.list("L_over_eps");
  c.T_over_eps2 = sw.list("T");
  c.eps_over_L = sw.list("eps_over_L");
  c.radii = sw.list("radii");
  c.xi = sw.list("xi");
  if (c.xi.empty()) {
    c.xi.assign(static_cast<std::size_t>(c.m) * c.d, 0.0);
    c.xi[0] = 1.0;
  }
  require(static_cast<int>(c.xi.size()) == c.m * c.d, sw.at("xi"), "needs m * d entries");

  const auto so = root.sub("solver");
  so.only({"tol", "max_newton", "gmres_restart", "max_gmres", "forcing", "relax_steps", "max_relax"});
  c.solver.tol = so.get<double>("tol", c.solver.tol);
  require(c.solver.tol > 0, so.at("tol"), "must be positive");
  c.solver.max_newton = so.get<int>("max_newton", c.solver.max_newton);
  c.solver.gmres_restart = so.get<int>("gmres_restart", c.solver.gmres_restart);
  require(c.solver.gmres_restart >= 1, so.at("gmres_restart"), "must be >= 1");
  c.solver.max_gmres = so.get<int>("max_gmres", c.solver.max_gmres);
  c.solver.forcing = so.get<double>("forcing", c.solver.forcing);
  require(c.solver.forcing > 0 && c.solver.forcing < 1, so.at("forcing"), "must lie in (0, 1)");
  c.solver.relax_steps = so.get<int>("relax_steps", c.solver.relax_steps);
  c.solver.max_relax = so.get<int>("max_relax", c.solver.max_relax);

  c.check = doc.contains("check") ? doc.at("check") : json::object();
  Section(c.check, "check");
  c.section = doc.contains(c.kind) ? doc.at(c.kind) : json::object();
  const Section s(c.section, c.kind);

  if (c.kind == "fluctuation" || c.kind == "systematic") {
    positive_list(c.L_over_eps, sw.at("L_over_eps"), 1);
    for (double r : c.L_over_eps) c.medium.grid(c.d, r * c.epsilon, c.epsilon);
    if (c.kind == "systematic") {
      s.only({"reference", "reference_se", "control_variate"});
      if (s.has("reference") && !s.raw().at("reference").is_number() && !s.raw().at("reference").is_string())
        throw ConfigError(s.at("reference"), "expected a number, \"oracle\" or \"table:<id>\"");
    } else {
      s.only({"component"});
    }
  } else if (c.kind == "localization") {
    s.only({"mode", "radius", "value", "weights", "T"});
    const auto mode = s.get<std::string>("mode", "gap");
    require(mode == "gap" || mode == "response" || mode == "weights", s.at("mode"), "gap, response or weights");
    if (mode == "gap") positive_list(c.T_over_eps2, sw.at("T"), 1);
    if (mode == "response" || mode == "weights") {
      require(c.L > 0, f.at("L"), "required for this mode");
      require(s.get<double>("T", 16.0) > 0, s.at("T"), "must be positive");
    }
    if (mode == "response") {
      const double v = s.get<double>("value", 0.9);
      require(std::abs(v) < 1, s.at("value"), "must lie in the unit ball");
    }
  } else if (c.kind == "homogenization_error") {
    s.only({"profile", "domain", "law", "law_samples", "law_L", "mass", "delta_power", "two_scale", "L"});
    positive_list(c.eps_over_L, sw.at("eps_over_L"), 1);
    for (double r : c.eps_over_L) require(r < 1, sw.at("eps_over_L"), "entries must be < 1");
    const auto dom = s.get<std::string>("domain", "torus");
    require(dom == "torus" || dom == "box", s.at("domain"), "torus or box");
    const auto law = s.get<std::string>("law", "auto");
    require(law == "auto" || law == "tabulated" || law == "duality" || law == "rve" || law.rfind("table:", 0) == 0,
            s.at("law"), "auto, tabulated, duality, rve or table:<id>");
    require(s.get<double>("delta_power", 1.0) > 0, s.at("delta_power"), "must be positive");
  } else if (c.kind == "structure") {
    require(c.L > 0, f.at("L"), "required for structure checks");
    s.only({"n_pairs", "pair_scale", "frame_angles", "iso_angles"});
    require(s.get<int>("n_pairs", 4) >= 1, s.at("n_pairs"), "must be >= 1");
  } else if (c.kind == "spectral_gap") {
    require(c.L > 0, f.at("L"), "required for the spectral-gap check");
    positive_list(c.radii, sw.at("radii"), 1);
    require(c.n_samples >= 100, "n_samples", "the spectral-gap estimate needs >= 100 samples");
  }
  return c;
}

std::vector<ReferenceEntry> load_reference_table(const std::filesystem::path& p) {
  const json doc = load_config_file(p);
  const Section root(doc, "");
  std::vector<ReferenceEntry> out;
  if (!doc.contains("entries") || !doc.at("entries").is_array()) throw ConfigError("entries", "missing array");
  for (std::size_t i = 0; i < doc.at("entries").size(); ++i) {
    const Section e(doc.at("entries")[i], "entries[" + std::to_string(i) + "]");
    ReferenceEntry r;
    r.id = e.need<std::string>("id");
    r.value = e.need<double>("value");
    r.se = e.get<double>("se", 0.0);
    r.provenance = e.raw();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace homolab
