#include "homolab/randomfield.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <stdexcept>
#include <tuple>

#include "homolab/rng.hpp"
#include "homolab/spectral.hpp"
#include "json.hpp"

namespace homolab {

namespace {

using cplx = std::complex<double>;

// Per-thread complex FFT plans for one grid shape.
class FourierWorkspace {
 public:
  explicit FourierWorkspace(const PeriodicGrid& g) : buf(g.sites()) {
    int dims[3] = {g.n, g.n, g.n};
    auto* p = reinterpret_cast<fftw_complex*>(buf.data());
    std::lock_guard lock(fftw_planner_mutex());
    fwd = fftw_plan_dft(g.dim, dims, p, p, FFTW_FORWARD, FFTW_ESTIMATE);
    bwd = fftw_plan_dft(g.dim, dims, p, p, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  ~FourierWorkspace() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
  }
  FourierWorkspace(const FourierWorkspace&) = delete;
  FourierWorkspace& operator=(const FourierWorkspace&) = delete;

  void forward() { fftw_execute(fwd); }
  void backward() { fftw_execute(bwd); }

  static FourierWorkspace& local(const PeriodicGrid& g) {
    thread_local std::map<std::tuple<int, int>, std::unique_ptr<FourierWorkspace>> cache;
    auto& slot = cache[{g.dim, g.n}];
    if (!slot) slot = std::make_unique<FourierWorkspace>(g);
    return *slot;
  }

  std::vector<cplx> buf;

 private:
  fftw_plan fwd = nullptr, bwd = nullptr;
};

int signed_mode(int m, int n) { return m <= n / 2 ? m : m - n; }

std::uint64_t encode_mode(const std::array<int, 3>& k) {
  constexpr std::uint64_t off = 1u << 20;
  return ((k[0] + off) << 42) | ((k[1] + off) << 21) | (k[2] + off);
}

double kernel_profile(KernelShape s, double t) {
  if (t >= 1.0) return 0.0;
  switch (s) {
    case KernelShape::gaussian_bump:
      return std::exp(-4.5 * t * t);  // sigma = eps/3
    case KernelShape::bump_compact:
      return std::exp(-1.0 / (1.0 - t * t));
    case KernelShape::delta:
      break;
  }
  return 0.0;
}

}  // namespace

void ClampSpec::apply(double* y, int k) const {
  double r2 = 0.0;
  for (int i = 0; i < k; ++i) r2 += y[i] * y[i];
  const double r = std::sqrt(r2);
  switch (kind) {
    case ClampKind::tanh_radial: {
      const double s = r > 0.0 ? std::tanh(gain * r) / r : 0.0;
      for (int i = 0; i < k; ++i) y[i] *= s;
      break;
    }
    case ClampKind::affine_clip:
      for (int i = 0; i < k; ++i) y[i] *= gain;
      break;
    case ClampKind::half_tanh:
      if (k != 1) throw std::invalid_argument("clamp: half_tanh requires k = 1");
      y[0] = 0.5 * (1.0 + std::tanh(gain * y[0]));
      break;
  }
  double w2 = 0.0;
  for (int i = 0; i < k; ++i) w2 += y[i] * y[i];
  if (w2 > kBallRadius * kBallRadius) {
    // slightly inside, so rounding cannot push |w| past the radius
    const double s = kBallRadius * (1 - 1e-15) / std::sqrt(w2);
    for (int i = 0; i < k; ++i) y[i] *= s;
  }
}

std::string to_string(KernelShape s) {
  switch (s) {
    case KernelShape::gaussian_bump: return "gaussian-bump";
    case KernelShape::bump_compact: return "bump-compact";
    case KernelShape::delta: return "delta";
  }
  return "?";
}

std::string to_string(ClampKind c) {
  switch (c) {
    case ClampKind::tanh_radial: return "tanh-radial";
    case ClampKind::affine_clip: return "affine-clip";
    case ClampKind::half_tanh: return "half-tanh";
  }
  return "?";
}

KernelShape parse_kernel_shape(const std::string& s) {
  if (s == "gaussian-bump") return KernelShape::gaussian_bump;
  if (s == "bump-compact") return KernelShape::bump_compact;
  if (s == "delta") return KernelShape::delta;
  throw std::invalid_argument("unknown kernel shape '" + s + "'");
}

ClampKind parse_clamp_kind(const std::string& s) {
  if (s == "tanh-radial") return ClampKind::tanh_radial;
  if (s == "affine-clip") return ClampKind::affine_clip;
  if (s == "half-tanh") return ClampKind::half_tanh;
  throw std::invalid_argument("unknown clamp map '" + s + "'");
}

std::string ParameterField::lineage_json() const {
  nlohmann::json j;
  j["origin"] = lineage.origin;
  j["seed"] = seed;
  j["epsilon"] = epsilon;
  j["grid"] = {{"d", grid().dim}, {"n", grid().n}, {"L", grid().length}};
  j["k"] = channels();
  if (lineage.origin == "sampled") {
    j["kernel"] = to_string(lineage.kernel.shape);
    j["clamp"] = {{"map", to_string(lineage.clamp.kind)}, {"gain", lineage.clamp.gain}};
  }
  if (lineage.restrict_box > 0) j["restrict_pi_L"] = lineage.restrict_box;
  return j.dump();
}

ParameterField make_parameter_field(Field values, double epsilon) {
  const auto N = values.sites();
  const auto k = values.components();
  for (std::size_t x = 0; x < N; ++x) {
    double w2 = 0.0;
    for (std::size_t c = 0; c < k; ++c) w2 += values(c, x) * values(c, x);
    if (!(w2 < 1.0)) throw std::invalid_argument("parameter field: |omega| >= 1 at site " + std::to_string(x));
  }
  ParameterField p;
  p.values = std::move(values);
  p.epsilon = epsilon;
  return p;
}

Field sample_white_noise(const PeriodicGrid& g, int k, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("white noise: k must be >= 1");
  Field W(g, {k});
  const std::size_t N = g.sites();
  const int n = g.n, d = g.dim;
  // |hat W(k)|^2 has mean N h^-d; the amplitude below equals sqrt(N h^-d).
  const double amp = std::sqrt(static_cast<double>(N) / g.cell_volume());
  auto& ws = FourierWorkspace::local(g);
  for (int c = 0; c < k; ++c) {
    for (std::size_t m = 0; m < N; ++m) {
      const auto idx = g.coords(m);
      std::array<int, 3> ks{0, 0, 0}, kp{0, 0, 0};
      bool self = true;
      for (int i = 0; i < d; ++i) {
        ks[i] = signed_mode(idx[i], n);
        kp[i] = signed_mode((n - idx[i]) % n, n);
        self = self && ks[i] == kp[i];
      }
      const bool canonical = self || ks > kp;
      const auto key = hash_words(seed, static_cast<std::uint64_t>(c), encode_mode(canonical ? ks : kp));
      const auto [a, b] = normal_pair(key);
      if (self)
        ws.buf[m] = {amp * a, 0.0};
      else
        ws.buf[m] = cplx(a, canonical ? b : -b) * (amp / std::sqrt(2.0));
    }
    ws.backward();
    auto out = W.component(c);
    for (std::size_t x = 0; x < N; ++x) out[x] = ws.buf[x].real() / static_cast<double>(N);
  }
  return W;
}

std::vector<double> discretize_kernel(const PeriodicGrid& g, const KernelSpec& kernel) {
  const std::size_t N = g.sites();
  std::vector<double> beta(N, 0.0);
  if (kernel.shape == KernelShape::delta) {
    beta[0] = 1.0 / std::sqrt(g.cell_volume());
    return beta;
  }
  const double eps = kernel.epsilon;
  if (!(eps >= 4.0 * g.spacing * (1 - 1e-12)))
    throw std::invalid_argument("kernel: under-resolved correlation length (epsilon < 4h)");
  if (eps > g.length / 4.0 * (1 + 1e-12)) throw std::invalid_argument("kernel: epsilon > L/4");
  const std::array<double, 3> origin{0, 0, 0};
  double s2 = 0.0;
  for (std::size_t x = 0; x < N; ++x) {
    beta[x] = kernel_profile(kernel.shape, wrap_distance(g, x, origin) / eps);
    s2 += beta[x] * beta[x];
  }
  const double scale = 1.0 / std::sqrt(g.cell_volume() * s2);
  for (double& b : beta) b *= scale;
  return beta;
}

double kernel_autocorrelation(const PeriodicGrid& g, const KernelSpec& kernel, int lag_sites) {
  const auto beta = discretize_kernel(g, kernel);
  double s = 0.0;
  for (std::size_t x = 0; x < g.sites(); ++x) s += beta[x] * beta[g.shift(x, 0, lag_sites)];
  return g.cell_volume() * s;
}

Field gaussian_field(const Field& W, const KernelSpec& kernel) {
  const auto& g = W.grid();
  const std::size_t N = g.sites();
  const auto beta = discretize_kernel(g, kernel);
  auto& ws = FourierWorkspace::local(g);
  std::copy(beta.begin(), beta.end(), ws.buf.begin());
  ws.forward();
  std::vector<cplx> beta_hat(ws.buf);
  const double scale = g.cell_volume() / static_cast<double>(N);
  Field Y(g, W.shape());
  for (std::size_t c = 0; c < W.components(); ++c) {
    auto in = W.component(c);
    std::copy(in.begin(), in.end(), ws.buf.begin());
    ws.forward();
    for (std::size_t m = 0; m < N; ++m) ws.buf[m] *= beta_hat[m] * scale;
    ws.backward();
    auto out = Y.component(c);
    for (std::size_t x = 0; x < N; ++x) out[x] = ws.buf[x].real();
  }
  return Y;
}

ParameterField clamp_to_ball(const Field& Y, const ClampSpec& clamp) {
  const auto k = static_cast<int>(Y.components());
  const std::size_t N = Y.sites();
  Field w(Y.grid(), {k});
  std::vector<double> v(k);
  for (std::size_t x = 0; x < N; ++x) {
    for (int c = 0; c < k; ++c) v[c] = Y(c, x);
    clamp.apply(v.data(), k);
    for (int c = 0; c < k; ++c) w(c, x) = v[c];
  }
  ParameterField p;
  p.values = std::move(w);
  p.lineage.clamp = clamp;
  return p;
}

ParameterField sample_parameter_field(const PeriodicGrid& g, const KernelSpec& kernel, const ClampSpec& clamp,
                                      std::uint64_t seed) {
  auto p = clamp_to_ball(gaussian_field(sample_white_noise(g, kernel.k, seed), kernel), clamp);
  p.epsilon = kernel.epsilon;
  p.seed = seed;
  p.lineage.origin = "sampled";
  p.lineage.kernel = kernel;
  return p;
}

std::array<double, 3> torus_center(const PeriodicGrid& g) {
  std::array<double, 3> c{0, 0, 0};
  for (int i = 0; i < g.dim; ++i) c[i] = g.length / 2;
  return c;
}

double wrap_distance(const PeriodicGrid& g, std::size_t site, const std::array<double, 3>& point) {
  const auto x = g.position(site);
  double r2 = 0.0;
  for (int i = 0; i < g.dim; ++i) {
    double dx = std::fmod(std::abs(x[i] - point[i]), g.length);
    dx = std::min(dx, g.length - dx);
    r2 += dx * dx;
  }
  return std::sqrt(r2);
}

std::vector<std::size_t> lattice_ball(const PeriodicGrid& g, const std::array<double, 3>& center, double r) {
  std::vector<std::size_t> out;
  for (std::size_t x = 0; x < g.sites(); ++x)
    if (wrap_distance(g, x, center) <= r * (1 + 1e-12)) out.push_back(x);
  return out;
}

ParameterField restrict_pi_L(const ParameterField& omega, double L_box) {
  const auto& g = omega.grid();
  if (!(L_box > 0.0) || L_box > g.length * (1 + 1e-12))
    throw std::invalid_argument("restrict_pi_L: L_box must lie in (0, L]");
  ParameterField out = omega;
  const auto c = torus_center(g);
  for (std::size_t x = 0; x < g.sites(); ++x)
    if (wrap_distance(g, x, c) > L_box / 4)
      for (std::size_t ch = 0; ch < out.values.components(); ++ch) out.values(ch, x) = 0.0;
  out.lineage.restrict_box = L_box;
  return out;
}

SpectralGapEstimate empirical_spectral_gap_ratio(const FieldSampler& sampler, double r, double epsilon,
                                                 int n_samples, std::uint64_t base_seed) {
  if (n_samples < 100) throw std::invalid_argument("spectral gap: n_samples must be >= 100");
  if (!(r > 0.0) || !(epsilon > 0.0)) throw std::invalid_argument("spectral gap: r and epsilon must be positive");
  std::vector<double> F(n_samples);
  std::vector<int> dims(n_samples, 1);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n_samples; ++i) {
    const auto w = sampler(seed_stream(base_seed, static_cast<std::uint64_t>(i)));
    const auto ball = lattice_ball(w.grid(), torus_center(w.grid()), r);
    double s = 0.0;
    for (auto x : ball) s += w.values(0, x);
    F[i] = s / static_cast<double>(ball.size());
    dims[i] = w.grid().dim;
  }
  const double n = n_samples;
  // shifted by F[0] so identical samples give exactly zero variance
  double shift = 0.0;
  for (double f : F) shift += f - F[0];
  const double mean = F[0] + shift / n;
  double m2 = 0.0, m4 = 0.0;
  for (double f : F) {
    const double e = (f - F[0] - shift / n) * (f - F[0] - shift / n);
    m2 += e;
    m4 += e * e;
  }
  const double var = m2 / (n - 1);
  m4 /= n;
  const double var_se = std::sqrt(std::max(0.0, (m4 - (n - 3) / (n - 1) * var * var) / n));
  const double norm = std::pow(r / epsilon, dims[0]);
  SpectralGapEstimate e;
  e.mean = mean;
  e.variance = var;
  e.variance_se = var_se;
  e.ratio = var * norm;
  e.ratio_se = var_se * norm;
  e.samples = n_samples;
  return e;
}

}  // namespace homolab
