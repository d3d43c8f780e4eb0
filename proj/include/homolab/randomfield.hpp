#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "homolab/grid.hpp"

namespace homolab {

enum class KernelShape {
  gaussian_bump,  // exp(-r^2 / (2 (eps/3)^2)), truncated at r = eps
  bump_compact,   // exp(-1 / (1 - (r/eps)^2)) for r < eps
  delta,          // single-site identity kernel
};

struct KernelSpec {
  KernelShape shape = KernelShape::gaussian_bump;
  double epsilon = 0.0;  // correlation length (kernel support radius)
  int k = 1;             // channels
};

enum class ClampKind {
  tanh_radial,  // theta(y) = tanh(g|y|) y/|y|
  affine_clip,  // theta(y) = projection of g*y onto the closed unit ball
  half_tanh,    // k = 1 only: theta(y) = (1 + tanh(g y)) / 2, range (0, 1)
};

struct ClampSpec {
  ClampKind kind = ClampKind::tanh_radial;
  double gain = 1.0;  // Lipschitz constant of theta (gain/2 for half_tanh)

  double lipschitz() const { return kind == ClampKind::half_tanh ? gain / 2 : gain; }
  /// Pointwise map on one R^k value, in place; result has |w| <= 1 - 1e-9.
  void apply(double* y, int k) const;
};

/// Largest admissible parameter norm.
inline constexpr double kBallRadius = 1.0 - 1e-9;

/// Construction record of a parameter field.
struct FieldLineage {
  std::string origin = "explicit";  // "sampled" or "explicit"
  KernelSpec kernel{};
  ClampSpec clamp{};
  double restrict_box = 0.0;  // L_box of restrict_pi_L, 0 when not applied
};

/// Random medium omega(x) in the open unit ball of R^k, values shape {k}.
struct ParameterField {
  Field values;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  FieldLineage lineage{};

  int channels() const { return values.shape().empty() ? 1 : values.shape()[0]; }
  const PeriodicGrid& grid() const { return values.grid(); }
  std::string lineage_json() const;
};

/// Wraps explicit values; throws std::invalid_argument unless |w| < 1 everywhere.
ParameterField make_parameter_field(Field values, double epsilon = 0.0);

/// Periodic white noise: i.i.d. N(0, h^-d) per site and channel.
///
/// Generated in Fourier space: each wavevector (signed, |k_i| <= n/2) gets
/// a Gaussian keyed by (seed, channel, k), made Hermitian so the inverse
/// transform is real. The transform is orthogonal up to scale, so the
/// per-site law is exactly i.i.d.; keying by wavevector additionally makes
/// two resolutions of the same seed share their common low modes.
Field sample_white_noise(const PeriodicGrid& g, int k, std::uint64_t seed);

/// Discrete kernel on the lattice (wrap distance), normalized so that
/// h^d sum beta^2 = 1. Throws on eps < 4h or eps > L/4 (not for delta).
std::vector<double> discretize_kernel(const PeriodicGrid& g, const KernelSpec& kernel);

/// h^d sum_y beta(y) beta(y + lag e_0): covariance of Y at a lattice lag.
double kernel_autocorrelation(const PeriodicGrid& g, const KernelSpec& kernel, int lag_sites);

/// Y = h^d (beta * W), circular convolution via FFT; unit pointwise variance.
Field gaussian_field(const Field& W, const KernelSpec& kernel);

/// omega(x) = theta(Y(x)).
ParameterField clamp_to_ball(const Field& Y, const ClampSpec& clamp);

/// Full pipeline: white noise -> convolution -> clamp.
ParameterField sample_parameter_field(const PeriodicGrid& g, const KernelSpec& kernel, const ClampSpec& clamp,
                                      std::uint64_t seed);

/// Keeps values in the ball of radius L_box/4 about the torus center, 0 elsewhere.
ParameterField restrict_pi_L(const ParameterField& omega, double L_box);

/// Lattice ball {x : |x - c| <= r} in wrap distance.
std::vector<std::size_t> lattice_ball(const PeriodicGrid& g, const std::array<double, 3>& center, double r);

/// Wrap (torus) distance between a site and a physical point.
double wrap_distance(const PeriodicGrid& g, std::size_t site, const std::array<double, 3>& point);

std::array<double, 3> torus_center(const PeriodicGrid& g);

struct SpectralGapEstimate {
  double ratio = 0.0;  // Var[F] (r/eps)^d
  double ratio_se = 0.0;
  double variance = 0.0;
  double variance_se = 0.0;
  double mean = 0.0;
  int samples = 0;
};

using FieldSampler = std::function<ParameterField(std::uint64_t seed)>;

/// Monte Carlo estimate of Var[F] (r/eps)^d for F = channel-0 average over
/// the lattice ball B_r about the torus center. Seeds come from
/// seed_stream(base_seed, i). Throws for n_samples < 100.
SpectralGapEstimate empirical_spectral_gap_ratio(const FieldSampler& sampler, double r, double epsilon,
                                                 int n_samples, std::uint64_t base_seed);

std::string to_string(KernelShape s);
std::string to_string(ClampKind c);
KernelShape parse_kernel_shape(const std::string& s);
ClampKind parse_clamp_kind(const std::string& s);

}  // namespace homolab
