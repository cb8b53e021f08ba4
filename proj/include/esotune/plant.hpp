#pragma once

// Benchmark plants: a nonlinear academic system (NS) and a DC-motor driven
// one-link manipulator (M1D), both in the form
//   x1' = x2,  x2' = f(x, t) + g(x) u + d*(t),  y = x1 + n.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <variant>
#include <vector>

#include "esotune/rng.hpp"

namespace esotune {

using State2 = std::array<double, 2>;

enum class PlantKind { ns, m1d };

std::string_view to_string(PlantKind kind);
PlantKind plant_kind_from_string(std::string_view name);

/// Upper end of the supported time axis; the M1D disturbance is only defined on [0, 10].
inline constexpr double kHorizonMax = 10.0;

struct NsParams {
  double a1 = 0.0;  // drift frequency
  double a2 = 0.0;  // disturbance amplitude
  double a3 = 0.0;  // disturbance frequency
  double a4 = 1.0;  // input-gain offset
  double a5 = 0.0;  // input-gain amplitude
  double a6 = 0.0;  // input-gain frequency
  double g_hat = -1.0;
};

struct M1dParams {
  double b1 = -8.8255;  // drift coefficient [1/s]
  double b2 = -20.169;  // input gain, -K_I/(J R)
  double b3 = 0.0;      // constant load level
  double b4 = 0.0;      // sawtooth amplitude
  double b5 = 0.0;      // sawtooth frequency [Hz]
  double b6 = 0.0;      // sine amplitude
  double b7 = 0.0;      // sine frequency [Hz]
  double g_hat = -20.0;
};

/// Zero-mean normal noise truncated to +-truncation_k * sigma_n.
struct NoiseModel {
  double sigma_n = 0.0;
  double truncation_k = 3.0;
  std::uint64_t seed = 0;

  double bound() const { return truncation_k * sigma_n; }
  void validate() const;
};

struct PlantSpec {
  PlantKind kind = PlantKind::ns;
  std::variant<NsParams, M1dParams> params = NsParams{};
  NoiseModel noise;

  static PlantSpec ns(const NsParams& p, double sigma_n = 0.0);
  static PlantSpec m1d(const M1dParams& p, double sigma_n = 0.0);

  double g_hat() const;
  const NsParams& ns_params() const { return std::get<NsParams>(params); }
  const M1dParams& m1d_params() const { return std::get<M1dParams>(params); }
  void validate() const;
};

/// saw(theta) = 2 (theta/2pi - floor(theta/2pi + 1/2)); range [-1, 1), period 2pi.
double sawtooth(double theta);

double drift(const PlantSpec& spec, const State2& x, double t);

/// NS: -(a4 + a5 sin(a6 x2)); the actuator acts with reversed polarity so that
/// g / g_hat stays positive for g_hat = -1. M1D: b2.
double input_gain(const PlantSpec& spec, const State2& x);

/// d*(t). Throws std::domain_error for t outside [0, kHorizonMax].
double external_disturbance(const PlantSpec& spec, double t);

/// d = f + (g - g_hat) u + d*. Ground truth; never visible to the controller.
double total_disturbance(const PlantSpec& spec, const State2& x, double u, double t);

/// Stateful truncated-normal sampler (rejection sampling). Deterministic given the seed.
class NoiseSource {
 public:
  explicit NoiseSource(const NoiseModel& model);
  double next();

 private:
  NoiseModel model_;
  Rng rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::vector<double> sample_noise(const NoiseModel& model, std::size_t count);

}  // namespace esotune
