#include "esotune/plant.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "esotune/errors.hpp"

namespace esotune {

std::string_view to_string(PlantKind kind) { return kind == PlantKind::ns ? "NS" : "M1D"; }

PlantKind plant_kind_from_string(std::string_view name) {
  if (name == "NS" || name == "ns") return PlantKind::ns;
  if (name == "M1D" || name == "m1d") return PlantKind::m1d;
  throw ConfigError("kind", "unknown plant kind '" + std::string(name) + "' (expected NS or M1D)");
}

void NoiseModel::validate() const {
  if (!(sigma_n >= 0.0) || !std::isfinite(sigma_n)) throw std::invalid_argument("sigma_n must be >= 0");
  if (!(truncation_k > 0.0)) throw std::invalid_argument("truncation_k must be > 0");
}

PlantSpec PlantSpec::ns(const NsParams& p, double sigma_n) {
  PlantSpec s;
  s.kind = PlantKind::ns;
  s.params = p;
  s.noise.sigma_n = sigma_n;
  return s;
}

PlantSpec PlantSpec::m1d(const M1dParams& p, double sigma_n) {
  PlantSpec s;
  s.kind = PlantKind::m1d;
  s.params = p;
  s.noise.sigma_n = sigma_n;
  return s;
}

double PlantSpec::g_hat() const {
  return kind == PlantKind::ns ? ns_params().g_hat : m1d_params().g_hat;
}

void PlantSpec::validate() const {
  const bool matches = (kind == PlantKind::ns) == std::holds_alternative<NsParams>(params);
  if (!matches) throw std::invalid_argument("plant kind does not match parameter set");
  noise.validate();
  if (g_hat() == 0.0) throw std::invalid_argument("g_hat must be nonzero");
  if (kind == PlantKind::m1d) {
    const auto& p = m1d_params();
    if (p.b5 < 0.0 || p.b7 < 0.0) throw std::invalid_argument("M1D frequencies b5, b7 must be >= 0");
  }
}

double sawtooth(double theta) {
  const double cycles = theta / (2.0 * std::numbers::pi);
  return 2.0 * (cycles - std::floor(cycles + 0.5));
}

double drift(const PlantSpec& spec, const State2& x, double t) {
  if (spec.kind == PlantKind::ns) {
    const auto& p = spec.ns_params();
    return std::sin(p.a1 * t) * x[0] + x[1] * x[1];
  }
  return spec.m1d_params().b1 * x[1];
}

double input_gain(const PlantSpec& spec, const State2& x) {
  if (spec.kind == PlantKind::ns) {
    const auto& p = spec.ns_params();
    return -(p.a4 + p.a5 * std::sin(p.a6 * x[1]));
  }
  return spec.m1d_params().b2;
}

double external_disturbance(const PlantSpec& spec, double t) {
  if (!(t >= 0.0 && t <= kHorizonMax))
    throw std::domain_error("external disturbance evaluated outside [0, 10] s: t = " + std::to_string(t));
  if (spec.kind == PlantKind::ns) {
    const auto& p = spec.ns_params();
    return p.a2 * std::cos(p.a3 * t);
  }
  // b3..b7 enter pre-multiplied by K_I/(J R) = -b2.
  const auto& p = spec.m1d_params();
  constexpr double two_pi = 2.0 * std::numbers::pi;
  if (t < 2.5) return 0.0;
  if (t < 5.0) return p.b2 * p.b3;
  if (t < 7.5) return p.b2 * (p.b3 + p.b4 * sawtooth(two_pi * p.b5 * (t - 5.0)));
  return p.b2 * (p.b3 + p.b6 * std::sin(two_pi * p.b7 * (t - 7.5)));
}

double total_disturbance(const PlantSpec& spec, const State2& x, double u, double t) {
  return drift(spec, x, t) + (input_gain(spec, x) - spec.g_hat()) * u + external_disturbance(spec, t);
}

NoiseSource::NoiseSource(const NoiseModel& model) : model_(model), rng_(model.seed) { model_.validate(); }

double NoiseSource::next() {
  if (model_.sigma_n == 0.0) return 0.0;
  for (;;) {
    const double z = normal_(rng_);
    if (std::abs(z) <= model_.truncation_k) return z * model_.sigma_n;
  }
}

std::vector<double> sample_noise(const NoiseModel& model, std::size_t count) {
  if (count == 0) throw std::invalid_argument("sample_noise: count must be >= 1");
  NoiseSource source(model);
  std::vector<double> out(count);
  for (auto& v : out) v = source.next();
  return out;
}

}  // namespace esotune
