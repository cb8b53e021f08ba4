#include "esotune/control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace esotune {

EigenTriple EigenTriple::canonical() const {
  auto v = values();
  std::sort(v.begin(), v.end());
  return {v[0], v[1], v[2]};
}

void EigenTriple::validate() const {
  for (double l : values()) {
    if (!(l < 0.0) || !std::isfinite(l))
      throw std::invalid_argument("observer eigenvalues must be finite and strictly negative, got " +
                                  std::to_string(l));
  }
}

double ObserverGains::norm() const { return std::sqrt(l1 * l1 + l2 * l2 + l3 * l3); }

ObserverGains gains_from_eigenvalues(const EigenTriple& lambda) {
  lambda.validate();
  const auto c = lambda.canonical();
  const double a = c.lambda1, b = c.lambda2, d = c.lambda3;
  const double ab = a * b;
  return {-((a + b) + d), (ab + a * d) + b * d, -(ab * d)};
}

ObserverGains gains_from_bandwidth(double omega_o) {
  if (!(omega_o > 0.0) || !std::isfinite(omega_o))
    throw std::invalid_argument("observer bandwidth must be > 0");
  // Same rounding sequence as the eigenvalue route at (-w, -w, -w).
  const double w2 = omega_o * omega_o;
  return {3.0 * omega_o, 3.0 * w2, w2 * omega_o};
}

ControllerGains controller_gains(double k) {
  if (!(k > 0.0) || !std::isfinite(k)) throw std::invalid_argument("controller pole k must be > 0");
  return {k * k, 2.0 * k, k};
}

double control_law(const ExtendedEstimate& zhat, const ControllerGains& kg, double g_hat) {
  if (g_hat == 0.0) throw std::invalid_argument("control_law: g_hat must be nonzero");
  return (-kg.k1 * zhat[0] - kg.k2 * zhat[1] - zhat[2]) / g_hat;
}

std::array<double, 3> eso_derivative(const ExtendedEstimate& zhat, double y, double u,
                                     const ObserverGains& gains, double g_hat) {
  const double e = y - zhat[0];
  return {zhat[1] + gains.l1 * e, zhat[2] + g_hat * u + gains.l2 * e, gains.l3 * e};
}

}  // namespace esotune
