#pragma once

// Linear extended state observer and the disturbance-compensating state
// feedback built on top of it.

#include <array>

namespace esotune {

/// Desired observer eigenvalues; all strictly negative.
struct EigenTriple {
  double lambda1 = -1.0;
  double lambda2 = -1.0;
  double lambda3 = -1.0;

  std::array<double, 3> values() const { return {lambda1, lambda2, lambda3}; }
  /// Sorted ascending (most negative first).
  EigenTriple canonical() const;
  double sum() const { return lambda1 + lambda2 + lambda3; }
  void validate() const;

  friend bool operator==(const EigenTriple&, const EigenTriple&) = default;
};

struct ObserverGains {
  double l1 = 0.0;
  double l2 = 0.0;
  double l3 = 0.0;

  double norm() const;
  friend bool operator==(const ObserverGains&, const ObserverGains&) = default;
};

/// State-feedback gains placing both closed-loop poles at -k.
struct ControllerGains {
  double k1 = 0.0;
  double k2 = 0.0;
  double k = 0.0;
};

/// z_hat = [x1_hat, x2_hat, d_hat].
using ExtendedEstimate = std::array<double, 3>;

/// Vieta's formulas on the canonicalized triple:
/// l1 = -sum(lambda), l2 = sum_{i<j} lambda_i lambda_j, l3 = -prod(lambda).
ObserverGains gains_from_eigenvalues(const EigenTriple& lambda);

/// (3w, 3w^2, w^3); bit-identical to gains_from_eigenvalues({-w, -w, -w}).
ObserverGains gains_from_bandwidth(double omega_o);

ControllerGains controller_gains(double k);

/// u = (-k1 x1_hat - k2 x2_hat - d_hat) / g_hat.
double control_law(const ExtendedEstimate& zhat, const ControllerGains& kg, double g_hat);

/// Observer right-hand side: (z2 + l1 e, z3 + g_hat u + l2 e, l3 e), e = y - z1.
std::array<double, 3> eso_derivative(const ExtendedEstimate& zhat, double y, double u,
                                     const ObserverGains& gains, double g_hat);

}  // namespace esotune
