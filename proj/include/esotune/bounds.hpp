#pragma once

// Lyapunov certificates and trajectory checks of the three estimation /
// closed-loop error bounds:
//   T1: |z~(t)| <= c1 |z~(0)| e^{-c2 t} + c3 (D + |l| n)
//   T2: |z~(t)| <= max(w^-2, w^2) e^{-c4 w t} c5 |z~(0)| + max(w^-2, 1) c6 (D + 3 w^3 n) / w
//   T3: |x(t)|  <= max(1/k, k) c1 e^{-c2 k t} |x(0)| + c3 max(1/k, k) sup|z~| / k
// with z = (x1, x2, d), D a bound on |d'| and n a bound on the measurement error.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "esotune/control.hpp"
#include "esotune/json_io.hpp"
#include "esotune/parallel.hpp"
#include "esotune/plant.hpp"
#include "esotune/sim.hpp"

namespace esotune {

struct LyapunovCertificate {
  Eigen::MatrixXd A;
  Eigen::MatrixXd P;
  double eig_min_p = 0.0;
  double eig_max_p = 0.0;
  double residual = 0.0;  // max |A^T P + P A + 2 I|

  double ratio() const { return eig_max_p / eig_min_p; }
  /// (lmax/lmin, 1/lmax, (lmax/lmin)^2): c1..c3 of T1 and T3, c5, c4, c6 of T2.
  double c_gain() const { return ratio(); }
  double c_rate() const { return 1.0 / eig_max_p; }
  double c_steady() const { return ratio() * ratio(); }
};

/// Solves A^T P + P A = -2 I over the n(n+1)/2 entries of a symmetric P.
/// Throws std::invalid_argument naming the offending eigenvalue when A is not Hurwitz.
LyapunovCertificate solve_lyapunov(const Eigen::MatrixXd& A);

/// A3 - l c3^T for the observer error dynamics.
Eigen::MatrixXd observer_error_matrix(const ObserverGains& g);
/// Normalized bandwidth-observer matrix [[-3,1,0],[-3,0,1],[-1,0,0]].
Eigen::MatrixXd normalized_observer_matrix();
/// Normalized closed-loop state matrix [[0,1],[-1,-2]].
Eigen::MatrixXd normalized_state_matrix();

/// Disturbance-bound segment: [begin, end) sample indices with their own D.
struct Segment {
  std::size_t begin = 0;
  std::size_t end = 0;
  double d_bar = 0.0;
};

struct BoundReport {
  std::string id;
  std::string theorem;
  std::vector<double> t;
  std::vector<double> lhs;
  std::vector<double> rhs;
  std::vector<double> margin;  // rhs - lhs
  bool violated = false;
  double worst_margin = 0.0;
  double worst_time = 0.0;
  double n_bar = 0.0;
  std::vector<Segment> segments;
  Json constants;

  void finalize();
};

struct BoundOptions {
  /// Negative: estimate from the run (truncation bound plus the sample-and-hold
  /// error dt * sup|x2|).
  double n_bar = -1.0;
  /// Negative: per segment, max |d_{k+1} - d_k| / dt inside the segment.
  double d_bar = -1.0;
};

/// Sample indices at which d* is discontinuous (M1D load steps and sawtooth
/// wraps); empty for NS.
std::vector<std::size_t> disturbance_breaks(const PlantSpec& spec, const Trajectory& traj);

/// Extended-state estimation error z - z_hat per sample.
std::vector<std::array<double, 3>> estimation_error(const Trajectory& traj);

BoundReport check_theorem1(const PlantSpec& spec, const ObserverGains& gains, const SimConfig& cfg,
                           const BoundOptions& opt = {});
BoundReport check_theorem1(const PlantSpec& spec, const ObserverGains& gains, const Trajectory& traj,
                           const BoundOptions& opt = {});

BoundReport check_theorem2(const PlantSpec& spec, double omega_o, const SimConfig& cfg, const BoundOptions& opt = {});
BoundReport check_theorem2(const PlantSpec& spec, double omega_o, const Trajectory& traj,
                           const BoundOptions& opt = {});

/// Steady part of the T2 right-hand side.
double theorem2_steady_term(const LyapunovCertificate& cert, double omega_o, double d_bar, double n_bar);
/// Steady part of the T1 right-hand side.
double theorem1_steady_term(const LyapunovCertificate& cert, const ObserverGains& g, double d_bar, double n_bar);

/// Controller pole k from cfg. With Feedback::oracle the loop sees no
/// estimation error, so sup|z~| is taken as 0.
BoundReport check_theorem3(const PlantSpec& spec, const ObserverGains& gains, const SimConfig& cfg);
BoundReport check_theorem3(const Trajectory& traj, double k, double sup_error);

Json to_json(const BoundReport& r);
std::string margin_csv(const BoundReport& r);

}  // namespace esotune
