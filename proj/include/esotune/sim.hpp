#pragma once

// Fixed-step closed-loop simulation of plant + ESO + controller and the
// integral performance criteria computed from it.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "esotune/control.hpp"
#include "esotune/parallel.hpp"
#include "esotune/plant.hpp"

namespace esotune {

enum class ObserverInit {
  explicit_state,  // zhat(0) = SimConfig::zhat0
  from_output,     // zhat(0) = (y(0), 0, 0)
};

enum class Feedback {
  estimated,  // controller uses the ESO estimate (normal operation)
  oracle,     // controller uses the true extended state; z_tilde is zero by construction
};

struct SimConfig {
  double dt = 1e-3;  // control / noise sample period
  double horizon = kHorizonMax;
  double record_hz = 100.0;
  State2 x0{0.0, 0.0};
  ExtendedEstimate zhat0{0.0, 0.0, 0.0};
  ObserverInit observer_init = ObserverInit::explicit_state;
  Feedback feedback = Feedback::estimated;
  double k = 4.0;  // controller pole magnitude
  std::uint64_t seed = 0;
  int substeps = 1;  // RK4 steps per sample period (inputs held constant across them)
  double divergence_limit = 1e8;

  std::size_t steps() const;
  std::size_t record_stride() const;
  void validate() const;
};

/// One row per sample instant t_k = k dt, k = 0..steps-1. Row k holds the
/// state at t_k and the (held) control / measurement applied over [t_k, t_k+dt).
struct Trajectory {
  double dt = 0.0;
  std::vector<double> t;
  std::vector<State2> x;
  std::vector<ExtendedEstimate> zhat;
  std::vector<double> u;
  std::vector<double> d;  // true total disturbance at (x_k, u_k, t_k)
  std::vector<double> y;
  State2 x_final{};
  ExtendedEstimate zhat_final{};

  std::size_t size() const { return t.size(); }
};

struct CriteriaVector {
  double iae = 0.0;
  double iac = 0.0;
  double iacd = 0.0;
  double iadee = 0.0;

  std::array<double, 4> as_array() const { return {iae, iac, iacd, iadee}; }
  static CriteriaVector from_array(const std::array<double, 4>& a) { return {a[0], a[1], a[2], a[3]}; }
  friend bool operator==(const CriteriaVector&, const CriteriaVector&) = default;
};

/// Criteria above this are clamped; diverged runs report the cap for every criterion.
inline constexpr double kCriterionCap = 1e6;

CriteriaVector saturate(const CriteriaVector& c);
CriteriaVector saturated_criteria();

struct CriterionWeights {
  double alpha1 = 0.0;  // IAE
  double alpha2 = 0.0;  // IAC
  double alpha3 = 0.0;  // IACD
  double alpha4 = 0.0;  // IADEE

  void validate() const;
  CriterionWeights scaled(double factor) const;
};

Trajectory run_closed_loop(const PlantSpec& spec, const ObserverGains& gains, const SimConfig& cfg);

/// Left-rectangle integrals on the sample grid; IACD is the total variation of u.
CriteriaVector compute_criteria(const Trajectory& traj);

/// J = a1 IAE + a2 IAC + a3 IACD + a4 IADEE on raw criteria.
double cost(const CriteriaVector& criteria, const CriterionWeights& w);

/// z_hat rows at record_hz, row-major (rows x 3).
std::vector<double> decimate_estimates(const Trajectory& traj, double record_hz);

struct Evaluation {
  CriteriaVector criteria;
  bool diverged = false;
  double divergence_time = 0.0;
};

/// run_closed_loop + compute_criteria with divergence mapped to saturated criteria.
Evaluation evaluate(const PlantSpec& spec, const ObserverGains& gains, const SimConfig& cfg);

/// Mean criteria over noise seeds cfg.seed, cfg.seed+1, ..., cfg.seed+seeds-1.
Evaluation evaluate_averaged(const PlantSpec& spec, const ObserverGains& gains, const SimConfig& cfg,
                             int seeds);

/// One criteria vector per bandwidth (averaged over `seeds` noise realizations).
/// Divergence propagates as DivergenceError.
std::vector<CriteriaVector> sweep_bandwidth(const PlantSpec& spec, const SimConfig& cfg,
                                            std::span<const double> omegas, int seeds = 1,
                                            const ExecPolicy& policy = {});

}  // namespace esotune
