#include "esotune/sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "esotune/errors.hpp"

namespace esotune {

namespace {

using Joint = std::array<double, 5>;  // x1, x2, zhat1, zhat2, zhat3

struct LoopContext {
  const PlantSpec& spec;
  const ObserverGains& gains;
  double g_hat;
  double t_max;
};

Joint joint_rhs(const LoopContext& ctx, const Joint& s, double tau, double u, double y) {
  const State2 x{s[0], s[1]};
  const double t = std::min(tau, ctx.t_max);
  const double x2_dot = drift(ctx.spec, x, t) + input_gain(ctx.spec, x) * u + external_disturbance(ctx.spec, t);
  const auto z_dot = eso_derivative({s[2], s[3], s[4]}, y, u, ctx.gains, ctx.g_hat);
  return {s[1], x2_dot, z_dot[0], z_dot[1], z_dot[2]};
}

Joint axpy(const Joint& s, double h, const Joint& k) {
  Joint r;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = s[i] + h * k[i];
  return r;
}

void rk4_step(const LoopContext& ctx, Joint& s, double tau, double h, double u, double y) {
  const Joint k1 = joint_rhs(ctx, s, tau, u, y);
  const Joint k2 = joint_rhs(ctx, axpy(s, 0.5 * h, k1), tau + 0.5 * h, u, y);
  const Joint k3 = joint_rhs(ctx, axpy(s, 0.5 * h, k2), tau + 0.5 * h, u, y);
  const Joint k4 = joint_rhs(ctx, axpy(s, h, k3), tau + h, u, y);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

// Exact-linearizing input from the true state: g u = -k1 x1 - k2 x2 - f - d*.
double oracle_control(const PlantSpec& spec, const ControllerGains& kg, const State2& x, double t) {
  return (-kg.k1 * x[0] - kg.k2 * x[1] - drift(spec, x, t) - external_disturbance(spec, t)) /
         input_gain(spec, x);
}

CriteriaVector mean_of(const std::vector<CriteriaVector>& runs) {
  CriteriaVector m;
  for (const auto& c : runs) {
    m.iae += c.iae;
    m.iac += c.iac;
    m.iacd += c.iacd;
    m.iadee += c.iadee;
  }
  const double n = static_cast<double>(runs.size());
  return {m.iae / n, m.iac / n, m.iacd / n, m.iadee / n};
}

}  // namespace

std::size_t SimConfig::steps() const { return static_cast<std::size_t>(std::llround(horizon / dt)); }

std::size_t SimConfig::record_stride() const {
  return static_cast<std::size_t>(std::llround(1.0 / (record_hz * dt)));
}

void SimConfig::validate() const {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  if (!(horizon > 0.0) || horizon > kHorizonMax + 1e-12)
    throw std::invalid_argument("horizon must be in (0, 10] s");
  const double n = horizon / dt;
  if (std::abs(n - std::round(n)) > 1e-9 * n) throw std::invalid_argument("horizon must be a multiple of dt");
  if (!(record_hz > 0.0)) throw std::invalid_argument("record_hz must be > 0");
  const double stride = 1.0 / (record_hz * dt);
  if (stride < 1.0 - 1e-12 || std::abs(stride - std::round(stride)) > 1e-9)
    throw std::invalid_argument("record_hz must divide the sample rate 1/dt");
  if (!(k > 0.0)) throw std::invalid_argument("controller pole k must be > 0");
  if (substeps < 1) throw std::invalid_argument("substeps must be >= 1");
}

CriteriaVector saturate(const CriteriaVector& c) {
  auto clamp = [](double v) { return std::isfinite(v) ? std::min(v, kCriterionCap) : kCriterionCap; };
  return {clamp(c.iae), clamp(c.iac), clamp(c.iacd), clamp(c.iadee)};
}

CriteriaVector saturated_criteria() { return {kCriterionCap, kCriterionCap, kCriterionCap, kCriterionCap}; }

void CriterionWeights::validate() const {
  const std::array<double, 4> a{alpha1, alpha2, alpha3, alpha4};
  bool any_positive = false;
  for (double v : a) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("criterion weights must be >= 0");
    any_positive = any_positive || v > 0.0;
  }
  if (!any_positive) throw std::invalid_argument("at least one criterion weight must be > 0");
}

CriterionWeights CriterionWeights::scaled(double factor) const {
  return {alpha1 * factor, alpha2 * factor, alpha3 * factor, alpha4 * factor};
}

Trajectory run_closed_loop(const PlantSpec& spec, const ObserverGains& gains, const SimConfig& cfg) {
  spec.validate();
  cfg.validate();
  const double g_hat = spec.g_hat();
  const auto kg = controller_gains(cfg.k);
  const std::size_t n = cfg.steps();
  const LoopContext ctx{spec, gains, g_hat, cfg.horizon};

  NoiseModel noise_model = spec.noise;
  noise_model.seed = cfg.seed;
  NoiseSource noise(noise_model);

  Trajectory traj;
  traj.dt = cfg.dt;
  traj.t.resize(n);
  traj.x.resize(n);
  traj.zhat.resize(n);
  traj.u.resize(n);
  traj.d.resize(n);
  traj.y.resize(n);

  const double first_noise = noise.next();
  Joint s{cfg.x0[0], cfg.x0[1], cfg.zhat0[0], cfg.zhat0[1], cfg.zhat0[2]};
  if (cfg.observer_init == ObserverInit::from_output) {
    s[2] = cfg.x0[0] + first_noise;
    s[3] = 0.0;
    s[4] = 0.0;
  }

  const double h = cfg.dt / cfg.substeps;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * cfg.dt;
    const State2 x{s[0], s[1]};
    const ExtendedEstimate zhat{s[2], s[3], s[4]};
    const double y = x[0] + (k == 0 ? first_noise : noise.next());
    const double u = cfg.feedback == Feedback::estimated ? control_law(zhat, kg, g_hat)
                                                         : oracle_control(spec, kg, x, t);
    traj.t[k] = t;
    traj.x[k] = x;
    traj.zhat[k] = zhat;
    traj.u[k] = u;
    traj.d[k] = total_disturbance(spec, x, u, t);
    traj.y[k] = y;

    for (int sub = 0; sub < cfg.substeps; ++sub) rk4_step(ctx, s, t + sub * h, h, u, y);
    for (double v : s) {
      if (!std::isfinite(v) || std::abs(v) > cfg.divergence_limit)
        throw DivergenceError(static_cast<double>(k + 1) * cfg.dt);
    }
  }
  traj.x_final = {s[0], s[1]};
  traj.zhat_final = {s[2], s[3], s[4]};
  return traj;
}

CriteriaVector compute_criteria(const Trajectory& traj) {
  if (traj.size() == 0) throw std::invalid_argument("compute_criteria: empty trajectory");
  CriteriaVector c;
  const double dt = traj.dt;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    c.iae += std::abs(traj.x[k][0]) * dt;
    c.iac += std::abs(traj.u[k]) * dt;
    c.iadee += std::abs(traj.d[k] - traj.zhat[k][2]) * dt;
    if (k + 1 < traj.size()) c.iacd += std::abs(traj.u[k + 1] - traj.u[k]);
  }
  return c;
}

double cost(const CriteriaVector& c, const CriterionWeights& w) {
  return w.alpha1 * c.iae + w.alpha2 * c.iac + w.alpha3 * c.iacd + w.alpha4 * c.iadee;
}

std::vector<double> decimate_estimates(const Trajectory& traj, double record_hz) {
  const auto stride = static_cast<std::size_t>(std::llround(1.0 / (record_hz * traj.dt)));
  if (stride == 0) throw std::invalid_argument("record_hz exceeds the sample rate");
  const std::size_t rows = traj.size() / stride;
  std::vector<double> out(rows * 3);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& z = traj.zhat[r * stride];
    out[3 * r + 0] = z[0];
    out[3 * r + 1] = z[1];
    out[3 * r + 2] = z[2];
  }
  return out;
}

Evaluation evaluate(const PlantSpec& spec, const ObserverGains& gains, const SimConfig& cfg) {
  try {
    return {saturate(compute_criteria(run_closed_loop(spec, gains, cfg))), false, 0.0};
  } catch (const DivergenceError& e) {
    return {saturated_criteria(), true, e.time()};
  }
}

Evaluation evaluate_averaged(const PlantSpec& spec, const ObserverGains& gains, const SimConfig& cfg,
                             int seeds) {
  if (seeds < 1) throw std::invalid_argument("seeds must be >= 1");
  std::vector<CriteriaVector> runs;
  runs.reserve(static_cast<std::size_t>(seeds));
  for (int i = 0; i < seeds; ++i) {
    SimConfig c = cfg;
    c.seed = cfg.seed + static_cast<std::uint64_t>(i);
    const auto e = evaluate(spec, gains, c);
    if (e.diverged) return e;
    runs.push_back(e.criteria);
  }
  return {mean_of(runs), false, 0.0};
}

std::vector<CriteriaVector> sweep_bandwidth(const PlantSpec& spec, const SimConfig& cfg,
                                            std::span<const double> omegas, int seeds,
                                            const ExecPolicy& policy) {
  if (seeds < 1) throw std::invalid_argument("seeds must be >= 1");
  for (double w : omegas) {
    if (!(w >= 1.0 && w <= 80.0)) throw std::invalid_argument("sweep bandwidths must lie in [1, 80]");
  }
  std::vector<CriteriaVector> out(omegas.size());
  for_each_index(omegas.size(), policy, [&](std::size_t i) {
    const auto gains = gains_from_bandwidth(omegas[i]);
    std::vector<CriteriaVector> runs;
    for (int s = 0; s < seeds; ++s) {
      SimConfig c = cfg;
      c.seed = cfg.seed + static_cast<std::uint64_t>(s);
      runs.push_back(compute_criteria(run_closed_loop(spec, gains, c)));
    }
    out[i] = mean_of(runs);
  });
  return out;
}

}  // namespace esotune
