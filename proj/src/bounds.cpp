#include "esotune/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "esotune/errors.hpp"
#include "esotune/io.hpp"

namespace esotune {

namespace {

double norm3(const std::array<double, 3>& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

Json certificate_json(const LyapunovCertificate& c) {
  Json j;
  j["eig_min_p"] = c.eig_min_p;
  j["eig_max_p"] = c.eig_max_p;
  j["residual"] = c.residual;
  Json p = Json::array();
  for (Eigen::Index i = 0; i < c.P.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < c.P.cols(); ++k) row.push_back(c.P(i, k));
    p.push_back(row);
  }
  j["P"] = p;
  return j;
}

// Sample index of the first t_k >= t.
std::size_t index_at(const Trajectory& traj, double t) {
  return static_cast<std::size_t>(std::lower_bound(traj.t.begin(), traj.t.end(), t - 1e-12) - traj.t.begin());
}

double estimated_n_bar(const PlantSpec& spec, const Trajectory& traj) {
  // y is held over each period, so the observer also sees x1(t_k) - x1(t).
  double x2_max = 0.0;
  for (const auto& x : traj.x) x2_max = std::max(x2_max, std::abs(x[1]));
  x2_max = std::max(x2_max, std::abs(traj.x_final[1]));
  return spec.noise.bound() + traj.dt * x2_max;
}

std::vector<Segment> make_segments(const PlantSpec& spec, const Trajectory& traj, double d_bar) {
  std::vector<std::size_t> cuts = disturbance_breaks(spec, traj);
  cuts.insert(cuts.begin(), 0);
  cuts.push_back(traj.size());
  std::vector<Segment> out;
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    Segment seg{cuts[s], cuts[s + 1], 0.0};
    if (seg.end <= seg.begin) continue;
    if (d_bar >= 0.0) {
      seg.d_bar = d_bar;
    } else {
      for (std::size_t k = seg.begin; k + 1 < seg.end; ++k)
        seg.d_bar = std::max(seg.d_bar, std::abs(traj.d[k + 1] - traj.d[k]) / traj.dt);
    }
    out.push_back(seg);
  }
  return out;
}

// Shared driver for the two estimation-error bounds; rhs(tau, |z~(t_s)|, D)
// is evaluated with segment-local time tau.
template <class Rhs>
BoundReport check_estimation(const PlantSpec& spec, const Trajectory& traj, const BoundOptions& opt, Rhs rhs) {
  if (traj.size() == 0) throw std::invalid_argument("bound check: empty trajectory");
  BoundReport r;
  r.n_bar = opt.n_bar >= 0.0 ? opt.n_bar : estimated_n_bar(spec, traj);
  r.segments = make_segments(spec, traj, opt.d_bar);
  const auto err = estimation_error(traj);
  r.t = traj.t;
  r.lhs.resize(traj.size());
  r.rhs.resize(traj.size());
  for (const auto& seg : r.segments) {
    const double e0 = norm3(err[seg.begin]);
    const double t0 = traj.t[seg.begin];
    for (std::size_t k = seg.begin; k < seg.end; ++k) {
      r.lhs[k] = norm3(err[k]);
      r.rhs[k] = rhs(traj.t[k] - t0, e0, seg.d_bar, r.n_bar);
    }
  }
  r.finalize();
  return r;
}

Json segments_json(const std::vector<Segment>& segs, const Trajectory& traj) {
  Json out = Json::array();
  for (const auto& s : segs)
    out.push_back({{"t_begin", traj.t[s.begin]}, {"samples", s.end - s.begin}, {"d_bar", s.d_bar}});
  return out;
}

}  // namespace

LyapunovCertificate solve_lyapunov(const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols() || A.rows() == 0) throw std::invalid_argument("solve_lyapunov: A must be square");
  const Eigen::Index n = A.rows();
  const Eigen::VectorXcd ev = A.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (!(ev[i].real() < 0.0)) {
      std::ostringstream os;
      os << "solve_lyapunov: A is not Hurwitz, eigenvalue " << ev[i].real() << (ev[i].imag() < 0 ? " - " : " + ")
         << std::abs(ev[i].imag()) << "i";
      throw std::invalid_argument(os.str());
    }
  }

  // Unknowns: P(i, j) for i <= j, packed row by row.
  const Eigen::Index m = n * (n + 1) / 2;
  auto index = [n](Eigen::Index i, Eigen::Index j) {
    if (i > j) std::swap(i, j);
    return i * n - i * (i - 1) / 2 + (j - i);
  };
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const Eigen::Index row = index(i, j);
      // (A^T P + P A)(i, j) = sum_k A(k, i) P(k, j) + P(i, k) A(k, j)
      for (Eigen::Index k = 0; k < n; ++k) {
        M(row, index(k, j)) += A(k, i);
        M(row, index(i, k)) += A(k, j);
      }
      if (i == j) rhs[row] = -2.0;
    }
  }
  const Eigen::VectorXd p = M.partialPivLu().solve(rhs);

  LyapunovCertificate c;
  c.A = A;
  c.P.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) c.P(i, j) = p[index(i, j)];
  const Eigen::MatrixXd R = A.transpose() * c.P + c.P * A + 2.0 * Eigen::MatrixXd::Identity(n, n);
  c.residual = R.cwiseAbs().maxCoeff();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.P, Eigen::EigenvaluesOnly);
  c.eig_min_p = es.eigenvalues().minCoeff();
  c.eig_max_p = es.eigenvalues().maxCoeff();
  if (!(c.eig_min_p > 0.0) || !std::isfinite(c.residual))
    throw NumericalError("solve_lyapunov: solution is not positive definite");
  return c;
}

Eigen::MatrixXd observer_error_matrix(const ObserverGains& g) {
  Eigen::MatrixXd H(3, 3);
  H << -g.l1, 1.0, 0.0, -g.l2, 0.0, 1.0, -g.l3, 0.0, 0.0;
  return H;
}

Eigen::MatrixXd normalized_observer_matrix() { return observer_error_matrix(gains_from_bandwidth(1.0)); }

Eigen::MatrixXd normalized_state_matrix() {
  Eigen::MatrixXd H(2, 2);
  H << 0.0, 1.0, -1.0, -2.0;
  return H;
}

void BoundReport::finalize() {
  margin.resize(lhs.size());
  worst_margin = std::numeric_limits<double>::infinity();
  worst_time = 0.0;
  for (std::size_t k = 0; k < lhs.size(); ++k) {
    margin[k] = rhs[k] - lhs[k];
    if (margin[k] < worst_margin || std::isnan(margin[k])) {
      worst_margin = margin[k];
      worst_time = t[k];
    }
  }
  violated = !(worst_margin >= 0.0);
}

std::vector<std::size_t> disturbance_breaks(const PlantSpec& spec, const Trajectory& traj) {
  std::vector<std::size_t> out;
  if (spec.kind != PlantKind::m1d || traj.size() == 0) return out;
  std::vector<double> times{2.5, 5.0, 7.5};
  const auto& p = spec.m1d_params();
  if (p.b4 != 0.0 && p.b5 > 0.0) {
    // saw(2 pi b5 (t - 5)) wraps at t - 5 = (m + 1/2) / b5.
    for (int m = 0;; ++m) {
      const double tw = 5.0 + (m + 0.5) / p.b5;
      if (tw >= 7.5) break;
      times.push_back(tw);
    }
  }
  std::sort(times.begin(), times.end());
  for (double tb : times) {
    const std::size_t k = index_at(traj, tb);
    if (k > 0 && k < traj.size() && (out.empty() || out.back() != k)) out.push_back(k);
  }
  return out;
}

std::vector<std::array<double, 3>> estimation_error(const Trajectory& traj) {
  std::vector<std::array<double, 3>> out(traj.size());
  for (std::size_t k = 0; k < traj.size(); ++k) {
    out[k] = {traj.x[k][0] - traj.zhat[k][0], traj.x[k][1] - traj.zhat[k][1], traj.d[k] - traj.zhat[k][2]};
  }
  return out;
}

double theorem1_steady_term(const LyapunovCertificate& cert, const ObserverGains& g, double d_bar, double n_bar) {
  return cert.c_steady() * (d_bar + g.norm() * n_bar);
}

double theorem2_steady_term(const LyapunovCertificate& cert, double omega_o, double d_bar, double n_bar) {
  const double scale = std::max(1.0 / (omega_o * omega_o), 1.0);
  return scale * cert.c_steady() * (d_bar + 3.0 * omega_o * omega_o * omega_o * n_bar) / omega_o;
}

BoundReport check_theorem1(const PlantSpec& spec, const ObserverGains& gains, const Trajectory& traj,
                           const BoundOptions& opt) {
  const LyapunovCertificate cert = solve_lyapunov(observer_error_matrix(gains));
  BoundReport r = check_estimation(spec, traj, opt, [&](double tau, double e0, double d_bar, double n_bar) {
    return cert.c_gain() * e0 * std::exp(-cert.c_rate() * tau) + theorem1_steady_term(cert, gains, d_bar, n_bar);
  });
  r.theorem = "T1";
  r.constants = certificate_json(cert);
  r.constants["c1"] = cert.c_gain();
  r.constants["c2"] = cert.c_rate();
  r.constants["c3"] = cert.c_steady();
  r.constants["gain_norm"] = gains.norm();
  r.constants["segments"] = segments_json(r.segments, traj);
  return r;
}

BoundReport check_theorem1(const PlantSpec& spec, const ObserverGains& gains, const SimConfig& cfg,
                           const BoundOptions& opt) {
  return check_theorem1(spec, gains, run_closed_loop(spec, gains, cfg), opt);
}

BoundReport check_theorem2(const PlantSpec& spec, double omega_o, const Trajectory& traj, const BoundOptions& opt) {
  if (!(omega_o > 0.0)) throw std::invalid_argument("check_theorem2: omega_o must be > 0");
  const LyapunovCertificate cert = solve_lyapunov(normalized_observer_matrix());
  const double w = omega_o;
  const double transient_scale = std::max(1.0 / (w * w), w * w);
  BoundReport r = check_estimation(spec, traj, opt, [&](double tau, double e0, double d_bar, double n_bar) {
    return transient_scale * std::exp(-cert.c_rate() * w * tau) * cert.c_gain() * e0 +
           theorem2_steady_term(cert, w, d_bar, n_bar);
  });
  r.theorem = "T2";
  r.constants = certificate_json(cert);
  r.constants["c4"] = cert.c_rate();
  r.constants["c5"] = cert.c_gain();
  r.constants["c6"] = cert.c_steady();
  r.constants["omega_o"] = w;
  r.constants["segments"] = segments_json(r.segments, traj);
  return r;
}

BoundReport check_theorem2(const PlantSpec& spec, double omega_o, const SimConfig& cfg, const BoundOptions& opt) {
  return check_theorem2(spec, omega_o, run_closed_loop(spec, gains_from_bandwidth(omega_o), cfg), opt);
}

BoundReport check_theorem3(const Trajectory& traj, double k, double sup_error) {
  if (!(k > 0.0)) throw std::invalid_argument("check_theorem3: k must be > 0");
  if (traj.size() == 0) throw std::invalid_argument("bound check: empty trajectory");
  const LyapunovCertificate cert = solve_lyapunov(normalized_state_matrix());
  const double scale = std::max(1.0 / k, k);
  const double x0 = std::hypot(traj.x[0][0], traj.x[0][1]);
  const double steady = cert.c_steady() * scale * sup_error / k;
  BoundReport r;
  r.theorem = "T3";
  r.t = traj.t;
  r.lhs.resize(traj.size());
  r.rhs.resize(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    r.lhs[i] = std::hypot(traj.x[i][0], traj.x[i][1]);
    r.rhs[i] = scale * cert.c_gain() * std::exp(-cert.c_rate() * k * traj.t[i]) * x0 + steady;
  }
  r.finalize();
  r.constants = certificate_json(cert);
  r.constants["c1"] = cert.c_gain();
  r.constants["c2"] = cert.c_rate();
  r.constants["c3"] = cert.c_steady();
  r.constants["k"] = k;
  r.constants["sup_error"] = sup_error;
  return r;
}

BoundReport check_theorem3(const PlantSpec& spec, const ObserverGains& gains, const SimConfig& cfg) {
  const Trajectory traj = run_closed_loop(spec, gains, cfg);
  double sup_error = 0.0;
  if (cfg.feedback == Feedback::estimated) {
    for (const auto& e : estimation_error(traj)) sup_error = std::max(sup_error, norm3(e));
  }
  return check_theorem3(traj, cfg.k, sup_error);
}

Json to_json(const BoundReport& r) {
  Json j;
  j["id"] = r.id;
  j["theorem"] = r.theorem;
  j["violated"] = r.violated;
  j["worst_margin"] = r.worst_margin;
  j["worst_time"] = r.worst_time;
  j["samples"] = r.t.size();
  if (r.theorem != "T3") j["n_bar"] = r.n_bar;
  j["constants"] = r.constants;
  return j;
}

std::string margin_csv(const BoundReport& r) {
  CsvWriter csv({"t", "lhs", "rhs", "margin"});
  for (std::size_t k = 0; k < r.t.size(); ++k) {
    const double row[4] = {r.t[k], r.lhs[k], r.rhs[k], r.margin[k]};
    csv.row(row);
  }
  return csv.str();
}

}  // namespace esotune
