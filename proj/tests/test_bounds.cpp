#include <doctest.h>

#include <cmath>

#include "esotune/bounds.hpp"
#include "esotune/dataset.hpp"
#include "fixtures.hpp"

using namespace esotune;

namespace {

PlantSpec constant_load_m1d(double sigma) {
  M1dParams p;
  p.b3 = 0.3;
  p.b4 = 0.0;
  p.b6 = 0.0;
  return PlantSpec::m1d(p, sigma);
}

double time_to_halve(const Trajectory& tr) {
  const auto e = estimation_error(tr);
  auto n = [&](std::size_t k) { return std::sqrt(e[k][0] * e[k][0] + e[k][1] * e[k][1] + e[k][2] * e[k][2]); };
  double peak = 0.0;
  std::size_t at = 0;
  for (std::size_t k = 0; k < e.size(); ++k)
    if (n(k) > peak) peak = n(k), at = k;
  for (std::size_t k = at; k < e.size(); ++k)
    if (n(k) <= 0.5 * peak) return tr.t[k] - tr.t[at];
  return INFINITY;
}

}  // namespace

TEST_SUITE("bounds") {
  TEST_CASE("lyapunov: normalized state matrix") {
    const auto c = solve_lyapunov(normalized_state_matrix());
    CHECK(c.P(0, 0) == 3.0);
    CHECK(c.P(0, 1) == 1.0);
    CHECK(c.P(1, 0) == 1.0);
    CHECK(c.P(1, 1) == 1.0);
    CHECK(c.eig_min_p == doctest::Approx(2.0 - std::sqrt(2.0)));
    CHECK(c.eig_max_p == doctest::Approx(2.0 + std::sqrt(2.0)));
    CHECK(c.c_gain() == doctest::Approx((2.0 + std::sqrt(2.0)) / (2.0 - std::sqrt(2.0))));
    CHECK(c.c_gain() == doctest::Approx(5.828).epsilon(1e-3));
  }

  TEST_CASE("lyapunov: negative identity and the observer matrix") {
    const auto c = solve_lyapunov(-Eigen::MatrixXd::Identity(2, 2));
    CHECK(c.P.isApprox(Eigen::MatrixXd::Identity(2, 2)));
    const auto z = solve_lyapunov(normalized_observer_matrix());
    CHECK(z.residual < 1e-10);
    CHECK(z.eig_min_p > 0.0);
    CHECK((z.P - z.P.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("lyapunov rejects unstable matrices") {
    Eigen::MatrixXd a(2, 2);
    a << 0.5, 1.0, 0.0, -1.0;
    CHECK_THROWS_WITH_AS(solve_lyapunov(a), doctest::Contains("0.5"), std::invalid_argument);
    Eigen::MatrixXd osc(2, 2);
    osc << 0.0, 1.0, -1.0, 0.0;
    CHECK_THROWS_AS(solve_lyapunov(osc), std::invalid_argument);
  }

  TEST_CASE("lyapunov residual across observer gains") {
    for (double l1 : {-1.0, -7.5, -33.0, -80.0})
      for (double l2 : {-1.0, -20.0, -80.0})
        for (double l3 : {-2.0, -55.0}) {
          const auto c = solve_lyapunov(observer_error_matrix(gains_from_eigenvalues({l1, l2, l3})));
          REQUIRE(c.residual < 1e-9 * std::max(1.0, c.P.cwiseAbs().maxCoeff()));
          REQUIRE(c.eig_min_p > 0.0);
        }
  }

  TEST_CASE("theorem 1 on a noiseless constant-load segment") {
    SimConfig cfg = fixtures::m1d_sweep_config();
    const auto r = check_theorem1(constant_load_m1d(0.0), gains_from_bandwidth(20), cfg);
    CHECK_FALSE(r.violated);
    CHECK(r.worst_margin >= 0.0);
    CHECK(r.segments.size() == 4);
  }

  TEST_CASE("theorem 1 with a resting loop") {
    M1dParams p;
    p.b3 = p.b4 = p.b5 = p.b6 = p.b7 = 0.0;
    const auto spec = PlantSpec::m1d(p);
    const auto traj = run_closed_loop(spec, gains_from_bandwidth(15), SimConfig{});
    for (const auto& e : estimation_error(traj)) REQUIRE(std::sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2]) <= 1e-9);
    CHECK_FALSE(check_theorem1(spec, gains_from_bandwidth(15), traj).violated);
  }

  TEST_CASE("bound right-hand sides are monotone") {
    const auto g = gains_from_bandwidth(12);
    const auto c = solve_lyapunov(observer_error_matrix(g));
    const double a = theorem1_steady_term(c, g, 1.0, 0.01);
    const double b = theorem1_steady_term(c, g, 1.0, 0.02);
    const double base = theorem1_steady_term(c, g, 1.0, 0.0);
    CHECK(b > a);
    CHECK((b - base) == doctest::Approx(2.0 * (a - base)).epsilon(1e-12));
    ObserverGains bigger = g;
    bigger.l1 *= 2;
    CHECK(theorem1_steady_term(c, bigger, 1.0, 0.01) >= a);
    const auto z = solve_lyapunov(normalized_observer_matrix());
    CHECK(theorem2_steady_term(z, 25, 1.0, 0.02) > theorem2_steady_term(z, 25, 1.0, 0.01));
  }

  TEST_CASE("theorem 2 steady term is regression locked") {
    const auto z = solve_lyapunov(normalized_observer_matrix());
    CHECK(theorem2_steady_term(z, 25.0, 1.0, 0.01) == doctest::Approx(9148.403301365495).epsilon(1e-10));
  }

  TEST_CASE("theorem 2 transient scale meets at unit bandwidth") {
    const double w = 1.0;
    CHECK(std::max(1.0 / (w * w), w * w) == 1.0);
    auto spec = fixtures::m1d_sweep_plant();
    spec.noise.sigma_n = 0.0;
    const auto r = check_theorem2(spec, 1.0, fixtures::m1d_sweep_config());
    CHECK_FALSE(r.violated);
  }

  TEST_CASE("faster observers halve the error sooner") {
    auto spec = constant_load_m1d(0.0);
    auto cfg = fixtures::m1d_sweep_config();
    cfg.horizon = 2.0;
    const auto slow = run_closed_loop(spec, gains_from_bandwidth(10), cfg);
    const auto fast = run_closed_loop(spec, gains_from_bandwidth(40), cfg);
    CHECK(time_to_halve(fast) < time_to_halve(slow));
    CHECK_FALSE(check_theorem2(spec, 10, slow).violated);
    CHECK_FALSE(check_theorem2(spec, 40, fast).violated);
  }

  TEST_CASE("theorem 3 with a perfect observer") {
    auto cfg = fixtures::m1d_sweep_config();
    cfg.feedback = Feedback::oracle;
    cfg.x0 = {1.0, -2.0};
    const auto r = check_theorem3(fixtures::m1d_sweep_plant(), gains_from_bandwidth(25), cfg);
    CHECK_FALSE(r.violated);
    CHECK(r.constants["sup_error"] == 0.0);

    cfg.x0 = {0.0, 0.0};
    M1dParams p;
    p.b3 = p.b4 = p.b5 = p.b6 = p.b7 = 0.0;
    const auto quiet = PlantSpec::m1d(p);
    const auto traj = run_closed_loop(quiet, gains_from_bandwidth(25), cfg);
    for (const auto& x : traj.x) REQUIRE((x[0] == 0.0 && x[1] == 0.0));
  }

  TEST_CASE("sawtooth wraps split the disturbance segments") {
    const auto spec = fixtures::m1d_sweep_plant();  // b5 = 2 Hz: wraps at 5.25, 5.75, ..., 7.25
    const auto traj = run_closed_loop(spec, gains_from_bandwidth(25), fixtures::m1d_sweep_config());
    const auto breaks = disturbance_breaks(spec, traj);
    CHECK(breaks.size() == 3 + 5);
    CHECK(breaks.front() == 2500);
    CHECK(breaks.back() == 7500);
    CHECK(disturbance_breaks(fixtures::ns_tuning_plant(), traj).empty());
  }

  TEST_CASE("report plumbing") {
    const auto r = check_theorem2(fixtures::m1d_sweep_plant(), 25, fixtures::m1d_sweep_config());
    CHECK(r.margin.size() == r.t.size());
    double m = INFINITY;
    for (double v : r.margin) m = std::min(m, v);
    CHECK(r.worst_margin == m);
    CHECK(r.violated == (m < 0.0));
    const auto j = to_json(r);
    CHECK(j["theorem"] == "T2");
    CHECK(j.contains("constants"));
    const auto csv = margin_csv(r);
    CHECK(csv.rfind("t,lhs,rhs,margin\n", 0) == 0);
  }

  TEST_CASE("randomized suite has no violations") {
    int runs = 0;
    for (auto kind : {PlantKind::ns, PlantKind::m1d}) {
      for (std::uint64_t i = 0; i < 20; ++i) {
        const auto smp = sample_spec(kind, 5000 + i);
        const auto gains = gains_from_eigenvalues(smp.lambda);
        const double omega = -smp.lambda.sum() / 3.0;
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
          SimConfig cfg = target_config(smp);
          cfg.seed = seed;
          const auto traj = run_closed_loop(smp.plant, gains, cfg);
          INFO("kind " << to_string(kind) << " config " << i << " seed " << seed);
          REQUIRE_FALSE(check_theorem1(smp.plant, gains, traj).violated);
          REQUIRE_FALSE(check_theorem3(smp.plant, gains, cfg).violated);
          const auto bw = run_closed_loop(smp.plant, gains_from_bandwidth(omega), cfg);
          REQUIRE_FALSE(check_theorem2(smp.plant, omega, bw).violated);
          ++runs;
        }
      }
    }
    CHECK(runs == 120);
  }
}
