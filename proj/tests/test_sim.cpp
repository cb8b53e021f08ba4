#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "esotune/errors.hpp"
#include "esotune/sim.hpp"
#include "esotune/tuner.hpp"
#include "fixtures.hpp"

using namespace esotune;

namespace {

PlantSpec quiet_ns() { return PlantSpec::ns(NsParams{}); }

PlantSpec quiet_m1d() {
  M1dParams p;
  p.b3 = p.b4 = p.b5 = p.b6 = p.b7 = 0.0;
  return PlantSpec::m1d(p);
}

}  // namespace

TEST_SUITE("sim") {
  TEST_CASE("operating point settles") {
    const auto traj = run_closed_loop(fixtures::m1d_sweep_plant(), gains_from_bandwidth(25),
                                      fixtures::m1d_sweep_config());
    CHECK(std::abs(traj.x_final[0]) < 0.05);
    CHECK(traj.size() == 10000);
    for (std::size_t k = 1; k < traj.size(); ++k) REQUIRE(traj.t[k] - traj.t[k - 1] == doctest::Approx(1e-3));
  }

  TEST_CASE("equilibrium is invariant") {
    for (const auto& spec : {quiet_ns(), quiet_m1d()}) {
      SimConfig cfg;
      const auto traj = run_closed_loop(spec, gains_from_bandwidth(30), cfg);
      for (std::size_t k = 0; k < traj.size(); ++k) {
        REQUIRE(traj.x[k][0] == 0.0);
        REQUIRE(traj.x[k][1] == 0.0);
        REQUIRE(traj.u[k] == 0.0);
      }
    }
  }

  TEST_CASE("deterministic given the seed") {
    auto cfg = fixtures::m1d_sweep_config();
    cfg.seed = 9;
    const auto a = run_closed_loop(fixtures::m1d_sweep_plant(), gains_from_bandwidth(40), cfg);
    const auto b = run_closed_loop(fixtures::m1d_sweep_plant(), gains_from_bandwidth(40), cfg);
    CHECK(a.x == b.x);
    CHECK(a.zhat == b.zhat);
    CHECK(a.u == b.u);
    CHECK(a.y == b.y);
    cfg.seed = 10;
    const auto c = run_closed_loop(fixtures::m1d_sweep_plant(), gains_from_bandwidth(40), cfg);
    CHECK(a.y != c.y);
  }

  TEST_CASE("divergence carries the blow-up time") {
    SimConfig cfg;
    cfg.x0 = {1.0, 0.0};
    cfg.zhat0 = {1.0, 0.0, 0.0};
    cfg.k = 3000.0;  // k dt = 3: the sampled loop cannot hold this pole
    try {
      run_closed_loop(fixtures::m1d_sweep_plant(), gains_from_bandwidth(80), cfg);
      FAIL("expected divergence");
    } catch (const DivergenceError& e) {
      CHECK(e.time() > 0.0);
      CHECK(e.time() <= 10.0);
    }
    const auto ev = evaluate(fixtures::m1d_sweep_plant(), gains_from_bandwidth(80), cfg);
    CHECK(ev.diverged);
    CHECK(ev.criteria == saturated_criteria());
  }

  TEST_CASE("criteria examples") {
    Trajectory t;
    t.dt = 1e-3;
    const std::size_t n = 10000;
    t.t.resize(n);
    t.x.assign(n, State2{0.0, 0.0});
    t.zhat.assign(n, ExtendedEstimate{0, 0, 0});
    t.u.assign(n, 1.0);
    t.d.assign(n, 0.0);
    t.y.assign(n, 0.0);
    auto c = compute_criteria(t);
    CHECK(c.iac == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(c.iae == 0.0);
    CHECK(c.iacd == 0.0);
    std::fill(t.u.begin(), t.u.begin() + 500, 0.0);
    c = compute_criteria(t);
    CHECK(c.iacd == 1.0);
  }

  TEST_CASE("cost") {
    const CriteriaVector c{0.5, 2.0, 3.0, 4.0};
    CHECK(cost(c, {10, 1, 0, 0}) == 7.0);
    CHECK(cost(c, {0, 0, 0, 1}) == 4.0);
    CHECK_THROWS(CriterionWeights{0, 0, 0, 0}.validate());
    CHECK_THROWS(CriterionWeights{1, -1, 0, 0}.validate());
  }

  TEST_CASE("integrator order") {
    // Noiseless linear plant; inputs are held per sample, so refine with substeps.
    auto spec = quiet_m1d();
    SimConfig cfg;
    cfg.horizon = 2.0;
    cfg.x0 = {1.0, -0.5};
    cfg.zhat0 = {0.8, 0.0, 0.0};
    const auto gains = gains_from_bandwidth(80);
    auto final_state = [&](int sub) {
      SimConfig c = cfg;
      c.substeps = sub;
      const auto tr = run_closed_loop(spec, gains, c);
      return std::array<double, 5>{tr.x_final[0], tr.x_final[1], tr.zhat_final[0], tr.zhat_final[1],
                                   tr.zhat_final[2]};
    };
    const auto ref = final_state(64);
    std::vector<double> lh, le;
    for (int sub : {1, 2, 4}) {
      const auto s = final_state(sub);
      double err = 0.0;
      for (int i = 0; i < 5; ++i) err = std::max(err, std::abs(s[i] - ref[i]) / (1.0 + std::abs(ref[i])));
      lh.push_back(std::log(1e-3 / sub));
      le.push_back(std::log(err));
    }
    const double mh = std::accumulate(lh.begin(), lh.end(), 0.0) / 3.0;
    const double me = std::accumulate(le.begin(), le.end(), 0.0) / 3.0;
    double num = 0.0, den = 0.0;
    for (int i = 0; i < 3; ++i) {
      num += (lh[i] - mh) * (le[i] - me);
      den += (lh[i] - mh) * (lh[i] - mh);
    }
    const double order = num / den;
    MESSAGE("observed order " << order);
    CHECK(order >= 3.5);
  }

  TEST_CASE("criteria do not depend on record_hz") {
    auto cfg = fixtures::m1d_sweep_config();
    cfg.seed = 4;
    cfg.record_hz = 100.0;
    const auto a = compute_criteria(run_closed_loop(fixtures::m1d_sweep_plant(), gains_from_bandwidth(20), cfg));
    cfg.record_hz = 500.0;
    const auto b = compute_criteria(run_closed_loop(fixtures::m1d_sweep_plant(), gains_from_bandwidth(20), cfg));
    CHECK(a == b);
  }

  TEST_CASE("rectangle and trapezoid IAE agree on smooth runs") {
    auto spec = fixtures::m1d_sweep_plant();
    spec.noise.sigma_n = 0.0;
    auto cfg = fixtures::m1d_sweep_config();
    cfg.horizon = 2.4;  // before the first load step
    const auto tr = run_closed_loop(spec, gains_from_bandwidth(25), cfg);
    const double rect = compute_criteria(tr).iae;
    double trap = 0.0;
    for (std::size_t k = 0; k + 1 < tr.size(); ++k) trap += 0.5 * (std::abs(tr.x[k][0]) + std::abs(tr.x[k + 1][0])) * tr.dt;
    trap += 0.5 * (std::abs(tr.x.back()[0]) + std::abs(tr.x_final[0])) * tr.dt;
    CHECK(std::abs(rect - trap) <= 0.01 * trap);
  }

  TEST_CASE("estimation error decays without noise or disturbance") {
    // No drift, exact input gain and no load: the total disturbance is zero.
    // The plant rests at the origin under state feedback, so only the
    // observer error evolves.
    M1dParams p;
    p.b1 = 0.0;
    p.b2 = -20.0;
    p.b3 = p.b4 = p.b5 = p.b6 = p.b7 = 0.0;
    const auto spec = PlantSpec::m1d(p);
    SimConfig cfg;
    cfg.feedback = Feedback::oracle;
    cfg.zhat0 = {0.3, -0.2, 0.5};
    const auto tr = run_closed_loop(spec, gains_from_bandwidth(5), cfg);
    auto err = [&](std::size_t k) {
      const double a = tr.x[k][0] - tr.zhat[k][0], b = tr.x[k][1] - tr.zhat[k][1], c = tr.d[k] - tr.zhat[k][2];
      return std::sqrt(a * a + b * b + c * c);
    };
    // After the initial peaking transient the error only shrinks.
    const std::size_t start = 1000;
    CHECK(err(start) < err(0));
    for (std::size_t k = start + 1; k < tr.size(); ++k) REQUIRE(err(k) <= err(k - 1));
  }

  TEST_CASE("bandwidth sweep trends") {
    std::vector<double> omegas;
    for (int w = 1; w <= 80; ++w) omegas.push_back(w);
    const auto c = sweep_bandwidth(fixtures::m1d_sweep_plant(), fixtures::m1d_sweep_config(), omegas, 2);
    std::vector<double> iae;
    for (const auto& v : c) iae.push_back(v.iae);
    CHECK(spearman(omegas, iae) < -0.95);
    CHECK(c[79].iacd > c[9].iacd);
    const std::vector<double> one{25.0};
    CHECK(sweep_bandwidth(fixtures::m1d_sweep_plant(), fixtures::m1d_sweep_config(), one).size() == 1);
  }

  TEST_CASE("sweep is identical serial and parallel") {
    const std::vector<double> omegas{3, 11, 27, 50, 79};
    const auto a = sweep_bandwidth(fixtures::m1d_sweep_plant(), fixtures::m1d_sweep_config(), omegas, 2,
                                   ExecPolicy::serial());
    const auto b = sweep_bandwidth(fixtures::m1d_sweep_plant(), fixtures::m1d_sweep_config(), omegas, 2,
                                   ExecPolicy::parallel(4));
    CHECK(a == b);
  }

  TEST_CASE("config validation") {
    SimConfig c;
    c.dt = 0.0;
    CHECK_THROWS(c.validate());
    c = SimConfig{};
    c.record_hz = 300.0;
    CHECK_THROWS(c.validate());
    c = SimConfig{};
    c.horizon = 12.0;
    CHECK_THROWS(c.validate());
  }
}
