#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <random>

#include "esotune/control.hpp"

using namespace esotune;

namespace {

std::array<double, 3> companion_roots(const ObserverGains& g) {
  Eigen::Matrix3d c;
  c << -g.l1, -g.l2, -g.l3, 1, 0, 0, 0, 1, 0;
  const Eigen::Vector3cd r = c.eigenvalues();
  std::array<double, 3> out{r[0].real(), r[1].real(), r[2].real()};
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_SUITE("control") {
  TEST_CASE("gains from eigenvalues") {
    CHECK(gains_from_eigenvalues({-1, -2, -3}) == ObserverGains{6, 11, 6});
    CHECK(gains_from_eigenvalues({-25, -25, -25}) == ObserverGains{75, 1875, 15625});
    CHECK(gains_from_eigenvalues({-1, -1, -1}) == ObserverGains{3, 3, 1});
    CHECK_THROWS(gains_from_eigenvalues({-1, 0, -3}));
    CHECK_THROWS(gains_from_eigenvalues({-1, 2, -3}));
  }

  TEST_CASE("bandwidth gains") {
    CHECK(gains_from_bandwidth(1) == ObserverGains{3, 3, 1});
    CHECK(gains_from_bandwidth(25) == ObserverGains{75, 1875, 15625});
    CHECK(gains_from_bandwidth(10) == ObserverGains{30, 300, 1000});
    CHECK_THROWS(gains_from_bandwidth(0.0));
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> w(0.01, 200.0);
    for (int i = 0; i < 10000; ++i) {
      const double om = w(rng);
      REQUIRE(gains_from_bandwidth(om) == gains_from_eigenvalues({-om, -om, -om}));
    }
  }

  TEST_CASE("root round trip through the companion matrix") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> lam(-80.0, -1.0);
    for (int i = 0; i < 1000; ++i) {
      std::array<double, 3> l{lam(rng), lam(rng), lam(rng)};
      // Keep roots separated; repeated roots are ill-conditioned for any solver.
      std::sort(l.begin(), l.end());
      if (l[1] - l[0] < 0.5 || l[2] - l[1] < 0.5) continue;
      const auto r = companion_roots(gains_from_eigenvalues({l[0], l[1], l[2]}));
      for (int k = 0; k < 3; ++k) REQUIRE(std::abs(r[k] - l[k]) <= 1e-6 * std::abs(l[k]));
    }
  }

  TEST_CASE("permutation invariance is bit exact") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> lam(-80.0, -1.0);
    for (int i = 0; i < 500; ++i) {
      std::array<double, 3> l{lam(rng), lam(rng), lam(rng)};
      const auto ref = gains_from_eigenvalues({l[0], l[1], l[2]});
      std::sort(l.begin(), l.end());
      do {
        REQUIRE(gains_from_eigenvalues({l[0], l[1], l[2]}) == ref);
      } while (std::next_permutation(l.begin(), l.end()));
    }
  }

  TEST_CASE("controller gains place a double pole at -k") {
    const auto g4 = controller_gains(4);
    CHECK(g4.k1 == 16);
    CHECK(g4.k2 == 8);
    CHECK(controller_gains(1).k1 == 1);
    CHECK(controller_gains(1).k2 == 2);
    CHECK(controller_gains(10).k1 == 100);
    CHECK(controller_gains(10).k2 == 20);
    CHECK_THROWS(controller_gains(0));
    for (double k : {0.5, 3.0, 12.0}) {
      const auto g = controller_gains(k);
      Eigen::Matrix2d a;
      a << 0, 1, -g.k1, -g.k2;
      const Eigen::Vector2cd ev = a.eigenvalues();
      CHECK(ev[0].real() == doctest::Approx(-k).epsilon(1e-6));
      CHECK(ev[1].real() == doctest::Approx(-k).epsilon(1e-6));
    }
  }

  TEST_CASE("control law") {
    const auto kg = controller_gains(4);
    CHECK(control_law({0, 0, 0}, kg, -20) == 0.0);
    CHECK(control_law({1, 0, 0}, kg, -20) == doctest::Approx(0.8));
    CHECK(control_law({0, 0, 5}, kg, -1) == doctest::Approx(5.0));
    CHECK_THROWS(control_law({0, 0, 0}, kg, 0.0));
  }

  TEST_CASE("observer derivative") {
    const ObserverGains l{75, 1875, 15625};
    CHECK(eso_derivative({0, 0, 0}, 0, 0, l, -20) == std::array<double, 3>{0, 0, 0});
    CHECK(eso_derivative({0, 0, 0}, 1, 0, l, -20) == std::array<double, 3>{75, 1875, 15625});
    CHECK(eso_derivative({1, 0, 0}, 1, 1, ObserverGains{1, 2, 3}, -20) == std::array<double, 3>{0, -20, 0});
  }
}
