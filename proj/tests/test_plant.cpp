#include <doctest.h>

#include <cmath>
#include <numbers>

#include "esotune/dataset.hpp"
#include "esotune/plant.hpp"

using namespace esotune;

namespace {

PlantSpec ns(double a1, double a2, double a3, double a4, double a5, double a6) {
  NsParams p;
  p.a1 = a1;
  p.a2 = a2;
  p.a3 = a3;
  p.a4 = a4;
  p.a5 = a5;
  p.a6 = a6;
  return PlantSpec::ns(p);
}

}  // namespace

TEST_SUITE("plant") {
  TEST_CASE("drift") {
    CHECK(drift(ns(1, 0, 0, 1, 0, 0), {0, 0}, 0.0) == 0.0);
    CHECK(drift(ns(1, 0, 0, 1, 0, 0), {1, 2}, std::numbers::pi / 2) == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(drift(PlantSpec::m1d(M1dParams{}), {0.3, 2}, 0.0) == doctest::Approx(-17.651).epsilon(1e-15));
  }

  TEST_CASE("input gain carries the reversed NS polarity") {
    CHECK(input_gain(ns(0, 0, 0, 1, 0, 0), {0.3, -2.0}) == -1.0);
    CHECK(input_gain(ns(0, 0, 0, 1, 0.15, 1), {0.0, std::numbers::pi / 2}) == doctest::Approx(-1.15));
    CHECK(input_gain(PlantSpec::m1d(M1dParams{}), {1, 1}) == -20.169);
  }

  TEST_CASE("NS gain ratio stays in (0, 3) over the sampling box") {
    for (std::uint64_t s = 0; s < 2000; ++s) {
      const auto smp = sample_spec(PlantKind::ns, s);
      for (double x2 = -3.0; x2 <= 3.0; x2 += 0.25) {
        const double r = input_gain(smp.plant, {0.0, x2}) / smp.plant.g_hat();
        REQUIRE(r > 0.0);
        REQUIRE(r < 3.0);
      }
    }
  }

  TEST_CASE("external disturbance") {
    M1dParams p;
    p.b3 = 0.25;
    const auto m = PlantSpec::m1d(p);
    CHECK(external_disturbance(m, 1.0) == 0.0);
    CHECK(external_disturbance(m, 3.0) == doctest::Approx(-5.042).epsilon(1e-4));
    CHECK(external_disturbance(ns(0, 0.5, 1, 1, 0, 0), 0.0) == 0.5);
    CHECK_THROWS_AS(external_disturbance(m, 10.5), std::domain_error);
    CHECK_THROWS_AS(external_disturbance(m, -0.1), std::domain_error);
  }

  TEST_CASE("M1D segments are left-closed") {
    M1dParams p;
    p.b3 = 0.3;
    p.b4 = 0.2;
    p.b5 = 1.0;
    p.b6 = 0.4;
    p.b7 = 1.0;
    const auto m = PlantSpec::m1d(p);
    CHECK(external_disturbance(m, 2.5) == p.b2 * p.b3);
    CHECK(external_disturbance(m, std::nextafter(2.5, 0.0)) == 0.0);
    CHECK(external_disturbance(m, 5.0) == doctest::Approx(p.b2 * (p.b3 + p.b4 * sawtooth(0.0))));
    CHECK(external_disturbance(m, 7.5) == doctest::Approx(p.b2 * p.b3));
  }

  TEST_CASE("sawtooth convention") {
    CHECK(sawtooth(0.0) == 0.0);
    CHECK(sawtooth(std::numbers::pi / 2) == doctest::Approx(0.5));
    CHECK(sawtooth(std::numbers::pi) == doctest::Approx(-1.0));
    CHECK(sawtooth(2 * std::numbers::pi + 0.3) == doctest::Approx(sawtooth(0.3)));
  }

  TEST_CASE("total disturbance") {
    CHECK(total_disturbance(ns(1, 0, 0, 1, 0, 0), {0, 0}, 0.0, 0.0) == 0.0);
    CHECK(total_disturbance(PlantSpec::m1d(M1dParams{}), {0, 1}, 1.0, 1.0) == doctest::Approx(-8.9945));
    // With the reversed polarity g - g_hat = 0 here, leaving only d*.
    CHECK(total_disturbance(ns(1, 0.5, 1, 1, 0, 0), {0, 0}, 2.0, 0.0) == doctest::Approx(0.5));
  }

  TEST_CASE("total disturbance decomposes exactly") {
    for (std::uint64_t s = 0; s < 200; ++s) {
      for (auto kind : {PlantKind::ns, PlantKind::m1d}) {
        const auto smp = sample_spec(kind, s);
        const State2 x = smp.x0;
        const double u = 0.37 * static_cast<double>(s % 7) - 1.0;
        const double t = 0.05 * static_cast<double>(s % 200);
        const double d = total_disturbance(smp.plant, x, u, t);
        const double parts = drift(smp.plant, x, t) + (input_gain(smp.plant, x) - smp.plant.g_hat()) * u +
                             external_disturbance(smp.plant, t);
        REQUIRE(d - parts == 0.0);
      }
    }
  }

  TEST_CASE("noise") {
    NoiseModel zero;
    for (double n : sample_noise(zero, 100)) CHECK(n == 0.0);

    NoiseModel m;
    m.sigma_n = 0.01;
    m.seed = 11;
    const auto a = sample_noise(m, 1000000);
    double mean = 0.0;
    for (double n : a) {
      REQUIRE(std::abs(n) <= 0.03);
      mean += n;
    }
    mean /= static_cast<double>(a.size());
    CHECK(std::abs(mean) < 3 * 0.01 / std::sqrt(1e6));
    CHECK(a == sample_noise(m, 1000000));

    m.sigma_n = -1.0;
    CHECK_THROWS(sample_noise(m, 10));
    m.sigma_n = 0.01;
    CHECK_THROWS(sample_noise(m, 0));
  }

  TEST_CASE("kind / params mismatch is rejected") {
    PlantSpec s = PlantSpec::ns(NsParams{});
    s.kind = PlantKind::m1d;
    CHECK_THROWS(s.validate());
  }
}
