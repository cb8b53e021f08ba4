#include <doctest.h>

#include <algorithm>
#include <set>

#include "esotune/errors.hpp"
#include "esotune/tuner.hpp"
#include "fixtures.hpp"

using namespace esotune;

namespace {

SimConfig short_ns_config() {
  auto cfg = fixtures::ns_tuning_config();
  cfg.horizon = 2.0;
  return cfg;
}

}  // namespace

TEST_SUITE("tuner") {
  TEST_CASE("grid sizes and endpoints") {
    CHECK(build_grid({21, false}).size() == 9261);
    const auto canon = build_grid({21, true});
    CHECK(canon.size() == 1771);
    CHECK(std::find(canon.begin(), canon.end(), EigenTriple{-1, -1, -1}) != canon.end());
    CHECK(std::find(canon.begin(), canon.end(), EigenTriple{-80, -80, -80}) != canon.end());
    const auto two = build_grid({2, false});
    CHECK(two.size() == 8);
    for (const auto& t : two)
      for (double l : t.values()) CHECK((l == -1.0 || l == -80.0));
    CHECK_THROWS_AS(build_grid({1, true}), ConfigError);
    const auto ax = axis_values(21);
    CHECK(ax[0] == -1.0);
    CHECK(ax[20] == -80.0);
    CHECK(ax[4] == doctest::Approx(-1.0 - 79.0 * 0.2));
    std::set<std::array<double, 3>> uniq;
    for (const auto& t : canon) uniq.insert(t.canonical().values());
    CHECK(uniq.size() == canon.size());
  }

  TEST_CASE("bandwidth grid matches the eigenvalue axis") {
    const auto om = bandwidth_grid(21);
    const auto ax = axis_values(21);
    for (std::size_t i = 0; i < om.size(); ++i) CHECK(om[i] == -ax[i]);
  }

  TEST_CASE("tie-break prefers the slowest observer") {
    std::vector<GridPoint> t(3);
    t[0] = {{-10, -10, -10}, {}, 1.0, false};
    t[1] = {{-2, -3, -4}, {}, 1.0 * (1 + 1e-13), false};
    t[2] = {{-1, -1, -1}, {}, 1.5, false};
    CHECK(argmin_cost(t) == 1);
    t[1].cost = 1.1;
    CHECK(argmin_cost(t) == 0);
    t[0].diverged = true;
    CHECK(argmin_cost(t) == 1);
    for (auto& p : t) p.diverged = true;
    CHECK_THROWS_AS(argmin_cost(t), NumericalError);
  }

  TEST_CASE("degenerate objective returns the slowest point") {
    SimConfig cfg;
    cfg.horizon = 1.0;
    const auto spec = PlantSpec::m1d([] {
      M1dParams p;
      p.b3 = p.b4 = p.b5 = p.b6 = p.b7 = 0.0;
      return p;
    }());
    const auto grid = build_grid({4, true});
    const auto r = select_ideal(spec, cfg, grid, {1, 1, 0, 0}, 1);
    CHECK(r.j_star == 0.0);
    CHECK(r.lambda_star == EigenTriple{-1, -1, -1});
  }

  TEST_CASE("single point grids") {
    const std::vector<EigenTriple> one{{-20, -30, -40}};
    const auto r = select_ideal(fixtures::ns_tuning_plant(), short_ns_config(), one, {10, 1, 0, 0}, 1);
    CHECK(r.lambda_star == one[0]);
    const std::vector<double> w{17.0};
    const auto b = select_bandwidth(fixtures::ns_tuning_plant(), short_ns_config(), w, {10, 1, 0, 0}, 1);
    CHECK(b.lambda_star == EigenTriple{-17, -17, -17});
  }

  TEST_CASE("argmin is invariant to positive weight scaling") {
    const auto grid = build_grid({6, true});
    const auto table = simulate_grid(fixtures::ns_tuning_plant(), short_ns_config(), grid, 2);
    for (const CriterionWeights w : {CriterionWeights{10, 1, 0, 0}, CriterionWeights{0, 0, 0, 1},
                                     CriterionWeights{20, 1, 0.005, 0}}) {
      const auto a = select_from_table(table, w, Selector::ideal);
      for (double f : {0.001, 3.0, 1e4}) CHECK(select_from_table(table, w.scaled(f), Selector::ideal).lambda_star == a.lambda_star);
    }
  }

  TEST_CASE("raw and canonical grids agree") {
    const auto spec = fixtures::ns_tuning_plant();
    const auto cfg = short_ns_config();
    const auto raw = select_ideal(spec, cfg, build_grid({5, false}), {10, 1, 0, 0}, 1);
    const auto canon = select_ideal(spec, cfg, build_grid({5, true}), {10, 1, 0, 0}, 1);
    CHECK(raw.j_star == canon.j_star);
    CHECK(raw.lambda_star.canonical() == canon.lambda_star.canonical());
  }

  TEST_CASE("ideal never loses to bandwidth on the same quantization") {
    const int count = 6;
    const auto spec = fixtures::ns_tuning_plant();
    const auto cfg = short_ns_config();
    const auto ideal = select_ideal(spec, cfg, build_grid({count, true}), {20, 1, 0.005, 0}, 2);
    const auto bw = select_bandwidth(spec, cfg, bandwidth_grid(count), {20, 1, 0.005, 0}, 2);
    CHECK(ideal.j_star <= bw.j_star);
  }

  TEST_CASE("grid evaluation is identical serial and parallel") {
    const auto grid = build_grid({4, true});
    const auto a = simulate_grid(fixtures::ns_tuning_plant(), short_ns_config(), grid, 2, ExecPolicy::serial());
    const auto b = simulate_grid(fixtures::ns_tuning_plant(), short_ns_config(), grid, 2, ExecPolicy::parallel(5));
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].criteria == b[i].criteria);
  }

  TEST_CASE("random baseline") {
    const auto spec = fixtures::m1d_sweep_plant();
    auto cfg = fixtures::m1d_sweep_config();
    cfg.horizon = 1.0;
    const auto a = random_baseline(spec, cfg, {1, 1, 0, 0}, 5, 99);
    const auto b = random_baseline(spec, cfg, {1, 1, 0, 0}, 5, 99, 1, ExecPolicy::serial());
    REQUIRE(a.size() == 5);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].omega == b[i].omega);
      CHECK(a[i].cost == b[i].cost);
      CHECK((a[i].omega >= 1.0 && a[i].omega <= 80.0));
    }
    CHECK(random_baseline(spec, cfg, {1, 1, 0, 0}, 1, 3).size() == 1);
    CHECK_THROWS(random_baseline(spec, cfg, {1, 1, 0, 0}, 0, 3));
  }

  TEST_CASE("spearman") {
    const std::vector<double> a{1, 2, 3, 4, 5};
    const std::vector<double> b{10, 20, 30, 40, 50};
    const std::vector<double> c{5, 4, 3, 2, 1};
    const std::vector<double> d{1, 1, 2, 2, 3};
    CHECK(spearman(a, b) == doctest::Approx(1.0));
    CHECK(spearman(a, c) == doctest::Approx(-1.0));
    CHECK(spearman(a, d) == doctest::Approx(0.9486832980505138));
  }

  TEST_CASE("report") {
    const std::vector<EigenTriple> g{{-5, -5, -5}, {-20, -10, -30}};
    const auto r = select_ideal(fixtures::ns_tuning_plant(), short_ns_config(), g, {10, 1, 0, 0}, 1);
    const auto j = tune_report(r, {21, true});
    CHECK(j["selector"] == "ideal");
    CHECK(j["table"].size() == 2);
    CHECK_FALSE(j.contains("wall_clock_s"));
    CHECK(tune_report(r, {21, true}, 1)["table_elided"] == true);
  }

  TEST_CASE("selector names") {
    for (auto s : {Selector::nn, Selector::ideal, Selector::bandwidth, Selector::random})
      CHECK(selector_from_string(to_string(s)) == s);
    CHECK_THROWS_AS(selector_from_string("greedy"), ConfigError);
  }
}
