#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "esotune/dataset.hpp"
#include "esotune/io.hpp"

using namespace esotune;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("esotune_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("draws respect the sampling box") {
    double a4_min = 10, a4_max = -10;
    for (std::uint64_t s = 0; s < 10000; ++s) {
      const auto smp = sample_spec(PlantKind::ns, s);
      REQUIRE(smp.plant.g_hat() == -1.0);
      smp.validate();
      a4_min = std::min(a4_min, smp.plant.ns_params().a4);
      a4_max = std::max(a4_max, smp.plant.ns_params().a4);
    }
    CHECK(a4_min >= 0.5);
    CHECK(a4_max <= 1.5);
    for (std::uint64_t s = 0; s < 2000; ++s) {
      const auto smp = sample_spec(PlantKind::m1d, s);
      REQUIRE(smp.plant.g_hat() == -20.0);
      smp.validate();
      for (double l : smp.lambda.values()) REQUIRE((l >= -80.0 && l <= -1.0));
    }
  }

  TEST_CASE("basic experiment") {
    auto smp = sample_spec(PlantKind::ns, 42);
    const auto tr = run_basic_experiment(smp);
    CHECK(tr.size() == kTransientRows * kTransientCols);
    CHECK(tr == run_basic_experiment(smp));

    NsParams quiet;
    smp.plant = PlantSpec::ns(quiet, 0.0);
    smp.x_test0 = {0.0, 0.0};
    for (double v : run_basic_experiment(smp)) REQUIRE(v == 0.0);
  }

  TEST_CASE("basic gains are fixed at (75, 1875, 15625)") {
    const auto g = gains_from_eigenvalues({kBasicEigenvalue, kBasicEigenvalue, kBasicEigenvalue});
    CHECK(g == ObserverGains{75, 1875, 15625});
  }

  TEST_CASE("target experiment") {
    auto smp = sample_spec(PlantKind::m1d, 7);
    CHECK(run_target_experiment(smp).iadee > 0.0);

    // The target run at the basic gains from the basic state reproduces the basic run.
    auto same = smp;
    same.lambda = {kBasicEigenvalue, kBasicEigenvalue, kBasicEigenvalue};
    same.x0 = same.x_test0;
    SimConfig b = basic_config(same);
    SimConfig t = target_config(same);
    t.seed = b.seed;
    const auto gains = gains_from_eigenvalues(same.lambda);
    CHECK(compute_criteria(run_closed_loop(same.plant, gains, b)) ==
          compute_criteria(run_closed_loop(same.plant, gains, t)));

    NsParams quiet;
    quiet.a2 = 0.0;
    auto ns = sample_spec(PlantKind::ns, 3);
    ns.plant = PlantSpec::ns(quiet, 0.0);
    ns.x0 = {0.0, 0.0};
    const auto c = run_target_experiment(ns);
    CHECK(c.iae < 1e-9);
    CHECK(c.iac < 1e-9);
  }

  TEST_CASE("normalization") {
    CHECK(normalize_criteria({3.7, 0, 5, 0}, PlantKind::ns)[0] == 1.0);
    CHECK(normalize_criteria({0, 0, 4 + std::exp(3.0), 0}, PlantKind::ns)[2] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(normalize_criteria({0, 0, 3.0, 0}, PlantKind::ns)[2] == 0.0);
    CHECK(normalize_criteria({16, 0, 0, 0}, PlantKind::m1d)[0] == 1.0);
    for (const auto& n : {normalize_criteria({1e6, 1e6, 1e6, 1e6}, PlantKind::ns),
                          normalize_criteria({1e6, 1e6, 1e6, 1e6}, PlantKind::m1d)})
      for (double v : n) CHECK(v == 1.0);
  }

  TEST_CASE("normalization round trip below the clip") {
    const CriteriaVector ns{1.2, 33.0, 60.0, 17.0};
    const auto back = denormalize_criteria(normalize_criteria(ns, PlantKind::ns), PlantKind::ns);
    CHECK(back.iae == doctest::Approx(ns.iae).epsilon(1e-12));
    CHECK(back.iac == doctest::Approx(ns.iac).epsilon(1e-12));
    CHECK(back.iacd == doctest::Approx(ns.iacd).epsilon(1e-12));
    CHECK(back.iadee == doctest::Approx(ns.iadee).epsilon(1e-12));
    const CriteriaVector m{5.0, 7.5, 1234.0, 99.0};
    const auto mb = denormalize_criteria(normalize_criteria(m, PlantKind::m1d), PlantKind::m1d);
    CHECK(mb.iae == doctest::Approx(m.iae).epsilon(1e-12));
    CHECK(mb.iacd == doctest::Approx(m.iacd).epsilon(1e-12));
    const auto zero = denormalize_criteria({0, 0, 0, 0}, PlantKind::m1d);
    CHECK(zero == CriteriaVector{0, 0, 0, 0});
  }

  TEST_CASE("records serialize losslessly") {
    const auto r = make_record(PlantKind::m1d, 5, Split::val, 3);
    const auto back = record_from_json(record_to_json(r));
    CHECK(back.basic_transient == r.basic_transient);
    CHECK(back.criteria_raw == r.criteria_raw);
    CHECK(back.criteria_norm == r.criteria_norm);
    CHECK(back.sample.sample_seed == r.sample.sample_seed);
    CHECK(back.sample.lambda == r.sample.lambda);
    CHECK(record_to_json(back).dump() == record_to_json(r).dump());
  }

  TEST_CASE("splits are disjoint and reproducible") {
    const auto dir = scratch_dir("dataset");
    const SplitCounts counts{100, 20, 12};
    const auto files = generate_dataset(PlantKind::ns, counts, 2024, dir, ExecPolicy::parallel(4));
    std::set<std::uint64_t> seeds;
    std::size_t total = 0;
    for (const auto& p : files.splits) {
      for (const auto& rec : read_records(p)) {
        seeds.insert(rec.sample.sample_seed);
        ++total;
        REQUIRE(rec.basic_transient.size() == kTransientRows * kTransientCols);
        for (double v : rec.criteria_norm) REQUIRE((v >= 0.0 && v <= 1.0));
      }
    }
    CHECK(total == 132);
    CHECK(seeds.size() == 132);
    CHECK(fs::exists(files.meta));
    CHECK(fs::exists(files.summary));

    const auto dir2 = scratch_dir("dataset2");
    const auto again = generate_dataset(PlantKind::ns, counts, 2024, dir2, ExecPolicy::serial());
    for (std::size_t i = 0; i < files.splits.size(); ++i)
      CHECK(sha256_file(files.splits[i]) == sha256_file(again.splits[i]));
    fs::remove_all(dir);
    fs::remove_all(dir2);
  }

  TEST_CASE("criteria histograms are right-skewed") {
    const auto recs = generate_split(PlantKind::ns, Split::train, 2000, 77);
    for (int c = 0; c < 4; ++c) {
      std::vector<double> v;
      for (const auto& r : recs) v.push_back(r.criteria_raw.as_array()[c]);
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
      INFO("criterion " << c);
      CHECK(v[v.size() / 2] < mean);
    }
    const auto s = summarize(recs);
    CHECK(s[0].histogram.size() == 20);
  }
}
