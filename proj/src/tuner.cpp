#include "esotune/tuner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "esotune/errors.hpp"
#include "esotune/io.hpp"
#include "esotune/rng.hpp"

namespace esotune {

void GainGrid::validate() const {
  if (count < 2) throw ConfigError("grid.count", "must be >= 2");
}

std::vector<double> axis_values(int count) {
  if (count < 1) throw std::invalid_argument("axis count must be >= 1");
  if (count == 1) return {-1.0};
  std::vector<double> v(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) v[i] = -1.0 - 79.0 * (static_cast<double>(i) / (count - 1));
  return v;
}

std::vector<double> bandwidth_grid(int count) {
  auto v = axis_values(count);
  for (double& w : v) w = -w;
  return v;
}

std::vector<EigenTriple> build_grid(const GainGrid& grid) {
  grid.validate();
  const auto ax = axis_values(grid.count);
  const auto n = static_cast<std::size_t>(grid.count);
  std::vector<EigenTriple> out;
  if (!grid.dedupe) {
    out.reserve(n * n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k) out.push_back({ax[i], ax[j], ax[k]});
    return out;
  }
  // i <= j <= k indexes increasingly negative values, so reversing gives the
  // ascending (canonical) order.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j)
      for (std::size_t k = j; k < n; ++k) out.push_back({ax[k], ax[j], ax[i]});
  return out;
}

std::string_view to_string(Selector s) {
  switch (s) {
    case Selector::nn: return "nn";
    case Selector::ideal: return "ideal";
    case Selector::bandwidth: return "bandwidth";
    case Selector::random: return "random";
  }
  return "ideal";
}

Selector selector_from_string(std::string_view name) {
  if (name == "nn") return Selector::nn;
  if (name == "ideal") return Selector::ideal;
  if (name == "bandwidth") return Selector::bandwidth;
  if (name == "random") return Selector::random;
  throw ConfigError("selector", "unknown selector '" + std::string(name) + "' (nn, ideal, bandwidth, random)");
}

std::size_t argmin_cost(std::span<const GridPoint> table) {
  std::size_t best = table.size();
  double j_min = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i].diverged) continue;
    if (best == table.size() || table[i].cost < j_min) {
      best = i;
      j_min = table[i].cost;
    }
  }
  if (best == table.size()) throw NumericalError("every grid point diverged");
  const double tol = kTieTolerance * std::abs(j_min);
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i].diverged || table[i].cost > j_min + tol) continue;
    if (table[i].lambda.sum() > table[best].lambda.sum()) best = i;
  }
  return best;
}

std::vector<GridPoint> simulate_grid(const PlantSpec& spec, const SimConfig& cfg, std::span<const EigenTriple> grid,
                                     int seeds, const ExecPolicy& policy) {
  if (seeds < 1) throw ConfigError("seeds", "must be >= 1");
  std::vector<GridPoint> table(grid.size());
  for_each_index(grid.size(), policy, [&](std::size_t i) {
    const auto ev = evaluate_averaged(spec, gains_from_eigenvalues(grid[i]), cfg, seeds);
    table[i] = {grid[i], ev.criteria, 0.0, ev.diverged};
  });
  return table;
}

TuneResult select_from_table(std::vector<GridPoint> table, const CriterionWeights& w, Selector selector) {
  w.validate();
  if (table.empty()) throw ConfigError("grid", "grid is empty");
  for (auto& p : table) p.cost = cost(p.criteria, w);
  TuneResult r;
  r.selector = selector;
  r.weights = w;
  r.best_index = argmin_cost(table);
  r.lambda_star = table[r.best_index].lambda;
  r.j_star = table[r.best_index].cost;
  r.table = std::move(table);
  return r;
}

TuneResult select_nn(const EstimatorModel& model, const TuneContext& ctx, std::span<const EigenTriple> grid,
                     const CriterionWeights& w, const ExecPolicy& policy) {
  const auto out = predict_grid(model, ctx, grid, policy);
  std::vector<GridPoint> table(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) table[i] = {grid[i], denormalize_criteria(out[i], model.kind), 0.0, false};
  return select_from_table(std::move(table), w, Selector::nn);
}

TuneResult select_ideal(const PlantSpec& spec, const SimConfig& cfg, std::span<const EigenTriple> grid,
                        const CriterionWeights& w, int seeds, const ExecPolicy& policy) {
  w.validate();
  return select_from_table(simulate_grid(spec, cfg, grid, seeds, policy), w, Selector::ideal);
}

TuneResult select_bandwidth(const PlantSpec& spec, const SimConfig& cfg, std::span<const double> omegas,
                            const CriterionWeights& w, int seeds, const ExecPolicy& policy) {
  w.validate();
  std::vector<EigenTriple> grid;
  grid.reserve(omegas.size());
  for (double om : omegas) {
    if (!(om > 0.0)) throw ConfigError("omegas", "bandwidths must be > 0");
    grid.push_back({-om, -om, -om});
  }
  return select_from_table(simulate_grid(spec, cfg, grid, seeds, policy), w, Selector::bandwidth);
}

std::vector<RandomTrial> random_baseline(const PlantSpec& spec, const SimConfig& cfg, const CriterionWeights& w,
                                         int trials, std::uint64_t seed, int seeds, const ExecPolicy& policy) {
  w.validate();
  if (trials < 1) throw ConfigError("trials", "must be >= 1");
  Rng rng(seed);
  std::vector<RandomTrial> out(static_cast<std::size_t>(trials));
  for (auto& t : out) t.omega = 1.0 + 79.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
  for_each_index(out.size(), policy, [&](std::size_t i) {
    const auto ev = evaluate_averaged(spec, gains_from_bandwidth(out[i].omega), cfg, seeds);
    out[i].criteria = ev.criteria;
    out[i].cost = cost(ev.criteria, w);
    out[i].diverged = ev.diverged;
  });
  return out;
}

std::vector<LandscapeRow> performance_landscape(const PlantSpec& spec, const SimConfig& cfg,
                                                const EstimatorModel& model, const TuneContext& ctx,
                                                const CriterionWeights& w, int count, int seeds,
                                                const ExecPolicy& policy) {
  w.validate();
  if (count < 2) throw ConfigError("landscape.count", "must be >= 2");
  if (model.kind != spec.kind) throw ConfigError("model", "estimator plant kind does not match the plant");
  const auto ax = axis_values(count);
  std::vector<EigenTriple> grid;
  for (double l1 : ax)
    for (double l23 : ax) grid.push_back({l1, l23, l23});
  const auto truth = simulate_grid(spec, cfg, grid, seeds, policy);
  const auto pred = predict_grid(model, ctx, grid, policy);
  std::vector<LandscapeRow> rows(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    rows[i] = {grid[i].lambda1, grid[i].lambda2, cost(truth[i].criteria, w),
               cost(denormalize_criteria(pred[i], model.kind), w)};
  return rows;
}

std::string landscape_csv(const std::vector<LandscapeRow>& rows) {
  CsvWriter csv({"lambda1", "lambda23", "j_true", "j_pred"});
  for (const auto& r : rows) csv.row(std::array<double, 4>{r.lambda1, r.lambda23, r.j_true, r.j_pred});
  return csv.str();
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman: need two equal-length samples");
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

constexpr int kMaxPlantDraws = 64;

}  // namespace

MonteCarloSummary monte_carlo(const EstimatorModel& model, std::span<const EigenTriple> grid,
                              const CriterionWeights& w, int trials, std::uint64_t seed, int seeds,
                              const ExecPolicy& policy) {
  w.validate();
  if (trials < 1) throw ConfigError("trials", "must be >= 1");
  if (seeds < 1) throw ConfigError("seeds", "must be >= 1");
  if (grid.empty()) throw ConfigError("grid", "grid is empty");
  MonteCarloSummary out;
  out.trials.resize(static_cast<std::size_t>(trials));
  for_each_index(out.trials.size(), policy, [&](std::size_t i) {
    auto& trial = out.trials[i];
    for (int attempt = 0;; ++attempt) {
      if (attempt == kMaxPlantDraws)
        throw NumericalError("basic experiment diverged for every draw of trial " + std::to_string(i));
      const std::uint64_t sample_seed = derive_seed(seed, {i, static_cast<std::uint64_t>(attempt)});
      const auto smp = sample_spec(model.kind, sample_seed, Split::test);
      std::vector<double> transient;
      try {
        transient = run_basic_experiment(smp);
      } catch (const DivergenceError&) {
        continue;
      }
      const TuneContext ctx{std::move(transient), smp.plant.noise.sigma_n, smp.x_test0, smp.x0};
      const auto picked = select_nn(model, ctx, grid, w, ExecPolicy::serial());
      const SimConfig cfg = target_config(smp);
      const auto nn = evaluate_averaged(smp.plant, gains_from_eigenvalues(picked.lambda_star), cfg, seeds);

      Rng rng(derive_seed(seed, {0xBA5E, i}));
      const double omega = 1.0 + 79.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
      const auto rnd = evaluate_averaged(smp.plant, gains_from_bandwidth(omega), cfg, seeds);

      trial.sample_seed = sample_seed;
      trial.lambda_nn = picked.lambda_star;
      trial.j_nn = cost(nn.criteria, w);
      trial.omega_random = omega;
      trial.j_random = cost(rnd.criteria, w);
      trial.nn_wins = trial.j_nn < trial.j_random;
      break;
    }
  });
  std::vector<double> jn, jr;
  std::size_t wins = 0;
  for (const auto& t : out.trials) {
    jn.push_back(t.j_nn);
    jr.push_back(t.j_random);
    wins += t.nn_wins ? 1 : 0;
  }
  out.win_rate = static_cast<double>(wins) / static_cast<double>(out.trials.size());
  out.median_j_nn = median(jn);
  out.median_j_random = median(jr);
  return out;
}

Json to_json(const MonteCarloSummary& s) {
  Json j;
  j["trials"] = s.trials.size();
  j["win_rate"] = s.win_rate;
  j["median_j_nn"] = s.median_j_nn;
  j["median_j_random"] = s.median_j_random;
  Json rows = Json::array();
  for (const auto& t : s.trials) {
    rows.push_back({{"sample_seed", t.sample_seed},
                    {"lambda_nn", to_json(t.lambda_nn)},
                    {"j_nn", t.j_nn},
                    {"omega_random", t.omega_random},
                    {"j_random", t.j_random},
                    {"nn_wins", t.nn_wins}});
  }
  j["pairs"] = rows;
  return j;
}

Json tune_report(const TuneResult& r, const GainGrid& grid, std::size_t max_table_rows) {
  Json j;
  j["selector"] = std::string(to_string(r.selector));
  j["weights"] = to_json(r.weights);
  j["grid"] = {{"count", grid.count}, {"dedupe", grid.dedupe}, {"points", r.table.size()}};
  j["lambda_star"] = to_json(r.lambda_star);
  j["gains_star"] = to_json(gains_from_eigenvalues(r.lambda_star));
  j["j_star"] = r.j_star;
  j["criteria_star"] = to_json(r.table.at(r.best_index).criteria);
  std::size_t diverged = 0;
  for (const auto& p : r.table) diverged += p.diverged ? 1 : 0;
  j["diverged_points"] = diverged;
  if (r.table.size() > max_table_rows) {
    j["table"] = nullptr;
    j["table_elided"] = true;
  } else {
    Json rows = Json::array();
    for (const auto& p : r.table) {
      rows.push_back({{"lambda", to_json(p.lambda)},
                      {"j", p.cost},
                      {"criteria", Json::array({p.criteria.iae, p.criteria.iac, p.criteria.iacd, p.criteria.iadee})},
                      {"diverged", p.diverged}});
    }
    j["table"] = rows;
    j["table_elided"] = false;
  }
  return j;
}

}  // namespace esotune
