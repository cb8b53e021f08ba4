#include "esotune/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>

#include "esotune/bounds.hpp"
#include "esotune/dataset.hpp"
#include "esotune/errors.hpp"
#include "esotune/estimator.hpp"
#include "esotune/io.hpp"
#include "esotune/json_io.hpp"
#include "esotune/tuner.hpp"
#include "esotune/version.hpp"

namespace esotune {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  int jobs = 0;
  std::string out_dir = "out";
};

// One command invocation: effective config, outputs written so far, manifest.
class Run {
 public:
  Run(std::string command, Json config, const Options& opt, std::ostream& log)
      : command_(std::move(command)), config_(std::move(config)), opt_(opt), log_(log),
        start_(std::chrono::steady_clock::now()) {}

  const Json& config() const { return config_; }
  std::ostream& log() { return log_; }
  fs::path out_dir() const { return opt_.out_dir; }

  ExecPolicy policy() const { return opt_.jobs == 1 ? ExecPolicy::serial() : ExecPolicy::parallel(opt_.jobs); }

  /// Run seed: --seed, else the top-level "seed" field, else `fallback`. The
  /// effective value is written back so the digest covers it.
  std::uint64_t seed(std::uint64_t fallback = 0) {
    std::uint64_t s = fallback;
    if (opt_.seed) {
      s = *opt_.seed;
    } else if (config_.contains("seed")) {
      const auto& v = config_.at("seed");
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
        throw ConfigError("seed", "expected a non-negative integer");
      s = v.get<std::uint64_t>();
    }
    config_["seed"] = s;
    seeds_["seed"] = s;
    return s;
  }

  void note_seed(const std::string& name, std::uint64_t v) { seeds_[name] = v; }

  void write(const std::string& name, std::string_view content) {
    write_file(out_dir() / name, content);
    outputs_.push_back(name);
  }

  void record(const fs::path& written) { outputs_.push_back(fs::relative(written, out_dir()).generic_string()); }

  void finish() {
    Json m;
    m["command"] = command_;
    m["config_digest"] = sha256_hex(config_.dump());
    m["config"] = config_;
    m["seeds"] = seeds_;
    m["code_version"] = std::string(code_version());
    m["wall_clock_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    m["jobs"] = effective_jobs(policy());
    Json outs = Json::array();
    for (const auto& o : outputs_) outs.push_back({{"path", o}, {"sha256", sha256_file(out_dir() / o)}});
    m["outputs"] = outs;
    write_file(out_dir() / (command_ + "_manifest.json"), m.dump(2) + "\n");
  }

  /// Marks already-written outputs as belonging to a failed run.
  void fail(const std::string& what) noexcept {
    if (outputs_.empty()) return;
    try {
      Json m;
      m["command"] = command_;
      m["error"] = what;
      m["complete"] = false;
      m["outputs"] = outputs_;
      write_file(out_dir() / (command_ + "_manifest.partial.json"), m.dump(2) + "\n");
    } catch (...) {
    }
  }

 private:
  std::string command_;
  Json config_;
  Options opt_;
  std::ostream& log_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::string> outputs_;
  Json seeds_ = Json::object();
};

const Json& require(const Json& cfg, const std::string& key) {
  if (!cfg.contains(key)) throw ConfigError(key, "missing required field");
  return cfg.at(key);
}

int int_or(const Json& cfg, const std::string& key, int fallback) {
  const double v = json_number_or(cfg, key, "", fallback);
  if (v != std::floor(v) || std::abs(v) > 1e9) throw ConfigError(key, "expected an integer");
  return static_cast<int>(v);
}

bool bool_or(const Json& cfg, const std::string& key, bool fallback) {
  if (!cfg.contains(key)) return fallback;
  if (!cfg.at(key).is_boolean()) throw ConfigError(key, "expected true or false");
  return cfg.at(key).get<bool>();
}

PlantKind kind_of(const Json& cfg, const std::string& key = "kind") {
  try {
    return plant_kind_from_string(json_string_or(cfg, key, "", ""));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(key, e.what());
  }
}

SimConfig sim_of(const Json& cfg) {
  return cfg.contains("sim") ? sim_config_from_json(cfg.at("sim"), "sim") : SimConfig{};
}

GainGrid grid_of(const Json& cfg, bool dedupe_default) {
  GainGrid g;
  g.dedupe = dedupe_default;
  if (!cfg.contains("grid")) return g;
  const auto& j = cfg.at("grid");
  json_require_object(j, "grid");
  json_reject_unknown(j, "grid", {"count", "dedupe"});
  g.count = int_or(j, "count", g.count);
  g.dedupe = bool_or(j, "dedupe", g.dedupe);
  g.validate();
  return g;
}

fs::path model_path_of(const Json& cfg) {
  const auto& v = require(cfg, "model");
  if (!v.is_string()) throw ConfigError("model", "expected a file path");
  return v.get<std::string>();
}

// Basic-experiment transient of a user-specified plant, started at x_test0.
TuneContext context_of(const PlantSpec& plant, const Json& cfg, const SimConfig& sim, std::uint64_t seed) {
  SampleSpec smp;
  smp.plant = plant;
  smp.x_test0 = json_state2(require(cfg, "x_test0"), "x_test0");
  smp.x0 = sim.x0;
  smp.lambda = {kBasicEigenvalue, kBasicEigenvalue, kBasicEigenvalue};
  smp.split = Split::test;
  smp.sample_seed = seed;
  return {run_basic_experiment(smp), plant.noise.sigma_n, smp.x_test0, smp.x0};
}

std::string trajectory_csv(const Trajectory& tr) {
  CsvWriter csv({"t", "x1", "x2", "zhat1", "zhat2", "zhat3", "u", "d", "y"});
  for (std::size_t k = 0; k < tr.size(); ++k) {
    const double row[9] = {tr.t[k],       tr.x[k][0], tr.x[k][1], tr.zhat[k][0], tr.zhat[k][1],
                           tr.zhat[k][2], tr.u[k],    tr.d[k],    tr.y[k]};
    csv.row(row);
  }
  return csv.str();
}

// ---------------------------------------------------------------------------

void cmd_simulate(Run& run) {
  const auto& cfg = run.config();
  json_reject_unknown(cfg, "", {"plant", "sim", "observer", "seed"});
  const auto spec = plant_spec_from_json(require(cfg, "plant"));
  auto sim = sim_of(cfg);
  const auto gains = observer_from_json(require(cfg, "observer"));
  sim.seed = run.seed(sim.seed);
  const auto traj = run_closed_loop(spec, gains, sim);
  const auto crit = compute_criteria(traj);
  run.write("trajectory.csv", trajectory_csv(traj));
  Json j;
  j["criteria"] = to_json(crit);
  j["gains"] = to_json(gains);
  j["x_final"] = {traj.x_final[0], traj.x_final[1]};
  run.write("criteria.json", j.dump(2) + "\n");
  run.log() << "IAE " << crit.iae << "  IAC " << crit.iac << "  IACD " << crit.iacd << "  IADEE " << crit.iadee
            << "\n";
}

std::vector<double> omegas_of(const Json& cfg) {
  std::vector<double> out;
  if (!cfg.contains("omegas")) {
    for (int w = 1; w <= 80; ++w) out.push_back(w);
    return out;
  }
  const auto& v = cfg.at("omegas");
  if (v.is_array()) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw ConfigError("omegas[" + std::to_string(i) + "]", "expected a number");
      out.push_back(v[i].get<double>());
    }
  } else if (v.is_object()) {
    json_reject_unknown(v, "omegas", {"from", "to", "step"});
    const double from = json_number(v, "from", "omegas");
    const double to = json_number(v, "to", "omegas");
    const double step = json_number_or(v, "step", "omegas", 1.0);
    if (!(step > 0.0) || to < from) throw ConfigError("omegas", "need from <= to and step > 0");
    const auto n = static_cast<long>(std::floor((to - from) / step + 1e-9));
    for (long i = 0; i <= n; ++i) out.push_back(from + static_cast<double>(i) * step);
  } else {
    throw ConfigError("omegas", "expected an array or {from, to, step}");
  }
  if (out.empty()) throw ConfigError("omegas", "no bandwidths given");
  return out;
}

void cmd_sweep(Run& run) {
  const auto& cfg = run.config();
  json_reject_unknown(cfg, "", {"plant", "sim", "omegas", "seeds", "seed"});
  const auto spec = plant_spec_from_json(require(cfg, "plant"));
  auto sim = sim_of(cfg);
  const auto omegas = omegas_of(cfg);
  const int seeds = int_or(cfg, "seeds", 5);
  sim.seed = run.seed(sim.seed);
  const auto rows = sweep_bandwidth(spec, sim, omegas, seeds, run.policy());
  CsvWriter csv({"omega", "iae", "iac", "iacd", "iadee"});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double r[5] = {omegas[i], rows[i].iae, rows[i].iac, rows[i].iacd, rows[i].iadee};
    csv.row(r);
  }
  run.write("sweep.csv", csv.str());
}

void cmd_gen_dataset(Run& run) {
  const auto& cfg = run.config();
  json_reject_unknown(cfg, "", {"kind", "counts", "seed"});
  const auto kind = kind_of(cfg);
  SplitCounts counts;
  if (cfg.contains("counts")) {
    const auto& c = cfg.at("counts");
    json_require_object(c, "counts");
    json_reject_unknown(c, "counts", {"train", "val", "test"});
    auto count = [&](const char* key, std::size_t fallback) {
      const int v = int_or(c, key, static_cast<int>(fallback));
      if (v < 0) throw ConfigError(std::string("counts.") + key, "must be >= 0");
      return static_cast<std::size_t>(v);
    };
    counts.train = count("train", counts.train);
    counts.val = count("val", counts.val);
    counts.test = count("test", counts.test);
  }
  if (counts.train + counts.val + counts.test == 0) throw ConfigError("counts", "all split counts are zero");
  const auto seed = run.seed();
  const auto files = generate_dataset(kind, counts, seed, run.out_dir(), run.policy());
  for (const auto& p : files.splits) run.record(p);
  run.record(files.meta);
  run.record(files.summary);
}

EstimatorConfig model_config_of(const Json& cfg) {
  EstimatorConfig m = EstimatorConfig::desk();
  if (!cfg.contains("model")) return m;
  const auto& j = cfg.at("model");
  json_require_object(j, "model");
  json_reject_unknown(j, "model", {"preset", "conv_blocks", "base_filters", "transient_fc"});
  const auto preset = json_string_or(j, "preset", "model", "desk");
  if (preset == "full") m = EstimatorConfig{};
  else if (preset != "desk") throw ConfigError("model.preset", "expected \"desk\" or \"full\"");
  m.conv_blocks = int_or(j, "conv_blocks", m.conv_blocks);
  m.base_filters = int_or(j, "base_filters", m.base_filters);
  m.transient_fc = int_or(j, "transient_fc", m.transient_fc);
  try {
    m.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("model", e.what());
  }
  return m;
}

TrainConfig train_config_of(const Json& cfg) {
  TrainConfig t;
  if (!cfg.contains("train")) return t;
  const auto& j = cfg.at("train");
  json_require_object(j, "train");
  json_reject_unknown(j, "train", {"learning_rate", "batch_size", "epochs", "shuffle"});
  t.learning_rate = json_number_or(j, "learning_rate", "train", t.learning_rate);
  t.batch_size = int_or(j, "batch_size", t.batch_size);
  t.epochs = int_or(j, "epochs", t.epochs);
  t.shuffle = bool_or(j, "shuffle", t.shuffle);
  t.validate();
  return t;
}

void cmd_train(Run& run) {
  const auto& cfg = run.config();
  json_reject_unknown(cfg, "", {"kind", "dataset_dir", "model", "train", "seed"});
  const auto kind = kind_of(cfg);
  const auto dir_v = require(cfg, "dataset_dir");
  if (!dir_v.is_string()) throw ConfigError("dataset_dir", "expected a directory path");
  const fs::path dir = dir_v.get<std::string>();
  const auto mcfg = model_config_of(cfg);
  auto tcfg = train_config_of(cfg);
  const auto seed = run.seed();
  tcfg.seed = derive_seed(seed, {2});
  run.note_seed("init", derive_seed(seed, {1}));
  run.note_seed("shuffle", tcfg.seed);

  const auto train_recs = read_records(split_path(dir, kind, Split::train));
  if (train_recs.empty())
    throw ConfigError("dataset_dir", "training split " + split_path(dir, kind, Split::train).string() + " is empty");
  const auto val_recs = read_records(split_path(dir, kind, Split::val));
  if (val_recs.empty())
    throw ConfigError("dataset_dir", "validation split " + split_path(dir, kind, Split::val).string() + " is empty");
  const auto train_set = make_examples(train_recs);
  const auto val_set = make_examples(val_recs);

  const auto init = EstimatorModel::create(mcfg, kind, derive_seed(seed, {1}));
  auto& log = run.log();
  const auto result = train(init, train_set, val_set, tcfg, run.policy(), [&](const EpochRecord& r) {
    log << "epoch " << r.epoch << "/" << tcfg.epochs << "  train " << r.train_loss << "  val " << r.val_loss
        << std::endl;
  });

  Json metrics;
  metrics["initial_val_loss"] = result.initial_val_loss;
  metrics["best_val_loss"] = result.best_val_loss;
  metrics["best_epoch"] = result.best_epoch;
  metrics["train_records"] = train_recs.size();
  metrics["val_records"] = val_recs.size();
  const auto test_file = split_path(dir, kind, Split::test);
  if (fs::exists(test_file)) {
    const auto test_recs = read_records(test_file);
    if (!test_recs.empty()) {
      const auto mape = criteria_mape(result.model, test_recs, run.policy());
      metrics["test_records"] = test_recs.size();
      metrics["test_mape_percent"] = {{"iae", mape[0]}, {"iac", mape[1]}, {"iacd", mape[2]}, {"iadee", mape[3]}};
    }
  }
  save_model(run.out_dir() / "model.bin", result.model);
  run.record(run.out_dir() / "model.bin");
  run.write("history.csv", history_csv(result.history));
  run.write("train_metrics.json", metrics.dump(2) + "\n");
}

void cmd_tune(Run& run) {
  const auto& cfg = run.config();
  json_reject_unknown(cfg, "",
                      {"plant", "sim", "selector", "weights", "grid", "seeds", "seed", "model", "x_test0", "trials",
                       "max_table_rows"});
  const auto spec = plant_spec_from_json(require(cfg, "plant"));
  auto sim = sim_of(cfg);
  const auto weights = weights_from_json(require(cfg, "weights"), "weights");
  const Selector selector = selector_from_string(json_string_or(cfg, "selector", "", "ideal"));
  const auto grid = grid_of(cfg, selector != Selector::nn);
  const int seeds = int_or(cfg, "seeds", 3);
  const int max_rows = int_or(cfg, "max_table_rows", 10000);
  if (max_rows < 0) throw ConfigError("max_table_rows", "must be >= 0");
  sim.seed = run.seed(sim.seed);

  TuneResult result;
  Json extra = Json::object();
  switch (selector) {
    case Selector::ideal:
      result = select_ideal(spec, sim, build_grid(grid), weights, seeds, run.policy());
      break;
    case Selector::bandwidth:
      result = select_bandwidth(spec, sim, bandwidth_grid(grid.count), weights, seeds, run.policy());
      break;
    case Selector::nn: {
      const auto model = load_model(model_path_of(cfg));
      if (model.kind != spec.kind) throw ConfigError("model", "estimator was trained for a different plant kind");
      const auto ctx = context_of(spec, cfg, sim, sim.seed);
      result = select_nn(model, ctx, build_grid(grid), weights, run.policy());
      const auto truth = evaluate_averaged(spec, gains_from_eigenvalues(result.lambda_star), sim, seeds);
      extra["true_criteria_star"] = to_json(truth.criteria);
      extra["true_j_star"] = cost(truth.criteria, weights);
      extra["true_diverged"] = truth.diverged;
      break;
    }
    case Selector::random: {
      const int trials = int_or(cfg, "trials", 100);
      const auto draws = random_baseline(spec, sim, weights, trials, derive_seed(sim.seed, {0xBA5E}), seeds,
                                         run.policy());
      std::vector<GridPoint> table;
      for (const auto& d : draws) table.push_back({{-d.omega, -d.omega, -d.omega}, d.criteria, d.cost, d.diverged});
      result = select_from_table(std::move(table), weights, Selector::random);
      break;
    }
  }
  Json report = tune_report(result, grid, static_cast<std::size_t>(max_rows));
  report["seeds"] = seeds;
  report["seed"] = sim.seed;
  for (auto it = extra.begin(); it != extra.end(); ++it) report[it.key()] = it.value();
  run.write("tune_report.json", report.dump(2) + "\n");
  run.log() << "J* = " << result.j_star << " at (" << result.lambda_star.lambda1 << ", "
            << result.lambda_star.lambda2 << ", " << result.lambda_star.lambda3 << ")\n";
}

void cmd_landscape(Run& run) {
  const auto& cfg = run.config();
  json_reject_unknown(cfg, "", {"plant", "sim", "model", "x_test0", "weights", "count", "seeds", "seed"});
  const auto spec = plant_spec_from_json(require(cfg, "plant"));
  auto sim = sim_of(cfg);
  const auto weights = weights_from_json(require(cfg, "weights"), "weights");
  const int count = int_or(cfg, "count", 21);
  const int seeds = int_or(cfg, "seeds", 3);
  sim.seed = run.seed(sim.seed);
  const auto model = load_model(model_path_of(cfg));
  const auto ctx = context_of(spec, cfg, sim, sim.seed);
  const auto rows = performance_landscape(spec, sim, model, ctx, weights, count, seeds, run.policy());
  std::vector<double> jt, jp;
  for (const auto& r : rows) {
    jt.push_back(r.j_true);
    jp.push_back(r.j_pred);
  }
  auto best = [&](const std::vector<double>& v) {
    const auto i = static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
    return Json{{"lambda1", rows[i].lambda1}, {"lambda23", rows[i].lambda23}, {"j", v[i]}};
  };
  Json summary;
  summary["count"] = count;
  summary["seeds"] = seeds;
  summary["spearman"] = spearman(jt, jp);
  summary["best_true"] = best(jt);
  summary["best_pred"] = best(jp);
  run.write("landscape.csv", landscape_csv(rows));
  run.write("landscape.json", summary.dump(2) + "\n");
}

std::vector<int> theorems_of(const Json& cfg) {
  if (!cfg.contains("theorems")) return {1, 2, 3};
  std::vector<int> out;
  const auto& v = cfg.at("theorems");
  if (!v.is_array()) throw ConfigError("theorems", "expected an array of 1, 2, 3");
  for (const auto& t : v) {
    if (!t.is_number_integer() || t.get<int>() < 1 || t.get<int>() > 3)
      throw ConfigError("theorems", "expected an array of 1, 2, 3");
    out.push_back(t.get<int>());
  }
  return out;
}

void cmd_check_bounds(Run& run) {
  const auto& cfg = run.config();
  json_reject_unknown(cfg, "", {"plant", "sim", "observer", "theorems", "n_bar", "d_bar", "margins", "suite", "seed"});
  const auto theorems = theorems_of(cfg);
  BoundOptions opt;
  opt.n_bar = json_number_or(cfg, "n_bar", "", -1.0);
  opt.d_bar = json_number_or(cfg, "d_bar", "", -1.0);
  const auto seed = run.seed(cfg.contains("sim") ? sim_of(cfg).seed : 0);
  Json out;
  Json reports = Json::array();
  int violations = 0;
  auto add = [&](BoundReport r, const std::string& id) {
    r.id = id;
    violations += r.violated ? 1 : 0;
    reports.push_back(to_json(r));
    return r;
  };

  if (cfg.contains("suite")) {
    if (cfg.contains("plant") || cfg.contains("observer"))
      throw ConfigError("suite", "use either a suite or a single plant/observer");
    const auto& s = cfg.at("suite");
    json_require_object(s, "suite");
    json_reject_unknown(s, "suite", {"kinds", "configs", "seeds"});
    std::vector<PlantKind> kinds{PlantKind::ns, PlantKind::m1d};
    if (s.contains("kinds")) {
      kinds.clear();
      for (const auto& k : s.at("kinds")) {
        if (!k.is_string()) throw ConfigError("suite.kinds", "expected plant kind names");
        kinds.push_back(plant_kind_from_string(k.get<std::string>()));
      }
    }
    const int configs = int_or(s, "configs", 20);
    const int nseeds = int_or(s, "seeds", 3);
    if (configs < 1 || nseeds < 1) throw ConfigError("suite", "configs and seeds must be >= 1");
    struct Job {
      PlantKind kind;
      int config;
      int seed;
    };
    std::vector<Job> jobs;
    for (auto k : kinds)
      for (int c = 0; c < configs; ++c)
        for (int n = 0; n < nseeds; ++n) jobs.push_back({k, c, n});
    std::vector<std::vector<BoundReport>> results(jobs.size());
    for_each_index(jobs.size(), run.policy(), [&](std::size_t i) {
      const auto& job = jobs[i];
      const auto smp = sample_spec(job.kind, derive_seed(seed, {static_cast<std::uint64_t>(job.kind),
                                                               static_cast<std::uint64_t>(job.config)}));
      SimConfig sim = target_config(smp);
      sim.seed = static_cast<std::uint64_t>(job.seed);
      const auto gains = gains_from_eigenvalues(smp.lambda);
      const double omega = -smp.lambda.sum() / 3.0;
      for (int t : theorems) {
        if (t == 1) results[i].push_back(check_theorem1(smp.plant, gains, sim, opt));
        if (t == 2) results[i].push_back(check_theorem2(smp.plant, omega, sim, opt));
        if (t == 3) results[i].push_back(check_theorem3(smp.plant, gains, sim));
      }
    });
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      for (auto& r : results[i]) {
        add(std::move(r), std::string(to_string(jobs[i].kind)) + "/" + std::to_string(jobs[i].config) + "/" +
                              std::to_string(jobs[i].seed));
      }
    }
    out["mode"] = "suite";
  } else {
    const auto spec = plant_spec_from_json(require(cfg, "plant"));
    auto sim = sim_of(cfg);
    sim.seed = seed;
    const auto& obs = require(cfg, "observer");
    const auto gains = observer_from_json(obs);
    const bool margins = bool_or(cfg, "margins", false);
    const auto traj = run_closed_loop(spec, gains, sim);
    for (int t : theorems) {
      BoundReport r;
      if (t == 1) r = check_theorem1(spec, gains, traj, opt);
      if (t == 2) {
        if (!obs.contains("omega_o")) throw ConfigError("theorems", "theorem 2 needs observer.omega_o");
        r = check_theorem2(spec, obs.at("omega_o").get<double>(), traj, opt);
      }
      if (t == 3) r = check_theorem3(spec, gains, sim);
      r = add(std::move(r), "T" + std::to_string(t));
      if (margins) run.write("bounds_T" + std::to_string(t) + ".csv", margin_csv(r));
    }
    out["mode"] = "single";
  }
  out["violations"] = violations;
  out["reports"] = reports;
  run.write("bounds.json", out.dump(2) + "\n");
  run.log() << reports.size() << " bound checks, " << violations << " violations\n";
}

void cmd_montecarlo(Run& run) {
  const auto& cfg = run.config();
  json_reject_unknown(cfg, "", {"model", "weights", "grid", "trials", "seeds", "seed"});
  const auto weights = weights_from_json(require(cfg, "weights"), "weights");
  const auto grid = grid_of(cfg, false);
  const int trials = int_or(cfg, "trials", 100);
  const int seeds = int_or(cfg, "seeds", 1);
  const auto seed = run.seed();
  const auto model = load_model(model_path_of(cfg));
  const auto summary = monte_carlo(model, build_grid(grid), weights, trials, seed, seeds, run.policy());
  Json j = to_json(summary);
  j["kind"] = std::string(to_string(model.kind));
  j["weights"] = to_json(weights);
  run.write("montecarlo.json", j.dump(2) + "\n");
  run.log() << "NN beats random bandwidth in " << summary.win_rate * 100.0 << "% of " << trials << " trials\n";
}

Json load_config(const std::string& path) {
  const std::string text = read_file(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config", path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config", path + ": expected a JSON object");
  return j;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Observer gain tuning for active disturbance rejection control", "esotune"};
  app.set_version_flag("--version", std::string(code_version()));
  app.require_subcommand(1);

  Options opt;
  using Handler = std::function<void(Run&)>;
  const std::vector<std::tuple<std::string, std::string, Handler>> commands{
      {"simulate", "Run one closed-loop simulation", cmd_simulate},
      {"sweep", "Criteria over a range of observer bandwidths", cmd_sweep},
      {"gen-dataset", "Generate estimator training data", cmd_gen_dataset},
      {"train", "Train the performance estimator", cmd_train},
      {"tune", "Select observer gains on a grid", cmd_tune},
      {"landscape", "True and predicted cost over a lambda2 = lambda3 slice", cmd_landscape},
      {"check-bounds", "Check the estimation and state error bounds", cmd_check_bounds},
      {"montecarlo", "Tuned vs random-bandwidth comparison on random plants", cmd_montecarlo},
  };
  std::map<CLI::App*, std::pair<std::string, Handler>> by_sub;
  for (const auto& [name, help, fn] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config, "JSON configuration file")->required();
    sub->add_option("--seed", opt.seed, "Run seed (overrides the config)");
    sub->add_option("--jobs", opt.jobs, "Worker threads (0: all cores, 1: serial)")->check(CLI::NonNegativeNumber);
    sub->add_option("--out-dir", opt.out_dir, "Output directory")->capture_default_str();
    by_sub[sub] = {name, fn};
  }

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  CLI::App* chosen = app.get_subcommands().front();
  const auto& [name, handler] = by_sub.at(chosen);
  std::optional<Run> run;
  auto fail = [&](int code, const std::string& what) {
    err << "esotune " << name << ": " << what << "\n";
    if (run) run->fail(what);
    return code;
  };
  try {
    run.emplace(name, load_config(opt.config), opt, out);
    fs::create_directories(opt.out_dir);
    handler(*run);
    run->finish();
    return kExitOk;
  } catch (const IoError& e) {
    return fail(kExitIo, e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(kExitIo, e.what());
  } catch (const DivergenceError& e) {
    return fail(kExitNumerical, e.what());
  } catch (const NumericalError& e) {
    return fail(kExitNumerical, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(kExitConfig, e.what());
  } catch (const Json::exception& e) {
    return fail(kExitConfig, e.what());
  } catch (const std::exception& e) {
    return fail(kExitFailure, e.what());
  }
}

}  // namespace esotune
