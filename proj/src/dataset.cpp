#include "esotune/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

#include "esotune/errors.hpp"
#include "esotune/io.hpp"
#include "esotune/rng.hpp"
#include "esotune/version.hpp"

namespace esotune {

namespace {

constexpr double kLogFloor = 1e-9;
constexpr int kMaxResamples = 64;

// 53 random bits mapped to [0, 1); unlike std::uniform_real_distribution the
// result does not depend on the standard library implementation.
double unit(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double draw(Rng& rng, Range r) { return r.lo + (r.hi - r.lo) * unit(rng); }

double clip01(double v) { return std::clamp(v, 0.0, 1.0); }

bool inside(double v, Range r) { return v >= r.lo && v <= r.hi; }

std::uint64_t split_tag(Split s) { return static_cast<std::uint64_t>(s); }

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw ConfigError("split", "unknown split '" + std::string(name) + "'");
}

const SamplingRanges& sampling_ranges(PlantKind kind) {
  static const SamplingRanges ns{{{"a1", {0.0, 2.0}},
                                  {"a2", {0.0, 1.0}},
                                  {"a3", {0.0, 2.0}},
                                  {"a4", {0.5, 1.5}},
                                  {"a5", {0.0, 0.3}},
                                  {"a6", {0.0, 2.0}}},
                                 {0.0, 0.01},
                                 {-1.0, 1.0}};
  static const SamplingRanges m1d{{{"b1", {-20.0, -4.0}},
                                   {"b2", {-30.0, -10.0}},
                                   {"b3", {0.0, 0.5}},
                                   {"b4", {0.0, 0.5}},
                                   {"b5", {0.0, 2.0}},
                                   {"b6", {0.0, 0.5}},
                                   {"b7", {0.0, 2.0}}},
                                  {0.0, 0.02},
                                  {-std::numbers::pi, std::numbers::pi}};
  return kind == PlantKind::ns ? ns : m1d;
}

namespace {

std::vector<double> param_values(const PlantSpec& p) {
  if (p.kind == PlantKind::ns) {
    const auto& n = p.ns_params();
    return {n.a1, n.a2, n.a3, n.a4, n.a5, n.a6};
  }
  const auto& m = p.m1d_params();
  return {m.b1, m.b2, m.b3, m.b4, m.b5, m.b6, m.b7};
}

PlantSpec plant_from_values(PlantKind kind, const std::vector<double>& v, double sigma_n) {
  if (kind == PlantKind::ns) return PlantSpec::ns({v[0], v[1], v[2], v[3], v[4], v[5]}, sigma_n);
  return PlantSpec::m1d({v[0], v[1], v[2], v[3], v[4], v[5], v[6]}, sigma_n);
}

}  // namespace

void SampleSpec::validate() const {
  plant.validate();
  const auto& r = sampling_ranges(plant.kind);
  const auto v = param_values(plant);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!inside(v[i], r.params[i].second))
      throw std::invalid_argument("sample parameter " + r.params[i].first + " outside its sampling range");
  }
  if (!inside(plant.noise.sigma_n, r.sigma_n)) throw std::invalid_argument("sigma_n outside its sampling range");
  for (double s : {x_test0[0], x_test0[1], x0[0], x0[1]}) {
    if (!inside(s, r.state)) throw std::invalid_argument("initial state outside its sampling range");
  }
  for (double l : lambda.values()) {
    if (!inside(l, kLambdaRange)) throw std::invalid_argument("observer eigenvalue outside [-80, -1]");
  }
}

SampleSpec sample_spec(PlantKind kind, std::uint64_t seed, Split split) {
  const auto& r = sampling_ranges(kind);
  Rng rng(seed);
  std::vector<double> v;
  for (const auto& [name, range] : r.params) v.push_back(draw(rng, range));
  const double sigma = draw(rng, r.sigma_n);
  SampleSpec s;
  s.plant = plant_from_values(kind, v, sigma);
  s.x_test0 = {draw(rng, r.state), draw(rng, r.state)};
  s.x0 = {draw(rng, r.state), draw(rng, r.state)};
  s.lambda = {draw(rng, kLambdaRange), draw(rng, kLambdaRange), draw(rng, kLambdaRange)};
  s.split = split;
  s.sample_seed = seed;
  return s;
}

std::uint64_t basic_noise_seed(const SampleSpec& s) { return derive_seed(s.sample_seed, {1}); }
std::uint64_t target_noise_seed(const SampleSpec& s) { return derive_seed(s.sample_seed, {2}); }

SimConfig basic_config(const SampleSpec& s) {
  SimConfig cfg;
  cfg.x0 = s.x_test0;
  cfg.observer_init = ObserverInit::from_output;
  cfg.seed = basic_noise_seed(s);
  return cfg;
}

SimConfig target_config(const SampleSpec& s) {
  SimConfig cfg;
  cfg.x0 = s.x0;
  cfg.observer_init = ObserverInit::from_output;
  cfg.seed = target_noise_seed(s);
  return cfg;
}

std::vector<double> run_basic_experiment(const SampleSpec& s) {
  const auto gains = gains_from_eigenvalues({kBasicEigenvalue, kBasicEigenvalue, kBasicEigenvalue});
  const auto cfg = basic_config(s);
  auto out = decimate_estimates(run_closed_loop(s.plant, gains, cfg), cfg.record_hz);
  if (out.size() != kTransientRows * kTransientCols)
    throw std::logic_error("basic experiment produced an unexpected transient length");
  return out;
}

CriteriaVector run_target_experiment(const SampleSpec& s) {
  return evaluate(s.plant, gains_from_eigenvalues(s.lambda), target_config(s)).criteria;
}

std::array<double, 4> normalize_criteria(const CriteriaVector& raw, PlantKind kind) {
  for (double v : raw.as_array()) {
    if (!(v >= 0.0)) throw std::invalid_argument("criteria must be >= 0");
  }
  if (kind == PlantKind::ns) {
    const double iacd = (std::log(std::max(raw.iacd - 4.0, kLogFloor)) - 3.0) / 8.0;
    return {clip01(raw.iae / 3.7), clip01(raw.iac / 80.0), clip01(iacd), clip01(raw.iadee / 50.0)};
  }
  return {clip01(raw.iae / 8.0), clip01(raw.iac / 10.0), clip01(raw.iacd / 4000.0), clip01(raw.iadee / 100.0)};
}

CriteriaVector denormalize_criteria(const std::array<double, 4>& n, PlantKind kind) {
  if (kind == PlantKind::ns) return {n[0] * 3.7, n[1] * 80.0, std::exp(8.0 * n[2] + 3.0) + 4.0, n[3] * 50.0};
  return {n[0] * 8.0, n[1] * 10.0, n[2] * 4000.0, n[3] * 100.0};
}

std::uint64_t record_seed(std::uint64_t master_seed, Split split, std::uint64_t index, int attempt) {
  return derive_seed(master_seed, {split_tag(split), index, static_cast<std::uint64_t>(attempt)});
}

DatasetRecord make_record(PlantKind kind, std::uint64_t master_seed, Split split, std::uint64_t index) {
  for (int attempt = 0; attempt < kMaxResamples; ++attempt) {
    const auto sample = sample_spec(kind, record_seed(master_seed, split, index, attempt), split);
    std::vector<double> transient;
    try {
      transient = run_basic_experiment(sample);
    } catch (const DivergenceError&) {
      continue;
    }
    DatasetRecord r;
    r.index = index;
    r.sample = sample;
    r.basic_transient = std::move(transient);
    const auto ev = evaluate(sample.plant, gains_from_eigenvalues(sample.lambda), target_config(sample));
    r.criteria_raw = ev.criteria;
    r.target_diverged = ev.diverged;
    r.criteria_norm = normalize_criteria(r.criteria_raw, kind);
    r.resamples = attempt;
    return r;
  }
  throw NumericalError("basic experiment diverged for " + std::to_string(kMaxResamples) +
                       " consecutive draws (record " + std::to_string(index) + ")");
}

std::vector<DatasetRecord> generate_split(PlantKind kind, Split split, std::size_t count,
                                          std::uint64_t master_seed, const ExecPolicy& policy) {
  std::vector<DatasetRecord> out(count);
  for_each_index(count, policy, [&](std::size_t i) { out[i] = make_record(kind, master_seed, split, i); });
  return out;
}

Json record_to_json(const DatasetRecord& r) {
  const auto& s = r.sample;
  Json j;
  j["index"] = r.index;
  j["split"] = std::string(to_string(s.split));
  j["sample_seed"] = s.sample_seed;
  j["plant"] = to_json(s.plant);
  j["x_test0"] = {s.x_test0[0], s.x_test0[1]};
  j["x0"] = {s.x0[0], s.x0[1]};
  j["lambda"] = to_json(s.lambda);
  j["criteria_raw"] = to_json(r.criteria_raw);
  j["criteria_norm"] = r.criteria_norm;
  j["target_diverged"] = r.target_diverged;
  j["resamples"] = r.resamples;
  j["transient"] = encode_f64_le(r.basic_transient);
  return j;
}

DatasetRecord record_from_json(const Json& j) {
  json_require_object(j, "record");
  DatasetRecord r;
  r.index = j.at("index").get<std::uint64_t>();
  r.sample.split = split_from_string(j.at("split").get<std::string>());
  r.sample.sample_seed = j.at("sample_seed").get<std::uint64_t>();
  r.sample.plant = plant_spec_from_json(j.at("plant"), "record.plant");
  r.sample.x_test0 = json_state2(j.at("x_test0"), "record.x_test0");
  r.sample.x0 = json_state2(j.at("x0"), "record.x0");
  r.sample.lambda = eigen_triple_from_json(j.at("lambda"), "record.lambda");
  r.criteria_raw = criteria_from_json(j.at("criteria_raw"), "record.criteria_raw");
  r.criteria_norm = j.at("criteria_norm").get<std::array<double, 4>>();
  r.target_diverged = j.value("target_diverged", false);
  r.resamples = j.value("resamples", 0);
  r.basic_transient = decode_f64_le(j.at("transient").get<std::string>());
  if (r.basic_transient.size() != kTransientRows * kTransientCols)
    throw std::invalid_argument("record transient must hold 1000 x 3 values");
  return r;
}

std::string records_to_jsonl(const std::vector<DatasetRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r).dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<DatasetRecord> read_records(const std::filesystem::path& path) {
  const auto text = read_file(path);
  std::vector<DatasetRecord> out;
  std::size_t pos = 0, line = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    ++line;
    const std::string_view row(text.data() + pos, end - pos);
    pos = end + 1;
    if (row.empty()) continue;
    try {
      out.push_back(record_from_json(Json::parse(row)));
    } catch (const std::exception& e) {
      throw IoError(path.string(), "line " + std::to_string(line) + ": " + e.what());
    }
  }
  return out;
}

std::filesystem::path split_path(const std::filesystem::path& dir, PlantKind kind, Split split) {
  return dir / (std::string(to_string(kind)) + "_" + std::string(to_string(split)) + ".jsonl");
}

std::array<CriterionSummary, 4> summarize(const std::vector<DatasetRecord>& records, int bins) {
  std::array<CriterionSummary, 4> out;
  if (records.empty()) return out;
  for (std::size_t c = 0; c < 4; ++c) {
    std::vector<double> v;
    v.reserve(records.size());
    for (const auto& r : records) v.push_back(r.criteria_norm[c]);
    auto& s = out[c];
    s.histogram.assign(static_cast<std::size_t>(bins), 0);
    double sum = 0.0;
    for (double x : v) {
      sum += x;
      const auto b = std::min(static_cast<std::size_t>(x * bins), static_cast<std::size_t>(bins - 1));
      ++s.histogram[b];
    }
    s.mean = sum / static_cast<double>(v.size());
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    s.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    s.min = v.front();
    s.max = v.back();
  }
  return out;
}

DatasetFiles generate_dataset(PlantKind kind, const SplitCounts& counts, std::uint64_t master_seed,
                              const std::filesystem::path& out_dir, const ExecPolicy& policy) {
  if (counts.train + counts.val + counts.test == 0) throw ConfigError("counts", "at least one record is required");
  DatasetFiles files;
  Json summary;
  summary["kind"] = std::string(to_string(kind));
  std::set<std::uint64_t> seeds;
  const std::array<std::pair<Split, std::size_t>, 3> plan{
      {{Split::train, counts.train}, {Split::val, counts.val}, {Split::test, counts.test}}};
  const char* names[4] = {"iae", "iac", "iacd", "iadee"};
  for (const auto& [split, count] : plan) {
    if (count == 0) continue;
    const auto records = generate_split(kind, split, count, master_seed, policy);
    for (const auto& r : records) {
      if (!seeds.insert(r.sample.sample_seed).second)
        throw std::logic_error("record seed collision across splits");
    }
    const auto path = split_path(out_dir, kind, split);
    write_file(path, records_to_jsonl(records));
    files.splits.push_back(path);

    Json js;
    js["count"] = records.size();
    std::size_t diverged = 0, resampled = 0;
    for (const auto& r : records) {
      diverged += r.target_diverged ? 1 : 0;
      resampled += static_cast<std::size_t>(r.resamples);
    }
    js["target_diverged"] = diverged;
    js["basic_resamples"] = resampled;
    const auto stats = summarize(records);
    for (std::size_t c = 0; c < 4; ++c) {
      js["criteria_norm"][names[c]] = {{"mean", stats[c].mean},
                                       {"median", stats[c].median},
                                       {"min", stats[c].min},
                                       {"max", stats[c].max},
                                       {"histogram", stats[c].histogram}};
    }
    summary["splits"][std::string(to_string(split))] = js;
  }

  Json meta;
  meta["kind"] = std::string(to_string(kind));
  meta["master_seed"] = master_seed;
  meta["counts"] = {{"train", counts.train}, {"val", counts.val}, {"test", counts.test}};
  Json ranges;
  const auto& r = sampling_ranges(kind);
  for (const auto& [name, range] : r.params) ranges[name] = {range.lo, range.hi};
  ranges["sigma_n"] = {r.sigma_n.lo, r.sigma_n.hi};
  ranges["state"] = {r.state.lo, r.state.hi};
  ranges["lambda"] = {kLambdaRange.lo, kLambdaRange.hi};
  meta["ranges"] = ranges;
  meta["basic_eigenvalue"] = kBasicEigenvalue;
  meta["observer_init"] = "from_output";
  meta["transient"] = {{"rows", kTransientRows}, {"cols", kTransientCols}, {"rate_hz", 100},
                       {"encoding", "base64 float64 little-endian row-major"}};
  meta["criteria_state"] = "true x1";
  meta["code_version"] = std::string(code_version());

  files.summary = out_dir / (std::string(to_string(kind)) + "_summary.json");
  write_file(files.summary, summary.dump(2) + "\n");
  files.meta = out_dir / (std::string(to_string(kind)) + "_meta.json");
  write_file(files.meta, meta.dump(2) + "\n");
  return files;
}

}  // namespace esotune
