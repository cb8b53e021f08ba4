#pragma once

// Two-experiment data generation: a fixed-gain "basic" run whose estimate
// transient fingerprints the plant, and a "target" run with random observer
// eigenvalues whose criteria are the regression target.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "esotune/control.hpp"
#include "esotune/json_io.hpp"
#include "esotune/parallel.hpp"
#include "esotune/plant.hpp"
#include "esotune/sim.hpp"

namespace esotune {

enum class Split { train, val, test };

std::string_view to_string(Split split);
Split split_from_string(std::string_view name);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Sampling box of one plant kind. `params` follows the declaration order of
/// NsParams / M1dParams (g_hat excluded).
struct SamplingRanges {
  std::vector<std::pair<std::string, Range>> params;
  Range sigma_n;
  Range state;  // both components of x_test0 and x0
};

const SamplingRanges& sampling_ranges(PlantKind kind);
inline constexpr Range kLambdaRange{-80.0, -1.0};

inline constexpr double kBasicEigenvalue = -25.0;
inline constexpr std::size_t kTransientRows = 1000;
inline constexpr std::size_t kTransientCols = 3;

struct SampleSpec {
  PlantSpec plant;
  State2 x_test0{};
  State2 x0{};
  EigenTriple lambda;
  Split split = Split::train;
  std::uint64_t sample_seed = 0;

  /// Throws std::invalid_argument when any value lies outside the sampling box.
  void validate() const;
};

/// Uniform draws over the sampling box, deterministic in `seed`.
SampleSpec sample_spec(PlantKind kind, std::uint64_t seed, Split split = Split::train);

/// Noise seeds of the two runs; independent streams derived from sample_seed.
std::uint64_t basic_noise_seed(const SampleSpec& s);
std::uint64_t target_noise_seed(const SampleSpec& s);

/// zhat(0) = (y(0), 0, 0), 10 s horizon, 1 kHz.
SimConfig basic_config(const SampleSpec& s);
SimConfig target_config(const SampleSpec& s);

/// Gains from (-25, -25, -25) starting at x_test0; z_hat at 100 Hz, 1000 x 3
/// row-major. Divergence propagates as DivergenceError.
std::vector<double> run_basic_experiment(const SampleSpec& s);

/// Criteria at sample.lambda starting at x0; divergence gives saturated criteria.
CriteriaVector run_target_experiment(const SampleSpec& s);

/// Fixed per-kind scaling clipped to [0, 1]. NS IACD goes through
/// (log(IACD - 4) - 3) / 8 with the log argument floored at 1e-9.
std::array<double, 4> normalize_criteria(const CriteriaVector& raw, PlantKind kind);
CriteriaVector denormalize_criteria(const std::array<double, 4>& norm, PlantKind kind);

struct DatasetRecord {
  std::uint64_t index = 0;  // position within its split
  SampleSpec sample;
  std::vector<double> basic_transient;  // kTransientRows x 3, row-major
  CriteriaVector criteria_raw;
  std::array<double, 4> criteria_norm{};
  bool target_diverged = false;
  int resamples = 0;  // basic runs that diverged and were redrawn
};

/// Seed of record `index` in `split` at draw attempt `attempt`.
std::uint64_t record_seed(std::uint64_t master_seed, Split split, std::uint64_t index, int attempt);

DatasetRecord make_record(PlantKind kind, std::uint64_t master_seed, Split split, std::uint64_t index);

/// Records 0..count-1 of one split, in index order regardless of the policy.
std::vector<DatasetRecord> generate_split(PlantKind kind, Split split, std::size_t count,
                                          std::uint64_t master_seed, const ExecPolicy& policy = {});

Json record_to_json(const DatasetRecord& r);
DatasetRecord record_from_json(const Json& j);

std::string records_to_jsonl(const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> read_records(const std::filesystem::path& path);

struct SplitCounts {
  std::size_t train = 4000;
  std::size_t val = 1000;
  std::size_t test = 600;
};

std::filesystem::path split_path(const std::filesystem::path& dir, PlantKind kind, Split split);

struct DatasetFiles {
  std::vector<std::filesystem::path> splits;
  std::filesystem::path meta;
  std::filesystem::path summary;
};

/// Writes <kind>_<split>.jsonl for every split with a nonzero count, plus
/// <kind>_meta.json and <kind>_summary.json (per-criterion histograms).
DatasetFiles generate_dataset(PlantKind kind, const SplitCounts& counts, std::uint64_t master_seed,
                              const std::filesystem::path& out_dir, const ExecPolicy& policy = {});

/// Histogram + moments of one normalized criterion column.
struct CriterionSummary {
  double mean = 0.0;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::vector<std::size_t> histogram;  // equal-width bins over [0, 1]
};

std::array<CriterionSummary, 4> summarize(const std::vector<DatasetRecord>& records, int bins = 20);

}  // namespace esotune
