#pragma once

// Exhaustive gain selection over a grid of observer eigenvalues.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "esotune/control.hpp"
#include "esotune/estimator.hpp"
#include "esotune/json_io.hpp"
#include "esotune/parallel.hpp"
#include "esotune/plant.hpp"
#include "esotune/sim.hpp"

namespace esotune {

/// Axis points -1 - 79 s, s in {0, 1/(count-1), ..., 1}.
struct GainGrid {
  int count = 21;
  bool dedupe = true;  // keep one canonical (sorted) triple per multiset

  void validate() const;
};

std::vector<double> axis_values(int count);

/// Raw: count^3 triples, s outermost. Deduped: the canonical triples in
/// lexicographic order of their sorted axis indices.
std::vector<EigenTriple> build_grid(const GainGrid& grid);

/// Bandwidths 1 + 79 s on the same quantization.
std::vector<double> bandwidth_grid(int count);

enum class Selector { nn, ideal, bandwidth, random };
std::string_view to_string(Selector s);
Selector selector_from_string(std::string_view name);

struct GridPoint {
  EigenTriple lambda;
  CriteriaVector criteria;  // raw (predicted for the NN selector)
  double cost = 0.0;
  bool diverged = false;
};

struct TuneResult {
  Selector selector = Selector::ideal;
  CriterionWeights weights;
  EigenTriple lambda_star;
  double j_star = 0.0;
  std::size_t best_index = 0;
  std::vector<GridPoint> table;
};

/// Relative tolerance under which two costs count as tied.
inline constexpr double kTieTolerance = 1e-12;

/// Index of the minimum cost; ties go to the largest eigenvalue sum (slowest
/// observer), then to the lowest index. Diverged points are skipped; throws
/// NumericalError when every point diverged.
std::size_t argmin_cost(std::span<const GridPoint> table);

/// Averaged simulations (common seeds cfg.seed .. cfg.seed + seeds - 1) at every
/// point; diverged points get saturated criteria and diverged = true.
std::vector<GridPoint> simulate_grid(const PlantSpec& spec, const SimConfig& cfg, std::span<const EigenTriple> grid,
                                     int seeds, const ExecPolicy& policy = {});

/// Re-costs an evaluated table for new weights and picks the best point.
TuneResult select_from_table(std::vector<GridPoint> table, const CriterionWeights& w, Selector selector);

TuneResult select_nn(const EstimatorModel& model, const TuneContext& ctx, std::span<const EigenTriple> grid,
                     const CriterionWeights& w, const ExecPolicy& policy = {});

TuneResult select_ideal(const PlantSpec& spec, const SimConfig& cfg, std::span<const EigenTriple> grid,
                        const CriterionWeights& w, int seeds = 3, const ExecPolicy& policy = {});

TuneResult select_bandwidth(const PlantSpec& spec, const SimConfig& cfg, std::span<const double> omegas,
                            const CriterionWeights& w, int seeds = 3, const ExecPolicy& policy = {});

struct RandomTrial {
  double omega = 0.0;
  CriteriaVector criteria;
  double cost = 0.0;
  bool diverged = false;
};

/// Bandwidths drawn uniformly from [1, 80].
std::vector<RandomTrial> random_baseline(const PlantSpec& spec, const SimConfig& cfg, const CriterionWeights& w,
                                         int trials, std::uint64_t seed, int seeds = 1,
                                         const ExecPolicy& policy = {});

struct LandscapeRow {
  double lambda1 = 0.0;
  double lambda23 = 0.0;  // lambda2 = lambda3
  double j_true = 0.0;
  double j_pred = 0.0;
};

/// count x count slice with lambda3 = lambda2; lambda1 outermost.
std::vector<LandscapeRow> performance_landscape(const PlantSpec& spec, const SimConfig& cfg,
                                                const EstimatorModel& model, const TuneContext& ctx,
                                                const CriterionWeights& w, int count, int seeds = 3,
                                                const ExecPolicy& policy = {});

std::string landscape_csv(const std::vector<LandscapeRow>& rows);

/// Spearman rank correlation (average ranks for ties).
double spearman(std::span<const double> a, std::span<const double> b);

/// Paired comparison on random plants: the NN-selected eigenvalues against a
/// uniformly drawn bandwidth, both scored by simulation with common noise seeds.
struct MonteCarloTrial {
  std::uint64_t sample_seed = 0;
  EigenTriple lambda_nn;
  double j_nn = 0.0;
  double omega_random = 0.0;
  double j_random = 0.0;
  bool nn_wins = false;
};

struct MonteCarloSummary {
  std::vector<MonteCarloTrial> trials;
  double win_rate = 0.0;
  double median_j_nn = 0.0;
  double median_j_random = 0.0;
};

/// Trial i draws its plant from sample_spec(model.kind, derive_seed(seed, {i, attempt}), test);
/// plants whose basic run diverges are redrawn.
MonteCarloSummary monte_carlo(const EstimatorModel& model, std::span<const EigenTriple> grid,
                              const CriterionWeights& w, int trials, std::uint64_t seed, int seeds = 1,
                              const ExecPolicy& policy = {});

Json to_json(const MonteCarloSummary& s);

/// Tables above `max_table_rows` are elided from the report.
Json tune_report(const TuneResult& r, const GainGrid& grid, std::size_t max_table_rows = 10000);

}  // namespace esotune
