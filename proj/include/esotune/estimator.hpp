#pragma once

// Neural performance estimator: maps (basic-run transient, observer
// eigenvalues, noise level, initial states) to four normalized criteria.
//
//   transient 3x1000 -> [conv3 -> ReLU -> maxpool2] x B -> flatten -> FC -> ReLU
//   each lambda_i     -> FC -> ReLU -> FC -> ReLU   (shared weights, summed)
//   (sigma, xt0, x0)  -> FC -> ReLU -> FC -> ReLU
//   concat            -> FC -> ReLU -> FC -> ReLU -> FC(4) -> sigmoid
//
// Two implementations share the parameter layout: a batched kernel built on
// im2col + GEMM (parallel over fixed-size micro-batches) and a direct-loop
// reference used only by tests.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "esotune/control.hpp"
#include "esotune/dataset.hpp"
#include "esotune/parallel.hpp"
#include "esotune/plant.hpp"
#include "esotune/sim.hpp"

namespace esotune {

struct EstimatorConfig {
  int conv_blocks = 8;
  int base_filters = 8;  // doubled after every block
  int conv_kernel = 3;
  int pool = 2;
  int transient_fc = 512;
  std::array<int, 2> lambda_fc_sizes{64, 64};
  std::array<int, 2> aux_fc_sizes{64, 64};
  std::array<int, 3> head_sizes{512, 256, 4};
  int transient_length = static_cast<int>(kTransientRows);

  /// Reduced filter count used by tests and CI-sized training.
  static EstimatorConfig desk();

  int conv_output_length() const;
  int conv_output_channels() const;
  int flattened_features() const;
  void validate() const;
};

/// 64-byte aligned storage so vectorized kernels see the same alignment on
/// every run (and hence the same summation order).
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using ParamVector = std::vector<double, AlignedAllocator<double>>;

/// Flat float64 parameter vector with named, shaped slices. Every slice starts
/// on a 64-byte boundary.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    std::vector<int> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
  };

  std::size_t add(std::string name, std::vector<int> shape);
  const Entry& entry(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }

  std::span<double> slice(const std::string& name);
  std::span<const double> slice(const std::string& name) const;

  ParamVector& values() { return values_; }
  const ParamVector& values() const { return values_; }
  std::size_t size() const { return values_.size(); }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  ParamVector values_;
};

struct EstimatorModel {
  EstimatorConfig config;
  PlantKind kind = PlantKind::ns;
  ParameterStore params;
  std::map<std::string, std::string> metadata;

  /// Fresh model: He-uniform ReLU layers with bias 0.01, Xavier-uniform output
  /// layer with zero bias.
  static EstimatorModel create(const EstimatorConfig& config, PlantKind kind, std::uint64_t seed);
  void validate() const;
};

inline constexpr std::size_t kAuxFeatures = 5;  // sigma_n, x_test0 (2), x0 (2)

/// Network input with every feature already mapped into [0, 1].
struct EstimatorInput {
  std::vector<double> transient;  // time-major: transient_length rows of 3 channels
  std::array<double, 3> lambda{};
  std::array<double, kAuxFeatures> aux{};
};

/// Linear map of raw quantities onto [0, 1] using the sampling box of `kind`
/// (eigenvalues over [-80, -1]); transient channels use fixed per-kind
/// scales and are clipped.
EstimatorInput make_input(PlantKind kind, std::span<const double> transient_rows, const EigenTriple& lambda,
                          double sigma_n, const State2& x_test0, const State2& x0);
EstimatorInput make_input(const DatasetRecord& record);

struct Example {
  EstimatorInput input;
  std::array<double, 4> target{};
};

std::vector<Example> make_examples(const std::vector<DatasetRecord>& records);

using Output4 = std::array<double, 4>;

/// Output components lie in [1e-15, 1 - 1e-15].
Output4 forward(const EstimatorModel& model, const EstimatorInput& input);
std::vector<Output4> forward_batch(const EstimatorModel& model, std::span<const Example> examples,
                                   const ExecPolicy& policy = {});

/// Mean squared error over the four components.
double loss(const Output4& pred, const Output4& target);

inline constexpr int kMicroBatch = 32;

/// Mean loss over `batch` and its gradient (same layout as the parameters).
/// Micro-batches of kMicroBatch examples are processed independently and
/// their gradients summed in index order, so the result does not depend on
/// the policy.
double loss_and_gradient(const EstimatorModel& model, std::span<const Example* const> batch,
                         ParamVector& grad, const ExecPolicy& policy = {});

/// Direct-loop implementation of the same network.
namespace reference {
Output4 forward(const EstimatorModel& model, const EstimatorInput& input);
double loss_and_gradient(const EstimatorModel& model, std::span<const Example* const> batch,
                         ParamVector& grad);
}  // namespace reference

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 128;
  int epochs = 30;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  EstimatorModel model;  // best-validation snapshot
  std::vector<EpochRecord> history;
  double initial_val_loss = 0.0;
  double best_val_loss = 0.0;
  int best_epoch = 0;  // 0: the initial weights were never improved on
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minibatch Adam on MSE. Throws NumericalError on a non-finite loss.
TrainResult train(const EstimatorModel& init, std::span<const Example> train_set, std::span<const Example> val_set,
                  const TrainConfig& cfg, const ExecPolicy& policy = {}, const EpochCallback& on_epoch = {});

/// Mean loss over a set.
double evaluate_loss(const EstimatorModel& model, std::span<const Example> set, const ExecPolicy& policy = {});

/// One Adam update; `step` counts from 1.
struct AdamState {
  ParamVector m;
  ParamVector v;
  long long step = 0;
};
void adam_update(ParamVector& params, const ParamVector& grad, AdamState& state,
                 const TrainConfig& cfg);

CriteriaVector predict_criteria(const EstimatorModel& model, PlantKind kind, const EstimatorInput& input);

/// Mean absolute percentage error (in percent) of the denormalized
/// predictions per raw criterion. Records whose true value is zero or
/// saturated are left out of that criterion's mean.
std::array<double, 4> criteria_mape(const EstimatorModel& model, const std::vector<DatasetRecord>& records,
                                    const ExecPolicy& policy = {});

/// Inputs that stay fixed while the tuner scans eigenvalues.
struct TuneContext {
  std::vector<double> transient;  // raw basic-run transient, 1000 x 3 row-major
  double sigma_n = 0.0;
  State2 x_test0{};
  State2 x0{};
};

/// Normalized outputs for every triple. The transient and aux embeddings are
/// computed once and only the eigenvalue stream is re-evaluated.
std::vector<Output4> predict_grid(const EstimatorModel& model, const TuneContext& ctx,
                                  std::span<const EigenTriple> grid, const ExecPolicy& policy = {});

struct GradientCheckResult {
  double max_rel_error = 0.0;
  double max_abs_analytic = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

/// Central differences (step h) on `count` randomly chosen parameters.
/// Relative error is |a - n| / max(|a| + |n|, floor). Draws whose one-sided
/// differences disagree (a ReLU / max-pool kink inside [-h, h]) are replaced
/// by fresh draws and counted in skipped_kinks.
GradientCheckResult gradient_check(const EstimatorModel& model, const Example& example, std::size_t count,
                                   std::uint64_t seed, double h = 1e-5, double floor = 1e-6);

void save_model(const std::filesystem::path& path, const EstimatorModel& model);
EstimatorModel load_model(const std::filesystem::path& path);

std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace esotune
