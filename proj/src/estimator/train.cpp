#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "esotune/errors.hpp"
#include "esotune/estimator.hpp"
#include "esotune/rng.hpp"

namespace esotune {

namespace {

std::size_t below(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(static_cast<double>(rng() >> 11) * 0x1.0p-53 * static_cast<double>(n));
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(rng, i)]);
}

constexpr double kKinkTolerance = 1e-5;

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("train.learning_rate", "must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size", "must be >= 1");
  if (epochs < 1) throw ConfigError("train.epochs", "must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("train.adam_beta1", "must be in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("train.adam_beta2", "must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps", "must be > 0");
}

void adam_update(ParamVector& params, const ParamVector& grad, AdamState& st, const TrainConfig& cfg) {
  if (st.m.size() != params.size()) {
    st.m.assign(params.size(), 0.0);
    st.v.assign(params.size(), 0.0);
    st.step = 0;
  }
  ++st.step;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = b1 * st.m[i] + (1.0 - b1) * grad[i];
    st.v[i] = b2 * st.v[i] + (1.0 - b2) * grad[i] * grad[i];
    const double mh = st.m[i] / c1;
    const double vh = st.v[i] / c2;
    params[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.adam_eps);
  }
}

double evaluate_loss(const EstimatorModel& model, std::span<const Example> set, const ExecPolicy& policy) {
  if (set.empty()) throw std::invalid_argument("evaluate_loss: empty set");
  const auto out = forward_batch(model, set, policy);
  double s = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) s += loss(out[i], set[i].target);
  return s / static_cast<double>(set.size());
}

TrainResult train(const EstimatorModel& init, std::span<const Example> train_set, std::span<const Example> val_set,
                  const TrainConfig& cfg, const ExecPolicy& policy, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("train", "training split is empty");
  if (val_set.empty()) throw ConfigError("val", "validation split is empty");
  init.validate();

  TrainResult res;
  EstimatorModel model = init;
  res.initial_val_loss = evaluate_loss(model, val_set, policy);
  res.best_val_loss = res.initial_val_loss;
  res.model = model;

  Rng rng(derive_seed(cfg.seed, {0x7a11}));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  AdamState adam;
  ParamVector grad;
  std::vector<const Example*> batch;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.shuffle) shuffle(order, rng);
    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train_set[order[i]]);
      const double l = loss_and_gradient(model, batch, grad, policy);
      if (!std::isfinite(l)) {
        std::ostringstream msg;
        msg << "non-finite training loss at epoch " << epoch << ", batch " << batch_index
            << " (learning rate " << cfg.learning_rate << ", Adam step " << adam.step << ")";
        throw NumericalError(msg.str());
      }
      adam_update(model.params.values(), grad, adam, cfg);
      epoch_loss += l * static_cast<double>(end - start);
      ++batch_index;
    }
    EpochRecord rec{epoch, epoch_loss / static_cast<double>(order.size()), evaluate_loss(model, val_set, policy)};
    if (!std::isfinite(rec.val_loss))
      throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch));
    res.history.push_back(rec);
    if (rec.val_loss < res.best_val_loss) {
      res.best_val_loss = rec.val_loss;
      res.best_epoch = epoch;
      res.model = model;
    }
    if (on_epoch) on_epoch(rec);
  }

  auto& meta = res.model.metadata;
  meta["optimizer"] = "adam";
  meta["learning_rate"] = std::to_string(cfg.learning_rate);
  meta["batch_size"] = std::to_string(cfg.batch_size);
  meta["epochs"] = std::to_string(cfg.epochs);
  meta["shuffle"] = cfg.shuffle ? "per-epoch, seeded" : "none";
  meta["train_seed"] = std::to_string(cfg.seed);
  meta["best_epoch"] = std::to_string(res.best_epoch);
  return res;
}

std::array<double, 4> criteria_mape(const EstimatorModel& model, const std::vector<DatasetRecord>& records,
                                    const ExecPolicy& policy) {
  if (records.empty()) throw std::invalid_argument("criteria_mape: no records");
  const auto examples = make_examples(records);
  const auto out = forward_batch(model, examples, policy);
  std::array<double, 4> sum{}, count{};
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto pred = denormalize_criteria(out[i], model.kind).as_array();
    const auto truth = records[i].criteria_raw.as_array();
    for (int c = 0; c < 4; ++c) {
      if (!(truth[c] > 0.0) || truth[c] >= kCriterionCap) continue;
      sum[c] += std::abs(pred[c] - truth[c]) / truth[c];
      count[c] += 1.0;
    }
  }
  std::array<double, 4> mape{};
  for (int c = 0; c < 4; ++c) mape[c] = count[c] > 0.0 ? 100.0 * sum[c] / count[c] : 0.0;
  return mape;
}

GradientCheckResult gradient_check(const EstimatorModel& model, const Example& example, std::size_t count,
                                   std::uint64_t seed, double h, double floor) {
  const Example* batch[1] = {&example};
  ParamVector grad;
  loss_and_gradient(model, batch, grad, ExecPolicy::serial());

  const auto& entries = model.params.entries();
  Rng rng(seed);
  EstimatorModel probe = model;
  auto& v = probe.params.values();
  const double l0 = loss(forward(probe, example.input), example.target);
  GradientCheckResult res;
  const std::size_t max_draws = 20 * count + entries.size();
  for (std::size_t k = 0; res.checked < count && k < max_draws; ++k) {
    // Round-robin over layers so every parameter tensor is exercised.
    const auto& e = entries[k % entries.size()];
    const std::size_t i = e.offset + below(rng, e.size);
    const double saved = v[i];
    v[i] = saved + h;
    const double lp = loss(forward(probe, example.input), example.target);
    v[i] = saved - h;
    const double lm = loss(forward(probe, example.input), example.target);
    v[i] = saved;
    // The loss is piecewise smooth (ReLU, max-pool). When [-h, h] straddles a
    // kink the one-sided slopes disagree; such draws say nothing about the
    // analytic gradient and are replaced.
    const double fwd = (lp - l0) / h;
    const double bwd = (l0 - lm) / h;
    if (std::abs(fwd - bwd) > kKinkTolerance * (std::abs(fwd) + std::abs(bwd)) + 1e-10) {
      ++res.skipped_kinks;
      continue;
    }
    const double numeric = (lp - lm) / (2.0 * h);
    const double analytic = grad[i];
    const double rel = std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), floor);
    res.max_rel_error = std::max(res.max_rel_error, rel);
    res.max_abs_analytic = std::max(res.max_abs_analytic, std::abs(analytic));
    ++res.checked;
  }
  return res;
}

}  // namespace esotune
