#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "esotune/errors.hpp"
#include "esotune/estimator.hpp"
#include "esotune/io.hpp"
#include "esotune/json_io.hpp"
#include "esotune/rng.hpp"
#include "layout.hpp"

namespace esotune {

namespace {

constexpr std::size_t kAlignDoubles = 8;
constexpr const char* kModelMagic = "ESOTUNE-MODEL 1";
constexpr double kReluBias = 0.01;

double unit(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Fixed per-kind boxes for the transient channels (x1_hat, x2_hat, d_hat).
// They cover the bulk of generated transients; outliers are clipped.
struct ChannelBox {
  double lo, hi;
};

std::array<ChannelBox, 3> transient_boxes(PlantKind kind) {
  if (kind == PlantKind::ns) return {{{-1.0, 1.0}, {-2.0, 2.0}, {-4.0, 4.0}}};
  return {{{-std::numbers::pi, std::numbers::pi}, {-5.0, 5.0}, {-50.0, 50.0}}};
}

double to_unit(double v, double lo, double hi) { return std::clamp((v - lo) / (hi - lo), 0.0, 1.0); }

}  // namespace

EstimatorConfig EstimatorConfig::desk() {
  EstimatorConfig c;
  c.base_filters = 4;
  return c;
}

int EstimatorConfig::conv_output_length() const {
  int n = transient_length;
  for (int i = 0; i < conv_blocks; ++i) n /= pool;
  return n;
}

int EstimatorConfig::conv_output_channels() const { return base_filters << (conv_blocks - 1); }

int EstimatorConfig::flattened_features() const { return conv_output_length() * conv_output_channels(); }

void EstimatorConfig::validate() const {
  if (conv_blocks < 1 || conv_blocks > 16) throw ConfigError("estimator.conv_blocks", "must be in [1, 16]");
  if (base_filters < 1) throw ConfigError("estimator.base_filters", "must be >= 1");
  if (conv_kernel < 1 || conv_kernel % 2 == 0) throw ConfigError("estimator.conv_kernel", "must be odd and >= 1");
  if (pool < 1) throw ConfigError("estimator.pool", "must be >= 1");
  if (transient_length < 1) throw ConfigError("estimator.transient_length", "must be >= 1");
  if (conv_output_length() < 1)
    throw ConfigError("estimator.conv_blocks", "pooling reduces the transient to zero length");
  if (transient_fc < 1) throw ConfigError("estimator.transient_fc", "must be >= 1");
  for (int v : lambda_fc_sizes)
    if (v < 1) throw ConfigError("estimator.lambda_fc_sizes", "widths must be >= 1");
  for (int v : aux_fc_sizes)
    if (v < 1) throw ConfigError("estimator.aux_fc_sizes", "widths must be >= 1");
  if (head_sizes[0] < 1 || head_sizes[1] < 1) throw ConfigError("estimator.head_sizes", "widths must be >= 1");
  if (head_sizes[2] != 4) throw ConfigError("estimator.head_sizes", "last layer must have 4 units");
}

std::size_t ParameterStore::add(std::string name, std::vector<int> shape) {
  if (index_.count(name)) throw std::logic_error("duplicate parameter " + name);
  std::size_t size = 1;
  for (int d : shape) size *= static_cast<std::size_t>(d);
  const std::size_t offset = (values_.size() + kAlignDoubles - 1) / kAlignDoubles * kAlignDoubles;
  values_.resize(offset + size, 0.0);
  index_[name] = entries_.size();
  entries_.push_back({std::move(name), std::move(shape), offset, size});
  return offset;
}

const ParameterStore::Entry& ParameterStore::entry(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return entries_[it->second];
}

std::span<double> ParameterStore::slice(const std::string& name) {
  const auto& e = entry(name);
  return {values_.data() + e.offset, e.size};
}

std::span<const double> ParameterStore::slice(const std::string& name) const {
  const auto& e = entry(name);
  return {values_.data() + e.offset, e.size};
}

namespace detail {

namespace {

DenseLayer dense(ParameterStore* store, const std::string& name, int in, int out, const ParameterStore* lookup) {
  DenseLayer d;
  d.in = in;
  d.out = out;
  if (store) {
    d.w = store->add(name + ".weight", {out, in});
    d.b = store->add(name + ".bias", {out});
  } else {
    const auto& w = lookup->entry(name + ".weight");
    const auto& b = lookup->entry(name + ".bias");
    if (w.shape != std::vector<int>{out, in} || b.shape != std::vector<int>{out})
      throw std::invalid_argument("parameter shape mismatch for " + name);
    d.w = w.offset;
    d.b = b.offset;
  }
  return d;
}

NetLayout layout_impl(const EstimatorConfig& cfg, ParameterStore* store, const ParameterStore* lookup) {
  cfg.validate();
  NetLayout L;
  L.pool = cfg.pool;
  int channels = kInputChannels;
  int length = cfg.transient_length;
  for (int i = 0; i < cfg.conv_blocks; ++i) {
    ConvLayer c;
    c.in = channels;
    c.out = cfg.base_filters << i;
    c.kernel = cfg.conv_kernel;
    c.length = length;
    c.pooled = length / cfg.pool;
    const std::string name = "conv" + std::to_string(i + 1);
    if (store) {
      c.w = store->add(name + ".weight", {c.out, c.kernel, c.in});
      c.b = store->add(name + ".bias", {c.out});
    } else {
      const auto& w = lookup->entry(name + ".weight");
      const auto& b = lookup->entry(name + ".bias");
      if (w.shape != std::vector<int>{c.out, c.kernel, c.in} || b.shape != std::vector<int>{c.out})
        throw std::invalid_argument("parameter shape mismatch for " + name);
      c.w = w.offset;
      c.b = b.offset;
    }
    L.conv.push_back(c);
    channels = c.out;
    length = c.pooled;
  }
  L.flat = channels * length;
  if (L.flat != cfg.flattened_features()) throw std::logic_error("conv stack length arithmetic mismatch");
  L.transient_fc = dense(store, "transient_fc", L.flat, cfg.transient_fc, lookup);
  L.lambda_fc[0] = dense(store, "lambda_fc1", 1, cfg.lambda_fc_sizes[0], lookup);
  L.lambda_fc[1] = dense(store, "lambda_fc2", cfg.lambda_fc_sizes[0], cfg.lambda_fc_sizes[1], lookup);
  L.aux_fc[0] = dense(store, "aux_fc1", static_cast<int>(kAuxFeatures), cfg.aux_fc_sizes[0], lookup);
  L.aux_fc[1] = dense(store, "aux_fc2", cfg.aux_fc_sizes[0], cfg.aux_fc_sizes[1], lookup);
  L.concat = cfg.transient_fc + cfg.lambda_fc_sizes[1] + cfg.aux_fc_sizes[1];
  L.head[0] = dense(store, "head_fc1", L.concat, cfg.head_sizes[0], lookup);
  L.head[1] = dense(store, "head_fc2", cfg.head_sizes[0], cfg.head_sizes[1], lookup);
  L.head[2] = dense(store, "head_fc3", cfg.head_sizes[1], cfg.head_sizes[2], lookup);
  return L;
}

}  // namespace

NetLayout build_layout(const EstimatorConfig& cfg, ParameterStore* store) {
  if (store) return layout_impl(cfg, store, nullptr);
  ParameterStore scratch;
  return layout_impl(cfg, &scratch, nullptr);
}

NetLayout layout_of(const EstimatorModel& model) {
  auto L = layout_impl(model.config, nullptr, &model.params);
  std::size_t expected = static_cast<std::size_t>(model.config.conv_blocks) * 2 + 16;
  if (model.params.entries().size() != expected)
    throw std::invalid_argument("parameter store does not match the estimator config");
  return L;
}

std::array<double, 3> sorted_lambda(const EstimatorInput& in) {
  auto l = in.lambda;
  std::sort(l.begin(), l.end());
  return l;
}

}  // namespace detail

EstimatorModel EstimatorModel::create(const EstimatorConfig& config, PlantKind kind, std::uint64_t seed) {
  EstimatorModel m;
  m.config = config;
  m.kind = kind;
  const auto L = detail::build_layout(config, &m.params);
  auto& v = m.params.values();
  Rng rng(seed);
  auto fill = [&](std::size_t offset, std::size_t count, double limit) {
    for (std::size_t i = 0; i < count; ++i) v[offset + i] = limit * (2.0 * unit(rng) - 1.0);
  };
  auto he = [](int fan_in) { return std::sqrt(6.0 / fan_in); };
  // A small positive bias keeps pre-activations of all-zero input windows off
  // the ReLU kink, where the loss is not differentiable.
  auto bias = [&](std::size_t offset, int count) { std::fill_n(v.begin() + offset, count, kReluBias); };
  for (const auto& c : L.conv) {
    fill(c.w, static_cast<std::size_t>(c.out) * c.kernel * c.in, he(c.in * c.kernel));
    bias(c.b, c.out);
  }
  for (const auto* d : {&L.transient_fc, &L.lambda_fc[0], &L.lambda_fc[1], &L.aux_fc[0], &L.aux_fc[1], &L.head[0],
                        &L.head[1]}) {
    fill(d->w, static_cast<std::size_t>(d->out) * d->in, he(d->in));
    bias(d->b, d->out);
  }
  const auto& out = L.head[2];
  fill(out.w, static_cast<std::size_t>(out.out) * out.in, std::sqrt(6.0 / (out.in + out.out)));

  m.metadata["loss"] = "mse";
  m.metadata["init"] = "he_uniform relu layers (bias 0.01), xavier_uniform output layer (bias 0)";
  m.metadata["padding"] = "same";
  m.metadata["pool_odd_length"] = "floor";
  m.metadata["init_seed"] = std::to_string(seed);
  return m;
}

void EstimatorModel::validate() const {
  detail::layout_of(*this);
  for (double v : params.values()) {
    if (!std::isfinite(v)) throw NumericalError("estimator parameters contain non-finite values");
  }
}

EstimatorInput make_input(PlantKind kind, std::span<const double> transient_rows, const EigenTriple& lambda,
                          double sigma_n, const State2& x_test0, const State2& x0) {
  if (transient_rows.size() % 3 != 0) throw std::invalid_argument("transient must have 3 columns");
  EstimatorInput in;
  const auto boxes = transient_boxes(kind);
  in.transient.resize(transient_rows.size());
  for (std::size_t i = 0; i < transient_rows.size(); ++i) {
    const auto& b = boxes[i % 3];
    in.transient[i] = to_unit(transient_rows[i], b.lo, b.hi);
  }
  const auto lv = lambda.values();
  for (std::size_t i = 0; i < 3; ++i) in.lambda[i] = to_unit(lv[i], kLambdaRange.lo, kLambdaRange.hi);
  const auto& r = sampling_ranges(kind);
  in.aux = {to_unit(sigma_n, r.sigma_n.lo, r.sigma_n.hi), to_unit(x_test0[0], r.state.lo, r.state.hi),
            to_unit(x_test0[1], r.state.lo, r.state.hi), to_unit(x0[0], r.state.lo, r.state.hi),
            to_unit(x0[1], r.state.lo, r.state.hi)};
  return in;
}

EstimatorInput make_input(const DatasetRecord& r) {
  const auto& s = r.sample;
  return make_input(s.plant.kind, r.basic_transient, s.lambda, s.plant.noise.sigma_n, s.x_test0, s.x0);
}

std::vector<Example> make_examples(const std::vector<DatasetRecord>& records) {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({make_input(r), r.criteria_norm});
  return out;
}

double loss(const Output4& pred, const Output4& target) {
  double s = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double e = pred[i] - target[i];
    s += e * e;
  }
  return s / 4.0;
}

CriteriaVector predict_criteria(const EstimatorModel& model, PlantKind kind, const EstimatorInput& input) {
  if (kind != model.kind)
    throw std::invalid_argument("estimator was trained for " + std::string(to_string(model.kind)) + ", not " +
                                std::string(to_string(kind)));
  return denormalize_criteria(forward(model, input), kind);
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  CsvWriter csv({"epoch", "train_loss", "val_loss"});
  for (const auto& h : history) csv.row({std::to_string(h.epoch), format_double(h.train_loss), format_double(h.val_loss)});
  return csv.str();
}

void save_model(const std::filesystem::path& path, const EstimatorModel& model) {
  model.validate();
  const auto& c = model.config;
  Json header;
  header["config"] = {{"conv_blocks", c.conv_blocks},       {"base_filters", c.base_filters},
                      {"conv_kernel", c.conv_kernel},       {"pool", c.pool},
                      {"transient_fc", c.transient_fc},     {"lambda_fc_sizes", c.lambda_fc_sizes},
                      {"aux_fc_sizes", c.aux_fc_sizes},     {"head_sizes", c.head_sizes},
                      {"transient_length", c.transient_length}};
  header["normalization_kind"] = std::string(to_string(model.kind));
  Json layers = Json::array();
  for (const auto& e : model.params.entries())
    layers.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", e.offset}, {"size", e.size}});
  header["parameters"] = layers;
  header["parameter_count"] = model.params.size();
  Json meta = Json::object();
  for (const auto& [k, v] : model.metadata) meta[k] = v;
  header["metadata"] = meta;
  header["blob"] = "float64 little-endian";

  std::string out = std::string(kModelMagic) + "\n" + header.dump() + "\n";
  append_f64_le(out, model.params.values());
  write_file(path, out);
}

EstimatorModel load_model(const std::filesystem::path& path) {
  const auto text = read_file(path);
  const auto l1 = text.find('\n');
  const auto l2 = l1 == std::string::npos ? l1 : text.find('\n', l1 + 1);
  if (l2 == std::string::npos || text.compare(0, l1, kModelMagic) != 0)
    throw IoError(path.string(), "not an estimator model file");
  EstimatorModel m;
  try {
    const auto header = Json::parse(text.substr(l1 + 1, l2 - l1 - 1));
    const auto& c = header.at("config");
    auto& cfg = m.config;
    cfg.conv_blocks = c.at("conv_blocks").get<int>();
    cfg.base_filters = c.at("base_filters").get<int>();
    cfg.conv_kernel = c.at("conv_kernel").get<int>();
    cfg.pool = c.at("pool").get<int>();
    cfg.transient_fc = c.at("transient_fc").get<int>();
    cfg.lambda_fc_sizes = c.at("lambda_fc_sizes").get<std::array<int, 2>>();
    cfg.aux_fc_sizes = c.at("aux_fc_sizes").get<std::array<int, 2>>();
    cfg.head_sizes = c.at("head_sizes").get<std::array<int, 3>>();
    cfg.transient_length = c.at("transient_length").get<int>();
    m.kind = plant_kind_from_string(header.at("normalization_kind").get<std::string>());
    detail::build_layout(cfg, &m.params);
    const auto& layers = header.at("parameters");
    if (layers.size() != m.params.entries().size()) throw std::invalid_argument("parameter table mismatch");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& e = m.params.entries()[i];
      if (layers[i].at("name").get<std::string>() != e.name || layers[i].at("offset").get<std::size_t>() != e.offset ||
          layers[i].at("shape").get<std::vector<int>>() != e.shape)
        throw std::invalid_argument("parameter table mismatch at " + e.name);
    }
    for (const auto& [k, v] : header.at("metadata").items()) m.metadata[k] = v.get<std::string>();
  } catch (const IoError&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError(path.string(), std::string("bad model header: ") + e.what());
  }
  const auto blob = read_f64_le(std::string_view(text).substr(l2 + 1));
  if (blob.size() != m.params.size()) throw IoError(path.string(), "parameter blob has the wrong length");
  std::copy(blob.begin(), blob.end(), m.params.values().begin());
  m.validate();
  return m;
}

}  // namespace esotune
