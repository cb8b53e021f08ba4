// Batched kernel: activations are column-major (channels x batch*length)
// matrices, so one example's block is contiguous and convolutions become a
// single GEMM against an im2col buffer.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "esotune/errors.hpp"
#include "esotune/estimator.hpp"
#include "layout.hpp"

namespace esotune {

namespace {

using Mat = Eigen::MatrixXd;
using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMapRM = Eigen::Map<const MatRM, Eigen::Aligned64>;
using MapRM = Eigen::Map<MatRM, Eigen::Aligned64>;
using CVec = Eigen::Map<const Eigen::VectorXd, Eigen::Aligned64>;
using Vec = Eigen::Map<Eigen::VectorXd, Eigen::Aligned64>;

using detail::ConvLayer;
using detail::DenseLayer;
using detail::NetLayout;

constexpr int kGridChunk = 256;

struct Net {
  const NetLayout& L;
  const double* p;

  CMapRM W(const DenseLayer& d) const { return CMapRM(p + d.w, d.out, d.in); }
  CVec b(const DenseLayer& d) const { return CVec(p + d.b, d.out); }
  CMapRM W(const ConvLayer& c) const { return CMapRM(p + c.w, c.out, c.kernel * c.in); }
  CVec b(const ConvLayer& c) const { return CVec(p + c.b, c.out); }
};

struct Grad {
  double* g;
  MapRM W(const DenseLayer& d) const { return MapRM(g + d.w, d.out, d.in); }
  Vec b(const DenseLayer& d) const { return Vec(g + d.b, d.out); }
  MapRM W(const ConvLayer& c) const { return MapRM(g + c.w, c.out, c.kernel * c.in); }
  Vec b(const ConvLayer& c) const { return Vec(g + c.b, c.out); }
};

Mat dense_relu(const Net& net, const DenseLayer& d, const Mat& x) {
  Mat y = net.W(d) * x;
  y.colwise() += net.b(d);
  return y.cwiseMax(0.0);
}

struct Cache {
  int batch = 0;
  std::vector<Mat> act;   // act[0]: input; act[i + 1]: pooled output of block i
  std::vector<Mat> cols;  // im2col of block i input
  std::vector<Mat> relu;  // block i conv output after ReLU
  std::vector<std::vector<std::uint8_t>> arg;  // winning offset in each pool window
  Mat t_fc;
  Mat lam_in, lam_h1, lam_h2;
  Mat aux_in, aux_h1, aux_h2;
  Mat concat, h1, h2, out;
};

void im2col(const Mat& a, int batch, int length, int kernel, Mat& cols) {
  const auto C = a.rows();
  const int pad = (kernel - 1) / 2;
  cols.setZero(C * kernel, static_cast<Eigen::Index>(batch) * length);
  for (int b = 0; b < batch; ++b) {
    const Eigen::Index base = static_cast<Eigen::Index>(b) * length;
    for (int t = 0; t < length; ++t) {
      for (int j = 0; j < kernel; ++j) {
        const int src = t + j - pad;
        if (src < 0 || src >= length) continue;
        cols.col(base + t).segment(j * C, C) = a.col(base + src);
      }
    }
  }
}

void col2im_add(const Mat& dcols, int batch, int length, int kernel, Mat& da) {
  const auto C = da.rows();
  const int pad = (kernel - 1) / 2;
  for (int b = 0; b < batch; ++b) {
    const Eigen::Index base = static_cast<Eigen::Index>(b) * length;
    for (int t = 0; t < length; ++t) {
      for (int j = 0; j < kernel; ++j) {
        const int src = t + j - pad;
        if (src < 0 || src >= length) continue;
        da.col(base + src) += dcols.col(base + t).segment(j * C, C);
      }
    }
  }
}

void max_pool(const Mat& in, int batch, int length, int pool, Mat& out, std::vector<std::uint8_t>& arg) {
  const int pooled = length / pool;
  const auto C = in.rows();
  out.resize(C, static_cast<Eigen::Index>(batch) * pooled);
  arg.assign(static_cast<std::size_t>(out.size()), 0);
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < pooled; ++t) {
      const Eigen::Index o = static_cast<Eigen::Index>(b) * pooled + t;
      const Eigen::Index i0 = static_cast<Eigen::Index>(b) * length + static_cast<Eigen::Index>(t) * pool;
      for (Eigen::Index c = 0; c < C; ++c) {
        double best = in(c, i0);
        std::uint8_t k = 0;
        for (int r = 1; r < pool; ++r) {
          if (in(c, i0 + r) > best) {
            best = in(c, i0 + r);
            k = static_cast<std::uint8_t>(r);
          }
        }
        out(c, o) = best;
        arg[static_cast<std::size_t>(o * C + c)] = k;
      }
    }
  }
}

Mat transient_embedding(const Net& net, Cache& cache, bool keep) {
  const auto& L = net.L;
  const int B = cache.batch;
  Mat cols;
  Mat a = cache.act[0];
  for (std::size_t i = 0; i < L.conv.size(); ++i) {
    const auto& c = L.conv[i];
    im2col(a, B, c.length, c.kernel, cols);
    Mat z = net.W(c) * cols;
    z.colwise() += net.b(c);
    z = z.cwiseMax(0.0);
    Mat pooled;
    std::vector<std::uint8_t> arg;
    max_pool(z, B, c.length, L.pool, pooled, arg);
    if (keep) {
      cache.cols[i] = std::move(cols);
      cache.relu[i] = std::move(z);
      cache.arg[i] = std::move(arg);
      cache.act[i + 1] = pooled;
    }
    a = std::move(pooled);
  }
  const Eigen::Map<const Mat> flat(a.data(), L.flat, B);
  Mat t = net.W(L.transient_fc) * flat;
  t.colwise() += net.b(L.transient_fc);
  return t.cwiseMax(0.0);
}

// Streams of one example are columns 3b, 3b+1, 3b+2, in ascending order; the
// sum is taken in that order.
Mat lambda_embedding(const Net& net, const Mat& lam_in, Mat* h1_out, Mat* h2_out) {
  Mat h1 = dense_relu(net, net.L.lambda_fc[0], lam_in);
  Mat h2 = dense_relu(net, net.L.lambda_fc[1], h1);
  const auto n = lam_in.cols() / 3;
  Mat sum(h2.rows(), n);
  for (Eigen::Index b = 0; b < n; ++b) sum.col(b) = (h2.col(3 * b) + h2.col(3 * b + 1)) + h2.col(3 * b + 2);
  if (h1_out) *h1_out = std::move(h1);
  if (h2_out) *h2_out = std::move(h2);
  return sum;
}

Mat head_output(const Net& net, const Mat& concat, Mat* h1_out, Mat* h2_out) {
  Mat h1 = dense_relu(net, net.L.head[0], concat);
  Mat h2 = dense_relu(net, net.L.head[1], h1);
  Mat z = net.W(net.L.head[2]) * h2;
  z.colwise() += net.b(net.L.head[2]);
  Mat out = z.unaryExpr([](double v) {
    return std::clamp(detail::sigmoid(v), detail::kOutputMargin, 1.0 - detail::kOutputMargin);
  });
  if (h1_out) *h1_out = std::move(h1);
  if (h2_out) *h2_out = std::move(h2);
  return out;
}

void check_input(const NetLayout& L, const EstimatorInput& in) {
  const auto expected = static_cast<std::size_t>(L.conv.front().length) * detail::kInputChannels;
  if (in.transient.size() != expected)
    throw std::invalid_argument("estimator input transient has " + std::to_string(in.transient.size()) +
                                " values, expected " + std::to_string(expected));
}

void forward_cached(const Net& net, std::span<const Example* const> batch, Cache& cache) {
  const auto& L = net.L;
  const int B = static_cast<int>(batch.size());
  const int len = L.conv.front().length;
  cache.batch = B;
  cache.act.assign(L.conv.size() + 1, Mat());
  cache.cols.assign(L.conv.size(), Mat());
  cache.relu.assign(L.conv.size(), Mat());
  cache.arg.assign(L.conv.size(), {});
  cache.act[0].resize(detail::kInputChannels, static_cast<Eigen::Index>(B) * len);
  cache.lam_in.resize(1, 3 * B);
  cache.aux_in.resize(static_cast<Eigen::Index>(kAuxFeatures), B);
  for (int b = 0; b < B; ++b) {
    const auto& in = batch[b]->input;
    check_input(L, in);
    cache.act[0].block(0, static_cast<Eigen::Index>(b) * len, detail::kInputChannels, len) =
        Eigen::Map<const Mat>(in.transient.data(), detail::kInputChannels, len);
    const auto lam = detail::sorted_lambda(in);
    for (int s = 0; s < 3; ++s) cache.lam_in(0, 3 * b + s) = lam[s];
    for (std::size_t k = 0; k < kAuxFeatures; ++k) cache.aux_in(static_cast<Eigen::Index>(k), b) = in.aux[k];
  }
  cache.t_fc = transient_embedding(net, cache, true);
  const Mat lam = lambda_embedding(net, cache.lam_in, &cache.lam_h1, &cache.lam_h2);
  cache.aux_h1 = dense_relu(net, L.aux_fc[0], cache.aux_in);
  cache.aux_h2 = dense_relu(net, L.aux_fc[1], cache.aux_h1);
  cache.concat.resize(L.concat, B);
  cache.concat << cache.t_fc, lam, cache.aux_h2;
  cache.out = head_output(net, cache.concat, &cache.h1, &cache.h2);
}

// Accumulates dW += dz x^T, db += rowsum(dz); returns W^T dz when wanted.
Mat dense_backward(const Net& net, const Grad& g, const DenseLayer& d, const Mat& dz, const Mat& x, bool want_dx) {
  g.W(d).noalias() += dz * x.transpose();
  g.b(d) += dz.rowwise().sum();
  if (!want_dx) return {};
  return net.W(d).transpose() * dz;
}

Mat relu_mask(Mat dy, const Mat& y) { return dy.cwiseProduct((y.array() > 0.0).cast<double>().matrix()); }

double backward(const Net& net, std::span<const Example* const> batch, const Cache& cache, double scale,
                double* grad) {
  const auto& L = net.L;
  const Grad g{grad};
  const int B = cache.batch;

  Mat target(4, B);
  for (int b = 0; b < B; ++b)
    for (int k = 0; k < 4; ++k) target(k, b) = batch[b]->target[k];
  const Mat diff = cache.out - target;
  const double loss_sum = diff.squaredNorm() / 4.0;

  // d(mean MSE)/d(logit) with the sigmoid derivative s (1 - s).
  const Mat dz3 = (2.0 * scale / 4.0) * diff.cwiseProduct(cache.out.cwiseProduct((1.0 - cache.out.array()).matrix()));
  Mat dh2 = dense_backward(net, g, L.head[2], dz3, cache.h2, true);
  Mat dz2 = relu_mask(std::move(dh2), cache.h2);
  Mat dh1 = dense_backward(net, g, L.head[1], dz2, cache.h1, true);
  Mat dz1 = relu_mask(std::move(dh1), cache.h1);
  const Mat dconcat = dense_backward(net, g, L.head[0], dz1, cache.concat, true);

  const int tf = L.transient_fc.out;
  const int lf = L.lambda_fc[1].out;
  const int af = L.aux_fc[1].out;

  // Eigenvalue streams: the summed embedding's gradient fans out to each stream.
  {
    const Mat dsum = dconcat.middleRows(tf, lf);
    Mat dh = Mat(lf, 3 * B);
    for (int b = 0; b < B; ++b)
      for (int s = 0; s < 3; ++s) dh.col(3 * b + s) = dsum.col(b);
    Mat dz = relu_mask(std::move(dh), cache.lam_h2);
    Mat dx = dense_backward(net, g, L.lambda_fc[1], dz, cache.lam_h1, true);
    dz = relu_mask(std::move(dx), cache.lam_h1);
    dense_backward(net, g, L.lambda_fc[0], dz, cache.lam_in, false);
  }
  {
    Mat dz = relu_mask(dconcat.middleRows(tf + lf, af), cache.aux_h2);
    Mat dx = dense_backward(net, g, L.aux_fc[1], dz, cache.aux_h1, true);
    dz = relu_mask(std::move(dx), cache.aux_h1);
    dense_backward(net, g, L.aux_fc[0], dz, cache.aux_in, false);
  }

  Mat dz = relu_mask(dconcat.topRows(tf), cache.t_fc);
  const Mat& last = cache.act.back();
  const Eigen::Map<const Mat> flat(last.data(), L.flat, B);
  g.W(L.transient_fc).noalias() += dz * flat.transpose();
  g.b(L.transient_fc) += dz.rowwise().sum();
  Mat dflat = net.W(L.transient_fc).transpose() * dz;
  Mat dact = Eigen::Map<const Mat>(dflat.data(), last.rows(), last.cols());

  for (std::size_t ii = L.conv.size(); ii-- > 0;) {
    const auto& c = L.conv[ii];
    const Mat& relu = cache.relu[ii];
    Mat drelu = Mat::Zero(relu.rows(), relu.cols());
    const auto C = relu.rows();
    for (int b = 0; b < B; ++b) {
      for (int t = 0; t < c.pooled; ++t) {
        const Eigen::Index o = static_cast<Eigen::Index>(b) * c.pooled + t;
        const Eigen::Index i0 = static_cast<Eigen::Index>(b) * c.length + static_cast<Eigen::Index>(t) * L.pool;
        for (Eigen::Index ch = 0; ch < C; ++ch)
          drelu(ch, i0 + cache.arg[ii][static_cast<std::size_t>(o * C + ch)]) = dact(ch, o);
      }
    }
    const Mat dzc = relu_mask(std::move(drelu), relu);
    g.W(c).noalias() += dzc * cache.cols[ii].transpose();
    g.b(c) += dzc.rowwise().sum();
    if (ii == 0) break;
    const Mat dcols = net.W(c).transpose() * dzc;
    dact = Mat::Zero(c.in, static_cast<Eigen::Index>(B) * c.length);
    col2im_add(dcols, B, c.length, c.kernel, dact);
  }
  return loss_sum;
}

std::vector<std::span<const Example* const>> micro_batches(std::span<const Example* const> batch) {
  std::vector<std::span<const Example* const>> chunks;
  for (std::size_t i = 0; i < batch.size(); i += kMicroBatch)
    chunks.push_back(batch.subspan(i, std::min<std::size_t>(kMicroBatch, batch.size() - i)));
  return chunks;
}

}  // namespace

std::vector<Output4> forward_batch(const EstimatorModel& model, std::span<const Example> examples,
                                   const ExecPolicy& policy) {
  const auto L = detail::layout_of(model);
  const Net net{L, model.params.values().data()};
  std::vector<const Example*> ptrs;
  ptrs.reserve(examples.size());
  for (const auto& e : examples) ptrs.push_back(&e);
  const auto chunks = micro_batches(ptrs);
  std::vector<Output4> out(examples.size());
  for_each_index(chunks.size(), policy, [&](std::size_t ci) {
    Cache cache;
    forward_cached(net, chunks[ci], cache);
    const std::size_t base = ci * kMicroBatch;
    for (int b = 0; b < cache.batch; ++b)
      for (int k = 0; k < 4; ++k) out[base + b][k] = cache.out(k, b);
  });
  return out;
}

Output4 forward(const EstimatorModel& model, const EstimatorInput& input) {
  const Example ex{input, {}};
  return forward_batch(model, std::span<const Example>(&ex, 1), ExecPolicy::serial())[0];
}

double loss_and_gradient(const EstimatorModel& model, std::span<const Example* const> batch, ParamVector& grad,
                         const ExecPolicy& policy) {
  if (batch.empty()) throw std::invalid_argument("loss_and_gradient: empty batch");
  const auto L = detail::layout_of(model);
  const Net net{L, model.params.values().data()};
  const auto chunks = micro_batches(batch);
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<ParamVector> partial(chunks.size());
  std::vector<double> losses(chunks.size());
  for_each_index(chunks.size(), policy, [&](std::size_t ci) {
    partial[ci].assign(model.params.size(), 0.0);
    Cache cache;
    forward_cached(net, chunks[ci], cache);
    losses[ci] = backward(net, chunks[ci], cache, scale, partial[ci].data());
  });
  grad.assign(model.params.size(), 0.0);
  double total = 0.0;
  for (std::size_t ci = 0; ci < chunks.size(); ++ci) {
    total += losses[ci];
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += partial[ci][i];
  }
  return total * scale;
}

std::vector<Output4> predict_grid(const EstimatorModel& model, const TuneContext& ctx,
                                  std::span<const EigenTriple> grid, const ExecPolicy& policy) {
  const auto L = detail::layout_of(model);
  const Net net{L, model.params.values().data()};
  const auto base = make_input(model.kind, ctx.transient, EigenTriple{-1.0, -1.0, -1.0}, ctx.sigma_n, ctx.x_test0,
                               ctx.x0);
  check_input(L, base);

  Cache cache;
  cache.batch = 1;
  cache.act.assign(L.conv.size() + 1, Mat());
  cache.act[0] = Eigen::Map<const Mat>(base.transient.data(), detail::kInputChannels, L.conv.front().length);
  const Mat t = transient_embedding(net, cache, false);
  Mat aux_in(static_cast<Eigen::Index>(kAuxFeatures), 1);
  for (std::size_t k = 0; k < kAuxFeatures; ++k) aux_in(static_cast<Eigen::Index>(k), 0) = base.aux[k];
  const Mat aux = dense_relu(net, L.aux_fc[1], dense_relu(net, L.aux_fc[0], aux_in));

  std::vector<Output4> out(grid.size());
  const std::size_t chunks = (grid.size() + kGridChunk - 1) / kGridChunk;
  for_each_index(chunks, policy, [&](std::size_t ci) {
    const std::size_t begin = ci * kGridChunk;
    const int n = static_cast<int>(std::min<std::size_t>(kGridChunk, grid.size() - begin));
    Mat lam_in(1, 3 * n);
    for (int i = 0; i < n; ++i) {
      const auto in = make_input(model.kind, {}, grid[begin + i], 0.0, {}, {});
      EstimatorInput sorted;
      sorted.lambda = in.lambda;
      const auto lam = detail::sorted_lambda(sorted);
      for (int s = 0; s < 3; ++s) lam_in(0, 3 * i + s) = lam[s];
    }
    const Mat lam = lambda_embedding(net, lam_in, nullptr, nullptr);
    Mat concat(L.concat, n);
    concat.topRows(t.rows()) = t.replicate(1, n);
    concat.middleRows(t.rows(), lam.rows()) = lam;
    concat.bottomRows(aux.rows()) = aux.replicate(1, n);
    const Mat o = head_output(net, concat, nullptr, nullptr);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < 4; ++k) out[begin + i][k] = o(k, i);
  });
  return out;
}

}  // namespace esotune
