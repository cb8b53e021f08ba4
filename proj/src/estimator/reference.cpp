// Straight loops over the same parameter layout, one example at a time.

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "esotune/estimator.hpp"
#include "layout.hpp"

namespace esotune::reference {

namespace {

using detail::ConvLayer;
using detail::DenseLayer;
using detail::NetLayout;
using Vec = std::vector<double>;
using Planes = std::vector<Vec>;  // [channel][time]

Vec dense(const double* p, const DenseLayer& d, const Vec& x, bool relu) {
  Vec y(static_cast<std::size_t>(d.out));
  for (int o = 0; o < d.out; ++o) {
    double s = 0.0;
    for (int i = 0; i < d.in; ++i) s += p[d.w + static_cast<std::size_t>(o) * d.in + i] * x[i];
    s += p[d.b + o];
    y[o] = relu ? std::max(s, 0.0) : s;
  }
  return y;
}

// dW += dy x^T, db += dy; returns W^T dy.
Vec dense_back(const double* p, double* g, const DenseLayer& d, const Vec& dy, const Vec& x) {
  Vec dx(static_cast<std::size_t>(d.in), 0.0);
  for (int o = 0; o < d.out; ++o) {
    if (dy[o] == 0.0) continue;
    for (int i = 0; i < d.in; ++i) {
      g[d.w + static_cast<std::size_t>(o) * d.in + i] += dy[o] * x[i];
      dx[i] += p[d.w + static_cast<std::size_t>(o) * d.in + i] * dy[o];
    }
    g[d.b + o] += dy[o];
  }
  return dx;
}

void mask(Vec& dy, const Vec& y) {
  for (std::size_t i = 0; i < dy.size(); ++i)
    if (!(y[i] > 0.0)) dy[i] = 0.0;
}

double w_conv(const double* p, const ConvLayer& c, int o, int j, int i) {
  return p[c.w + (static_cast<std::size_t>(o) * c.kernel + j) * c.in + i];
}

struct Trace {
  std::vector<Planes> act;    // act[0] input, act[k+1] pooled block k
  std::vector<Planes> relu;   // conv output after ReLU
  std::vector<std::vector<std::vector<int>>> arg;
  Vec flat, t_fc;
  std::array<double, 3> lam{};
  std::array<Vec, 3> lam_h1, lam_h2;
  Vec lam_sum, aux_in, aux_h1, aux_h2, concat, h1, h2;
  Output4 out{};
};

Trace run(const double* p, const NetLayout& L, const EstimatorInput& in) {
  Trace tr;
  const int len = L.conv.front().length;
  if (in.transient.size() != static_cast<std::size_t>(len) * detail::kInputChannels)
    throw std::invalid_argument("estimator input transient has the wrong length");
  Planes a(detail::kInputChannels, Vec(static_cast<std::size_t>(len)));
  for (int t = 0; t < len; ++t)
    for (int c = 0; c < detail::kInputChannels; ++c) a[c][t] = in.transient[static_cast<std::size_t>(t) * 3 + c];
  tr.act.push_back(a);
  for (const auto& c : L.conv) {
    const int pad = (c.kernel - 1) / 2;
    Planes z(static_cast<std::size_t>(c.out), Vec(static_cast<std::size_t>(c.length)));
    for (int o = 0; o < c.out; ++o) {
      for (int t = 0; t < c.length; ++t) {
        double s = 0.0;
        for (int j = 0; j < c.kernel; ++j) {
          const int src = t + j - pad;
          if (src < 0 || src >= c.length) continue;
          for (int i = 0; i < c.in; ++i) s += w_conv(p, c, o, j, i) * tr.act.back()[i][src];
        }
        z[o][t] = std::max(s + p[c.b + o], 0.0);
      }
    }
    Planes pooled(static_cast<std::size_t>(c.out), Vec(static_cast<std::size_t>(c.pooled)));
    std::vector<std::vector<int>> arg(static_cast<std::size_t>(c.out), std::vector<int>(c.pooled));
    for (int o = 0; o < c.out; ++o) {
      for (int t = 0; t < c.pooled; ++t) {
        int best = 0;
        for (int r = 1; r < L.pool; ++r)
          if (z[o][t * L.pool + r] > z[o][t * L.pool + best]) best = r;
        pooled[o][t] = z[o][t * L.pool + best];
        arg[o][t] = best;
      }
    }
    tr.relu.push_back(std::move(z));
    tr.arg.push_back(std::move(arg));
    tr.act.push_back(std::move(pooled));
  }
  const auto& last = tr.act.back();
  const int C = static_cast<int>(last.size());
  const int T = static_cast<int>(last[0].size());
  tr.flat.resize(static_cast<std::size_t>(C) * T);
  for (int t = 0; t < T; ++t)
    for (int c = 0; c < C; ++c) tr.flat[static_cast<std::size_t>(t) * C + c] = last[c][t];
  tr.t_fc = dense(p, L.transient_fc, tr.flat, true);

  tr.lam = detail::sorted_lambda(in);
  tr.lam_sum.assign(static_cast<std::size_t>(L.lambda_fc[1].out), 0.0);
  for (int s = 0; s < 3; ++s) {
    tr.lam_h1[s] = dense(p, L.lambda_fc[0], Vec{tr.lam[s]}, true);
    tr.lam_h2[s] = dense(p, L.lambda_fc[1], tr.lam_h1[s], true);
  }
  for (std::size_t k = 0; k < tr.lam_sum.size(); ++k)
    tr.lam_sum[k] = (tr.lam_h2[0][k] + tr.lam_h2[1][k]) + tr.lam_h2[2][k];

  tr.aux_in.assign(in.aux.begin(), in.aux.end());
  tr.aux_h1 = dense(p, L.aux_fc[0], tr.aux_in, true);
  tr.aux_h2 = dense(p, L.aux_fc[1], tr.aux_h1, true);

  tr.concat = tr.t_fc;
  tr.concat.insert(tr.concat.end(), tr.lam_sum.begin(), tr.lam_sum.end());
  tr.concat.insert(tr.concat.end(), tr.aux_h2.begin(), tr.aux_h2.end());
  tr.h1 = dense(p, L.head[0], tr.concat, true);
  tr.h2 = dense(p, L.head[1], tr.h1, true);
  const Vec z = dense(p, L.head[2], tr.h2, false);
  for (int k = 0; k < 4; ++k)
    tr.out[k] = std::clamp(detail::sigmoid(z[k]), detail::kOutputMargin, 1.0 - detail::kOutputMargin);
  return tr;
}

void backprop(const double* p, double* g, const NetLayout& L, const Trace& tr, const Output4& target, double scale) {
  Vec dz(4);
  for (int k = 0; k < 4; ++k) {
    const double s = tr.out[k];
    dz[k] = 2.0 * scale / 4.0 * (s - target[k]) * s * (1.0 - s);
  }
  Vec d = dense_back(p, g, L.head[2], dz, tr.h2);
  mask(d, tr.h2);
  d = dense_back(p, g, L.head[1], d, tr.h1);
  mask(d, tr.h1);
  const Vec dconcat = dense_back(p, g, L.head[0], d, tr.concat);

  const std::size_t tf = tr.t_fc.size(), lf = tr.lam_sum.size(), af = tr.aux_h2.size();
  for (int s = 0; s < 3; ++s) {
    Vec dh(dconcat.begin() + static_cast<long>(tf), dconcat.begin() + static_cast<long>(tf + lf));
    mask(dh, tr.lam_h2[s]);
    Vec dx = dense_back(p, g, L.lambda_fc[1], dh, tr.lam_h1[s]);
    mask(dx, tr.lam_h1[s]);
    dense_back(p, g, L.lambda_fc[0], dx, Vec{tr.lam[s]});
  }
  {
    Vec dh(dconcat.begin() + static_cast<long>(tf + lf), dconcat.begin() + static_cast<long>(tf + lf + af));
    mask(dh, tr.aux_h2);
    Vec dx = dense_back(p, g, L.aux_fc[1], dh, tr.aux_h1);
    mask(dx, tr.aux_h1);
    dense_back(p, g, L.aux_fc[0], dx, tr.aux_in);
  }

  Vec dt(dconcat.begin(), dconcat.begin() + static_cast<long>(tf));
  mask(dt, tr.t_fc);
  const Vec dflat = dense_back(p, g, L.transient_fc, dt, tr.flat);
  const int C = static_cast<int>(tr.act.back().size());
  const int T = static_cast<int>(tr.act.back()[0].size());
  Planes dact(static_cast<std::size_t>(C), Vec(static_cast<std::size_t>(T)));
  for (int t = 0; t < T; ++t)
    for (int c = 0; c < C; ++c) dact[c][t] = dflat[static_cast<std::size_t>(t) * C + c];

  for (std::size_t k = L.conv.size(); k-- > 0;) {
    const auto& c = L.conv[k];
    const int pad = (c.kernel - 1) / 2;
    Planes dzc(static_cast<std::size_t>(c.out), Vec(static_cast<std::size_t>(c.length), 0.0));
    for (int o = 0; o < c.out; ++o)
      for (int t = 0; t < c.pooled; ++t) {
        const int src = t * L.pool + tr.arg[k][o][t];
        if (tr.relu[k][o][src] > 0.0) dzc[o][src] = dact[o][t];
      }
    const auto& in = tr.act[k];
    Planes dprev(static_cast<std::size_t>(c.in), Vec(static_cast<std::size_t>(c.length), 0.0));
    for (int o = 0; o < c.out; ++o) {
      for (int t = 0; t < c.length; ++t) {
        const double dv = dzc[o][t];
        if (dv == 0.0) continue;
        g[c.b + o] += dv;
        for (int j = 0; j < c.kernel; ++j) {
          const int src = t + j - pad;
          if (src < 0 || src >= c.length) continue;
          for (int i = 0; i < c.in; ++i) {
            g[c.w + (static_cast<std::size_t>(o) * c.kernel + j) * c.in + i] += dv * in[i][src];
            dprev[i][src] += w_conv(p, c, o, j, i) * dv;
          }
        }
      }
    }
    dact = std::move(dprev);
  }
}

}  // namespace

Output4 forward(const EstimatorModel& model, const EstimatorInput& input) {
  const auto L = detail::layout_of(model);
  return run(model.params.values().data(), L, input).out;
}

double loss_and_gradient(const EstimatorModel& model, std::span<const Example* const> batch, ParamVector& grad) {
  if (batch.empty()) throw std::invalid_argument("loss_and_gradient: empty batch");
  const auto L = detail::layout_of(model);
  const double* p = model.params.values().data();
  grad.assign(model.params.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const Example* ex : batch) {
    const auto tr = run(p, L, ex->input);
    total += loss(tr.out, ex->target);
    backprop(p, grad.data(), L, tr, ex->target, scale);
  }
  return total * scale;
}

}  // namespace esotune::reference
