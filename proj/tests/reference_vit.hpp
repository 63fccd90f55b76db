#pragma once

// Standard ViT regressor written as plain loops, independent of the tape.
// Accumulation order follows the scalar kernels so results can be compared
// bit for bit when the scalar backend is active.

#include <cmath>
#include <numbers>
#include <vector>

#include "prionvit/model.hpp"

namespace reference {

using Mat = std::vector<std::vector<double>>;  // rows x cols

inline Mat zeros(std::size_t r, std::size_t c) { return Mat(r, std::vector<double>(c, 0.0)); }

inline Mat matmul(const Mat& a, const prionvit::Tensor& w) {
  const std::size_t k = w.dim(0), n = w.dim(1);
  Mat out = zeros(a.size(), n);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) out[i][j] += a[i][p] * w[p * n + j];
  return out;
}

inline void add_bias(Mat& a, const prionvit::Tensor& b) {
  for (auto& row : a)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = row[j] + b[j];
}

inline Mat layer_norm(const Mat& x, const prionvit::Tensor& g, const prionvit::Tensor& b, double eps) {
  Mat out = x;
  for (std::size_t r = 0; r < x.size(); ++r) {
    const std::size_t d = x[r].size();
    double mu = 0.0;
    for (double v : x[r]) mu += v;
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (double v : x[r]) var += (v - mu) * (v - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) out[r][j] = (x[r][j] - mu) * rs * g[j] + b[j];
  }
  return out;
}

inline double gelu(double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); }

inline Mat attention(const Mat& x, const prionvit::model::BlockParams& p, std::size_t heads) {
  const std::size_t n = x.size(), d = x[0].size(), dh = d / heads;
  Mat q = matmul(x, p.w_q), k = matmul(x, p.w_k), v = matmul(x, p.w_v);
  add_bias(q, p.b_q);
  add_bias(k, p.b_k);
  add_bias(v, p.b_v);
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  Mat ctx = zeros(n, d);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> s(n);
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t e = 0; e < dh; ++e) acc += q[i][h * dh + e] * k[j][h * dh + e];
        s[j] = acc * inv;
      }
      double mx = -INFINITY;
      for (double val : s) mx = std::max(mx, val);
      double total = 0.0;
      for (double& val : s) {
        val = std::exp(val - mx);
        total += val;
      }
      for (double& val : s) val /= total;
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t e = 0; e < dh; ++e) ctx[i][h * dh + e] += s[j] * v[j][h * dh + e];
    }
  }
  Mat o = matmul(ctx, p.w_o);
  add_bias(o, p.b_o);
  return o;
}

// Single image H x W x C (flattened) -> prediction in degrees.
inline double vit_predict(const prionvit::model::PrionViT& model, const double* image) {
  const auto& cfg = model.config();
  const auto& P = model.params();
  const std::size_t ps = cfg.patch_size, g = cfg.grid(), c = cfg.channels, side = cfg.input_size;
  Mat patches = zeros(g * g, ps * ps * c);
  for (std::size_t py = 0; py < g; ++py)
    for (std::size_t px = 0; px < g; ++px)
      for (std::size_t r = 0; r < ps; ++r)
        for (std::size_t col = 0; col < ps; ++col)
          for (std::size_t ch = 0; ch < c; ++ch)
            patches[py * g + px][(r * ps + col) * c + ch] = image[((py * ps + r) * side + px * ps + col) * c + ch];

  Mat x = matmul(patches, P.patch_w);
  add_bias(x, P.patch_b);
  for (std::size_t t = 0; t < x.size(); ++t)
    for (std::size_t j = 0; j < x[t].size(); ++j) x[t][j] = x[t][j] + P.pos_embed[t * cfg.embed_dim + j];

  for (const auto& blk : P.blocks) {
    Mat a = attention(layer_norm(x, blk.ln1_gamma, blk.ln1_beta, cfg.layer_norm_eps), blk, cfg.num_heads);
    for (std::size_t t = 0; t < x.size(); ++t)
      for (std::size_t j = 0; j < x[t].size(); ++j) x[t][j] = x[t][j] + a[t][j];
    Mat h = matmul(layer_norm(x, blk.ln2_gamma, blk.ln2_beta, cfg.layer_norm_eps), blk.ffn_w1);
    add_bias(h, blk.ffn_b1);
    for (auto& row : h)
      for (double& v : row) v = gelu(v);
    Mat f = matmul(h, blk.ffn_w2);
    add_bias(f, blk.ffn_b2);
    for (std::size_t t = 0; t < x.size(); ++t)
      for (std::size_t j = 0; j < x[t].size(); ++j) x[t][j] = x[t][j] + f[t][j];
  }

  Mat pooled = zeros(1, cfg.embed_dim);
  const double inv = 1.0 / static_cast<double>(x.size());
  for (std::size_t j = 0; j < cfg.embed_dim; ++j) {
    double s = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) s += x[t][j];
    pooled[0][j] = s * inv;
  }
  Mat hidden = matmul(pooled, P.head_w1);
  add_bias(hidden, P.head_b1);
  for (double& v : hidden[0]) v = v > 0.0 ? v : 0.0;
  Mat out = matmul(hidden, P.head_w2);
  add_bias(out, P.head_b2);
  return out[0][0] * model.scaling().scale + model.scaling().offset;
}

}  // namespace reference
