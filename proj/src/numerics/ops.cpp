#include "prionvit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <string>

#include "prionvit/kernels.hpp"

namespace prionvit {

namespace {

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Output shape and the extent of the (possibly) repeated operand.
struct Broadcast {
  Shape out;
  std::size_t na;
  std::size_t nb;
};

Broadcast broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
  if (a == b || is_suffix(b, a)) return {a, shape_numel(a), shape_numel(b)};
  if (is_suffix(a, b)) return {b, shape_numel(a), shape_numel(b)};
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

struct AxisSplit {
  std::size_t outer;
  std::size_t n;
  std::size_t inner;
};

AxisSplit split_at(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  }
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <class F>
Tensor map(const Tensor& x, F f) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = f(x[i]);
  return out;
}

}  // namespace

double sigmoid(double x) {
  // Branch on sign so exp never overflows; clamp so the result stays strictly
  // inside (0, 1) even where the exact value rounds to an endpoint.
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - 0x1.0p-53;
  double y;
  if (x >= 0.0) {
    y = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    y = e / (1.0 + e);
  }
  return std::clamp(y, lo, hi);
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Shape& as = av.shape();
  const Shape& bs = bv.shape();
  auto fail = [&] { throw ShapeError("matmul shape mismatch: " + shape_str(as) + " x " + shape_str(bs)); };
  if (as.size() < 2 || bs.size() < 2) fail();
  const std::size_t k = as.back();
  const auto& kt = kernels::active();

  if (bs.size() == 2) {
    if (bs[0] != k) fail();
    const std::size_t n = bs[1];
    const std::size_t rows = av.numel() / k;
    Shape os(as.begin(), as.end() - 1);
    os.push_back(n);
    Tensor out(os);
    kt.gemm_nn(rows, n, k, av.ptr(), bv.ptr(), out.ptr());
    return a.tape()->record(std::move(out), {a, b}, [a, b, rows, n, k](const Tensor& g, std::span<Tensor* const> gin) {
      const auto& kt = kernels::active();
      if (gin[0]) kt.gemm_nt(rows, k, n, g.ptr(), b.value().ptr(), gin[0]->ptr());
      if (gin[1]) kt.gemm_tn(k, n, rows, a.value().ptr(), g.ptr(), gin[1]->ptr());
    });
  }

  if (as.size() != bs.size() || !std::equal(as.begin(), as.end() - 2, bs.begin()) || bs[bs.size() - 2] != k) fail();
  const std::size_t m = as[as.size() - 2];
  const std::size_t n = bs.back();
  const std::size_t batch = av.numel() / (m * k);
  Shape os(as.begin(), as.end() - 1);
  os.push_back(n);
  Tensor out(os);
  for (std::size_t i = 0; i < batch; ++i) {
    kt.gemm_nn(m, n, k, av.ptr() + i * m * k, bv.ptr() + i * k * n, out.ptr() + i * m * n);
  }
  return a.tape()->record(std::move(out), {a, b},
                          [a, b, batch, m, n, k](const Tensor& g, std::span<Tensor* const> gin) {
                            const auto& kt = kernels::active();
                            for (std::size_t i = 0; i < batch; ++i) {
                              const double* gi = g.ptr() + i * m * n;
                              if (gin[0]) kt.gemm_nt(m, k, n, gi, b.value().ptr() + i * k * n, gin[0]->ptr() + i * m * k);
                              if (gin[1]) kt.gemm_tn(k, n, m, a.value().ptr() + i * m * k, gi, gin[1]->ptr() + i * k * n);
                            }
                          });
}

Var matmul_nt(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Shape& as = av.shape();
  const Shape& bs = bv.shape();
  if (as.size() < 2 || as.size() != bs.size() || !std::equal(as.begin(), as.end() - 2, bs.begin()) ||
      as.back() != bs.back()) {
    throw ShapeError("matmul_nt shape mismatch: " + shape_str(as) + " x " + shape_str(bs) + "^T");
  }
  const std::size_t m = as[as.size() - 2];
  const std::size_t n = bs[bs.size() - 2];
  const std::size_t k = as.back();
  const std::size_t batch = av.numel() / (m * k);
  Shape os(as.begin(), as.end() - 1);
  os.push_back(n);
  Tensor out(os);
  const auto& kt = kernels::active();
  for (std::size_t i = 0; i < batch; ++i) {
    kt.gemm_nt(m, n, k, av.ptr() + i * m * k, bv.ptr() + i * n * k, out.ptr() + i * m * n);
  }
  return a.tape()->record(std::move(out), {a, b},
                          [a, b, batch, m, n, k](const Tensor& g, std::span<Tensor* const> gin) {
                            const auto& kt = kernels::active();
                            for (std::size_t i = 0; i < batch; ++i) {
                              const double* gi = g.ptr() + i * m * n;
                              if (gin[0]) kt.gemm_nn(m, k, n, gi, b.value().ptr() + i * n * k, gin[0]->ptr() + i * m * k);
                              if (gin[1]) kt.gemm_tn(n, k, m, gi, a.value().ptr() + i * m * k, gin[1]->ptr() + i * n * k);
                            }
                          });
}

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const auto [os, na, nb] = broadcast_shapes(av.shape(), bv.shape(), "add");
  Tensor out(os);
  const std::size_t total = out.numel();
  for (std::size_t i = 0; i < total; ++i) out[i] = av[i % na] + bv[i % nb];
  return a.tape()->record(std::move(out), {a, b}, [na, nb, total](const Tensor& g, std::span<Tensor* const> gin) {
    if (gin[0]) {
      for (std::size_t i = 0; i < total; ++i) (*gin[0])[i % na] += g[i];
    }
    if (gin[1]) {
      for (std::size_t i = 0; i < total; ++i) (*gin[1])[i % nb] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const auto [os, na, nb] = broadcast_shapes(av.shape(), bv.shape(), "sub");
  Tensor out(os);
  const std::size_t total = out.numel();
  for (std::size_t i = 0; i < total; ++i) out[i] = av[i % na] - bv[i % nb];
  return a.tape()->record(std::move(out), {a, b}, [na, nb, total](const Tensor& g, std::span<Tensor* const> gin) {
    if (gin[0]) {
      for (std::size_t i = 0; i < total; ++i) (*gin[0])[i % na] += g[i];
    }
    if (gin[1]) {
      for (std::size_t i = 0; i < total; ++i) (*gin[1])[i % nb] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const auto [os, na, nb] = broadcast_shapes(av.shape(), bv.shape(), "mul");
  Tensor out(os);
  const std::size_t total = out.numel();
  for (std::size_t i = 0; i < total; ++i) out[i] = av[i % na] * bv[i % nb];
  return a.tape()->record(std::move(out), {a, b}, [a, b, na, nb, total](const Tensor& g, std::span<Tensor* const> gin) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (gin[0]) {
      for (std::size_t i = 0; i < total; ++i) (*gin[0])[i % na] += g[i] * bv[i % nb];
    }
    if (gin[1]) {
      for (std::size_t i = 0; i < total; ++i) (*gin[1])[i % nb] += g[i] * av[i % na];
    }
  });
}

Var add_scalar(Var a, double s) {
  Tensor out = map(a.value(), [s](double v) { return v + s; });
  return a.tape()->record(std::move(out), {a}, [](const Tensor& g, std::span<Tensor* const> gin) {
    for (std::size_t i = 0; i < g.numel(); ++i) (*gin[0])[i] += g[i];
  });
}

Var scale(Var a, double s) {
  Tensor out = map(a.value(), [s](double v) { return v * s; });
  return a.tape()->record(std::move(out), {a}, [s](const Tensor& g, std::span<Tensor* const> gin) {
    for (std::size_t i = 0; i < g.numel(); ++i) (*gin[0])[i] += s * g[i];
  });
}

Var one_minus(Var a) {
  Tensor out = map(a.value(), [](double v) { return 1.0 - v; });
  return a.tape()->record(std::move(out), {a}, [](const Tensor& g, std::span<Tensor* const> gin) {
    for (std::size_t i = 0; i < g.numel(); ++i) (*gin[0])[i] -= g[i];
  });
}

Var relu(Var x) {
  Tensor out = map(x.value(), [](double v) { return v > 0.0 ? v : 0.0; });
  return x.tape()->record(std::move(out), {x}, [x](const Tensor& g, std::span<Tensor* const> gin) {
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (xv[i] > 0.0) (*gin[0])[i] += g[i];
    }
  });
}

Var gelu(Var x) {
  Tensor out = map(x.value(), [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); });
  return x.tape()->record(std::move(out), {x}, [x](const Tensor& g, std::span<Tensor* const> gin) {
    const Tensor& xv = x.value();
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      (*gin[0])[i] += g[i] * (cdf + v * pdf);
    }
  });
}

Var sigmoid(Var x) {
  Tensor out = map(x.value(), [](double v) { return sigmoid(v); });
  Tape* tape = x.tape();
  auto y = std::make_shared<Var>();
  Var result = tape->record(std::move(out), {x}, [y](const Tensor& g, std::span<Tensor* const> gin) {
    const Tensor& yv = y->value();
    for (std::size_t i = 0; i < g.numel(); ++i) (*gin[0])[i] += g[i] * yv[i] * (1.0 - yv[i]);
  });
  *y = result;
  return result;
}

Var softmax(Var x, std::size_t axis) {
  const Tensor& xv = x.value();
  const auto [outer, n, inner] = split_at(xv.shape(), axis, "softmax");
  Tensor out(xv.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
    }
  }
  auto y = std::make_shared<Var>();
  Var result = x.tape()->record(std::move(out), {x},
                                [y, outer = outer, n = n, inner = inner](const Tensor& g, std::span<Tensor* const> gin) {
                                  const Tensor& yv = y->value();
                                  Tensor& gx = *gin[0];
                                  for (std::size_t o = 0; o < outer; ++o) {
                                    for (std::size_t in = 0; in < inner; ++in) {
                                      const std::size_t base = o * n * inner + in;
                                      double dotp = 0.0;
                                      for (std::size_t j = 0; j < n; ++j) {
                                        dotp += g[base + j * inner] * yv[base + j * inner];
                                      }
                                      for (std::size_t j = 0; j < n; ++j) {
                                        const std::size_t idx = base + j * inner;
                                        gx[idx] += yv[idx] * (g[idx] - dotp);
                                      }
                                    }
                                  }
                                });
  *y = result;
  return result;
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = x.value();
  const std::size_t d = xv.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw ShapeError("layer_norm: gamma " + shape_str(gamma.shape()) + " / beta " + shape_str(beta.shape()) +
                     " must match last extent of " + shape_str(xv.shape()));
  }
  if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: eps must be positive");
  const std::size_t rows = xv.numel() / d;
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();

  auto xhat = std::make_shared<std::vector<double>>(xv.numel());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.ptr() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xr[j] - mu) * rs;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  return x.tape()->record(
      std::move(out), {x, gamma, beta}, [gamma, xhat, rstd, rows, d](const Tensor& g, std::span<Tensor* const> gin) {
        const Tensor& gv = gamma.value();
        const auto& h = *xhat;
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g.ptr() + r * d;
          const double* hr = h.data() + r * d;
          if (gin[1]) {
            for (std::size_t j = 0; j < d; ++j) (*gin[1])[j] += gr[j] * hr[j];
          }
          if (gin[2]) {
            for (std::size_t j = 0; j < d; ++j) (*gin[2])[j] += gr[j];
          }
          if (gin[0]) {
            double mean_dh = 0.0;
            double mean_dh_h = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = gr[j] * gv[j];
              mean_dh += dh;
              mean_dh_h += dh * hr[j];
            }
            mean_dh *= inv_d;
            mean_dh_h *= inv_d;
            double* gx = gin[0]->ptr() + r * d;
            for (std::size_t j = 0; j < d; ++j) {
              gx[j] += (*rstd)[r] * (gr[j] * gv[j] - mean_dh - hr[j] * mean_dh_h);
            }
          }
        }
      });
}

Var mean(Var x, std::size_t axis) {
  const Tensor& xv = x.value();
  const auto [outer, n, inner] = split_at(xv.shape(), axis, "mean");
  Shape os;
  for (std::size_t i = 0; i < xv.rank(); ++i) {
    if (i != axis) os.push_back(xv.dim(i));
  }
  if (os.empty()) os.push_back(1);
  Tensor out(os);
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += xv[(o * n + j) * inner + in];
      out[o * inner + in] = s * inv;
    }
  }
  return x.tape()->record(std::move(out), {x},
                          [outer = outer, n = n, inner = inner, inv](const Tensor& g, std::span<Tensor* const> gin) {
                            for (std::size_t o = 0; o < outer; ++o) {
                              for (std::size_t in = 0; in < inner; ++in) {
                                const double gv = g[o * inner + in] * inv;
                                for (std::size_t j = 0; j < n; ++j) (*gin[0])[(o * n + j) * inner + in] += gv;
                              }
                            }
                          });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape()->record(Tensor::scalar(s), {x}, [](const Tensor& g, std::span<Tensor* const> gin) {
    for (double& v : gin[0]->data()) v += g[0];
  });
}

Var mean_all(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().numel())); }

Var broadcast_batch(Var x, std::size_t count) {
  if (count == 0) throw ShapeError("broadcast_batch: count must be positive");
  const Tensor& xv = x.value();
  Shape os{count};
  os.insert(os.end(), xv.shape().begin(), xv.shape().end());
  Tensor out(os);
  const std::size_t n = xv.numel();
  for (std::size_t b = 0; b < count; ++b) std::copy(xv.ptr(), xv.ptr() + n, out.ptr() + b * n);
  return x.tape()->record(std::move(out), {x}, [count, n](const Tensor& g, std::span<Tensor* const> gin) {
    for (std::size_t b = 0; b < count; ++b) {
      for (std::size_t i = 0; i < n; ++i) (*gin[0])[i] += g[b * n + i];
    }
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape()->record(std::move(out), {x}, [](const Tensor& g, std::span<Tensor* const> gin) {
    for (std::size_t i = 0; i < g.numel(); ++i) (*gin[0])[i] += g[i];
  });
}

Var swap_axes12(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 4) throw ShapeError("swap_axes12 expects rank 4, got " + shape_str(xv.shape()));
  const std::size_t a = xv.dim(0), b = xv.dim(1), c = xv.dim(2), d = xv.dim(3);
  Tensor out(Shape{a, c, b, d});
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      for (std::size_t k = 0; k < c; ++k)
        std::copy_n(xv.ptr() + ((i * b + j) * c + k) * d, d, out.ptr() + ((i * c + k) * b + j) * d);
  return x.tape()->record(std::move(out), {x}, [a, b, c, d](const Tensor& g, std::span<Tensor* const> gin) {
    for (std::size_t i = 0; i < a; ++i)
      for (std::size_t j = 0; j < b; ++j)
        for (std::size_t k = 0; k < c; ++k) {
          const double* src = g.ptr() + ((i * c + k) * b + j) * d;
          double* dst = gin[0]->ptr() + ((i * b + j) * c + k) * d;
          for (std::size_t l = 0; l < d; ++l) dst[l] += src[l];
        }
  });
}

Var dropout(Var x, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
  if (rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor mask(x.shape());
  for (double& m : mask.data()) m = rng.uniform() < rate ? 0.0 : keep_scale;
  return mul(x, x.tape()->constant(std::move(mask)));
}

namespace {

template <class F>
Tensor eval_no_grad(F f) {
  Tape tape;
  tape.set_grad_enabled(false);
  return f(tape).value();
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  return eval_no_grad([&](Tape& t) { return matmul(t.constant(a), t.constant(b)); });
}
Tensor sigmoid(const Tensor& x) {
  return eval_no_grad([&](Tape& t) { return sigmoid(t.constant(x)); });
}
Tensor softmax(const Tensor& x, std::size_t axis) {
  return eval_no_grad([&](Tape& t) { return softmax(t.constant(x), axis); });
}
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  return eval_no_grad([&](Tape& t) { return layer_norm(t.constant(x), t.constant(gamma), t.constant(beta), eps); });
}
Tensor relu(const Tensor& x) {
  return eval_no_grad([&](Tape& t) { return relu(t.constant(x)); });
}
Tensor mean(const Tensor& x, std::size_t axis) {
  return eval_no_grad([&](Tape& t) { return mean(t.constant(x), axis); });
}
Tensor add(const Tensor& a, const Tensor& b) {
  return eval_no_grad([&](Tape& t) { return add(t.constant(a), t.constant(b)); });
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return eval_no_grad([&](Tape& t) { return mul(t.constant(a), t.constant(b)); });
}

}  // namespace prionvit
