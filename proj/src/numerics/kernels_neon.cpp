#include <arm_neon.h>

#include "prionvit/kernels.hpp"

namespace prionvit::kernels {

namespace {

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t j = 0;
  for (; j + 2 <= n; j += 2) vst1q_f64(y + j, vfmaq_f64(vld1q_f64(y + j), va, vld1q_f64(x + j)));
  for (; j < n; ++j) y[j] += alpha * x[j];
}

double dot(std::size_t n, const double* x, const double* y) {
  float64x2_t s0 = vdupq_n_f64(0.0);
  float64x2_t s1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 = vfmaq_f64(s0, vld1q_f64(x + i), vld1q_f64(y + i));
    s1 = vfmaq_f64(s1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(s0, s1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) axpy(n, a[i * k + p], b + p * n, c + i * n);
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot(k, a + i * k, b + j * k);
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t i = 0; i < m; ++i) axpy(n, a[p * m + i], b + p * n, c + i * n);
  }
}

void complex_axpy(std::size_t n, double cr, double ci, const double* xr, const double* xi, double* yr,
                  double* yi) {
  const float64x2_t vr = vdupq_n_f64(cr);
  const float64x2_t vi = vdupq_n_f64(ci);
  std::size_t j = 0;
  for (; j + 2 <= n; j += 2) {
    const float64x2_t r = vld1q_f64(xr + j);
    const float64x2_t im = vld1q_f64(xi + j);
    vst1q_f64(yr + j, vfmsq_f64(vfmaq_f64(vld1q_f64(yr + j), vr, r), vi, im));
    vst1q_f64(yi + j, vfmaq_f64(vfmaq_f64(vld1q_f64(yi + j), vr, im), vi, r));
  }
  for (; j < n; ++j) {
    yr[j] += cr * xr[j] - ci * xi[j];
    yi[j] += cr * xi[j] + ci * xr[j];
  }
}

}  // namespace

const KernelTable& neon_table() {
  static const KernelTable table{Backend::Neon, gemm_nn, gemm_nt, gemm_tn, dot, axpy, complex_axpy};
  return table;
}

}  // namespace prionvit::kernels
