#include <immintrin.h>

#include "prionvit/kernels.hpp"

namespace prionvit::kernels {

namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    __m256d y0 = _mm256_loadu_pd(y + j);
    __m256d y1 = _mm256_loadu_pd(y + j + 4);
    y0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + j), y0);
    y1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + j + 4), y1);
    _mm256_storeu_pd(y + j, y0);
    _mm256_storeu_pd(y + j + 4, y1);
  }
  for (; j + 4 <= n; j += 4) {
    _mm256_storeu_pd(y + j, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + j), _mm256_loadu_pd(y + j)));
  }
  for (; j < n; ++j) y[j] += alpha * x[j];
}

double dot(std::size_t n, const double* x, const double* y) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4) s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  std::size_t i = 0;
  // Two rows of C per pass so each B row is loaded once for both.
  for (; i + 2 <= m; i += 2) {
    double* c0 = c + i * n;
    double* c1 = c0 + n;
    const double* a0 = a + i * k;
    const double* a1 = a0 + k;
    for (std::size_t p = 0; p < k; ++p) {
      const __m256d v0 = _mm256_set1_pd(a0[p]);
      const __m256d v1 = _mm256_set1_pd(a1[p]);
      const double* bp = b + p * n;
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        const __m256d bv = _mm256_loadu_pd(bp + j);
        _mm256_storeu_pd(c0 + j, _mm256_fmadd_pd(v0, bv, _mm256_loadu_pd(c0 + j)));
        _mm256_storeu_pd(c1 + j, _mm256_fmadd_pd(v1, bv, _mm256_loadu_pd(c1 + j)));
      }
      for (; j < n; ++j) {
        c0[j] += a0[p] * bp[j];
        c1[j] += a1[p] * bp[j];
      }
    }
  }
  for (; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) axpy(n, a[i * k + p], b + p * n, c + i * n);
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot(k, ai, b + j * k);
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) axpy(n, ap[i], bp, c + i * n);
  }
}

void complex_axpy(std::size_t n, double cr, double ci, const double* xr, const double* xi, double* yr,
                  double* yi) {
  const __m256d vr = _mm256_set1_pd(cr);
  const __m256d vi = _mm256_set1_pd(ci);
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    const __m256d r = _mm256_loadu_pd(xr + j);
    const __m256d im = _mm256_loadu_pd(xi + j);
    __m256d outr = _mm256_fmadd_pd(vr, r, _mm256_loadu_pd(yr + j));
    outr = _mm256_fnmadd_pd(vi, im, outr);
    __m256d outi = _mm256_fmadd_pd(vr, im, _mm256_loadu_pd(yi + j));
    outi = _mm256_fmadd_pd(vi, r, outi);
    _mm256_storeu_pd(yr + j, outr);
    _mm256_storeu_pd(yi + j, outi);
  }
  for (; j < n; ++j) {
    yr[j] += cr * xr[j] - ci * xi[j];
    yi[j] += cr * xi[j] + ci * xr[j];
  }
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{Backend::Avx2, gemm_nn, gemm_nt, gemm_tn, dot, axpy, complex_axpy};
  return table;
}

}  // namespace prionvit::kernels
