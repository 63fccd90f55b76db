#pragma once

// Inner-loop arithmetic kernels. Each kernel has a scalar reference
// implementation and, where the target supports it, a SIMD variant. The active
// table is picked once at startup from CPU features and can be overridden with
// the PRION_VIT_KERNELS environment variable (scalar | avx2 | neon) or
// set_backend().
//
// All matrices are dense row-major. The gemm kernels accumulate into C.

#include <cstddef>
#include <string_view>
#include <vector>

namespace prionvit::kernels {

enum class Backend { Scalar, Avx2, Neon };

struct KernelTable {
  Backend backend;
  // C[m,n] += A[m,k] * B[k,n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
  // C[m,n] += A[m,k] * B[n,k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
  // C[m,n] += A[k,m]^T * B[k,n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
  double (*dot)(std::size_t n, const double* x, const double* y);
  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  // (yr + i yi) += (cr + i ci) * (xr + i xi), elementwise over n
  void (*complex_axpy)(std::size_t n, double cr, double ci, const double* xr, const double* xi, double* yr,
                       double* yi);
};

const KernelTable& scalar_table();
#if defined(PRIONVIT_HAVE_AVX2)
const KernelTable& avx2_table();
#endif
#if defined(PRIONVIT_HAVE_NEON)
const KernelTable& neon_table();
#endif

// Backends compiled in and supported by the running CPU.
std::vector<Backend> available_backends();
const KernelTable& table_for(Backend backend);
const KernelTable& active();
void set_backend(Backend backend);
std::string_view backend_name(Backend backend);
Backend parse_backend(std::string_view name);

}  // namespace prionvit::kernels
