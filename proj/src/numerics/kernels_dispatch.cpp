#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "prionvit/kernels.hpp"

namespace prionvit::kernels {

namespace {

bool cpu_supports(Backend backend) {
  switch (backend) {
    case Backend::Scalar:
      return true;
    case Backend::Avx2:
#if defined(PRIONVIT_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::Neon:
#if defined(PRIONVIT_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Backend detect() {
  if (const char* env = std::getenv("PRION_VIT_KERNELS"); env && *env) {
    const Backend wanted = parse_backend(env);
    if (!cpu_supports(wanted)) {
      throw std::runtime_error(std::string("PRION_VIT_KERNELS=") + env + " is not supported on this CPU");
    }
    return wanted;
  }
  if (cpu_supports(Backend::Avx2)) return Backend::Avx2;
  if (cpu_supports(Backend::Neon)) return Backend::Neon;
  return Backend::Scalar;
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{&table_for(detect())};
  return table;
}

}  // namespace

std::vector<Backend> available_backends() {
  std::vector<Backend> out;
  for (Backend b : {Backend::Scalar, Backend::Avx2, Backend::Neon}) {
    if (cpu_supports(b)) out.push_back(b);
  }
  return out;
}

const KernelTable& table_for(Backend backend) {
  if (!cpu_supports(backend)) {
    throw std::runtime_error("kernel backend " + std::string(backend_name(backend)) + " is unavailable");
  }
  switch (backend) {
#if defined(PRIONVIT_HAVE_AVX2)
    case Backend::Avx2:
      return avx2_table();
#endif
#if defined(PRIONVIT_HAVE_NEON)
    case Backend::Neon:
      return neon_table();
#endif
    default:
      return scalar_table();
  }
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

void set_backend(Backend backend) { current().store(&table_for(backend), std::memory_order_relaxed); }

std::string_view backend_name(Backend backend) {
  switch (backend) {
    case Backend::Scalar:
      return "scalar";
    case Backend::Avx2:
      return "avx2";
    case Backend::Neon:
      return "neon";
  }
  return "unknown";
}

Backend parse_backend(std::string_view name) {
  if (name == "scalar") return Backend::Scalar;
  if (name == "avx2") return Backend::Avx2;
  if (name == "neon") return Backend::Neon;
  throw std::invalid_argument("unknown kernel backend '" + std::string(name) + "'");
}

}  // namespace prionvit::kernels
