#include <cstdlib>
#include <string>

#include "wafertopo/simd.hpp"

namespace wafertopo::simd {

namespace {

template <typename T>
void axpy_ref(std::size_t n, T a, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
T dot_ref(std::size_t n, const T* x, const T* y) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

double sqdist_ref(std::size_t n, const double* x, const double* y) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s;
}

constexpr KernelTable kScalar{Isa::Scalar, axpy_ref<float>, axpy_ref<double>, dot_ref<float>, dot_ref<double>,
                              sqdist_ref};

}  // namespace

#ifdef WAFERTOPO_HAVE_AVX2
const KernelTable& avx2_table();  // kernels_avx2.cpp
#endif

const KernelTable& scalar_kernels() { return kScalar; }

const KernelTable* avx2_kernels() {
#ifdef WAFERTOPO_HAVE_AVX2
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &avx2_table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() {
  static const KernelTable& table = [] () -> const KernelTable& {
    const char* env = std::getenv("WAFERTOPO_SIMD");
    const std::string choice = env ? env : "auto";
    if (choice == "scalar") return kScalar;
    if (const KernelTable* t = avx2_kernels()) return *t;
    return kScalar;
  }();
  return table;
}

std::string_view isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

}  // namespace wafertopo::simd
