#pragma once

// Data-parallel inner loops. Every kernel has a scalar reference version and,
// when the build and the CPU allow it, an AVX2/FMA version. The active table is
// chosen once at startup (WAFERTOPO_SIMD=scalar|avx2|auto overrides the probe).
// The variants agree up to floating-point reassociation; see tests/test_simd.cpp.

#include <cstddef>
#include <string_view>

namespace wafertopo::simd {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
  Isa isa;
  // y[i] += a * x[i]
  void (*axpy_f32)(std::size_t n, float a, const float* x, float* y);
  void (*axpy_f64)(std::size_t n, double a, const double* x, double* y);
  // sum x[i] * y[i]
  float (*dot_f32)(std::size_t n, const float* x, const float* y);
  double (*dot_f64)(std::size_t n, const double* x, const double* y);
  // sum (x[i] - y[i])^2
  double (*sqdist_f64)(std::size_t n, const double* x, const double* y);
};

const KernelTable& scalar_kernels();
// nullptr when the AVX2 variant was not compiled in or the CPU lacks AVX2/FMA.
const KernelTable* avx2_kernels();
const KernelTable& active();
std::string_view isa_name(Isa isa);

inline void axpy(std::size_t n, float a, const float* x, float* y) { active().axpy_f32(n, a, x, y); }
inline void axpy(std::size_t n, double a, const double* x, double* y) { active().axpy_f64(n, a, x, y); }
inline float dot(std::size_t n, const float* x, const float* y) { return active().dot_f32(n, x, y); }
inline double dot(std::size_t n, const double* x, const double* y) { return active().dot_f64(n, x, y); }
inline double sqdist(std::size_t n, const double* x, const double* y) { return active().sqdist_f64(n, x, y); }

}  // namespace wafertopo::simd
