#pragma once

// Inner-loop kernels used by the tensor ops. Every kernel has a portable
// scalar reference plus vectorized variants (AVX2+FMA on x86-64, NEON on
// AArch64). The variant is picked once at startup from the CPU features and
// can be overridden with DOC_SIMD=scalar|avx2|neon or set_backend().
//
// Vector variants use a fixed accumulation order, so results are
// reproducible run to run on one machine, but they are not bit-identical to
// the scalar reference (different summation order, fused multiply-add).

#include <cstddef>
#include <span>
#include <string_view>

namespace doc::simd {

enum class Backend { kScalar, kAvx2, kNeon };

struct KernelTable {
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
};

bool backend_supported(Backend backend) noexcept;
Backend active_backend() noexcept;
// Throws doc::InputError if the backend is not available on this CPU/build.
void set_backend(Backend backend);
std::string_view backend_name(Backend backend) noexcept;

// Kernel table for an explicit backend; used by the equivalence tests.
const KernelTable& kernels(Backend backend);
const KernelTable& active_kernels() noexcept;

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active_kernels().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active_kernels().axpy(alpha, x.data(), y.data(), x.size());
}

// RAII override of the active backend, restored on scope exit.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend backend) : previous_(active_backend()) { set_backend(backend); }
  ~ScopedBackend() { set_backend(previous_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend previous_;
};

namespace detail {
double dot_scalar(const double* a, const double* b, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);
#if defined(__x86_64__) || defined(_M_X64)
double dot_avx2(const double* a, const double* b, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
#endif
#if defined(__aarch64__)
double dot_neon(const double* a, const double* b, std::size_t n);
void axpy_neon(double alpha, const double* x, double* y, std::size_t n);
#endif
}  // namespace detail

}  // namespace doc::simd
