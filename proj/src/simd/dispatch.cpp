#include <atomic>
#include <cstdlib>
#include <string>

#include "doc/errors.hpp"
#include "doc/simd.hpp"

namespace doc::simd {
namespace {

constexpr KernelTable kScalarTable{&detail::dot_scalar, &detail::axpy_scalar};
#if defined(__x86_64__) || defined(_M_X64)
constexpr KernelTable kAvx2Table{&detail::dot_avx2, &detail::axpy_avx2};
#endif
#if defined(__aarch64__)
constexpr KernelTable kNeonTable{&detail::dot_neon, &detail::axpy_neon};
#endif

Backend detect_best() noexcept {
  if (backend_supported(Backend::kAvx2)) return Backend::kAvx2;
  if (backend_supported(Backend::kNeon)) return Backend::kNeon;
  return Backend::kScalar;
}

Backend initial_backend() noexcept {
  if (const char* env = std::getenv("DOC_SIMD")) {
    const std::string value(env);
    if (value == "scalar") return Backend::kScalar;
    if (value == "avx2" && backend_supported(Backend::kAvx2)) return Backend::kAvx2;
    if (value == "neon" && backend_supported(Backend::kNeon)) return Backend::kNeon;
  }
  return detect_best();
}

std::atomic<const KernelTable*>& active_table() {
  static std::atomic<const KernelTable*> table{&kernels(initial_backend())};
  return table;
}

}  // namespace

bool backend_supported(Backend backend) noexcept {
  switch (backend) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::kNeon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& kernels(Backend backend) {
  if (!backend_supported(backend)) {
    throw InputError("SIMD backend '" + std::string(backend_name(backend)) +
                     "' is not supported on this machine");
  }
  switch (backend) {
#if defined(__x86_64__) || defined(_M_X64)
    case Backend::kAvx2:
      return kAvx2Table;
#endif
#if defined(__aarch64__)
    case Backend::kNeon:
      return kNeonTable;
#endif
    default:
      return kScalarTable;
  }
}

const KernelTable& active_kernels() noexcept { return *active_table().load(std::memory_order_relaxed); }

Backend active_backend() noexcept {
  const KernelTable* table = active_table().load(std::memory_order_relaxed);
#if defined(__x86_64__) || defined(_M_X64)
  if (table == &kAvx2Table) return Backend::kAvx2;
#endif
#if defined(__aarch64__)
  if (table == &kNeonTable) return Backend::kNeon;
#endif
  (void)table;
  return Backend::kScalar;
}

void set_backend(Backend backend) { active_table().store(&kernels(backend), std::memory_order_relaxed); }

std::string_view backend_name(Backend backend) noexcept {
  switch (backend) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
    case Backend::kNeon:
      return "neon";
  }
  return "unknown";
}

}  // namespace doc::simd
