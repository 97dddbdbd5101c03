#include <atomic>
#include <cassert>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "egal/kernels.hpp"

namespace egal::kernels {

namespace {

bool cpu_has_avx2() noexcept {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend detect() noexcept {
  Backend best = backend_available(Backend::kAvx2) ? Backend::kAvx2 : Backend::kScalar;
  if (const char* env = std::getenv("EGAL_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return Backend::kScalar;
    if (want == "avx2" && backend_available(Backend::kAvx2)) return Backend::kAvx2;
  }
  return best;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> b{detect()};
  return b;
}

}  // namespace

std::string_view backend_name(Backend b) noexcept {
  switch (b) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
  }
  return "unknown";
}

bool backend_available(Backend b) noexcept {
  switch (b) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
      return avx2::compiled() && cpu_has_avx2();
  }
  return false;
}

Backend active_backend() noexcept { return current().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  if (!backend_available(b)) {
    throw std::invalid_argument("kernel backend not available: " + std::string(backend_name(b)));
  }
  current().store(b, std::memory_order_relaxed);
}

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return active_backend() == Backend::kAvx2 ? avx2::dot(a.data(), b.data(), a.size())
                                            : scalar::dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  if (active_backend() == Backend::kAvx2) {
    avx2::axpy(alpha, x.data(), y.data(), x.size());
  } else {
    scalar::axpy(alpha, x.data(), y.data(), x.size());
  }
}

void squared_distances(std::span<const double> query, MatrixView rows, std::span<double> out) {
  assert(query.size() == rows.cols && out.size() == rows.rows);
  if (active_backend() == Backend::kAvx2) {
    avx2::squared_distances(query.data(), rows.data, rows.rows, rows.cols, out.data());
  } else {
    scalar::squared_distances(query.data(), rows.data, rows.rows, rows.cols, out.data());
  }
}

void gemv(MatrixView a, std::span<const double> x, std::span<double> out) {
  assert(x.size() == a.cols && out.size() == a.rows);
  if (active_backend() == Backend::kAvx2) {
    avx2::gemv(a.data, a.rows, a.cols, x.data(), out.data());
  } else {
    scalar::gemv(a.data, a.rows, a.cols, x.data(), out.data());
  }
}

}  // namespace egal::kernels
