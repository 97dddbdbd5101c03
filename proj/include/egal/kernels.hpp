#pragma once

// Dense double-precision kernels for the hot loops: pool-to-exemplar
// distances and the classifier's logit/gradient products.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The variant is picked once at startup from cpuid and can
// be overridden with set_backend() or the EGAL_SIMD environment variable
// ("scalar" or "avx2"). Results of the two backends agree to rounding (FMA
// contracts a*b+c), not bit-for-bit.

#include <cstddef>
#include <span>
#include <string_view>

namespace egal::kernels {

enum class Backend { kScalar, kAvx2 };

std::string_view backend_name(Backend b) noexcept;

/// True when this binary carries the variant and the CPU can run it.
bool backend_available(Backend b) noexcept;

Backend active_backend() noexcept;

/// Throws std::invalid_argument if the backend is unavailable.
void set_backend(Backend b);

/// Row-major view over n rows of length d.
struct MatrixView {
  const double* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::span<const double> row(std::size_t i) const { return {data + i * cols, cols}; }
};

double dot(std::span<const double> a, std::span<const double> b);

/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

/// out[i] = ||rows[i] - query||^2
void squared_distances(std::span<const double> query, MatrixView rows, std::span<double> out);

/// out = A x
void gemv(MatrixView a, std::span<const double> x, std::span<double> out);

// Direct access to each backend, for equivalence tests and benchmarks.
namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void squared_distances(const double* query, const double* rows, std::size_t n, std::size_t d, double* out);
void gemv(const double* a, std::size_t rows, std::size_t cols, const double* x, double* out);
}  // namespace scalar

namespace avx2 {
bool compiled() noexcept;
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void squared_distances(const double* query, const double* rows, std::size_t n, std::size_t d, double* out);
void gemv(const double* a, std::size_t rows, std::size_t cols, const double* x, double* out);
}  // namespace avx2

}  // namespace egal::kernels
