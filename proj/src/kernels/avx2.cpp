#include "egal/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define EGAL_HAVE_AVX2 1
#else
#define EGAL_HAVE_AVX2 0
#endif

namespace egal::kernels::avx2 {

#if EGAL_HAVE_AVX2

namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

}  // namespace

bool compiled() noexcept { return true; }

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void squared_distances(const double* query, const double* rows, std::size_t n, std::size_t d, double* out) {
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = rows + r * d;
    __m256d acc = _mm256_setzero_pd();
    std::size_t j = 0;
    for (; j + 4 <= d; j += 4) {
      const __m256d diff = _mm256_sub_pd(_mm256_loadu_pd(row + j), _mm256_loadu_pd(query + j));
      acc = _mm256_fmadd_pd(diff, diff, acc);
    }
    double s = hsum(acc);
    for (; j < d; ++j) {
      const double diff = row[j] - query[j];
      s += diff * diff;
    }
    out[r] = s;
  }
}

void gemv(const double* a, std::size_t rows, std::size_t cols, const double* x, double* out) {
  for (std::size_t i = 0; i < rows; ++i) out[i] = dot(a + i * cols, x, cols);
}

#else

bool compiled() noexcept { return false; }
double dot(const double* a, const double* b, std::size_t n) { return scalar::dot(a, b, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { scalar::axpy(alpha, x, y, n); }
void squared_distances(const double* query, const double* rows, std::size_t n, std::size_t d, double* out) {
  scalar::squared_distances(query, rows, n, d, out);
}
void gemv(const double* a, std::size_t rows, std::size_t cols, const double* x, double* out) {
  scalar::gemv(a, rows, cols, x, out);
}

#endif

}  // namespace egal::kernels::avx2
