#include "egal/kernels.hpp"

namespace egal::kernels::scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void squared_distances(const double* query, const double* rows, std::size_t n, std::size_t d, double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = rows + i * d;
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = r[j] - query[j];
      s += diff * diff;
    }
    out[i] = s;
  }
}

void gemv(const double* a, std::size_t rows, std::size_t cols, const double* x, double* out) {
  for (std::size_t i = 0; i < rows; ++i) out[i] = dot(a + i * cols, x, cols);
}

}  // namespace egal::kernels::scalar
