#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "egal/kernels.hpp"

using namespace egal::kernels;

namespace {

std::vector<double> random_vec(std::mt19937_64& gen, std::size_t n) {
  std::normal_distribution<double> d(0.0, 3.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

// Reference implementations written independently of src/kernels.
double naive_dot(const std::vector<double>& a, const std::vector<double>& b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * b[i];
  return static_cast<double>(s);
}

void check_close(double a, double b, double scale) { CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, scale)); }

}  // namespace

TEST_CASE("scalar kernels match naive loops") {
  std::mt19937_64 gen(1);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 16u, 33u}) {
    auto a = random_vec(gen, n), b = random_vec(gen, n);
    check_close(scalar::dot(a.data(), b.data(), n), naive_dot(a, b), 100.0);

    auto y = b;
    scalar::axpy(0.5, a.data(), y.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == doctest::Approx(b[i] + 0.5 * a[i]));
  }
}

TEST_CASE("avx2 kernels agree with scalar on ragged sizes") {
  if (!backend_available(Backend::kAvx2)) {
    MESSAGE("AVX2 unavailable on this machine; skipping equivalence");
    return;
  }
  std::mt19937_64 gen(2);
  for (std::size_t d : {1u, 2u, 3u, 4u, 5u, 8u, 15u, 16u, 17u, 64u, 1023u}) {
    const std::size_t rows = 13;
    auto m = random_vec(gen, rows * d);
    auto q = random_vec(gen, d);

    const double ds = scalar::dot(m.data(), q.data(), d);
    const double dv = avx2::dot(m.data(), q.data(), d);
    check_close(ds, dv, std::abs(ds) + 10.0 * static_cast<double>(d));

    std::vector<double> ys(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(d)), yv = ys;
    scalar::axpy(-1.25, q.data(), ys.data(), d);
    avx2::axpy(-1.25, q.data(), yv.data(), d);
    for (std::size_t i = 0; i < d; ++i) check_close(ys[i], yv[i], std::abs(ys[i]));

    std::vector<double> out_s(rows), out_v(rows);
    scalar::squared_distances(q.data(), m.data(), rows, d, out_s.data());
    avx2::squared_distances(q.data(), m.data(), rows, d, out_v.data());
    for (std::size_t i = 0; i < rows; ++i) check_close(out_s[i], out_v[i], out_s[i]);

    scalar::gemv(m.data(), rows, d, q.data(), out_s.data());
    avx2::gemv(m.data(), rows, d, q.data(), out_v.data());
    for (std::size_t i = 0; i < rows; ++i) check_close(out_s[i], out_v[i], std::abs(out_s[i]) + 10.0 * static_cast<double>(d));
  }
}

TEST_CASE("squared distances and gemv follow their definitions") {
  const std::vector<double> m = {0, 0, 3, 4, -1, 1};
  const std::vector<double> q = {1, 0};
  std::vector<double> out(3);
  squared_distances(q, {m.data(), 3, 2}, out);
  CHECK(out == std::vector<double>{1, 20, 5});
  gemv({m.data(), 3, 2}, q, out);
  CHECK(out == std::vector<double>{0, 3, -1});
}

TEST_CASE("backend switching") {
  const auto original = active_backend();
  set_backend(Backend::kScalar);
  CHECK(active_backend() == Backend::kScalar);
  CHECK(backend_name(Backend::kScalar) == "scalar");
  if (!backend_available(Backend::kAvx2)) CHECK_THROWS_AS(set_backend(Backend::kAvx2), std::invalid_argument);
  set_backend(original);
}
