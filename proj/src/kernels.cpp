#include "gcum/kernels.hpp"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gcum::kernels {

namespace {

inline void matmul_rows(const double* a, const double* b, double* c, Dims d, std::size_t i) {
  double* ci = c + i * d.n;
  for (std::size_t j = 0; j < d.n; ++j) ci[j] = 0.0;
  const double* ai = a + i * d.k;
  for (std::size_t p = 0; p < d.k; ++p) {
    const double aip = ai[p];
    const double* bp = b + p * d.n;
    for (std::size_t j = 0; j < d.n; ++j) ci[j] += aip * bp[j];
  }
}

inline void matmul_nt_row(const double* a, const double* b, double* c, Dims d, std::size_t i) {
  const double* ai = a + i * d.k;
  for (std::size_t j = 0; j < d.n; ++j) {
    const double* bj = b + j * d.k;
    double acc = 0.0;
    for (std::size_t p = 0; p < d.k; ++p) acc += ai[p] * bj[p];
    c[i * d.n + j] = acc;
  }
}

inline void matmul_tn_row(const double* a, const double* b, double* c, Dims d, std::size_t i) {
  double* ci = c + i * d.n;
  for (std::size_t j = 0; j < d.n; ++j) ci[j] = 0.0;
  for (std::size_t p = 0; p < d.k; ++p) {
    const double api = a[p * d.m + i];
    const double* bp = b + p * d.n;
    for (std::size_t j = 0; j < d.n; ++j) ci[j] += api * bp[j];
  }
}

}  // namespace

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, Dims d) {
  for (std::size_t i = 0; i < d.m; ++i) matmul_rows(a.data(), b.data(), c.data(), d, i);
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, Dims d) {
  for (std::size_t i = 0; i < d.m; ++i) matmul_nt_row(a.data(), b.data(), c.data(), d, i);
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, Dims d) {
  for (std::size_t i = 0; i < d.m; ++i) matmul_tn_row(a.data(), b.data(), c.data(), d, i);
}

}  // namespace serial

namespace omp {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, Dims d) {
  const auto m = static_cast<long long>(d.m);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < m; ++i) {
    matmul_rows(a.data(), b.data(), c.data(), d, static_cast<std::size_t>(i));
  }
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, Dims d) {
  const auto m = static_cast<long long>(d.m);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < m; ++i) {
    matmul_nt_row(a.data(), b.data(), c.data(), d, static_cast<std::size_t>(i));
  }
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, Dims d) {
  const auto m = static_cast<long long>(d.m);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < m; ++i) {
    matmul_tn_row(a.data(), b.data(), c.data(), d, static_cast<std::size_t>(i));
  }
}

}  // namespace omp

namespace {
bool parallel_worthwhile(Dims d) {
#ifdef _OPENMP
  return d.m > 1 && d.m * d.k * d.n >= kParallelWork && !omp_in_parallel();
#else
  (void)d;
  return false;
#endif
}
}  // namespace

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, Dims d) {
  parallel_worthwhile(d) ? omp::matmul(a, b, c, d) : serial::matmul(a, b, c, d);
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, Dims d) {
  parallel_worthwhile(d) ? omp::matmul_nt(a, b, c, d) : serial::matmul_nt(a, b, c, d);
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, Dims d) {
  parallel_worthwhile(d) ? omp::matmul_tn(a, b, c, d) : serial::matmul_tn(a, b, c, d);
}

int threads_from_env() {
  const char* env = std::getenv("GCUM_THREADS");
  if (env == nullptr) return 0;
  try {
    const int n = std::stoi(env);
    return n > 0 ? n : 0;
  } catch (...) {
    return 0;
  }
}

void configure_threads_from_env() {
#ifdef _OPENMP
  if (const int n = threads_from_env(); n > 0) omp_set_num_threads(n);
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace gcum::kernels
