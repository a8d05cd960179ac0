#pragma once

#include <cstddef>
#include <span>

// Dense matrix kernels. Every kernel exists as a serial reference and an
// OpenMP variant; both accumulate each output element over the inner index in
// ascending order, so the two produce bit-identical results for any thread
// count.
namespace gcum::kernels {

struct Dims {
  std::size_t m;  // rows of the output
  std::size_t k;  // reduction length
  std::size_t n;  // cols of the output
};

namespace serial {
// c[m×n] = a[m×k] · b[k×n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, Dims d);
// c[m×n] = a[m×k] · b[n×k]ᵀ
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, Dims d);
// c[m×n] = a[k×m]ᵀ · b[k×n]
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, Dims d);
}  // namespace serial

namespace omp {
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, Dims d);
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, Dims d);
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, Dims d);
}  // namespace omp

// Work (m·k·n) above which the dispatching entry points use the OpenMP variant.
inline constexpr std::size_t kParallelWork = 1u << 16;

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, Dims d);
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, Dims d);
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, Dims d);

// Thread cap from GCUM_THREADS, or 0 when unset/invalid.
int threads_from_env();
// Applies GCUM_THREADS to the OpenMP runtime when set.
void configure_threads_from_env();
int max_threads();

}  // namespace gcum::kernels
