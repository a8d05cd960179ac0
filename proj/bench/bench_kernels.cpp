// Serial vs OpenMP timings for the hot paths. Each pair is also checked for
// bit-identical output. Usage: bench_kernels [repeats]
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <vector>

#include "gcum/eval.hpp"
#include "gcum/kernels.hpp"

using namespace gcum;

namespace {

double best_ms(int repeats, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void row(const char* name, double serial, double parallel, bool same) {
  std::printf("%-28s %10.3f %10.3f %8.2fx  %s\n", name, serial, parallel, serial / parallel, same ? "identical" : "DIFFER");
}

}  // namespace

int main(int argc, char** argv) {
  kernels::configure_threads_from_env();
  const int repeats = argc > 1 ? std::atoi(argv[1]) : 5;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto fill = [&](std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
  };

  std::printf("threads: %d\n", kernels::max_threads());
  std::printf("%-28s %10s %10s %9s\n", "kernel", "serial ms", "omp ms", "speedup");
  bool all_same = true;
  for (std::size_t n : {64u, 128u, 256u}) {
    const kernels::Dims d{n, n, n};
    const auto a = fill(n * n), b = fill(n * n);
    std::vector<double> cs(n * n), co(n * n);
    const double ts = best_ms(repeats, [&] { kernels::serial::matmul(a, b, cs, d); });
    const double to = best_ms(repeats, [&] { kernels::omp::matmul(a, b, co, d); });
    char name[64];
    std::snprintf(name, sizeof name, "matmul %zux%zu", n, n);
    row(name, ts, to, cs == co);
    all_same = all_same && cs == co;
  }

  const std::size_t queries = 400, gallery = 2000, dim = 64;
  Tensor q({queries, dim}), g({gallery, dim});
  for (auto& x : q.data()) x = u(rng);
  for (auto& x : g.data()) x = u(rng);
  std::vector<int> qg(queries), gg(gallery);
  for (std::size_t i = 0; i < queries; ++i) qg[i] = static_cast<int>(i);
  for (std::size_t i = 0; i < gallery; ++i) gg[i] = static_cast<int>(i % queries);
  std::vector<eval::RankedResult> rs, ro;
  const double ts = best_ms(repeats, [&] { rs = eval::serial::rank_all(q, qg, g, gg); });
  const double to = best_ms(repeats, [&] { ro = eval::omp::rank_all(q, qg, g, gg); });
  bool same = rs.size() == ro.size();
  for (std::size_t i = 0; same && i < rs.size(); ++i) same = rs[i].gallery_index == ro[i].gallery_index && rs[i].scores == ro[i].scores;
  row("rank_all 400x2000", ts, to, same);
  all_same = all_same && same;
  return all_same ? 0 : 1;
}
