#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "gcum/autodiff.hpp"
#include "gcum/tensor.hpp"

namespace gcum::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

using GraphFn = std::function<ad::Var(const std::vector<ad::Var>&)>;

// Largest |fd − ad| / max(1e-8, |fd| + |ad|) over every entry of every input.
inline double max_fd_error(const GraphFn& f, const std::vector<Tensor>& inputs, double h = 1e-5) {
  ad::Graph g;
  std::vector<ad::Var> vars;
  for (const auto& t : inputs) vars.push_back(g.leaf(t));
  g.backward(f(vars));

  auto eval = [&](const std::vector<Tensor>& xs) {
    ad::Graph h2;
    std::vector<ad::Var> vs;
    for (const auto& t : xs) vs.push_back(h2.constant(t));
    return f(vs).item();
  };
  double worst = 0.0;
  auto work = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor grad = g.grad(vars[i]);
    for (std::size_t k = 0; k < inputs[i].size(); ++k) {
      const double saved = work[i][k];
      work[i][k] = saved + h;
      const double up = eval(work);
      work[i][k] = saved - h;
      const double down = eval(work);
      work[i][k] = saved;
      const double fd = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(fd - grad[k]) / std::max(1e-8, std::abs(fd) + std::abs(grad[k])));
    }
  }
  return worst;
}

// Natural log of the softmax probability of entry k, in long double.
inline long double log_softmax_ref(const std::vector<long double>& x, std::size_t k) {
  const long double m = *std::max_element(x.begin(), x.end());
  long double z = 0.0L;
  for (auto v : x) z += std::exp(v - m);
  return x[k] - m - std::log(z);
}

// Σ_k −q_k log softmax(x)_k with q_true = 1 − ε + ε/N and q_other = ε/N.
inline long double smoothed_ce_ref(const std::vector<long double>& x, std::size_t true_class, long double eps) {
  const long double n = static_cast<long double>(x.size());
  long double loss = 0.0L;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const long double q = eps / n + (k == true_class ? 1.0L - eps : 0.0L);
    loss -= q * log_softmax_ref(x, k);
  }
  return loss;
}

}  // namespace gcum::testing
