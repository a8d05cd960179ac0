#include "gcum/mvs.hpp"

#include <algorithm>
#include <numeric>

#include "gcum/error.hpp"

namespace gcum::mvs {

Mask::Mask(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  if (bits_.empty()) throw PreconditionError("mask must cover at least one member");
  for (auto b : bits_) {
    if (b > 1) throw PreconditionError("mask bits must be 0 or 1");
  }
  if (retained_count() == 0) throw PreconditionError("mask must retain at least one member");
}

std::size_t Mask::retained_count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::vector<std::size_t> Mask::retained_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < bits_.size(); ++j) {
    if (bits_[j]) idx.push_back(j);
  }
  return idx;
}

double sample_drop_prob(const MvsConfig& cfg, Rng& rng) {
  double p = cfg.mu;
  if (cfg.sigma > 0.0) p = std::normal_distribution<double>(cfg.mu, cfg.sigma)(rng);
  return std::clamp(p, cfg.p0, cfg.pmax);
}

Mask sample_mask(std::size_t n, double p, Rng& rng) {
  if (n < 1) throw PreconditionError("mask needs n >= 1");
  if (!(p >= 0.0 && p < 1.0)) throw PreconditionError("drop probability must be in [0, 1)");
  std::bernoulli_distribution keep(1.0 - p);
  std::vector<std::uint8_t> bits(n);
  for (auto& b : bits) b = keep(rng) ? 1 : 0;
  if (std::none_of(bits.begin(), bits.end(), [](auto b) { return b != 0; })) bits[0] = 1;
  return Mask(std::move(bits));
}

Mask sample(const MvsConfig& cfg, std::size_t n, Rng& rng) {
  const double p = sample_drop_prob(cfg, rng);
  return sample_mask(n, p, rng);
}

MvsResult apply_mvs(ad::Var class_token, ad::Var members, const Mask& mask, ad::Var quantity) {
  if (mask.size() != members.rows()) {
    throw ShapeError("mask covers " + std::to_string(mask.size()) + " members but the group has " +
                     std::to_string(members.rows()));
  }
  const std::size_t kept = mask.retained_count();
  if (kept > quantity.rows()) {
    throw PreconditionError("retained " + std::to_string(kept) + " members but M0 is " +
                            std::to_string(quantity.rows()));
  }
  const auto idx = mask.retained_indices();
  const ad::Var retained = ad::select_rows(members, idx);
  std::vector<std::size_t> leading(kept);
  std::iota(leading.begin(), leading.end(), std::size_t{0});
  const ad::Var q = ad::mean_rows(ad::mul(ad::select_rows(quantity, leading), retained));
  const ad::Var refined = ad::add(class_token, q);
  const ad::Var parts[] = {refined, retained};
  return {refined, retained, ad::concat(parts, 0)};
}

}  // namespace gcum::mvs
