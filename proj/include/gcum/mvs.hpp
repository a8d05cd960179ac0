#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "gcum/autodiff.hpp"
#include "gcum/config.hpp"

// Member variant simulation: random removal of group members plus a
// member-count-aware refinement of the group class token.
namespace gcum::mvs {

using Rng = std::mt19937_64;

// Per-member retain (1) / drop (0) bits. At least one bit is always set.
class Mask {
 public:
  explicit Mask(std::vector<std::uint8_t> bits);
  static Mask full(std::size_t n) { return Mask(std::vector<std::uint8_t>(n, 1)); }

  std::size_t size() const noexcept { return bits_.size(); }
  std::size_t retained_count() const noexcept;
  bool retained(std::size_t j) const { return bits_[j] != 0; }
  std::vector<std::size_t> retained_indices() const;
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

// p ~ Normal(mu, sigma) clamped into [p0, pmax].
double sample_drop_prob(const MvsConfig& cfg, Rng& rng);

// Independent bits, 0 with probability p. An all-zero draw keeps member 0.
Mask sample_mask(std::size_t n, double p, Rng& rng);

// Convenience: a fresh drop probability followed by a mask.
Mask sample(const MvsConfig& cfg, std::size_t n, Rng& rng);

struct MvsResult {
  ad::Var refined_token;     // t_s' (1×dim)
  ad::Var retained_members;  // S' (|m|×dim), input order preserved
  ad::Var sequence;          // F = [t_s' ; S'] ((1+|m|)×dim)
};

// S' = retained rows of S; q = mean_j (E^m row j ⊙ S' row j) over the first
// |m| rows of E^m; t_s' = t_s + q; F = [t_s' ; S'].
MvsResult apply_mvs(ad::Var class_token, ad::Var members, const Mask& mask, ad::Var quantity);

}  // namespace gcum::mvs
