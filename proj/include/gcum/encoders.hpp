#pragma once

#include <span>
#include <string>
#include <vector>

#include "gcum/autodiff.hpp"
#include "gcum/model.hpp"

namespace gcum::encoders {

// Member appearances (n×d_a) → unit-norm member features (n×dim).
// Two-layer perceptron with a tanh hidden layer of width 2·dim.
ad::Var encode_members(const Bound& p, ad::Var appearances);
ad::Var encode_member(const Bound& p, const std::vector<double>& appearance);

// Single-head self-attention with a residual connection:
//   X + softmax(X·Wq · (Xk·Wk)ᵀ / sqrt(dim)) · Xk·Wv · Wo
// where Xk are the rows listed in key_rows (every row when empty).
ad::Var attention_block(const Bound& p, const std::string& prefix, ad::Var x,
                        std::span<const std::size_t> key_rows = {});

struct GroupPrefix {
  ad::Var class_token;  // 1×dim
  ad::Var members;      // n×dim
};

// First group-transformer block over [t_s ; member features]. Members outside
// key_members are not attended to, so a dropped member never influences the
// class token or any retained row.
GroupPrefix encode_group_prefix(const Bound& p, ad::Var member_features,
                                std::span<const std::size_t> key_members = {});

// Second block over F = [t_s' ; S'] and projection; returns the unit-norm
// class-token row (the group visual feature).
ad::Var encode_group_suffix(const Bound& p, ad::Var f);

// Token embeddings (L×dim) → unit-norm text feature (1×dim).
ad::Var encode_text(const Bound& p, ad::Var tokens);

}  // namespace gcum::encoders
