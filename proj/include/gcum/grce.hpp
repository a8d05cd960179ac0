#pragma once

#include <vector>

#include "gcum/autodiff.hpp"
#include "gcum/model.hpp"
#include "gcum/mvs.hpp"
#include "gcum/synthdata.hpp"

namespace gcum::grce {

// Visual side of one group view up to (and excluding) the refinement.
struct GroupEncoding {
  ad::Var member_features;   // n×dim, member encoder output
  ad::Var retained_members;  // S' (|m|×dim), group-encoder rows kept by the mask
  ad::Var group_feature;     // V (1×dim), unit norm
  std::vector<std::size_t> retained;
};

// member encoder → group prefix → MVS (full mask when `mask` is null) → group suffix.
GroupEncoding encode_group(const Bound& p, const GroupSample& sample, const mvs::Mask* mask);

// V' = normalize( Σ_j softmax_j(<V·Wq, s_j·Wk> / sqrt(dim)) · s_j·Wv ).
// Rows of S' are first put in a canonical (lexicographic by value) order so
// the result does not depend on the order in which members arrive.
ad::Var refine(const Bound& p, ad::Var group_feature, ad::Var retained_members);

// Full stage-2 visual pipeline for one view.
ad::Var group_forward(const Bound& p, const GroupSample& sample, const mvs::Mask* mask);

}  // namespace gcum::grce
