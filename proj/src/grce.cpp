#include "gcum/grce.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gcum/encoders.hpp"
#include "gcum/error.hpp"

namespace gcum::grce {

using namespace gcum::ad;

GroupEncoding encode_group(const Bound& p, const GroupSample& sample, const mvs::Mask* mask) {
  const std::size_t n = sample.members.size();
  if (n == 0) throw PreconditionError("group sample has no members");
  const auto d_a = static_cast<std::size_t>(p.arch().d_a);
  std::vector<double> appearances;
  appearances.reserve(n * d_a);
  for (const auto& m : sample.members) {
    if (m.appearance.size() != d_a) throw ShapeError("member appearance length differs from d_a");
    appearances.insert(appearances.end(), m.appearance.begin(), m.appearance.end());
  }
  auto& g = p.graph();
  const Var features = encoders::encode_members(p, g.constant(Tensor::matrix(n, d_a, std::move(appearances))));

  const mvs::Mask effective = mask ? *mask : mvs::Mask::full(n);
  const auto retained = effective.retained_indices();
  const auto prefix = encoders::encode_group_prefix(p, features, retained);
  const auto mv = mvs::apply_mvs(prefix.class_token, prefix.members, effective, p[param::kQuantity]);
  return {features, mv.retained_members, encoders::encode_group_suffix(p, mv.sequence), retained};
}

Var refine(const Bound& p, Var group_feature, Var retained_members) {
  const Tensor& s = retained_members.value();
  const std::size_t k = s.rows();
  if (k == 0) throw PreconditionError("refine needs at least one member");
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ra = s.row(a), rb = s.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });
  const Var members = select_rows(retained_members, order);

  const Var query = matmul(group_feature, p[param::kGrceWq]);
  const Var keys = matmul(members, p[param::kGrceWk]);
  const Var values = matmul(members, p[param::kGrceWv]);
  const double inv_sqrt_dim = 1.0 / std::sqrt(static_cast<double>(p.arch().dim));
  const Var weights = softmax_rows(scale(matmul(query, transpose(keys)), inv_sqrt_dim));
  return l2_normalize(matmul(weights, values));
}

Var group_forward(const Bound& p, const GroupSample& sample, const mvs::Mask* mask) {
  const auto enc = encode_group(p, sample, mask);
  return refine(p, enc.group_feature, enc.retained_members);
}

}  // namespace gcum::grce
