#include "gcum/encoders.hpp"

#include <cmath>
#include <numeric>

#include "gcum/error.hpp"

namespace gcum::encoders {

using namespace gcum::ad;

Var encode_members(const Bound& p, Var appearances) {
  if (appearances.cols() != static_cast<std::size_t>(p.arch().d_a)) {
    throw ShapeError("member appearance length " + std::to_string(appearances.cols()) + " differs from d_a " +
                     std::to_string(p.arch().d_a));
  }
  const Var hidden = ad::tanh(add_row(matmul(appearances, p[param::kMemberW1]), p[param::kMemberB1]));
  return l2_normalize(add_row(matmul(hidden, p[param::kMemberW2]), p[param::kMemberB2]));
}

Var encode_member(const Bound& p, const std::vector<double>& appearance) {
  auto& g = p.graph();
  return encode_members(p, g.constant(Tensor::matrix(1, appearance.size(), appearance)));
}

Var attention_block(const Bound& p, const std::string& prefix, Var x, std::span<const std::size_t> key_rows) {
  const Var keys_src = key_rows.empty() ? x : select_rows(x, key_rows);
  const Var q = matmul(x, p[prefix + ".wq"]);
  const Var k = matmul(keys_src, p[prefix + ".wk"]);
  const Var v = matmul(keys_src, p[prefix + ".wv"]);
  const double inv_sqrt_dim = 1.0 / std::sqrt(static_cast<double>(p.arch().dim));
  const Var weights = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt_dim));
  return add(x, matmul(matmul(weights, v), p[prefix + ".wo"]));
}

GroupPrefix encode_group_prefix(const Bound& p, Var member_features, std::span<const std::size_t> key_members) {
  const std::size_t n = member_features.rows();
  if (n < 1 || n > static_cast<std::size_t>(p.arch().M0)) {
    throw PreconditionError("group has " + std::to_string(n) + " members; expected 1.." + std::to_string(p.arch().M0));
  }
  const Var cls = p[param::kGroupCls];
  const Var cls_row = select_rows(cls, std::vector<std::size_t>{0});
  const Var x = concat_rows({cls_row, member_features});

  std::vector<std::size_t> keys{0};
  if (key_members.empty()) {
    for (std::size_t j = 0; j < n; ++j) keys.push_back(j + 1);
  } else {
    for (auto j : key_members) {
      if (j >= n) throw PreconditionError("key member index out of range");
      keys.push_back(j + 1);
    }
  }
  const Var y = attention_block(p, "group.block1", x, keys);
  std::vector<std::size_t> member_rows(n);
  std::iota(member_rows.begin(), member_rows.end(), std::size_t{1});
  return {select_rows(y, std::vector<std::size_t>{0}), select_rows(y, member_rows)};
}

Var encode_group_suffix(const Bound& p, Var f) {
  if (f.rows() < 2) throw PreconditionError("group suffix needs the class token plus at least one member");
  const Var y = attention_block(p, "group.block2", f);
  return l2_normalize(matmul(select_rows(y, std::vector<std::size_t>{0}), p[param::kGroupProj]));
}

Var encode_text(const Bound& p, Var tokens) {
  const std::size_t len = tokens.rows();
  if (len == 0 || len > static_cast<std::size_t>(p.arch().max_prompt_len())) {
    throw PreconditionError("prompt length " + std::to_string(len) + " exceeds the maximum " +
                            std::to_string(p.arch().max_prompt_len()));
  }
  std::vector<std::size_t> positions(len);
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  const Var x = add(tokens, select_rows(p[param::kTextPos], positions));
  const Var y = attention_block(p, "text.block", x);
  return l2_normalize(matmul(mean_rows(y), p[param::kTextProj]));
}

}  // namespace gcum::encoders
