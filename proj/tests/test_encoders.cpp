#include <doctest.h>

#include <cmath>
#include <random>

#include "gcum/encoders.hpp"
#include "gcum/error.hpp"
#include "gcum/gradcheck.hpp"
#include "model_fixture.hpp"
#include "support.hpp"

using namespace gcum;
using gcum::testing::random_tensor;
using gcum::testing::small_model;

namespace {

double norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v * v;
  return std::sqrt(s);
}

// Weighted readout so every output coordinate matters.
ad::Var readout(const Bound& p, ad::Var v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ad::sum(ad::mul(v, p.graph().constant(random_tensor({v.rows(), v.cols()}, rng))));
}

}  // namespace

TEST_CASE("member encoder: zero weights give zero output") {
  auto m = small_model(1);
  for (const char* n : {param::kMemberW1, param::kMemberB1, param::kMemberW2, param::kMemberB2}) {
    for (auto& v : m.at(n).data()) v = 0.0;
  }
  ad::Graph g;
  const Bound p(g, m);
  const auto f = encoders::encode_member(p, {0.3, -0.1, 0.5, 0.2, 0.9});
  for (double v : f.value().values()) CHECK(v == 0.0);
}

TEST_CASE("member encoder: identical appearances give identical unit features") {
  const auto m = small_model(2);
  ad::Graph g;
  const Bound p(g, m);
  const std::vector<double> a{0.3, -0.1, 0.5, 0.2, 0.9};
  const auto f1 = encoders::encode_member(p, a);
  const auto f2 = encoders::encode_member(p, a);
  CHECK(f1.value() == f2.value());
  CHECK(f1.cols() == 8);
  CHECK(std::abs(norm(f1.value()) - 1.0) < 1e-12);
  CHECK_THROWS_AS(encoders::encode_member(p, {1.0, 2.0}), ShapeError);
}

TEST_CASE("member encoder gradient matches central differences") {
  const auto m = small_model(3);
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({3, 5}, rng);
  const auto report = gradcheck::grad_check(
      [&](const Bound& p) { return readout(p, encoders::encode_members(p, p.graph().constant(x)), 30); }, m,
      {param::kMemberW1, param::kMemberB1, param::kMemberW2, param::kMemberB2});
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("group prefix shapes and range") {
  const auto m = small_model(4);
  std::mt19937_64 rng(4);
  ad::Graph g;
  const Bound p(g, m);
  const auto one = encoders::encode_group_prefix(p, g.constant(random_tensor({1, 8}, rng)));
  CHECK(one.members.rows() == 1);
  CHECK(one.class_token.rows() == 1);
  CHECK(one.class_token.cols() == 8);
  CHECK_THROWS_AS(encoders::encode_group_prefix(p, g.constant(random_tensor({5, 8}, rng))), PreconditionError);
}

TEST_CASE("group prefix with a silent block is the identity") {
  auto m = small_model(5);
  for (auto& v : m.at("group.block1.wo").data()) v = 0.0;
  std::mt19937_64 rng(5);
  const Tensor s = random_tensor({3, 8}, rng);
  ad::Graph g;
  const Bound p(g, m);
  const auto out = encoders::encode_group_prefix(p, g.constant(s));
  CHECK(out.members.value() == s);
  for (std::size_t k = 0; k < 8; ++k) CHECK(out.class_token.value()[k] == m.at(param::kGroupCls)[k]);
}

TEST_CASE("group prefix gradient matches central differences") {
  const auto m = small_model(6);
  std::mt19937_64 rng(6);
  const Tensor s = random_tensor({3, 8}, rng);
  const auto report = gradcheck::grad_check(
      [&](const Bound& p) {
        const auto out = encoders::encode_group_prefix(p, p.graph().constant(s));
        return ad::add(readout(p, out.class_token, 61), readout(p, out.members, 62));
      },
      m, {param::kGroupCls, "group.block1.wq", "group.block1.wk", "group.block1.wv", "group.block1.wo"});
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("group suffix needs a member row and returns a unit vector") {
  const auto m = small_model(7);
  std::mt19937_64 rng(7);
  ad::Graph g;
  const Bound p(g, m);
  CHECK_THROWS_AS(encoders::encode_group_suffix(p, g.constant(random_tensor({1, 8}, rng))), PreconditionError);
  const auto v = encoders::encode_group_suffix(p, g.constant(random_tensor({4, 8}, rng)));
  CHECK(v.rows() == 1);
  CHECK(std::abs(norm(v.value()) - 1.0) < 1e-12);
}

TEST_CASE("group suffix with uniform attention ignores member order") {
  auto m = small_model(8);
  for (auto& v : m.at("group.block2.wq").data()) v = 0.0;
  std::mt19937_64 rng(8);
  const Tensor f = random_tensor({4, 8}, rng);
  Tensor permuted = f;
  const std::size_t order[] = {0, 3, 1, 2};
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 8; ++c) permuted.at(r, c) = f.at(order[r], c);
  }
  ad::Graph g;
  const Bound p(g, m);
  const auto a = encoders::encode_group_suffix(p, g.constant(f)).value();
  const auto b = encoders::encode_group_suffix(p, g.constant(permuted)).value();
  for (std::size_t k = 0; k < 8; ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-12));

  // The class-token row attends to the rows as a set, so live weights agree up
  // to summation order as well.
  auto m2 = small_model(8);
  ad::Graph g2;
  const Bound p2(g2, m2);
  const auto c = encoders::encode_group_suffix(p2, g2.constant(f)).value();
  const auto d = encoders::encode_group_suffix(p2, g2.constant(permuted)).value();
  for (std::size_t k = 0; k < 8; ++k) CHECK(c[k] == doctest::Approx(d[k]).epsilon(1e-12));
}

TEST_CASE("text encoder contracts") {
  const auto m = small_model(9);
  std::mt19937_64 rng(9);
  const Tensor tokens = random_tensor({7, 8}, rng);
  ad::Graph g;
  const Bound p(g, m);
  const auto t1 = encoders::encode_text(p, g.constant(tokens));
  const auto t2 = encoders::encode_text(p, g.constant(tokens));
  CHECK(t1.value() == t2.value());
  CHECK(std::abs(norm(t1.value()) - 1.0) < 1e-12);
  const auto max_len = static_cast<std::size_t>(m.arch.max_prompt_len());
  CHECK_NOTHROW(encoders::encode_text(p, g.constant(random_tensor({max_len, 8}, rng))));
  CHECK_THROWS_AS(encoders::encode_text(p, g.constant(random_tensor({max_len + 1, 8}, rng))), PreconditionError);
}

TEST_CASE("init is seeded and bit-identical") {
  Arch arch;
  arch.n_identities = 12;
  arch.n_classes = 4;
  CHECK(init_model(arch, 0.07, 5) == init_model(arch, 0.07, 5));
  CHECK_FALSE(init_model(arch, 0.07, 5) == init_model(arch, 0.07, 6));
  const auto m = init_model(arch, 0.07, 5);
  for (double v : m.at(param::kQuantity).values()) CHECK(v == 0.0);
  CHECK(m.at(param::kQuantity).shape() == Shape{6, 64});
  CHECK(m.at(param::kLogitScale)[0] == doctest::Approx(std::log(1.0 / 0.07)));
  CHECK(m.at(param::kTokens).shape() == Shape{12 * 4, 64});
  CHECK(m.at(param::kTextPos).rows() == static_cast<std::size_t>(arch.max_prompt_len()));
}

TEST_CASE("checkpoint round-trip and corruption") {
  const auto m = small_model(10);
  const auto bytes = encode_checkpoint(m);
  CHECK(bytes.substr(0, 4) == "GCUM");
  CHECK(decode_checkpoint(bytes) == m);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), ParseError);
  std::string bad = bytes;
  bad[4] = 7;
  CHECK_THROWS_AS(decode_checkpoint(bad), VersionError);
  CHECK_THROWS(decode_checkpoint(bytes + "x"));
  CHECK_THROWS(decode_checkpoint("NOPE"));
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/model.ckpt"), MissingCheckpointError);
}

TEST_CASE("infer_arch recovers sizes and rejects inconsistent tables") {
  const auto m = small_model(11);
  CHECK(infer_arch(m.params) == m.arch);
  auto broken = m.params;
  broken[param::kGrceWq] = Tensor::zeros({3, 3});
  CHECK_THROWS_AS(infer_arch(broken), ShapeError);
}
