// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (0 = all pass).
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gcum/encoders.hpp"
#include "gcum/eval.hpp"
#include "gcum/gla.hpp"
#include "gcum/gradcheck.hpp"
#include "gcum/grce.hpp"
#include "gcum/kernels.hpp"
#include "gcum/losses.hpp"
#include "gcum/trainer.hpp"
#include "tiny_config.hpp"

using namespace gcum;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradTol = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr int kGradSeeds = 5;
constexpr double kGradBudgetSec = 60.0;
constexpr double kClosedFormTol = 1e-10;
constexpr int kMvsDraws = 100000;
constexpr double kMvsSigmas = 3.0;
constexpr double kMvsBudgetSec = 10.0;
constexpr int kMetricInstances = 200;
constexpr std::size_t kMetricMaxGallery = 20;
constexpr double kAblationMinGain = 0.05;
constexpr double kAblationBudgetSec = 300.0;
constexpr int kAblationSeeds = 3;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Seconds = std::chrono::duration<double>;

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

// 1 ------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_at;
  bool all = true;
  for (int seed = 1; seed <= kGradSeeds; ++seed) {
    for (const auto& e : gradcheck::run_suite(static_cast<std::uint64_t>(seed), kGradStep, kGradTol)) {
      all = all && e.report.passed();
      if (e.report.max_rel_error >= worst) {
        worst = e.report.max_rel_error;
        worst_at = e.loss + "@seed" + std::to_string(seed);
      }
    }
  }
  const double secs = Seconds(std::chrono::steady_clock::now() - t0).count();
  return {all && worst < kGradTol && secs < kGradBudgetSec,
          "max rel err " + fmt("%.2e", worst) + " (" + worst_at + "), " + fmt("%.1f s", secs)};
}

// 2 ------------------------------------------------------------------------

Outcome closed_forms() {
  double worst = 0.0;
  auto track = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };
  for (std::size_t batch : {2u, 4u, 8u}) {
    for (std::size_t classes : {2u, 3u, 5u}) {
      ad::Graph g;
      Tensor logits({batch, classes});
      for (auto& v : logits.data()) v = 0.731;
      std::vector<std::size_t> labels(batch);
      for (std::size_t i = 0; i < batch; ++i) labels[i] = i % classes;
      const auto l = g.constant(logits);
      track(gla::contrastive_t2i_mean(l, labels).item(), std::log(double(batch)));
      track(gla::contrastive_i2t_mean(l, labels).item(), std::log(double(classes)));
      for (std::size_t i = 0; i < batch; ++i) track(gla::contrastive_i2t(l, labels, i).item(), std::log(double(classes)));
      track(gla::contrastive_t2i(l, labels, labels[0]).item(), std::log(double(batch)));
    }
  }
  for (std::size_t n : {2u, 10u, 40u}) {
    for (double eps : {0.0, 0.1}) {
      ad::Graph g;
      Tensor logits({1, n});
      for (auto& v : logits.data()) v = -1.3;
      track(losses::id_loss(g.constant(logits), n - 1, eps).item(), std::log(double(n)));
    }
  }
  struct Hinge {
    double dp, dn, alpha, want;
  };
  const Hinge hinges[] = {{1.0, 0.5, 0.3, 0.8}, {0.5, 1.0, 0.3, 0.0}, {0.5, 0.75, 0.25, 0.0},
                          {2.0, 1.0, 0.0, 1.0}, {0.0, 0.0, 0.3, 0.3}};
  bool triplet_exact = true;
  for (const auto& h : hinges) {
    triplet_exact = triplet_exact && losses::triplet_loss(h.dp, h.dn, h.alpha) == h.want;
    ad::Graph g;
    const auto v = losses::triplet_loss(g.constant(Tensor::scalar(h.dp)), g.constant(Tensor::scalar(h.dn)), h.alpha);
    triplet_exact = triplet_exact && v.item() == h.want;
  }
  return {worst <= kClosedFormTol && triplet_exact,
          "max |err| " + fmt("%.1e", worst) + (triplet_exact ? ", hinges exact" : ", hinge mismatch")};
}

// 3 ------------------------------------------------------------------------

// E[p^k] for p = clamp(N(mu, sigma), lo, hi): Simpson on the interior plus
// the point masses at the clamp bounds.
double clamped_moment(double mu, double sigma, double lo, double hi, int k) {
  auto cdf = [&](double x) { return 0.5 * std::erfc(-(x - mu) / (sigma * std::sqrt(2.0))); };
  auto pdf = [&](double x) { return std::exp(-0.5 * std::pow((x - mu) / sigma, 2)) / (sigma * std::sqrt(2.0 * M_PI)); };
  const int n = 20000;
  const double h = (hi - lo) / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    acc += ((i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0)) * std::pow(x, k) * pdf(x);
  }
  return std::pow(lo, k) * cdf(lo) + acc * h / 3.0 + std::pow(hi, k) * (1.0 - cdf(hi));
}

Outcome mvs_statistics() {
  const auto t0 = std::chrono::steady_clock::now();
  const MvsConfig cfg{0.2, 0.1, 0.0, 0.5};
  const std::size_t n = 6;
  mvs::Rng rng(20240607);
  std::vector<long> dropped(n, 0);
  for (int i = 0; i < kMvsDraws; ++i) {
    const auto m = mvs::sample(cfg, n, rng);
    for (std::size_t j = 0; j < n; ++j) dropped[j] += m.retained(j) ? 0 : 1;
  }
  const double m1 = clamped_moment(cfg.mu, cfg.sigma, cfg.p0, cfg.pmax, 1);
  const double mn = clamped_moment(cfg.mu, cfg.sigma, cfg.p0, cfg.pmax, static_cast<int>(n));
  double worst_z = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    // Member 0 is kept whenever every other member was dropped too.
    const double expected = j == 0 ? m1 - mn : m1;
    const double se = std::sqrt(expected * (1.0 - expected) / kMvsDraws);
    worst_z = std::max(worst_z, std::abs(dropped[j] / double(kMvsDraws) - expected) / se);
  }
  const double secs = Seconds(std::chrono::steady_clock::now() - t0).count();
  return {worst_z < kMvsSigmas && secs < kMvsBudgetSec,
          "worst |z| " + fmt("%.2f", worst_z) + " over " + std::to_string(n) + " members, " + fmt("%.2f s", secs)};
}

// 4 ------------------------------------------------------------------------

// Drop member 1 of every view that has one; keep the rest.
std::vector<mvs::Mask> drop_second(const std::vector<GroupSample>& batch) {
  std::vector<mvs::Mask> masks;
  for (const auto& s : batch) {
    std::vector<std::uint8_t> bits(s.members.size(), 1);
    if (bits.size() > 1) bits[1] = 0;
    masks.emplace_back(bits);
  }
  return masks;
}

Outcome masking_invariance() {
  bool ok = true;
  int perturbed = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto fx = gradcheck::make_fixture(seed);
    const auto masks = drop_second(fx.batch);
    auto snapshot = [&](const std::vector<GroupSample>& batch) {
      std::vector<Tensor> out;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        ad::Graph g;
        const Bound p(g, fx.model);
        const auto enc = grce::encode_group(p, batch[i], &masks[i]);
        out.push_back(enc.retained_members.value());
        out.push_back(enc.group_feature.value());
        out.push_back(grce::refine(p, enc.group_feature, enc.retained_members).value());
      }
      {
        ad::Graph g;
        const Bound p(g, fx.model, stage1_trainable(true));
        const auto t = gla::stage1_loss(p, batch, masks, fx.index, true);
        out.push_back(t.total.value());
        g.backward(t.total);
        for (const auto& [name, grad] : p.gradients()) out.push_back(grad);
      }
      {
        ad::Graph g;
        const Bound p(g, fx.model, stage2_trainable());
        const auto t = losses::stage2_loss(p, batch, masks, fx.index, fx.text, fx.losses);
        out.push_back(t.total.value());
        g.backward(t.total);
        for (const auto& [name, grad] : p.gradients()) out.push_back(grad);
      }
      return out;
    };
    const auto before = snapshot(fx.batch);
    auto batch = fx.batch;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (masks[i].retained(1)) continue;
      for (double& v : batch[i].members[1].appearance) v = 3.0 * v + 1.5;
      ++perturbed;
    }
    ok = ok && snapshot(batch) == before;

    // Gradient wrt the raw member inputs, first view.
    const auto& s = fx.batch[0];
    const std::size_t d_a = static_cast<std::size_t>(fx.model.arch.d_a);
    Tensor x0({s.members.size(), d_a});
    for (std::size_t j = 0; j < s.members.size(); ++j) {
      for (std::size_t k = 0; k < d_a; ++k) x0.at(j, k) = s.members[j].appearance[k];
    }
    ad::Graph g;
    const Bound p(g, fx.model);
    const auto x = g.leaf(x0);
    const auto features = encoders::encode_members(p, x);
    const auto kept = masks[0].retained_indices();
    const auto prefix = encoders::encode_group_prefix(p, features, kept);
    const auto mv = mvs::apply_mvs(prefix.class_token, prefix.members, masks[0], p[param::kQuantity]);
    const auto v = encoders::encode_group_suffix(p, mv.sequence);
    const auto refined = grce::refine(p, v, mv.retained_members);
    g.backward(ad::add(ad::sum(refined), ad::sum(v)));
    const Tensor grad = g.grad(x);
    for (std::size_t j = 0; j < s.members.size(); ++j) {
      if (masks[0].retained(j)) continue;
      for (std::size_t k = 0; k < d_a; ++k) ok = ok && grad.at(j, k) == 0.0;
    }
  }
  return {ok && perturbed > 0, std::to_string(perturbed) + " dropped members perturbed across 5 fixtures"};
}

// 5 ------------------------------------------------------------------------

Outcome structural_invariances() {
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto fx = gradcheck::make_fixture(5);
  const auto dim = static_cast<std::size_t>(fx.model.arch.dim);
  int refine_trials = 0;
  bool refine_ok = true;
  for (std::size_t k = 1; k <= 6; ++k) {
    for (int t = 0; t < 20; ++t, ++refine_trials) {
      Tensor members({k, dim}), group({1, dim});
      for (auto& v : members.data()) v = u(rng);
      for (auto& v : group.data()) v = u(rng);
      std::vector<std::size_t> order(k);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      Tensor shuffled({k, dim});
      for (std::size_t r = 0; r < k; ++r) {
        for (std::size_t c = 0; c < dim; ++c) shuffled.at(r, c) = members.at(order[r], c);
      }
      ad::Graph g;
      const Bound p(g, fx.model);
      const auto a = grce::refine(p, g.constant(group), g.constant(members)).value();
      const auto b = grce::refine(p, g.constant(group), g.constant(shuffled)).value();
      refine_ok = refine_ok && a == b;
    }
  }
  Arch arch;
  arch.n_identities = 30;
  arch.n_classes = 4;
  bool prompt_ok = true;
  for (int t = 0; t < 100; ++t) {
    std::vector<int> ids(static_cast<std::size_t>(1 + rng() % arch.K));
    for (auto& id : ids) id = static_cast<int>(rng() % 30);
    const auto ref = gla::build_group_prompt(ids, arch);
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto again = gla::build_group_prompt(ids, arch);
    prompt_ok = prompt_ok && again.tokens.size() == ref.tokens.size();
    for (std::size_t i = 0; prompt_ok && i < ref.tokens.size(); ++i) {
      prompt_ok = again.tokens[i].source == ref.tokens[i].source && again.tokens[i].row == ref.tokens[i].row;
    }
  }
  return {refine_ok && prompt_ok, std::to_string(refine_trials) + " refine permutations, 100 prompt shuffles"};
}

// 6 ------------------------------------------------------------------------

Outcome freeze_discipline() {
  auto cfg = gcum::testing::tiny_config(6);
  cfg.train.total_epochs = 5;
  const auto data = generate_dataset(gen_config(cfg), cfg.seed);
  const auto train = split_train_test(data).train;
  const auto index = gla::LabelIndex::from(train);
  auto model = init_model(arch_for(cfg, static_cast<int>(data.catalog.size()), static_cast<int>(index.n_classes())),
                          cfg.gla.temperature_init, cfg.seed);
  int steps = 0, violations = 0;
  const auto s1 = stage1_trainable(true), s2 = stage2_trainable();
  auto hook = [&](const train::StepInfo& info) {
    const auto& allowed = info.stage == 1 ? s1 : s2;
    for (const auto& name : train::gradient_support(info.grads)) violations += allowed.count(name) ? 0 : 1;
    ++steps;
  };
  train::train_stage1(model, train, cfg, hook);
  train::train_stage2(model, train, cfg, hook);
  return {steps > 0 && violations == 0,
          std::to_string(steps) + " steps checked, " + std::to_string(violations) + " violations"};
}

// 7 ------------------------------------------------------------------------

Outcome metric_oracles() {
  std::mt19937_64 rng(77);
  auto make = [](int q, const std::vector<int>& groups) {
    eval::RankedResult r;
    r.query_group = q;
    r.gallery_groups = groups;
    r.gallery_index.resize(groups.size());
    std::iota(r.gallery_index.begin(), r.gallery_index.end(), std::size_t{0});
    r.scores.assign(groups.size(), 0.0);
    return r;
  };
  bool ok = true;
  for (int t = 0; t < kMetricInstances; ++t) {
    const std::size_t n = 1 + rng() % kMetricMaxGallery;
    std::vector<int> groups(n);
    for (auto& gid : groups) gid = static_cast<int>(rng() % 4);
    const int q = groups[rng() % n];
    const std::vector<eval::RankedResult> rs{make(q, groups)};
    std::size_t first = n;
    double hits = 0.0, ap = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (groups[i] != q) continue;
      first = std::min(first, i);
      hits += 1.0;
      ap += hits / double(i + 1);
    }
    ap /= hits;
    for (std::size_t k = 1; k <= kMetricMaxGallery; ++k) ok = ok && eval::cmc(rs, k) == (first < k ? 1.0 : 0.0);
    ok = ok && eval::mean_average_precision(rs) == ap;
  }
  for (std::size_t r = 1; r <= 10; ++r) {
    std::vector<int> groups(10, 0);
    groups[r - 1] = 1;
    const std::vector<eval::RankedResult> rs{make(1, groups)};
    ok = ok && eval::mean_average_precision(rs) == 1.0 / double(r);
  }
  return {ok, std::to_string(kMetricInstances) + " random instances, 10 hand cases"};
}

// 8 ------------------------------------------------------------------------

Outcome ablation_trend() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg = load_config(GCUM_BENCHMARK_CONFIG);
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < kAblationSeeds; ++i) seeds.push_back(cfg.seed + static_cast<std::uint64_t>(i));
  const auto table = eval::run_ablation(cfg, seeds);
  auto rank1 = [&](const std::string& name) {
    for (const auto& row : table) {
      if (row.name == name) return row.mean.rank1;
    }
    throw std::runtime_error("missing ablation row " + name);
  };
  const double base = rank1("Base"), mid = rank1("Base+GLA+MVS"), full = rank1("Base+GLA+MVS+GRCE");
  const double secs = Seconds(std::chrono::steady_clock::now() - t0).count();
  const bool ok = full >= mid && mid >= base && full - base >= kAblationMinGain && secs < kAblationBudgetSec;
  return {ok, "Rank-1 Base " + fmt("%.3f", base) + ", GLA+MVS " + fmt("%.3f", mid) + ", Full " + fmt("%.3f", full) +
                  ", " + fmt("%.1f s", secs)};
}

// 9 ------------------------------------------------------------------------

Outcome determinism() {
  const auto cfg = load_config(GCUM_BENCHMARK_CONFIG);
  auto run = [&] {
    const auto data = parse_dataset(serialize_dataset(generate_dataset(gen_config(cfg), cfg.seed)));
    const auto split = split_train_test(data);
    const auto index = gla::LabelIndex::from(split.train);
    auto model = init_model(arch_for(cfg, static_cast<int>(data.catalog.size()), static_cast<int>(index.n_classes())),
                            cfg.gla.temperature_init, cfg.seed);
    train::train_stage1(model, split.train, cfg);
    const auto s1 = encode_checkpoint(model);
    // Continue from the decoded bytes, as the CLI does between stages.
    model = decode_checkpoint(s1);
    train::train_stage2(model, split.train, cfg);
    const auto s2 = encode_checkpoint(model);
    const auto report = eval::to_json(eval::evaluate(model, split.test, 0, eval::FeatureMode::kRefined)).dump();
    return std::vector<std::string>{serialize_dataset(data), s1, s2, report};
  };
  const auto a = run(), b = run();
  return {a == b, "dataset, both checkpoints and report compared byte for byte"};
}

// 10 -----------------------------------------------------------------------

Outcome zero_perturbation() {
  auto cfg = load_config(GCUM_BENCHMARK_CONFIG);
  auto gen = gen_config(cfg);
  gen.membership_dropout_prob = 0.0;
  gen.layout_permutation = false;
  gen.appearance_noise_std = 0.0;
  gen.camera_bias_std = 0.0;
  const auto data = generate_dataset(gen, cfg.seed);
  const auto index = gla::LabelIndex::from(split_train_test(data).train);
  const auto model = init_model(
      arch_for(cfg, static_cast<int>(data.catalog.size()), static_cast<int>(index.n_classes())),
      cfg.gla.temperature_init, cfg.seed);
  std::string detail;
  bool ok = true;
  for (auto mode : {eval::FeatureMode::kRaw, eval::FeatureMode::kGroup, eval::FeatureMode::kRefined}) {
    const auto r = eval::evaluate(model, data, 0, mode);
    ok = ok && r.rank1 == 1.0;
    detail += (detail.empty() ? "" : ", ") + eval::to_string(mode) + " " + fmt("%.3f", r.rank1);
  }
  return {ok, "Rank-1 " + detail};
}

}  // namespace

int main() {
  kernels::configure_threads_from_env();
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"closed-form loss values", closed_forms},
      {"MVS statistics", mvs_statistics},
      {"masking invariance", masking_invariance},
      {"structural invariances", structural_invariances},
      {"freeze discipline", freeze_discipline},
      {"metric oracles", metric_oracles},
      {"synthetic ablation trend", ablation_trend},
      {"determinism", determinism},
      {"zero-perturbation sanity", zero_perturbation},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s %2zu %-26s %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed;
}
