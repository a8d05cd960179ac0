#include "gcum/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <random>

#include "gcum/error.hpp"
#include "gcum/losses.hpp"

namespace gcum::gradcheck {

double relative_error(double fd, double ad) {
  return std::abs(fd - ad) / std::max(1e-8, std::abs(fd) + std::abs(ad));
}

namespace {
double evaluate(const LossFn& loss, const ModelState& state) {
  ad::Graph g;
  const Bound p(g, state);
  return loss(p).item();
}
}  // namespace

Report grad_check(const LossFn& loss, const ModelState& state, const std::set<std::string>& trainable, double step,
                  double tolerance) {
  if (!(step > 0.0)) throw PreconditionError("grad_check step must be positive");
  ad::Graph g;
  const Bound p(g, state, trainable);
  for (const auto& name : trainable) (void)p[name];
  const ad::Var out = loss(p);
  if (out.rows() != 1 || out.cols() != 1) throw ShapeError("grad_check needs a scalar loss");
  g.backward(out);
  const auto grads = p.gradients();

  struct Entry {
    std::string name;
    std::size_t offset;
  };
  std::vector<Entry> entries;
  for (const auto& name : trainable) {
    for (std::size_t i = 0; i < state.at(name).values().size(); ++i) entries.push_back({name, i});
  }
  std::vector<double> rel(entries.size());
  std::exception_ptr failure;
#pragma omp parallel
  {
    ModelState local = state;
#pragma omp for schedule(dynamic, 8)
    for (long long e = 0; e < static_cast<long long>(entries.size()); ++e) {
      const auto& [name, offset] = entries[static_cast<std::size_t>(e)];
      try {
        double& theta = local.at(name).data()[offset];
        const double saved = theta;
        theta = saved + step;
        const double up = evaluate(loss, local);
        theta = saved - step;
        const double down = evaluate(loss, local);
        theta = saved;
        const double fd = (up - down) / (2.0 * step);
        rel[static_cast<std::size_t>(e)] = relative_error(fd, grads.at(name).values()[offset]);
      } catch (...) {
#pragma omp critical
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);

  Report report;
  report.tolerance = tolerance;
  std::size_t e = 0;
  for (const auto& name : trainable) {
    ParamError pe{name, state.at(name).values().size(), 0.0, 0.0};
    for (double v : grads.at(name).values()) pe.max_abs_grad = std::max(pe.max_abs_grad, std::abs(v));
    for (std::size_t i = 0; i < pe.entries; ++i, ++e) pe.max_rel_error = std::max(pe.max_rel_error, rel[e]);
    report.max_rel_error = std::max(report.max_rel_error, pe.max_rel_error);
    report.params.push_back(pe);
  }
  return report;
}

Fixture make_fixture(std::uint64_t seed) {
  GenConfig gen;
  gen.n_group_identities = 3;
  gen.members_min = 2;
  gen.M0 = 3;
  gen.n_cameras = 2;
  gen.d_a = 6;
  gen.train_fraction = 1.0;
  Dataset data = generate_dataset(gen, seed);
  auto index = gla::LabelIndex::from(data);

  Arch arch;
  arch.dim = 8;
  arch.d_a = gen.d_a;
  arch.M0 = 3;
  arch.K = 3;
  arch.M = 2;
  arch.n_identities = static_cast<int>(data.catalog.size());
  arch.n_classes = static_cast<int>(index.n_classes());
  ModelState model = init_model(arch, 0.07, seed);

  // Larger weights than the initialiser so every path carries signal.
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& [name, t] : model.params) {
    if (name == param::kLogitScale) continue;
    for (auto& v : t.data()) v = u(rng);
  }
  model.at(param::kLogitScale).data()[0] = 0.0;

  const auto groups = data.group_ids();
  std::vector<GroupSample> batch;
  for (int gid : {groups[0], groups[1]}) {
    for (const auto& s : data.samples) {
      if (s.group_id == gid) batch.push_back(s);
    }
  }
  MvsConfig mcfg;
  mcfg.mu = 0.3;
  mcfg.pmax = 0.6;
  std::vector<mvs::Mask> masks;
  for (const auto& s : batch) masks.push_back(mvs::sample(mcfg, s.members.size(), rng));

  Tensor text = losses::class_text_features(model, index, true);
  return {std::move(model), std::move(data), std::move(index), std::move(batch), std::move(masks), std::move(text),
          LossConfig{}};
}

std::vector<SuiteEntry> run_suite(std::uint64_t seed, double step, double tolerance) {
  const Fixture fx = make_fixture(seed);
  const auto s1 = stage1_trainable(true);
  const auto s2 = stage2_trainable();
  auto stage2 = [&fx](const Bound& p) {
    return losses::stage2_loss(p, fx.batch, fx.masks, fx.index, fx.text, fx.losses);
  };
  std::vector<SuiteEntry> out;
  out.push_back({"stage1", grad_check([&fx](const Bound& p) {
                   return gla::stage1_loss(p, fx.batch, fx.masks, fx.index, true).total;
                 }, fx.model, s1, step, tolerance)});
  out.push_back({"id", grad_check([&](const Bound& p) { return stage2(p).id; }, fx.model, s2, step, tolerance)});
  out.push_back({"triplet", grad_check([&](const Bound& p) { return stage2(p).triplet; }, fx.model, s2, step, tolerance)});
  out.push_back({"i2tce", grad_check([&](const Bound& p) { return stage2(p).i2tce; }, fx.model, s2, step, tolerance)});
  out.push_back({"stage2", grad_check([&](const Bound& p) { return stage2(p).total; }, fx.model, s2, step, tolerance)});
  return out;
}

nlohmann::json to_json(const Report& r) {
  auto params = nlohmann::json::array();
  for (const auto& p : r.params) {
    params.push_back({{"name", p.name}, {"entries", p.entries}, {"max_rel_error", p.max_rel_error},
                      {"max_abs_grad", p.max_abs_grad}});
  }
  return {{"max_rel_error", r.max_rel_error}, {"tolerance", r.tolerance}, {"passed", r.passed()}, {"params", params}};
}

}  // namespace gcum::gradcheck
