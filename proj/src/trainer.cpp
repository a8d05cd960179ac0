#include "gcum/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gcum/error.hpp"
#include "gcum/gla.hpp"
#include "gcum/losses.hpp"
#include "gcum/mvs.hpp"

namespace gcum::train {

namespace {
int scaled(int epochs, double factor) { return static_cast<int>(std::lround(epochs * factor)); }

constexpr std::uint64_t kStage1Stream = 0x5354414745310000ULL;
constexpr std::uint64_t kStage2Stream = 0x5354414745320000ULL;
}  // namespace

Schedule scaled_schedule(const TrainConfig& cfg) {
  Schedule s;
  s.total_epochs = scaled(cfg.total_epochs, cfg.scale_factor);
  s.warmup_epochs = scaled(cfg.warmup_epochs, cfg.scale_factor);
  for (int e : cfg.decay_epochs) s.decay_epochs.push_back(scaled(e, cfg.scale_factor));
  s.lr_start = cfg.lr_start;
  s.lr_peak = cfg.lr_peak;
  s.decay_factor = cfg.decay_factor;
  return s;
}

double lr_at_epoch(const Schedule& s, int epoch) {
  if (epoch < 0 || epoch >= s.total_epochs) {
    throw PreconditionError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(s.total_epochs) + ")");
  }
  if (epoch < s.warmup_epochs) {
    return s.lr_start + (s.lr_peak - s.lr_start) * static_cast<double>(epoch) / static_cast<double>(s.warmup_epochs);
  }
  double lr = s.lr_peak;
  for (int d : s.decay_epochs) {
    if (epoch >= d) lr *= s.decay_factor;
  }
  return lr;
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) { return lr_at_epoch(scaled_schedule(cfg), epoch); }

bool decay_exempt(const std::string& name) { return name == param::kLogitScale; }

void sgd_step(ModelState& model, const std::map<std::string, Tensor>& grads, OptimizerState& opt, double lr,
              const std::set<std::string>& trainable) {
  for (const auto& name : trainable) {
    Tensor& theta = model.at(name);
    auto git = grads.find(name);
    if (git != grads.end() && git->second.shape() != theta.shape()) {
      throw ShapeError("gradient for '" + name + "' has the wrong shape");
    }
    auto [vit, fresh] = opt.velocity.try_emplace(name, Tensor::zeros(theta.shape()));
    Tensor& v = vit->second;
    if (v.shape() != theta.shape()) throw ShapeError("velocity for '" + name + "' has the wrong shape");
    const double wd = decay_exempt(name) ? 0.0 : opt.weight_decay;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = git == grads.end() ? 0.0 : git->second[i];
      v[i] = opt.momentum * v[i] + g + wd * theta[i];
      theta[i] -= lr * v[i];
    }
  }
  opt.lr = lr;
}

std::set<std::string> gradient_support(const std::map<std::string, Tensor>& grads) {
  std::set<std::string> out;
  for (const auto& [name, g] : grads) {
    if (std::any_of(g.values().begin(), g.values().end(), [](double v) { return v != 0.0; })) out.insert(name);
  }
  return out;
}

namespace {

void assert_frozen(const std::map<std::string, Tensor>& grads, const std::set<std::string>& trainable) {
  for (const auto& name : gradient_support(grads)) {
    if (!trainable.count(name)) throw PreconditionError("freeze violation: gradient reached '" + name + "'");
  }
}

void check_model_fits(const ModelState& model, const Dataset& train, const gla::LabelIndex& index) {
  if (static_cast<std::size_t>(model.arch.n_classes) != index.n_classes()) {
    throw PreconditionError("model has " + std::to_string(model.arch.n_classes) + " classes but the training split has " +
                            std::to_string(index.n_classes()));
  }
  if (static_cast<std::size_t>(model.arch.n_identities) < train.catalog.size()) {
    throw PreconditionError("model identity table is smaller than the dataset catalog");
  }
  if (model.arch.d_a != train.d_a) throw PreconditionError("model d_a differs from the dataset");
}

struct Accumulator {
  double total = 0.0;
  std::map<std::string, double> terms;
  int batches = 0;

  void add(double loss, std::initializer_list<std::pair<const char*, double>> parts) {
    total += loss;
    for (const auto& [k, v] : parts) terms[k] += v;
    ++batches;
  }
  EpochRecord finish(int epoch, int stage, double lr) const {
    EpochRecord r{epoch, stage, lr, batches ? total / batches : 0.0, {}};
    for (const auto& [k, v] : terms) r.terms[k] = batches ? v / batches : 0.0;
    return r;
  }
};

}  // namespace

TrainResult train_stage1(ModelState& model, const Dataset& train, const RunConfig& cfg, const StepHook& hook) {
  const auto index = gla::LabelIndex::from(train);
  check_model_fits(model, train, index);
  const auto trainable = stage1_trainable(cfg.modules.gla);
  const auto schedule = scaled_schedule(cfg.train);
  OptimizerState opt{cfg.train.momentum, cfg.train.weight_decay, {}, 0, 0.0};
  mvs::Rng rng(cfg.seed ^ kStage1Stream);

  std::vector<std::size_t> order(train.samples.size());
  TrainResult result;
  for (int epoch = 0; epoch < schedule.total_epochs; ++epoch) {
    const double lr = lr_at_epoch(schedule, epoch);
    opt.epoch = epoch;
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    Accumulator acc;
    int step = 0;
    for (std::size_t start = 0; start + 2 <= order.size(); start += static_cast<std::size_t>(cfg.train.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.train.batch_size));
      std::vector<GroupSample> batch;
      std::vector<mvs::Mask> masks;
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = train.samples[order[i]];
        batch.push_back(s);
        masks.push_back(cfg.modules.mvs ? mvs::sample(cfg.mvs, s.members.size(), rng) : mvs::Mask::full(s.members.size()));
      }
      if (batch.size() < 2) break;

      ad::Graph g;
      const Bound p(g, model, trainable);
      const auto terms = gla::stage1_loss(p, batch, masks, index, cfg.modules.gla);
      g.backward(terms.total);
      const auto grads = p.gradients();
      assert_frozen(grads, trainable);
      sgd_step(model, grads, opt, lr, trainable);
      acc.add(terms.total.item(), {{"group_i2t", terms.group_i2t.item()},
                                   {"group_t2i", terms.group_t2i.item()},
                                   {"member_i2t", terms.member_i2t.item()},
                                   {"member_t2i", terms.member_t2i.item()}});
      if (hook) hook(StepInfo{1, epoch, step, terms.total.item(), grads, trainable, model});
      ++step;
    }
    result.history.push_back(acc.finish(epoch, 1, lr));
  }
  return result;
}

TrainResult train_stage2(ModelState& model, const Dataset& train, const RunConfig& cfg, const StepHook& hook) {
  const auto index = gla::LabelIndex::from(train);
  check_model_fits(model, train, index);
  if (index.n_classes() < 2) throw PreconditionError("stage 2 needs at least two training groups");
  const auto trainable = stage2_trainable();
  const auto schedule = scaled_schedule(cfg.train);
  const Tensor text = losses::class_text_features(model, index, cfg.modules.gla);
  OptimizerState opt{cfg.train.momentum, cfg.train.weight_decay, {}, 0, 0.0};
  mvs::Rng rng(cfg.seed ^ kStage2Stream);

  std::map<int, std::vector<std::size_t>> views;
  for (std::size_t i = 0; i < train.samples.size(); ++i) views[train.samples[i].group_id].push_back(i);
  for (const auto& [gid, v] : views) {
    if (v.size() < 2) throw PreconditionError("group " + std::to_string(gid) + " has fewer than two training views");
  }
  std::vector<int> groups = index.class_group;
  const auto P = static_cast<std::size_t>(cfg.train.P);
  const auto Q = static_cast<std::size_t>(cfg.train.Q);

  TrainResult result;
  for (int epoch = 0; epoch < schedule.total_epochs; ++epoch) {
    const double lr = lr_at_epoch(schedule, epoch);
    opt.epoch = epoch;
    std::shuffle(groups.begin(), groups.end(), rng);
    Accumulator acc;
    int step = 0;
    for (std::size_t start = 0; start + 2 <= groups.size(); start += P) {
      const std::size_t end = std::min(groups.size(), start + P);
      std::vector<GroupSample> batch;
      std::vector<mvs::Mask> masks;
      for (std::size_t gi = start; gi < end; ++gi) {
        auto pool = views[groups[gi]];
        std::shuffle(pool.begin(), pool.end(), rng);
        for (std::size_t q = 0; q < std::min(Q, pool.size()); ++q) {
          const auto& s = train.samples[pool[q]];
          batch.push_back(s);
          masks.push_back(cfg.modules.mvs ? mvs::sample(cfg.mvs, s.members.size(), rng)
                                          : mvs::Mask::full(s.members.size()));
        }
      }

      ad::Graph g;
      const Bound p(g, model, trainable);
      const auto terms = losses::stage2_loss(p, batch, masks, index, text, cfg.losses);
      g.backward(terms.total);
      const auto grads = p.gradients();
      assert_frozen(grads, trainable);
      sgd_step(model, grads, opt, lr, trainable);
      acc.add(terms.total.item(),
              {{"id", terms.id.item()}, {"triplet", terms.triplet.item()}, {"i2tce", terms.i2tce.item()}});
      if (hook) hook(StepInfo{2, epoch, step, terms.total.item(), grads, trainable, model});
      ++step;
    }
    result.history.push_back(acc.finish(epoch, 2, lr));
  }
  return result;
}

nlohmann::json to_json(const EpochRecord& r) {
  nlohmann::json j{{"epoch", r.epoch}, {"stage", r.stage}, {"lr", r.lr}, {"loss_total", r.loss_total}};
  for (const auto& [k, v] : r.terms) j["loss_" + k] = v;
  return j;
}

std::string history_jsonl(const TrainResult& result) {
  std::string out;
  for (const auto& r : result.history) out += to_json(r).dump() + "\n";
  return out;
}

}  // namespace gcum::train
