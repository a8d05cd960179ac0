#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gcum/error.hpp"
#include "gcum/gla.hpp"
#include "gcum/trainer.hpp"
#include "tiny_config.hpp"

using namespace gcum;
using gcum::testing::tiny_config;

namespace {

struct Setup {
  RunConfig cfg;
  Dataset train;
  ModelState model;
};

Setup setup(RunConfig cfg) {
  const auto data = generate_dataset(gen_config(cfg), cfg.seed);
  auto train = split_train_test(data).train;
  const auto index = gla::LabelIndex::from(train);
  const auto arch = arch_for(cfg, static_cast<int>(data.catalog.size()), static_cast<int>(index.n_classes()));
  auto model = init_model(arch, cfg.gla.temperature_init, cfg.seed);
  return {cfg, std::move(train), std::move(model)};
}

RunConfig easy(RunConfig cfg) {
  cfg.data.appearance_noise_std = 0.0;
  cfg.data.camera_bias_std = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("default schedule values") {
  const TrainConfig cfg;
  CHECK(train::lr_at_epoch(cfg, 0) == doctest::Approx(5e-7).epsilon(1e-12));
  CHECK(train::lr_at_epoch(cfg, 10) == doctest::Approx(5e-6).epsilon(1e-12));
  CHECK(train::lr_at_epoch(cfg, 29) == doctest::Approx(5e-6).epsilon(1e-12));
  CHECK(train::lr_at_epoch(cfg, 30) == doctest::Approx(5e-7).epsilon(1e-12));
  CHECK(train::lr_at_epoch(cfg, 50) == doctest::Approx(5e-8).epsilon(1e-12));
  CHECK(train::lr_at_epoch(cfg, 79) == doctest::Approx(5e-8).epsilon(1e-12));
  CHECK_THROWS_AS(train::lr_at_epoch(cfg, 80), PreconditionError);
  CHECK_THROWS_AS(train::lr_at_epoch(cfg, -1), PreconditionError);
}

TEST_CASE("warmup is linear and meets the peak") {
  const TrainConfig cfg;
  for (int e = 1; e < 10; ++e) {
    const double expected = 5e-7 + (5e-6 - 5e-7) * e / 10.0;
    CHECK(train::lr_at_epoch(cfg, e) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(train::lr_at_epoch(cfg, e) > train::lr_at_epoch(cfg, e - 1));
  }
  // The next linear step after epoch 9 lands exactly on the peak.
  const double step = (5e-6 - 5e-7) / 10.0;
  CHECK(train::lr_at_epoch(cfg, 9) + step == doctest::Approx(train::lr_at_epoch(cfg, 10)).epsilon(1e-12));
}

TEST_CASE("scale factor compresses the schedule") {
  TrainConfig cfg;
  cfg.scale_factor = 0.5;
  const auto s = train::scaled_schedule(cfg);
  CHECK(s.total_epochs == 40);
  CHECK(s.warmup_epochs == 5);
  CHECK(s.decay_epochs == std::vector<int>{15, 25});
  cfg.scale_factor = 0.25;
  const auto q = train::scaled_schedule(cfg);
  CHECK(q.total_epochs == 20);
  CHECK(q.warmup_epochs == 3);
  CHECK(q.decay_epochs == std::vector<int>{8, 13});
}

TEST_CASE("sgd step variants") {
  ModelState m;
  m.params["w"] = Tensor::vector({1.0, -2.0});
  const std::set<std::string> names{"w"};

  train::OptimizerState plain{0.0, 0.0, {}, 0, 0.0};
  train::sgd_step(m, {{"w", Tensor::vector({0.5, 0.25})}}, plain, 0.1, names);
  CHECK(m.at("w")[0] == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(m.at("w")[1] == doctest::Approx(-2.025).epsilon(1e-15));

  const auto before = m.at("w");
  train::OptimizerState still{0.8, 0.0, {}, 0, 0.0};
  train::sgd_step(m, {{"w", Tensor::vector({0.0, 0.0})}}, still, 0.1, names);
  CHECK(m.at("w") == before);
}

TEST_CASE("two momentum steps move lr·g·(2+m)") {
  for (double mom : {0.0, 0.5, 0.8}) {
    ModelState m;
    m.params["w"] = Tensor::vector({0.3});
    train::OptimizerState opt{mom, 0.0, {}, 0, 0.0};
    const double lr = 0.01, g = 1.7;
    for (int i = 0; i < 2; ++i) train::sgd_step(m, {{"w", Tensor::vector({g})}}, opt, lr, {"w"});
    CHECK(0.3 - m.at("w")[0] == doctest::Approx(lr * g * (2.0 + mom)).epsilon(1e-12));
  }
}

TEST_CASE("weight decay skips the temperature") {
  ModelState m;
  m.params[param::kLogitScale] = Tensor::vector({2.0});
  m.params["w"] = Tensor::vector({2.0});
  train::OptimizerState opt{0.0, 0.5, {}, 0, 0.0};
  train::sgd_step(m, {}, opt, 0.1, {param::kLogitScale, "w"});
  CHECK(m.at(param::kLogitScale)[0] == 2.0);
  CHECK(m.at("w")[0] == doctest::Approx(1.9));
  CHECK(train::decay_exempt(param::kLogitScale));
  CHECK_FALSE(train::decay_exempt(param::kGrceWq));
}

TEST_CASE("sgd rejects mismatched shapes") {
  ModelState m;
  m.params["w"] = Tensor::vector({1.0, 2.0});
  train::OptimizerState opt;
  CHECK_THROWS_AS(train::sgd_step(m, {{"w", Tensor::vector({1.0})}}, opt, 0.1, {"w"}), ShapeError);
}

TEST_CASE("zero epochs leave the model untouched") {
  auto cfg = tiny_config();
  cfg.train.scale_factor = 0.0;
  auto s = setup(cfg);
  const auto init = s.model;
  const auto r1 = train::train_stage1(s.model, s.train, cfg);
  CHECK(r1.history.empty());
  CHECK(s.model == init);
  train::train_stage2(s.model, s.train, cfg);
  CHECK(s.model == init);
}

TEST_CASE("training is deterministic") {
  const auto cfg = tiny_config(3);
  auto a = setup(cfg);
  auto b = setup(cfg);
  train::train_stage1(a.model, a.train, cfg);
  train::train_stage1(b.model, b.train, cfg);
  CHECK(encode_checkpoint(a.model) == encode_checkpoint(b.model));
  const auto ha = train::train_stage2(a.model, a.train, cfg);
  const auto hb = train::train_stage2(b.model, b.train, cfg);
  CHECK(encode_checkpoint(a.model) == encode_checkpoint(b.model));
  CHECK(train::history_jsonl(ha) == train::history_jsonl(hb));
}

TEST_CASE("freeze discipline holds at every step") {
  const auto cfg = tiny_config(4);
  auto s = setup(cfg);
  int steps = 0;
  auto hook = [&](const train::StepInfo& info) {
    const auto allowed = info.stage == 1 ? stage1_trainable(cfg.modules.gla) : stage2_trainable();
    for (const auto& name : train::gradient_support(info.grads)) {
      INFO("stage " << info.stage << " step " << info.step << " " << name);
      CHECK(allowed.count(name) == 1);
    }
    ++steps;
  };
  const auto init = s.model;
  train::train_stage1(s.model, s.train, cfg, hook);
  for (const auto& [name, t] : s.model.params) {
    if (!stage1_trainable(true).count(name)) CHECK(t == init.at(name));
  }
  const auto after1 = s.model;
  train::train_stage2(s.model, s.train, cfg, hook);
  for (const auto& [name, t] : s.model.params) {
    if (!stage2_trainable().count(name)) CHECK(t == after1.at(name));
  }
  CHECK(steps > 10);
}

TEST_CASE("stage-1 loss falls on an easy dataset") {
  auto cfg = easy(tiny_config(5));
  cfg.train.total_epochs = 50;
  cfg.train.warmup_epochs = 5;
  cfg.train.decay_epochs = {30, 40};
  auto s = setup(cfg);
  const auto r = train::train_stage1(s.model, s.train, cfg);
  REQUIRE(r.history.size() == 50);
  CHECK(r.history.back().loss_total < r.history.front().loss_total);
}

TEST_CASE("stage-2 loss falls on an easy dataset") {
  auto cfg = easy(tiny_config(6));
  cfg.train.total_epochs = 30;
  cfg.train.warmup_epochs = 3;
  cfg.train.decay_epochs = {20};
  auto s = setup(cfg);
  train::train_stage1(s.model, s.train, cfg);
  const auto r = train::train_stage2(s.model, s.train, cfg);
  REQUIRE(r.history.size() == 30);
  CHECK(r.history.back().loss_total < r.history.front().loss_total);
}

TEST_CASE("training log records") {
  const auto cfg = tiny_config(7);
  auto s = setup(cfg);
  const auto r = train::train_stage1(s.model, s.train, cfg);
  const auto text = train::history_jsonl(r);
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);
  const auto first = nlohmann::json::parse(text.substr(0, text.find('\n')));
  for (const char* key : {"epoch", "stage", "lr", "loss_total", "loss_group_i2t", "loss_group_t2i", "loss_member_i2t",
                          "loss_member_t2i"}) {
    CHECK(first.contains(key));
  }
  CHECK(first.at("stage") == 1);
  CHECK(first.at("lr") == doctest::Approx(5e-3));
}

TEST_CASE("a model from other data is rejected") {
  const auto cfg = tiny_config(8);
  auto s = setup(cfg);
  auto other = tiny_config(8);
  other.data.n_group_identities = 12;
  auto t = setup(other);
  CHECK_THROWS(train::train_stage1(s.model, t.train, cfg));
}
