#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gcum/config.hpp"
#include "gcum/model.hpp"
#include "gcum/synthdata.hpp"

namespace gcum::train {

// Epoch schedule after applying scale_factor (all epoch counts rounded).
struct Schedule {
  int total_epochs = 0;
  int warmup_epochs = 0;
  std::vector<int> decay_epochs;
  double lr_start = 0.0;
  double lr_peak = 0.0;
  double decay_factor = 1.0;
};

Schedule scaled_schedule(const TrainConfig& cfg);

// Linear warmup lr_start → lr_peak over the warmup epochs, then lr_peak times
// decay_factor for every decay epoch already reached.
double lr_at_epoch(const Schedule& schedule, int epoch);
double lr_at_epoch(const TrainConfig& cfg, int epoch);

struct OptimizerState {
  double momentum = 0.8;
  double weight_decay = 1e-4;
  std::map<std::string, Tensor> velocity;
  int epoch = 0;
  double lr = 0.0;
};

// Parameters that never receive weight decay.
bool decay_exempt(const std::string& name);

// v ← momentum·v + g + weight_decay·θ;  θ ← θ − lr·v  for every name in trainable.
void sgd_step(ModelState& model, const std::map<std::string, Tensor>& grads, OptimizerState& opt, double lr,
              const std::set<std::string>& trainable);

// Names whose gradient has a nonzero entry.
std::set<std::string> gradient_support(const std::map<std::string, Tensor>& grads);

struct EpochRecord {
  int epoch = 0;
  int stage = 1;
  double lr = 0.0;
  double loss_total = 0.0;
  std::map<std::string, double> terms;
};

struct StepInfo {
  int stage;
  int epoch;
  int step;
  double loss;
  const std::map<std::string, Tensor>& grads;
  const std::set<std::string>& trainable;
  const ModelState& model;  // after the update
};
using StepHook = std::function<void(const StepInfo&)>;

struct TrainResult {
  std::vector<EpochRecord> history;
};

// Optimises the stage-1 objective over prompt tokens, pad tokens, quantity
// matrix and temperature. `train` must hold only training groups.
TrainResult train_stage1(ModelState& model, const Dataset& train, const RunConfig& cfg, const StepHook& hook = {});

// Optimises the stage-2 objective over GRCE parameters only, with class text
// features frozen from the model as passed in.
TrainResult train_stage2(ModelState& model, const Dataset& train, const RunConfig& cfg, const StepHook& hook = {});

nlohmann::json to_json(const EpochRecord& r);
std::string history_jsonl(const TrainResult& result);

}  // namespace gcum::train
