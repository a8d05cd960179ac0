#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace gcum {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "gcum 1.0.0";

// Drop-probability prior for member variant simulation.
struct MvsConfig {
  double mu = 0.2;
  double sigma = 0.1;
  double p0 = 0.0;
  double pmax = 0.5;

  void validate() const;
};

struct GlaConfig {
  // Initial temperature; stored as the learnable log inverse temperature.
  double temperature_init = 0.07;
};

struct LossConfig {
  double alpha = 0.3;    // triplet margin
  double epsilon = 0.1;  // label smoothing mass
};

struct TrainConfig {
  int warmup_epochs = 10;
  double lr_start = 5e-7;
  double lr_peak = 5e-6;
  std::vector<int> decay_epochs{30, 50};
  double decay_factor = 0.1;
  int total_epochs = 80;
  int batch_size = 8;
  double momentum = 0.8;
  double weight_decay = 1e-4;
  double scale_factor = 1.0;
  int stage = 1;
  // Identity-balanced sampler for stage 2: P groups × Q views per batch.
  int P = 4;
  int Q = 2;

  void validate() const;
};

struct DataConfig {
  int n_group_identities = 40;
  int members_min = 2;
  int members_max = 0;  // 0 means "use M0"
  int n_cameras = 2;
  int views_per_group_per_camera = 1;
  double membership_dropout_prob = 0.3;
  bool layout_permutation = true;
  double appearance_noise_std = 0.1;
  double camera_bias_std = 0.2;
  double train_fraction = 0.7;
};

// Which mechanisms a run uses; all on is the full method.
struct ModuleToggles {
  bool gla = true;
  bool mvs = true;
  bool grce = true;

  friend bool operator==(const ModuleToggles&, const ModuleToggles&) = default;
};

struct RunConfig {
  std::uint64_t seed = 1;
  int dim = 64;
  int d_a = 32;
  int M0 = 6;
  int K = 6;
  int tokens_per_identity = 4;
  MvsConfig mvs;
  GlaConfig gla;
  LossConfig losses;
  TrainConfig train;
  DataConfig data;
  ModuleToggles modules;

  int members_max() const { return data.members_max > 0 ? data.members_max : M0; }
  void validate() const;
};

// Parses and validates; unknown keys and out-of-range values raise ConfigError.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path);
nlohmann::json to_json(const RunConfig& cfg);

nlohmann::json to_json(const ModuleToggles& m);

}  // namespace gcum
