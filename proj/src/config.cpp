#include "gcum/config.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <set>

#include "gcum/error.hpp"

namespace gcum {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> known) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown config key '" + where + "." + key + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + where + "." + key + "': " + e.what());
  }
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

void MvsConfig::validate() const {
  require(sigma >= 0.0, "mvs.sigma must be >= 0");
  require(0.0 <= p0 && p0 <= pmax && pmax < 1.0, "mvs requires 0 <= p0 <= pmax < 1");
}

void TrainConfig::validate() const {
  require(lr_start < lr_peak, "train.lr_start must be below train.lr_peak");
  require(warmup_epochs >= 0 && total_epochs >= 0, "train epochs must be non-negative");
  require(std::is_sorted(decay_epochs.begin(), decay_epochs.end()) &&
              std::adjacent_find(decay_epochs.begin(), decay_epochs.end()) == decay_epochs.end(),
          "train.decay_epochs must be strictly ascending");
  require(total_epochs == 0 || decay_epochs.empty() || decay_epochs.back() < total_epochs,
          "train.decay_epochs must lie below train.total_epochs");
  require(decay_factor > 0.0 && decay_factor <= 1.0, "train.decay_factor must be in (0, 1]");
  require(batch_size >= 2, "train.batch_size must be >= 2");
  require(momentum >= 0.0 && momentum < 1.0, "train.momentum must be in [0, 1)");
  require(weight_decay >= 0.0, "train.weight_decay must be >= 0");
  require(scale_factor >= 0.0, "train.scale_factor must be >= 0");
  require(stage == 1 || stage == 2, "train.stage must be 1 or 2");
  require(P >= 2 && Q >= 2, "train.P and train.Q must be >= 2");
}

void RunConfig::validate() const {
  require(dim >= 1 && d_a >= 1, "dim and d_a must be positive");
  require(M0 >= 2, "M0 must be >= 2 (groups need at least two members)");
  require(K >= M0, "K must be >= M0 so every group fits the prompt slots");
  require(tokens_per_identity >= 1, "tokens_per_identity must be >= 1");
  mvs.validate();
  require(gla.temperature_init > 0.0, "gla.temperature_init must be > 0");
  require(losses.alpha >= 0.0, "losses.alpha must be >= 0");
  require(losses.epsilon >= 0.0 && losses.epsilon < 1.0, "losses.epsilon must be in [0, 1)");
  train.validate();
  require(data.n_group_identities >= 2, "data.n_group_identities must be >= 2");
  require(data.members_min >= 2 && data.members_min <= members_max(),
          "data.members_min must be in [2, members_max]");
  require(members_max() <= M0, "data.members_max must not exceed M0");
  require(data.n_cameras >= 2, "data.n_cameras must be >= 2");
  require(data.views_per_group_per_camera >= 1, "data.views_per_group_per_camera must be >= 1");
  require(data.membership_dropout_prob >= 0.0 && data.membership_dropout_prob < 1.0,
          "data.membership_dropout_prob must be in [0, 1)");
  require(data.appearance_noise_std >= 0.0 && data.camera_bias_std >= 0.0, "data noise stds must be >= 0");
  require(data.train_fraction > 0.0 && data.train_fraction <= 1.0, "data.train_fraction must be in (0, 1]");
}

RunConfig parse_config(const json& j) {
  reject_unknown(j, "config",
                 {"schema_version", "seed", "dim", "d_a", "M0", "K", "tokens_per_identity", "mvs", "gla",
                  "losses", "train", "data", "modules"});
  RunConfig c;
  int version = kSchemaVersion;
  read(j, "schema_version", version, "config");
  if (version != kSchemaVersion) {
    throw ConfigError("unsupported config schema_version " + std::to_string(version));
  }
  read(j, "seed", c.seed, "config");
  read(j, "dim", c.dim, "config");
  read(j, "d_a", c.d_a, "config");
  read(j, "M0", c.M0, "config");
  read(j, "K", c.K, "config");
  read(j, "tokens_per_identity", c.tokens_per_identity, "config");

  if (j.contains("mvs")) {
    const auto& m = j["mvs"];
    reject_unknown(m, "mvs", {"mu", "sigma", "p0", "pmax"});
    read(m, "mu", c.mvs.mu, "mvs");
    read(m, "sigma", c.mvs.sigma, "mvs");
    read(m, "p0", c.mvs.p0, "mvs");
    read(m, "pmax", c.mvs.pmax, "mvs");
  }
  if (j.contains("gla")) {
    const auto& g = j["gla"];
    reject_unknown(g, "gla", {"tokens_per_identity", "K", "temperature_init"});
    read(g, "temperature_init", c.gla.temperature_init, "gla");
    // The gla section may restate the top-level sizes but never contradict them.
    if (g.contains("tokens_per_identity")) {
      int v = 0;
      read(g, "tokens_per_identity", v, "gla");
      if (j.contains("tokens_per_identity") && v != c.tokens_per_identity)
        throw ConfigError("gla.tokens_per_identity contradicts tokens_per_identity");
      c.tokens_per_identity = v;
    }
    if (g.contains("K")) {
      int v = 0;
      read(g, "K", v, "gla");
      if (j.contains("K") && v != c.K) throw ConfigError("gla.K contradicts K");
      c.K = v;
    }
  }
  if (j.contains("losses")) {
    const auto& l = j["losses"];
    reject_unknown(l, "losses", {"alpha", "epsilon"});
    read(l, "alpha", c.losses.alpha, "losses");
    read(l, "epsilon", c.losses.epsilon, "losses");
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    reject_unknown(t, "train",
                   {"warmup_epochs", "lr_start", "lr_peak", "decay_epochs", "decay_factor", "total_epochs",
                    "batch_size", "momentum", "weight_decay", "scale_factor", "stage", "P", "Q"});
    read(t, "warmup_epochs", c.train.warmup_epochs, "train");
    read(t, "lr_start", c.train.lr_start, "train");
    read(t, "lr_peak", c.train.lr_peak, "train");
    read(t, "decay_epochs", c.train.decay_epochs, "train");
    read(t, "decay_factor", c.train.decay_factor, "train");
    read(t, "total_epochs", c.train.total_epochs, "train");
    read(t, "batch_size", c.train.batch_size, "train");
    read(t, "momentum", c.train.momentum, "train");
    read(t, "weight_decay", c.train.weight_decay, "train");
    read(t, "scale_factor", c.train.scale_factor, "train");
    read(t, "stage", c.train.stage, "train");
    read(t, "P", c.train.P, "train");
    read(t, "Q", c.train.Q, "train");
  }
  if (j.contains("data")) {
    const auto& d = j["data"];
    reject_unknown(d, "data",
                   {"n_group_identities", "members_min", "members_max", "n_cameras", "views_per_group_per_camera",
                    "membership_dropout_prob", "layout_permutation", "appearance_noise_std", "camera_bias_std",
                    "train_fraction"});
    read(d, "n_group_identities", c.data.n_group_identities, "data");
    read(d, "members_min", c.data.members_min, "data");
    read(d, "members_max", c.data.members_max, "data");
    read(d, "n_cameras", c.data.n_cameras, "data");
    read(d, "views_per_group_per_camera", c.data.views_per_group_per_camera, "data");
    read(d, "membership_dropout_prob", c.data.membership_dropout_prob, "data");
    read(d, "layout_permutation", c.data.layout_permutation, "data");
    read(d, "appearance_noise_std", c.data.appearance_noise_std, "data");
    read(d, "camera_bias_std", c.data.camera_bias_std, "data");
    read(d, "train_fraction", c.data.train_fraction, "data");
  }
  if (j.contains("modules")) {
    const auto& m = j["modules"];
    reject_unknown(m, "modules", {"gla", "mvs", "grce"});
    read(m, "gla", c.modules.gla, "modules");
    read(m, "mvs", c.modules.mvs, "modules");
    read(m, "grce", c.modules.grce, "modules");
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

json to_json(const ModuleToggles& m) { return json{{"gla", m.gla}, {"mvs", m.mvs}, {"grce", m.grce}}; }

json to_json(const RunConfig& c) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = c.seed;
  j["dim"] = c.dim;
  j["d_a"] = c.d_a;
  j["M0"] = c.M0;
  j["K"] = c.K;
  j["tokens_per_identity"] = c.tokens_per_identity;
  j["mvs"] = {{"mu", c.mvs.mu}, {"sigma", c.mvs.sigma}, {"p0", c.mvs.p0}, {"pmax", c.mvs.pmax}};
  j["gla"] = {{"tokens_per_identity", c.tokens_per_identity}, {"K", c.K}, {"temperature_init", c.gla.temperature_init}};
  j["losses"] = {{"alpha", c.losses.alpha}, {"epsilon", c.losses.epsilon}};
  j["train"] = {{"warmup_epochs", c.train.warmup_epochs}, {"lr_start", c.train.lr_start},
                {"lr_peak", c.train.lr_peak},             {"decay_epochs", c.train.decay_epochs},
                {"decay_factor", c.train.decay_factor},   {"total_epochs", c.train.total_epochs},
                {"batch_size", c.train.batch_size},       {"momentum", c.train.momentum},
                {"weight_decay", c.train.weight_decay},   {"scale_factor", c.train.scale_factor},
                {"stage", c.train.stage},                 {"P", c.train.P},
                {"Q", c.train.Q}};
  j["data"] = {{"n_group_identities", c.data.n_group_identities},
               {"members_min", c.data.members_min},
               {"members_max", c.members_max()},
               {"n_cameras", c.data.n_cameras},
               {"views_per_group_per_camera", c.data.views_per_group_per_camera},
               {"membership_dropout_prob", c.data.membership_dropout_prob},
               {"layout_permutation", c.data.layout_permutation},
               {"appearance_noise_std", c.data.appearance_noise_std},
               {"camera_bias_std", c.data.camera_bias_std},
               {"train_fraction", c.data.train_fraction}};
  j["modules"] = to_json(c.modules);
  return j;
}

}  // namespace gcum
