// gcum: command-line front end for data generation, training, evaluation,
// gradient checking and ablation.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gcum/config.hpp"
#include "gcum/error.hpp"
#include "gcum/eval.hpp"
#include "gcum/gla.hpp"
#include "gcum/gradcheck.hpp"
#include "gcum/kernels.hpp"
#include "gcum/model.hpp"
#include "gcum/synthdata.hpp"
#include "gcum/trainer.hpp"

namespace {

using nlohmann::json;

enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kConfig = 2,
  kIo = 3,
  kMissingCheckpoint = 4,
  kNonFinite = 5,
  kGradCheck = 6,
};

json envelope(const std::string& kind) {
  return {{"schema_version", gcum::kSchemaVersion}, {"tool_version", gcum::kToolVersion}, {"kind", kind}};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw gcum::IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw gcum::IoError("failed writing '" + path + "'");
}

int cmd_gen_data(const std::string& config_path, const std::string& out) {
  const auto cfg = gcum::load_config(config_path);
  const auto ds = gcum::generate_dataset(gcum::gen_config(cfg), cfg.seed);
  gcum::save_dataset(ds, out);
  json summary = envelope("gen-data");
  summary["out"] = out;
  summary["groups"] = ds.group_ids().size();
  summary["views"] = ds.samples.size();
  summary["cameras"] = ds.camera_ids().size();
  summary["identities"] = ds.catalog.size();
  summary["config"] = gcum::to_json(cfg);
  std::cout << summary.dump(2) << "\n";
  return kOk;
}

int cmd_train(int stage, const std::string& config_path, const std::string& data_path, const std::string& init,
              const std::string& out) {
  auto cfg = gcum::load_config(config_path);
  cfg.train.stage = stage;
  if (stage == 2 && init.empty()) throw gcum::MissingCheckpointError("stage 2 needs --init-checkpoint from stage 1");
  const auto ds = gcum::load_dataset(data_path);
  const auto split = gcum::split_train_test(ds);
  const auto index = gcum::gla::LabelIndex::from(split.train);
  const auto arch = gcum::arch_for(cfg, static_cast<int>(ds.catalog.size()), static_cast<int>(index.n_classes()));

  gcum::ModelState model;
  if (!init.empty()) {
    model = gcum::load_checkpoint(init);
    if (!(model.arch == arch)) throw gcum::ConfigError("checkpoint '" + init + "' does not match the config and data");
  } else {
    model = gcum::init_model(arch, cfg.gla.temperature_init, cfg.seed);
  }

  const auto result = stage == 1 ? gcum::train::train_stage1(model, split.train, cfg)
                                 : gcum::train::train_stage2(model, split.train, cfg);
  gcum::save_checkpoint(model, out);
  write_text(out + ".log.jsonl", gcum::train::history_jsonl(result));

  json meta = envelope("checkpoint");
  meta["stage"] = stage;
  meta["init_checkpoint"] = init;
  meta["data"] = {{"seed", ds.seed}, {"config", gcum::to_json(ds.config)}};
  meta["config"] = gcum::to_json(cfg);
  write_text(out + ".meta.json", meta.dump(2) + "\n");

  json summary = envelope("train");
  summary["stage"] = stage;
  summary["out"] = out;
  summary["epochs"] = result.history.size();
  if (!result.history.empty()) summary["final_loss"] = result.history.back().loss_total;
  std::cout << summary.dump(2) << "\n";
  return kOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_path, int query_camera, const std::string& feature,
             const std::string& split_name) {
  const auto mode = gcum::eval::parse_feature_mode(feature);
  const auto model = gcum::load_checkpoint(checkpoint);
  const auto ds = gcum::load_dataset(data_path);
  gcum::Dataset target = ds;
  if (split_name == "test") {
    target = gcum::split_train_test(ds).test;
  } else if (split_name != "all") {
    throw gcum::ConfigError("unknown split '" + split_name + "' (expected test or all)");
  }
  if (target.samples.empty()) throw gcum::ConfigError("selected split has no samples");
  const auto report = gcum::eval::evaluate(model, target, query_camera, mode);
  json out = envelope("retrieval-report");
  out["checkpoint"] = checkpoint;
  out["query_camera"] = query_camera;
  out["feature"] = gcum::eval::to_string(mode);
  out["split"] = split_name;
  out["data"] = {{"seed", ds.seed}, {"config", gcum::to_json(ds.config)}};
  out["report"] = gcum::eval::to_json(report);
  std::cout << out.dump(2) << "\n";
  return kOk;
}

int cmd_grad_check(std::uint64_t seed, double step) {
  const auto suite = gcum::gradcheck::run_suite(seed, step);
  json out = envelope("grad-check");
  out["seed"] = seed;
  out["step"] = step;
  bool ok = true;
  for (const auto& entry : suite) {
    out["losses"][entry.loss] = gcum::gradcheck::to_json(entry.report);
    ok = ok && entry.report.passed();
    std::fprintf(stderr, "%-8s max_rel_error=%.3e %s\n", entry.loss.c_str(), entry.report.max_rel_error,
                 entry.report.passed() ? "ok" : "FAIL");
  }
  out["passed"] = ok;
  std::cout << out.dump(2) << "\n";
  return ok ? kOk : kGradCheck;
}

int cmd_ablate(const std::string& config_path, int n_seeds, const std::string& json_out) {
  if (n_seeds < 1) throw gcum::ConfigError("--seeds must be at least 1");
  const auto cfg = gcum::load_config(config_path);
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < n_seeds; ++i) seeds.push_back(cfg.seed + static_cast<std::uint64_t>(i));
  const auto table = gcum::eval::run_ablation(cfg, seeds);
  std::cout << gcum::eval::format_table(table);
  if (!json_out.empty()) {
    json out = envelope("ablation");
    out["seeds"] = seeds;
    out["config"] = gcum::to_json(cfg);
    out["rows"] = gcum::eval::to_json(table);
    write_text(json_out, out.dump(2) + "\n");
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group re-identification with member-variant simulation, layout prompts and relation encoding"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(gcum::kToolVersion));

  std::string config, out, data, init, checkpoint, feature = "group", split = "test", json_out;
  int stage = 1, query_camera = 0, n_seeds = 3;
  std::uint64_t seed = 1;
  double step = gcum::gradcheck::kStep;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic group dataset");
  gen->add_option("--config", config, "Run config JSON")->required();
  gen->add_option("--out", out, "Dataset JSON path")->required();

  auto* train = app.add_subcommand("train", "Run one training stage");
  train->add_option("--stage", stage, "1 or 2")->required()->check(CLI::IsMember({1, 2}));
  train->add_option("--config", config, "Run config JSON")->required();
  train->add_option("--data", data, "Dataset JSON")->required();
  train->add_option("--init-checkpoint", init, "Checkpoint to start from (required for stage 2)");
  train->add_option("--out", out, "Checkpoint path")->required();

  auto* ev = app.add_subcommand("eval", "Rank the gallery for every query and report CMC and mAP");
  ev->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  ev->add_option("--data", data, "Dataset JSON")->required();
  ev->add_option("--query-camera", query_camera, "Camera whose views are queries")->required();
  ev->add_option("--feature", feature, "group, refined or raw")->capture_default_str();
  ev->add_option("--split", split, "test or all")->capture_default_str();

  auto* gc = app.add_subcommand("grad-check", "Finite-difference check of every training loss");
  gc->add_option("--seed", seed, "Fixture seed")->capture_default_str();
  gc->add_option("--step", step, "Central-difference step")->capture_default_str()->check(CLI::PositiveNumber);

  auto* ab = app.add_subcommand("ablate", "Six-configuration ablation over several seeds");
  ab->add_option("--config", config, "Run config JSON")->required();
  ab->add_option("--seeds", n_seeds, "Number of seeds, starting at the config seed")->capture_default_str();
  ab->add_option("--json", json_out, "Also write the table as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  gcum::kernels::configure_threads_from_env();
  try {
    if (*gen) return cmd_gen_data(config, out);
    if (*train) return cmd_train(stage, config, data, init, out);
    if (*ev) return cmd_eval(checkpoint, data, query_camera, feature, split);
    if (*gc) return cmd_grad_check(seed, step);
    if (*ab) return cmd_ablate(config, n_seeds, json_out);
  } catch (const gcum::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const gcum::MissingCheckpointError& e) {
    std::cerr << "missing checkpoint: " << e.what() << "\n";
    return kMissingCheckpoint;
  } catch (const gcum::NonFiniteError& e) {
    std::cerr << "non-finite value: " << e.what() << "\n";
    return kNonFinite;
  } catch (const gcum::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const gcum::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kIo;
  } catch (const gcum::VersionError& e) {
    std::cerr << "version error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
