#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gcum/config.hpp"
#include "gcum/model.hpp"
#include "gcum/synthdata.hpp"

namespace gcum::eval {

struct RankedResult {
  int query_group = 0;
  std::vector<std::size_t> gallery_index;  // gallery rows, best first
  std::vector<double> scores;              // non-increasing
  std::vector<int> gallery_groups;         // group id of each ranked entry
};

struct RetrievalReport {
  double rank1 = 0.0;
  double rank5 = 0.0;
  double rank10 = 0.0;
  double mAP = 0.0;
  std::size_t n_query = 0;
  std::size_t n_gallery = 0;

  friend bool operator==(const RetrievalReport&, const RetrievalReport&) = default;
};

// Cosine ranking (features are unit norm, so a dot product), ties broken by
// ascending gallery index.
RankedResult rank_gallery(std::span<const double> query, const Tensor& gallery, std::span<const int> gallery_groups,
                          int query_group);

namespace serial {
std::vector<RankedResult> rank_all(const Tensor& queries, std::span<const int> query_groups, const Tensor& gallery,
                                   std::span<const int> gallery_groups);
}
namespace omp {
std::vector<RankedResult> rank_all(const Tensor& queries, std::span<const int> query_groups, const Tensor& gallery,
                                   std::span<const int> gallery_groups);
}

// Fraction of queries with a correct match among the top k.
double cmc(std::span<const RankedResult> results, std::size_t k);
// Per query: mean over relevant entries of (i / rank_i); then mean over queries.
double mean_average_precision(std::span<const RankedResult> results);
RetrievalReport report(std::span<const RankedResult> results, std::size_t n_gallery);

enum class FeatureMode {
  kGroup,    // V: group encoder output
  kRefined,  // V': after cross-attention refinement
  kRaw,      // normalised mean of raw member appearances; no model involved
};

FeatureMode parse_feature_mode(const std::string& s);
std::string to_string(FeatureMode m);

// Evaluation features (no member removal), one row per sample.
namespace serial {
Tensor extract_features(const ModelState& model, std::span<const GroupSample> samples, FeatureMode mode);
}
namespace omp {
Tensor extract_features(const ModelState& model, std::span<const GroupSample> samples, FeatureMode mode);
}

RetrievalReport evaluate(const ModelState& model, const Dataset& test, int query_camera, FeatureMode mode);

nlohmann::json to_json(const RetrievalReport& r);

// ---- ablation harness ----

struct AblationVariant {
  std::string name;
  ModuleToggles modules;
  bool trained = true;  // Base is evaluated straight from initialisation
};

// Base, +GLA, +MVS, +GRCE, +GLA+MVS, full.
std::vector<AblationVariant> ablation_variants();

struct PipelineResult {
  RetrievalReport report;
  ModelState model;
};

// Split → init → stage 1 (when trained) → stage 2 (when GRCE is on) → evaluate
// the test split with queries from camera 0.
PipelineResult run_pipeline(const Dataset& dataset, const RunConfig& cfg, const AblationVariant& variant);

struct AblationRow {
  std::string name;
  ModuleToggles modules;
  std::vector<RetrievalReport> per_seed;
  RetrievalReport mean;
  RetrievalReport stddev;
};

std::vector<AblationRow> run_ablation(const RunConfig& base, std::span<const std::uint64_t> seeds);

nlohmann::json to_json(const std::vector<AblationRow>& table);
std::string format_table(const std::vector<AblationRow>& table);

}  // namespace gcum::eval
