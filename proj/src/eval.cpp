#include "gcum/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "gcum/error.hpp"
#include "gcum/gla.hpp"
#include "gcum/grce.hpp"
#include "gcum/trainer.hpp"

namespace gcum::eval {

RankedResult rank_gallery(std::span<const double> query, const Tensor& gallery, std::span<const int> gallery_groups,
                          int query_group) {
  const std::size_t n = gallery_groups.size();
  if (n == 0) throw PreconditionError("empty gallery");
  if (gallery.rows() != n || gallery.cols() != query.size()) throw ShapeError("gallery shape does not match the query");
  std::vector<double> sims(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto row = gallery.row(j);
    double acc = 0.0;
    for (std::size_t k = 0; k < query.size(); ++k) acc += query[k] * row[k];
    sims[j] = acc;
  }
  RankedResult r;
  r.query_group = query_group;
  r.gallery_index.resize(n);
  std::iota(r.gallery_index.begin(), r.gallery_index.end(), std::size_t{0});
  std::stable_sort(r.gallery_index.begin(), r.gallery_index.end(),
                   [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
  for (auto j : r.gallery_index) {
    r.scores.push_back(sims[j]);
    r.gallery_groups.push_back(gallery_groups[j]);
  }
  return r;
}

namespace serial {
std::vector<RankedResult> rank_all(const Tensor& queries, std::span<const int> query_groups, const Tensor& gallery,
                                   std::span<const int> gallery_groups) {
  std::vector<RankedResult> out;
  for (std::size_t i = 0; i < query_groups.size(); ++i) {
    out.push_back(rank_gallery(queries.row(i), gallery, gallery_groups, query_groups[i]));
  }
  return out;
}
}  // namespace serial

namespace omp {
std::vector<RankedResult> rank_all(const Tensor& queries, std::span<const int> query_groups, const Tensor& gallery,
                                   std::span<const int> gallery_groups) {
  if (gallery_groups.empty()) throw PreconditionError("empty gallery");
  std::vector<RankedResult> out(query_groups.size());
  const auto n = static_cast<long long>(query_groups.size());
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < n; ++i) {
    const auto q = static_cast<std::size_t>(i);
    out[q] = rank_gallery(queries.row(q), gallery, gallery_groups, query_groups[q]);
  }
  return out;
}
}  // namespace omp

double cmc(std::span<const RankedResult> results, std::size_t k) {
  if (k < 1) throw PreconditionError("cmc needs k >= 1");
  if (results.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& r : results) {
    const std::size_t limit = std::min(k, r.gallery_groups.size());
    if (std::find(r.gallery_groups.begin(), r.gallery_groups.begin() + static_cast<long>(limit), r.query_group) !=
        r.gallery_groups.begin() + static_cast<long>(limit)) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

double mean_average_precision(std::span<const RankedResult> results) {
  if (results.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : results) {
    double ap = 0.0;
    std::size_t found = 0;
    for (std::size_t pos = 0; pos < r.gallery_groups.size(); ++pos) {
      if (r.gallery_groups[pos] != r.query_group) continue;
      ++found;
      ap += static_cast<double>(found) / static_cast<double>(pos + 1);
    }
    if (found == 0) throw PreconditionError("query group " + std::to_string(r.query_group) + " has no relevant gallery entry");
    total += ap / static_cast<double>(found);
  }
  return total / static_cast<double>(results.size());
}

RetrievalReport report(std::span<const RankedResult> results, std::size_t n_gallery) {
  return {cmc(results, 1), cmc(results, 5), cmc(results, 10), mean_average_precision(results), results.size(), n_gallery};
}

FeatureMode parse_feature_mode(const std::string& s) {
  if (s == "group") return FeatureMode::kGroup;
  if (s == "refined") return FeatureMode::kRefined;
  if (s == "raw") return FeatureMode::kRaw;
  throw ConfigError("unknown feature mode '" + s + "' (expected group, refined or raw)");
}

std::string to_string(FeatureMode m) {
  switch (m) {
    case FeatureMode::kGroup: return "group";
    case FeatureMode::kRefined: return "refined";
    case FeatureMode::kRaw: return "raw";
  }
  return "group";
}

namespace {
void feature_row(const ModelState& model, const GroupSample& sample, FeatureMode mode, std::span<double> out) {
  if (mode == FeatureMode::kRaw) {
    std::fill(out.begin(), out.end(), 0.0);
    for (const auto& m : sample.members) {
      if (m.appearance.size() != out.size()) throw ShapeError("appearance length does not match d_a");
      for (std::size_t k = 0; k < out.size(); ++k) out[k] += m.appearance[k];
    }
    double norm = 0.0;
    for (double v : out) norm += v * v;
    norm = std::max(std::sqrt(norm), 1e-12);
    for (double& v : out) v /= norm;
    return;
  }
  ad::Graph g;
  const Bound p(g, model);
  const auto enc = grce::encode_group(p, sample, nullptr);
  const ad::Var f = mode == FeatureMode::kGroup ? enc.group_feature
                                                : grce::refine(p, enc.group_feature, enc.retained_members);
  std::copy(f.value().values().begin(), f.value().values().end(), out.begin());
}
std::size_t feature_width(const ModelState& model, FeatureMode mode) {
  return static_cast<std::size_t>(mode == FeatureMode::kRaw ? model.arch.d_a : model.arch.dim);
}
}  // namespace

namespace serial {
Tensor extract_features(const ModelState& model, std::span<const GroupSample> samples, FeatureMode mode) {
  if (samples.empty()) throw PreconditionError("no samples to encode");
  Tensor out({samples.size(), feature_width(model, mode)});
  for (std::size_t i = 0; i < samples.size(); ++i) feature_row(model, samples[i], mode, out.row(i));
  return out;
}
}  // namespace serial

namespace omp {
Tensor extract_features(const ModelState& model, std::span<const GroupSample> samples, FeatureMode mode) {
  if (samples.empty()) throw PreconditionError("no samples to encode");
  Tensor out({samples.size(), feature_width(model, mode)});
  const auto n = static_cast<long long>(samples.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < n; ++i) {
    try {
      feature_row(model, samples[static_cast<std::size_t>(i)], mode, out.row(static_cast<std::size_t>(i)));
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}
}  // namespace omp

RetrievalReport evaluate(const ModelState& model, const Dataset& test, int query_camera, FeatureMode mode) {
  const auto split = split_query_gallery(test, query_camera);
  std::vector<int> qg, gg;
  for (const auto& s : split.queries) qg.push_back(s.group_id);
  for (const auto& s : split.gallery) gg.push_back(s.group_id);
  const Tensor q = omp::extract_features(model, split.queries, mode);
  const Tensor g = omp::extract_features(model, split.gallery, mode);
  const auto ranked = omp::rank_all(q, qg, g, gg);
  return report(ranked, split.gallery.size());
}

nlohmann::json to_json(const RetrievalReport& r) {
  return {{"rank1", r.rank1}, {"rank5", r.rank5}, {"rank10", r.rank10},
          {"mAP", r.mAP},     {"n_query", r.n_query}, {"n_gallery", r.n_gallery}};
}

std::vector<AblationVariant> ablation_variants() {
  return {
      {"Base", {false, false, false}, false},
      {"Base+GLA", {true, false, false}, true},
      {"Base+MVS", {false, true, false}, true},
      {"Base+GRCE", {false, false, true}, true},
      {"Base+GLA+MVS", {true, true, false}, true},
      {"Base+GLA+MVS+GRCE", {true, true, true}, true},
  };
}

PipelineResult run_pipeline(const Dataset& dataset, const RunConfig& base, const AblationVariant& variant) {
  RunConfig cfg = base;
  cfg.modules = variant.modules;
  const auto split = split_train_test(dataset);
  if (split.test.samples.empty()) throw PreconditionError("test split is empty; lower data.train_fraction");
  const auto index = gla::LabelIndex::from(split.train);
  const Arch arch = arch_for(cfg, static_cast<int>(dataset.catalog.size()), static_cast<int>(index.n_classes()));
  ModelState model = init_model(arch, cfg.gla.temperature_init, cfg.seed);
  if (variant.trained) {
    train::train_stage1(model, split.train, cfg);
    if (cfg.modules.grce) train::train_stage2(model, split.train, cfg);
  }
  const auto mode = cfg.modules.grce ? FeatureMode::kRefined : FeatureMode::kGroup;
  return {evaluate(model, split.test, 0, mode), std::move(model)};
}

namespace {
RetrievalReport combine(const std::vector<RetrievalReport>& xs, bool want_std) {
  RetrievalReport out;
  if (xs.empty()) return out;
  auto stat = [&](auto field) {
    double m = 0.0;
    for (const auto& x : xs) m += x.*field;
    m /= static_cast<double>(xs.size());
    if (!want_std) return m;
    double v = 0.0;
    for (const auto& x : xs) v += (x.*field - m) * (x.*field - m);
    return std::sqrt(v / static_cast<double>(xs.size()));
  };
  out.rank1 = stat(&RetrievalReport::rank1);
  out.rank5 = stat(&RetrievalReport::rank5);
  out.rank10 = stat(&RetrievalReport::rank10);
  out.mAP = stat(&RetrievalReport::mAP);
  out.n_query = xs.front().n_query;
  out.n_gallery = xs.front().n_gallery;
  return out;
}
}  // namespace

std::vector<AblationRow> run_ablation(const RunConfig& base, std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw PreconditionError("ablation needs at least one seed");
  const auto variants = ablation_variants();
  std::vector<Dataset> datasets;
  for (auto seed : seeds) datasets.push_back(generate_dataset(gen_config(base), seed));

  const std::size_t jobs = variants.size() * seeds.size();
  std::vector<RetrievalReport> reports(jobs);
  std::exception_ptr failure;
  const auto n = static_cast<long long>(jobs);
#pragma omp parallel for schedule(dynamic)
  for (long long job = 0; job < n; ++job) {
    const auto v = static_cast<std::size_t>(job) / seeds.size();
    const auto s = static_cast<std::size_t>(job) % seeds.size();
    try {
      RunConfig cfg = base;
      cfg.seed = seeds[s];
      reports[static_cast<std::size_t>(job)] = run_pipeline(datasets[s], cfg, variants[v]).report;
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<AblationRow> table;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    AblationRow row{variants[v].name, variants[v].modules, {}, {}, {}};
    for (std::size_t s = 0; s < seeds.size(); ++s) row.per_seed.push_back(reports[v * seeds.size() + s]);
    row.mean = combine(row.per_seed, false);
    row.stddev = combine(row.per_seed, true);
    table.push_back(std::move(row));
  }
  return table;
}

nlohmann::json to_json(const std::vector<AblationRow>& table) {
  auto arr = nlohmann::json::array();
  for (const auto& row : table) {
    nlohmann::json per_seed = nlohmann::json::array();
    for (const auto& r : row.per_seed) per_seed.push_back(to_json(r));
    arr.push_back({{"name", row.name},
                   {"modules", to_json(row.modules)},
                   {"mean", to_json(row.mean)},
                   {"std", to_json(row.stddev)},
                   {"per_seed", per_seed}});
  }
  return arr;
}

std::string format_table(const std::vector<AblationRow>& table) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-20s %15s %15s %15s %15s\n", "Configuration", "Rank1", "Rank5", "Rank10", "mAP");
  out += line;
  for (const auto& row : table) {
    auto cell = [](double m, double s) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f±%.3f", m, s);
      return std::string(buf);
    };
    std::snprintf(line, sizeof line, "%-20s %16s %16s %16s %16s\n", row.name.c_str(),
                  cell(row.mean.rank1, row.stddev.rank1).c_str(), cell(row.mean.rank5, row.stddev.rank5).c_str(),
                  cell(row.mean.rank10, row.stddev.rank10).c_str(), cell(row.mean.mAP, row.stddev.mAP).c_str());
    out += line;
  }
  return out;
}

}  // namespace gcum::eval
