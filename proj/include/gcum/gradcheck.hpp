#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gcum/gla.hpp"
#include "gcum/model.hpp"
#include "gcum/mvs.hpp"
#include "gcum/synthdata.hpp"

namespace gcum::gradcheck {

inline constexpr double kStep = 1e-5;
inline constexpr double kTolerance = 1e-4;

using LossFn = std::function<ad::Var(const Bound&)>;

struct ParamError {
  std::string name;
  std::size_t entries = 0;
  double max_rel_error = 0.0;
  double max_abs_grad = 0.0;
};

struct Report {
  std::vector<ParamError> params;
  double max_rel_error = 0.0;
  double tolerance = kTolerance;

  bool passed() const { return max_rel_error < tolerance; }
};

double relative_error(double fd, double ad);

// Central differences (f(θ+h) − f(θ−h)) / 2h for every entry of every trainable
// tensor, compared against one backward pass.
Report grad_check(const LossFn& loss, const ModelState& state, const std::set<std::string>& trainable,
                  double step = kStep, double tolerance = kTolerance);

// Tiny model, data, masks and frozen text features used by the loss suite.
struct Fixture {
  ModelState model;
  Dataset data;
  gla::LabelIndex index;
  std::vector<GroupSample> batch;  // 4 samples: 2 groups × 2 cameras
  std::vector<mvs::Mask> masks;
  Tensor text;
  LossConfig losses;
};

Fixture make_fixture(std::uint64_t seed);

struct SuiteEntry {
  std::string loss;
  Report report;
};

// stage1, id, triplet, i2tce and stage2 on the fixture for `seed`.
std::vector<SuiteEntry> run_suite(std::uint64_t seed, double step = kStep, double tolerance = kTolerance);

nlohmann::json to_json(const Report& r);

}  // namespace gcum::gradcheck
