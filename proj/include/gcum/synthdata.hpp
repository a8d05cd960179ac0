#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "gcum/config.hpp"

namespace gcum {

// Knobs of the synthetic group-scene generator.
struct GenConfig {
  int n_group_identities = 40;
  int members_min = 2;
  int M0 = 6;  // maximum members per group
  int n_cameras = 2;
  int views_per_group_per_camera = 1;
  double membership_dropout_prob = 0.3;
  bool layout_permutation = true;
  double appearance_noise_std = 0.1;
  double camera_bias_std = 0.2;
  int d_a = 32;
  double train_fraction = 0.7;

  void validate() const;
  friend bool operator==(const GenConfig&, const GenConfig&) = default;
};

GenConfig gen_config(const RunConfig& cfg);
nlohmann::json to_json(const GenConfig& g);
GenConfig gen_config_from_json(const nlohmann::json& j);

struct Member {
  int identity_id = 0;
  std::vector<double> appearance;  // observed, length d_a

  friend bool operator==(const Member&, const Member&) = default;
};

// One camera view of one group.
struct GroupSample {
  int group_id = 0;
  int camera_id = 0;
  std::vector<Member> members;

  friend bool operator==(const GroupSample&, const GroupSample&) = default;
};

struct Dataset {
  std::uint64_t seed = 0;
  int d_a = 0;
  GenConfig config;
  // catalog[id] is the unit-norm latent appearance of identity id.
  std::vector<std::vector<double>> catalog;
  std::vector<GroupSample> samples;

  // Sorted distinct group ids present in samples.
  std::vector<int> group_ids() const;
  std::vector<int> camera_ids() const;
  // Sorted union of member identities seen across every view of group_id.
  std::vector<int> roster(int group_id) const;
  // Checks every structural invariant; throws PreconditionError on violation.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

Dataset generate_dataset(const GenConfig& config, std::uint64_t seed);

struct QueryGallery {
  std::vector<GroupSample> queries;
  std::vector<GroupSample> gallery;
};

// Queries are the views from query_camera; the gallery holds every other camera.
QueryGallery split_query_gallery(const Dataset& dataset, int query_camera);

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

// Identity-level split: a seeded shuffle of group ids, the first
// round(train_fraction · G) of them train. Both halves share the catalog.
TrainTestSplit split_train_test(const Dataset& dataset);

std::string serialize_dataset(const Dataset& dataset);
Dataset parse_dataset(const std::string& text);
void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace gcum
