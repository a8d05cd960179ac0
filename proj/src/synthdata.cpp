#include "gcum/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "gcum/error.hpp"

namespace gcum {

using nlohmann::json;

void GenConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(M0 >= 2, "M0 must be >= 2 (groups need at least two members)");
  require(members_min >= 2 && members_min <= M0, "members_min must be in [2, M0]");
  require(n_group_identities >= 2, "n_group_identities must be >= 2");
  require(n_cameras >= 2, "n_cameras must be >= 2");
  require(views_per_group_per_camera >= 1, "views_per_group_per_camera must be >= 1");
  require(membership_dropout_prob >= 0.0 && membership_dropout_prob < 1.0,
          "membership_dropout_prob must be in [0, 1)");
  require(appearance_noise_std >= 0.0 && camera_bias_std >= 0.0, "noise stds must be >= 0");
  require(d_a >= 1, "d_a must be >= 1");
  require(train_fraction > 0.0 && train_fraction <= 1.0, "train_fraction must be in (0, 1]");
}

GenConfig gen_config(const RunConfig& cfg) {
  GenConfig g;
  g.n_group_identities = cfg.data.n_group_identities;
  g.members_min = cfg.data.members_min;
  g.M0 = cfg.members_max();
  g.n_cameras = cfg.data.n_cameras;
  g.views_per_group_per_camera = cfg.data.views_per_group_per_camera;
  g.membership_dropout_prob = cfg.data.membership_dropout_prob;
  g.layout_permutation = cfg.data.layout_permutation;
  g.appearance_noise_std = cfg.data.appearance_noise_std;
  g.camera_bias_std = cfg.data.camera_bias_std;
  g.d_a = cfg.d_a;
  g.train_fraction = cfg.data.train_fraction;
  return g;
}

json to_json(const GenConfig& g) {
  return json{{"n_group_identities", g.n_group_identities},
              {"members_min", g.members_min},
              {"M0", g.M0},
              {"n_cameras", g.n_cameras},
              {"views_per_group_per_camera", g.views_per_group_per_camera},
              {"membership_dropout_prob", g.membership_dropout_prob},
              {"layout_permutation", g.layout_permutation},
              {"appearance_noise_std", g.appearance_noise_std},
              {"camera_bias_std", g.camera_bias_std},
              {"d_a", g.d_a},
              {"train_fraction", g.train_fraction}};
}

GenConfig gen_config_from_json(const json& j) {
  GenConfig g;
  try {
    g.n_group_identities = j.at("n_group_identities").get<int>();
    g.members_min = j.at("members_min").get<int>();
    g.M0 = j.at("M0").get<int>();
    g.n_cameras = j.at("n_cameras").get<int>();
    g.views_per_group_per_camera = j.at("views_per_group_per_camera").get<int>();
    g.membership_dropout_prob = j.at("membership_dropout_prob").get<double>();
    g.layout_permutation = j.at("layout_permutation").get<bool>();
    g.appearance_noise_std = j.at("appearance_noise_std").get<double>();
    g.camera_bias_std = j.at("camera_bias_std").get<double>();
    g.d_a = j.at("d_a").get<int>();
    g.train_fraction = j.at("train_fraction").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dataset config echo incomplete: ") + e.what());
  }
  g.validate();
  return g;
}

std::vector<int> Dataset::group_ids() const {
  std::set<int> ids;
  for (const auto& s : samples) ids.insert(s.group_id);
  return {ids.begin(), ids.end()};
}

std::vector<int> Dataset::camera_ids() const {
  std::set<int> ids;
  for (const auto& s : samples) ids.insert(s.camera_id);
  return {ids.begin(), ids.end()};
}

std::vector<int> Dataset::roster(int group_id) const {
  std::set<int> ids;
  for (const auto& s : samples) {
    if (s.group_id != group_id) continue;
    for (const auto& m : s.members) ids.insert(m.identity_id);
  }
  return {ids.begin(), ids.end()};
}

void Dataset::validate() const {
  auto fail = [](const std::string& msg) { throw PreconditionError("invalid dataset: " + msg); };
  if (d_a < 1) fail("d_a must be positive");
  for (std::size_t id = 0; id < catalog.size(); ++id) {
    if (catalog[id].size() != static_cast<std::size_t>(d_a)) fail("catalog vector length differs from d_a");
    double ss = 0.0;
    for (double v : catalog[id]) ss += v * v;
    if (std::abs(std::sqrt(ss) - 1.0) > 1e-9) fail("catalog appearance is not unit-norm");
  }
  std::map<int, std::set<int>> cameras_per_group;
  for (const auto& s : samples) {
    if (s.members.empty() || s.members.size() > static_cast<std::size_t>(config.M0))
      fail("member count outside [1, M0]");
    for (const auto& m : s.members) {
      if (m.identity_id < 0 || static_cast<std::size_t>(m.identity_id) >= catalog.size())
        fail("member identity missing from catalog");
      if (m.appearance.size() != static_cast<std::size_t>(d_a)) fail("member appearance length differs from d_a");
      for (double v : m.appearance) {
        if (!std::isfinite(v)) fail("non-finite appearance value");
      }
    }
    cameras_per_group[s.group_id].insert(s.camera_id);
  }
  for (const auto& [gid, cams] : cameras_per_group) {
    if (cams.size() < 2) fail("group " + std::to_string(gid) + " is seen by fewer than two cameras");
  }
}

namespace {

std::vector<double> gaussian_vector(std::mt19937_64& rng, int n, double stddev) {
  std::vector<double> v(static_cast<std::size_t>(n), 0.0);
  if (stddev <= 0.0) return v;
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& x : v) x = dist(rng);
  return v;
}

std::vector<double> unit_vector(std::mt19937_64& rng, int n) {
  std::vector<double> v;
  double ss = 0.0;
  do {
    v = gaussian_vector(rng, n, 1.0);
    ss = 0.0;
    for (double x : v) ss += x * x;
  } while (ss < 1e-24);
  const double norm = std::sqrt(ss);
  for (auto& x : v) x /= norm;
  return v;
}

}  // namespace

Dataset generate_dataset(const GenConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  Dataset ds;
  ds.seed = seed;
  ds.d_a = config.d_a;
  ds.config = config;

  std::vector<std::vector<int>> rosters(static_cast<std::size_t>(config.n_group_identities));
  std::uniform_int_distribution<int> count_dist(config.members_min, config.M0);
  for (auto& roster : rosters) {
    const int n = count_dist(rng);
    for (int k = 0; k < n; ++k) {
      roster.push_back(static_cast<int>(ds.catalog.size()));
      ds.catalog.push_back(unit_vector(rng, config.d_a));
    }
  }

  std::vector<std::vector<double>> camera_bias;
  for (int c = 0; c < config.n_cameras; ++c) camera_bias.push_back(gaussian_vector(rng, config.d_a, config.camera_bias_std));

  std::bernoulli_distribution drop(config.membership_dropout_prob);
  for (int g = 0; g < config.n_group_identities; ++g) {
    const auto& roster = rosters[static_cast<std::size_t>(g)];
    for (int c = 0; c < config.n_cameras; ++c) {
      for (int v = 0; v < config.views_per_group_per_camera; ++v) {
        std::vector<int> present;
        for (int id : roster) {
          if (!drop(rng)) present.push_back(id);
        }
        if (present.empty()) present.push_back(roster.front());
        if (config.layout_permutation) std::shuffle(present.begin(), present.end(), rng);

        GroupSample sample{g, c, {}};
        for (int id : present) {
          auto noise = gaussian_vector(rng, config.d_a, config.appearance_noise_std);
          Member m{id, ds.catalog[static_cast<std::size_t>(id)]};
          for (int j = 0; j < config.d_a; ++j) {
            m.appearance[static_cast<std::size_t>(j)] += camera_bias[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] +
                                                         noise[static_cast<std::size_t>(j)];
          }
          sample.members.push_back(std::move(m));
        }
        ds.samples.push_back(std::move(sample));
      }
    }
  }
  return ds;
}

QueryGallery split_query_gallery(const Dataset& dataset, int query_camera) {
  QueryGallery out;
  for (const auto& s : dataset.samples) {
    (s.camera_id == query_camera ? out.queries : out.gallery).push_back(s);
  }
  if (out.queries.empty()) {
    throw PreconditionError("query camera " + std::to_string(query_camera) + " has no views in the dataset");
  }
  std::set<int> gallery_groups;
  for (const auto& s : out.gallery) gallery_groups.insert(s.group_id);
  for (const auto& q : out.queries) {
    if (!gallery_groups.count(q.group_id)) {
      throw PreconditionError("query group " + std::to_string(q.group_id) + " has no gallery match");
    }
  }
  return out;
}

TrainTestSplit split_train_test(const Dataset& dataset) {
  auto groups = dataset.group_ids();
  std::mt19937_64 rng(dataset.seed ^ 0x9e3779b97f4a7c15ULL);
  std::shuffle(groups.begin(), groups.end(), rng);
  const auto total = static_cast<long>(groups.size());
  const long n_train = std::clamp(std::lround(dataset.config.train_fraction * static_cast<double>(total)), 1L, total);
  const std::set<int> train_ids(groups.begin(), groups.begin() + n_train);

  TrainTestSplit split{dataset, dataset};
  split.train.samples.clear();
  split.test.samples.clear();
  for (const auto& s : dataset.samples) {
    (train_ids.count(s.group_id) ? split.train : split.test).samples.push_back(s);
  }
  return split;
}

namespace {

void write_double(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

void write_vector(std::string& out, const std::vector<double>& v) {
  out += '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    write_double(out, v[i]);
  }
  out += ']';
}

}  // namespace

std::string serialize_dataset(const Dataset& ds) {
  std::string out;
  out += R"({"format":"gcum-dataset","version":1,"tool_version":")";
  out += kToolVersion;
  out += R"(","seed":)" + std::to_string(ds.seed);
  out += R"(,"d_a":)" + std::to_string(ds.d_a);
  out += R"(,"config":)" + to_json(ds.config).dump();
  out += R"(,"catalog":[)";
  for (std::size_t id = 0; id < ds.catalog.size(); ++id) {
    if (id) out += ',';
    out += R"({"identity_id":)" + std::to_string(id) + R"(,"appearance":)";
    write_vector(out, ds.catalog[id]);
    out += '}';
  }
  out += R"(],"samples":[)";
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    if (i) out += ',';
    out += R"({"group_id":)" + std::to_string(s.group_id) + R"(,"camera_id":)" + std::to_string(s.camera_id) +
           R"(,"members":[)";
    for (std::size_t k = 0; k < s.members.size(); ++k) {
      if (k) out += ',';
      out += R"({"identity_id":)" + std::to_string(s.members[k].identity_id) + R"(,"appearance":)";
      write_vector(out, s.members[k].appearance);
      out += '}';
    }
    out += "]}";
  }
  out += "]}\n";
  return out;
}

Dataset parse_dataset(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed dataset file: ") + e.what(), e.byte);
  }
  try {
    if (!j.is_object() || j.value("format", std::string{}) != "gcum-dataset") {
      throw ParseError("not a gcum-dataset document", 0);
    }
    const auto& version = j.at("version");
    if (!version.is_number_integer() || version.get<int>() != 1) {
      throw VersionError("unsupported dataset version " + version.dump() + " (expected 1)");
    }
    Dataset ds;
    ds.seed = j.at("seed").get<std::uint64_t>();
    ds.d_a = j.at("d_a").get<int>();
    ds.config = gen_config_from_json(j.at("config"));
    for (const auto& entry : j.at("catalog")) {
      const auto id = entry.at("identity_id").get<std::size_t>();
      if (id != ds.catalog.size()) throw PreconditionError("catalog identity ids must be dense and ordered");
      ds.catalog.push_back(entry.at("appearance").get<std::vector<double>>());
    }
    for (const auto& entry : j.at("samples")) {
      GroupSample s;
      s.group_id = entry.at("group_id").get<int>();
      s.camera_id = entry.at("camera_id").get<int>();
      for (const auto& m : entry.at("members")) {
        s.members.push_back(Member{m.at("identity_id").get<int>(), m.at("appearance").get<std::vector<double>>()});
      }
      ds.samples.push_back(std::move(s));
    }
    ds.validate();
    return ds;
  } catch (const json::exception& e) {
    throw ParseError(std::string("dataset document has wrong structure: ") + e.what(), 0);
  }
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << serialize_dataset(dataset);
  if (!out) throw IoError("failed writing '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str());
}

}  // namespace gcum
