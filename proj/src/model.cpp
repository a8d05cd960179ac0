#include "gcum/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "gcum/error.hpp"

namespace gcum {

const Tensor& ModelState::at(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw PreconditionError("model has no parameter '" + name + "'");
  return it->second;
}

Tensor& ModelState::at(const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw PreconditionError("model has no parameter '" + name + "'");
  return it->second;
}

std::set<std::string> stage1_trainable(bool gla_enabled) {
  if (gla_enabled) return {param::kTokens, param::kPad, param::kQuantity, param::kLogitScale};
  return {param::kTokens, param::kGroupTokens, param::kQuantity, param::kLogitScale};
}

std::set<std::string> stage2_trainable() {
  return {param::kGrceWq, param::kGrceWk, param::kGrceWv, param::kClassifier};
}

namespace {

std::string block_name(const std::string& prefix, const char* w) { return prefix + "." + w; }

Tensor gaussian(std::mt19937_64& rng, Shape shape, double stddev) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

constexpr double kInitStd = 0.02;

}  // namespace

Arch arch_for(const RunConfig& cfg, int n_identities, int n_classes) {
  return Arch{cfg.dim, cfg.d_a, cfg.M0, cfg.K, cfg.tokens_per_identity, n_identities, n_classes};
}

ModelState init_model(const Arch& a, double temperature_init, std::uint64_t seed) {
  if (a.dim < 1 || a.d_a < 1 || a.M0 < 2 || a.K < a.M0 || a.M < 1 || a.n_identities < 1 || a.n_classes < 1) {
    throw ShapeError("invalid model sizes");
  }
  if (!(temperature_init > 0.0)) throw ConfigError("temperature must be positive");
  std::mt19937_64 rng(seed);
  const auto dim = static_cast<std::size_t>(a.dim);
  ModelState s;
  s.arch = a;
  auto& p = s.params;
  // Insertion order below fixes the random stream, not the map order.
  p[param::kMemberW1] = gaussian(rng, {static_cast<std::size_t>(a.d_a), 2 * dim}, kInitStd);
  p[param::kMemberB1] = Tensor::zeros({2 * dim});
  p[param::kMemberW2] = gaussian(rng, {2 * dim, dim}, kInitStd);
  p[param::kMemberB2] = Tensor::zeros({dim});
  p[param::kGroupCls] = gaussian(rng, {dim}, kInitStd);
  for (const std::string prefix : {"group.block1", "group.block2", "text.block"}) {
    for (const char* w : {"wq", "wk", "wv", "wo"}) p[block_name(prefix, w)] = gaussian(rng, {dim, dim}, kInitStd);
  }
  p[param::kGroupProj] = gaussian(rng, {dim, dim}, kInitStd);
  p[param::kTextPos] = gaussian(rng, {static_cast<std::size_t>(a.max_prompt_len()), dim}, kInitStd);
  p[param::kTextProj] = gaussian(rng, {dim, dim}, kInitStd);
  p[param::kWords] = gaussian(rng, {static_cast<std::size_t>(Word::kCount), dim}, kInitStd);
  p[param::kTokens] = gaussian(rng, {static_cast<std::size_t>(a.n_identities * a.M), dim}, kInitStd);
  p[param::kPad] = gaussian(rng, {static_cast<std::size_t>(a.M), dim}, kInitStd);
  p[param::kGroupTokens] = gaussian(rng, {static_cast<std::size_t>(a.n_classes * a.M), dim}, kInitStd);
  p[param::kQuantity] = Tensor::zeros({static_cast<std::size_t>(a.M0), dim});
  p[param::kLogitScale] = Tensor({1}, {std::log(1.0 / temperature_init)});
  p[param::kGrceWq] = gaussian(rng, {dim, dim}, kInitStd);
  p[param::kGrceWk] = gaussian(rng, {dim, dim}, kInitStd);
  Tensor wv = gaussian(rng, {dim, dim}, kInitStd);
  for (std::size_t i = 0; i < dim; ++i) wv.at(i, i) += 1.0;
  p[param::kGrceWv] = std::move(wv);
  p[param::kClassifier] = gaussian(rng, {static_cast<std::size_t>(a.n_classes), dim}, kInitStd);
  return s;
}

Arch infer_arch(const std::map<std::string, Tensor>& params) {
  auto get = [&](const char* name) -> const Tensor& {
    auto it = params.find(name);
    if (it == params.end()) throw ShapeError(std::string("checkpoint lacks tensor '") + name + "'");
    return it->second;
  };
  Arch a;
  a.dim = static_cast<int>(get(param::kGroupCls).size());
  a.d_a = static_cast<int>(get(param::kMemberW1).rows());
  a.M0 = static_cast<int>(get(param::kQuantity).rows());
  a.M = static_cast<int>(get(param::kPad).rows());
  a.n_identities = static_cast<int>(get(param::kTokens).rows()) / a.M;
  a.n_classes = static_cast<int>(get(param::kClassifier).rows());
  const int prompt_len = static_cast<int>(get(param::kTextPos).rows());
  a.K = (prompt_len - 4) / a.M;
  // Re-deriving every expected shape catches any inconsistent table.
  const ModelState reference = init_model(a, 0.07, 0);
  if (reference.params.size() != params.size()) throw ShapeError("checkpoint tensor set does not match the model");
  for (const auto& [name, t] : reference.params) {
    auto it = params.find(name);
    if (it == params.end()) throw ShapeError("checkpoint lacks tensor '" + name + "'");
    if (it->second.shape() != t.shape()) throw ShapeError("checkpoint tensor '" + name + "' has the wrong shape");
  }
  return a;
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ParseError("checkpoint truncated", pos_);
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

constexpr char kMagic[4] = {'G', 'C', 'U', 'M'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

std::string encode_checkpoint(const ModelState& state) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(state.params.size()));
  for (const auto& [name, t] : state.params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
    for (double v : t.values()) put<double>(out, v);
  }
  return out;
}

ModelState decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  const auto magic = r.take(4);
  if (magic != std::string_view(kMagic, 4)) throw ParseError("not a GCUM checkpoint (bad magic)", 0);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw VersionError("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  ModelState s;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name(r.take(name_len));
    const auto rank = r.get<std::uint32_t>();
    if (rank == 0) throw ParseError("tensor '" + name + "' has rank 0", r.pos());
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    std::size_t n = 1;
    for (auto d : shape) {
      if (d == 0 || d > (std::size_t{1} << 32)) throw ParseError("tensor '" + name + "' has a bad dimension", r.pos());
      n *= d;
    }
    std::vector<double> values(n);
    for (auto& v : values) v = r.get<double>();
    if (!s.params.emplace(name, Tensor(std::move(shape), std::move(values))).second) {
      throw ParseError("duplicate tensor '" + name + "'", r.pos());
    }
  }
  if (!r.done()) throw ParseError("trailing bytes after checkpoint tensors", r.pos());
  for (const auto& [name, t] : s.params) {
    if (!t.all_finite()) throw NonFiniteError("checkpoint tensor '" + name + "' holds non-finite values");
  }
  s.arch = infer_arch(s.params);
  return s;
}

void save_checkpoint(const ModelState& state, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  const auto bytes = encode_checkpoint(state);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

ModelState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingCheckpointError("cannot open checkpoint '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

Bound::Bound(ad::Graph& graph, const ModelState& state, std::set<std::string> trainable)
    : graph_(&graph), state_(&state), trainable_(std::move(trainable)) {}

ad::Var Bound::operator[](const std::string& name) const {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  const auto v = graph_->leaf(state_->at(name), trainable_.count(name) > 0);
  bound_.emplace(name, v);
  return v;
}

std::map<std::string, Tensor> Bound::gradients() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, v] : bound_) out.emplace(name, graph_->grad(v));
  return out;
}

}  // namespace gcum
