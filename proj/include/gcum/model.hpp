#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>

#include "gcum/autodiff.hpp"
#include "gcum/config.hpp"
#include "gcum/tensor.hpp"

namespace gcum {

// Sizes that fix every parameter shape.
struct Arch {
  int dim = 64;
  int d_a = 32;
  int M0 = 6;            // maximum members (rows of the quantity matrix)
  int K = 6;             // member slots in a group prompt
  int M = 4;             // learnable tokens per identity
  int n_identities = 0;  // rows of the identity token table / M
  int n_classes = 0;     // training group identities

  int max_prompt_len() const { return 3 + K * M + 1; }
  friend bool operator==(const Arch&, const Arch&) = default;
};

// Frozen template words, by row of prompt.words.
enum class Word : std::size_t { kA = 0, kPhoto, kOf, kLowerA, kPerson, kGroup, kPersons, kCount };

// Named parameter tensors. Names are the checkpoint keys.
struct ModelState {
  Arch arch;
  std::map<std::string, Tensor> params;

  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  friend bool operator==(const ModelState&, const ModelState&) = default;
};

namespace param {
inline constexpr const char* kMemberW1 = "member.w1";
inline constexpr const char* kMemberB1 = "member.b1";
inline constexpr const char* kMemberW2 = "member.w2";
inline constexpr const char* kMemberB2 = "member.b2";
inline constexpr const char* kGroupCls = "group.cls";
inline constexpr const char* kGroupProj = "group.proj";
inline constexpr const char* kTextPos = "text.pos";
inline constexpr const char* kTextProj = "text.proj";
inline constexpr const char* kWords = "prompt.words";
inline constexpr const char* kTokens = "prompt.tokens";
inline constexpr const char* kPad = "prompt.pad";
inline constexpr const char* kGroupTokens = "prompt.group_tokens";
inline constexpr const char* kQuantity = "mvs.em";
inline constexpr const char* kLogitScale = "gla.logit_scale";
inline constexpr const char* kGrceWq = "grce.wq";
inline constexpr const char* kGrceWk = "grce.wk";
inline constexpr const char* kGrceWv = "grce.wv";
inline constexpr const char* kClassifier = "grce.classifier";
}  // namespace param

// Parameters updated by each stage. Everything else stays frozen.
std::set<std::string> stage1_trainable(bool gla_enabled);
std::set<std::string> stage2_trainable();

// Frozen weights ~ N(0, 0.02); quantity matrix zero; identity/pad tokens
// N(0, 0.02); GRCE value projection starts at identity.
ModelState init_model(const Arch& arch, double temperature_init, std::uint64_t seed);
Arch arch_for(const RunConfig& cfg, int n_identities, int n_classes);
// Recovers sizes from tensor shapes; throws ShapeError on an inconsistent table.
Arch infer_arch(const std::map<std::string, Tensor>& params);

std::string encode_checkpoint(const ModelState& state);
ModelState decode_checkpoint(std::string_view bytes);
void save_checkpoint(const ModelState& state, const std::string& path);
ModelState load_checkpoint(const std::string& path);

// Exposes a ModelState to one Graph. Leaves are created on first use;
// names in `trainable` require gradients, the rest enter as constants.
class Bound {
 public:
  Bound(ad::Graph& graph, const ModelState& state, std::set<std::string> trainable = {});

  ad::Var operator[](const std::string& name) const;
  ad::Graph& graph() const { return *graph_; }
  const Arch& arch() const { return state_->arch; }
  const ModelState& state() const { return *state_; }
  bool is_trainable(const std::string& name) const { return trainable_.count(name) > 0; }

  // Gradients of every leaf bound so far (zeros for constants).
  std::map<std::string, Tensor> gradients() const;

 private:
  ad::Graph* graph_;
  const ModelState* state_;
  std::set<std::string> trainable_;
  mutable std::map<std::string, ad::Var> bound_;
};

}  // namespace gcum
