#pragma once

#include <map>
#include <span>
#include <vector>

#include "gcum/autodiff.hpp"
#include "gcum/model.hpp"
#include "gcum/mvs.hpp"
#include "gcum/synthdata.hpp"

// Group layout adaptation: prompt assembly from token tables and the
// cross-modal supervised contrastive losses.
namespace gcum::gla {

enum class TokenSource { kWord, kIdentity, kPad, kGroup };

struct TokenRef {
  TokenSource source = TokenSource::kWord;
  std::size_t row = 0;  // row of the backing table

  friend bool operator==(const TokenRef&, const TokenRef&) = default;
};

// Symbolic prompt: which table row feeds each position.
struct PromptSequence {
  std::vector<TokenRef> tokens;

  std::size_t length() const { return tokens.size(); }
  // Positions holding learnable [X] / [P] / group-token slots.
  std::vector<std::size_t> slot_positions() const;

  friend bool operator==(const PromptSequence&, const PromptSequence&) = default;
};

// "A photo of a [X]_1 … [X]_M person"
PromptSequence build_member_prompt(int identity_id, const Arch& arch);

// "A group of [P]_1 … [P]_K persons". Members are sorted by identity id; slot k
// holds member k's token block and slots past the member count hold the shared
// pad block.
PromptSequence build_group_prompt(std::span<const int> member_identities, const Arch& arch);

// Ablation without layout adaptation: one learnable token block per group class.
PromptSequence build_plain_group_prompt(int class_index, const Arch& arch);

// Token embeddings (L×dim) for a symbolic prompt.
ad::Var embed_prompt(const Bound& p, const PromptSequence& prompt);

// Text feature for a prompt (1×dim, unit norm).
ad::Var encode_prompt(const Bound& p, const PromptSequence& prompt);

// Maps training group ids to dense class indices and records each group's roster.
struct LabelIndex {
  std::vector<int> class_group;       // class index → group id
  std::map<int, int> group_class;     // group id → class index
  std::map<int, std::vector<int>> roster;

  static LabelIndex from(const Dataset& train);
  int class_of(int group_id) const;
  std::size_t n_classes() const { return class_group.size(); }
};

// Text feature of a group class under the active prompt style.
ad::Var class_text_feature(const Bound& p, const LabelIndex& index, int class_index, bool gla_enabled);

// logits[a][c] = cos(V_a, T_c) · exp(logit_scale).
ad::Var similarity_logits(ad::Var visual, ad::Var text, ad::Var logit_scale);

// labels[a] is the column of T that sample a belongs to.
// L_t2i(y) = −1/|P(y)| Σ_{p∈P(y)} log softmax_over_a(logits[·][y])[p]
ad::Var contrastive_t2i(ad::Var logits, std::span<const std::size_t> labels, std::size_t y);
// L_i2t(i) = −log softmax_over_c(logits[i][·])[labels[i]]
ad::Var contrastive_i2t(ad::Var logits, std::span<const std::size_t> labels, std::size_t i);
// Batch means: mean_i L_t2i(labels[i]) and mean_i L_i2t(i).
ad::Var contrastive_t2i_mean(ad::Var logits, std::span<const std::size_t> labels);
ad::Var contrastive_i2t_mean(ad::Var logits, std::span<const std::size_t> labels);

struct Stage1Terms {
  ad::Var total;
  ad::Var group_i2t;
  ad::Var group_t2i;
  ad::Var member_i2t;
  ad::Var member_t2i;
};

// L_stage1 = L_i2t + L_t2i at the group granularity (group features vs group
// prompts) plus the same pair at the member granularity (member features vs
// member prompts). masks[i] applies to batch[i].
Stage1Terms stage1_loss(const Bound& p, std::span<const GroupSample> batch, std::span<const mvs::Mask> masks,
                        const LabelIndex& index, bool gla_enabled);

}  // namespace gcum::gla
