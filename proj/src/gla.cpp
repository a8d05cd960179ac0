#include "gcum/gla.hpp"

#include <algorithm>
#include <set>

#include "gcum/encoders.hpp"
#include "gcum/error.hpp"
#include "gcum/grce.hpp"

namespace gcum::gla {

using namespace gcum::ad;

std::vector<std::size_t> PromptSequence::slot_positions() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].source != TokenSource::kWord) out.push_back(i);
  }
  return out;
}

namespace {

TokenRef word(Word w) { return {TokenSource::kWord, static_cast<std::size_t>(w)}; }

void append_block(PromptSequence& seq, TokenSource source, std::size_t first_row, int count) {
  for (int m = 0; m < count; ++m) seq.tokens.push_back({source, first_row + static_cast<std::size_t>(m)});
}

const char* table_for(TokenSource s) {
  switch (s) {
    case TokenSource::kWord: return param::kWords;
    case TokenSource::kIdentity: return param::kTokens;
    case TokenSource::kPad: return param::kPad;
    case TokenSource::kGroup: return param::kGroupTokens;
  }
  return param::kWords;
}

}  // namespace

PromptSequence build_member_prompt(int identity_id, const Arch& arch) {
  if (identity_id < 0 || identity_id >= arch.n_identities) {
    throw PreconditionError("unknown identity " + std::to_string(identity_id));
  }
  PromptSequence seq;
  for (auto w : {Word::kA, Word::kPhoto, Word::kOf, Word::kLowerA}) seq.tokens.push_back(word(w));
  append_block(seq, TokenSource::kIdentity, static_cast<std::size_t>(identity_id * arch.M), arch.M);
  seq.tokens.push_back(word(Word::kPerson));
  return seq;
}

PromptSequence build_group_prompt(std::span<const int> member_identities, const Arch& arch) {
  if (member_identities.empty()) throw PreconditionError("group prompt needs at least one member");
  if (member_identities.size() > static_cast<std::size_t>(arch.K)) {
    throw PreconditionError("group has " + std::to_string(member_identities.size()) + " members but only " +
                            std::to_string(arch.K) + " prompt slots");
  }
  std::vector<int> members(member_identities.begin(), member_identities.end());
  std::sort(members.begin(), members.end());
  PromptSequence seq;
  for (auto w : {Word::kA, Word::kGroup, Word::kOf}) seq.tokens.push_back(word(w));
  for (int slot = 0; slot < arch.K; ++slot) {
    if (static_cast<std::size_t>(slot) < members.size()) {
      const int id = members[static_cast<std::size_t>(slot)];
      if (id < 0 || id >= arch.n_identities) throw PreconditionError("unknown identity " + std::to_string(id));
      append_block(seq, TokenSource::kIdentity, static_cast<std::size_t>(id * arch.M), arch.M);
    } else {
      append_block(seq, TokenSource::kPad, 0, arch.M);
    }
  }
  seq.tokens.push_back(word(Word::kPersons));
  return seq;
}

PromptSequence build_plain_group_prompt(int class_index, const Arch& arch) {
  if (class_index < 0 || class_index >= arch.n_classes) {
    throw PreconditionError("unknown group class " + std::to_string(class_index));
  }
  PromptSequence seq;
  for (auto w : {Word::kA, Word::kGroup, Word::kOf}) seq.tokens.push_back(word(w));
  append_block(seq, TokenSource::kGroup, static_cast<std::size_t>(class_index * arch.M), arch.M);
  seq.tokens.push_back(word(Word::kPersons));
  return seq;
}

Var embed_prompt(const Bound& p, const PromptSequence& prompt) {
  if (prompt.tokens.empty()) throw PreconditionError("empty prompt");
  // Gather maximal runs that read from the same table, then stack them.
  std::vector<Var> runs;
  std::size_t i = 0;
  while (i < prompt.tokens.size()) {
    const auto source = prompt.tokens[i].source;
    std::vector<std::size_t> rows;
    while (i < prompt.tokens.size() && prompt.tokens[i].source == source) rows.push_back(prompt.tokens[i++].row);
    runs.push_back(select_rows(p[table_for(source)], rows));
  }
  return runs.size() == 1 ? runs.front() : concat(runs, 0);
}

Var encode_prompt(const Bound& p, const PromptSequence& prompt) {
  return encoders::encode_text(p, embed_prompt(p, prompt));
}

LabelIndex LabelIndex::from(const Dataset& train) {
  LabelIndex index;
  for (int gid : train.group_ids()) {
    index.group_class[gid] = static_cast<int>(index.class_group.size());
    index.class_group.push_back(gid);
    index.roster[gid] = train.roster(gid);
  }
  return index;
}

int LabelIndex::class_of(int group_id) const {
  auto it = group_class.find(group_id);
  if (it == group_class.end()) throw PreconditionError("group " + std::to_string(group_id) + " is not a training class");
  return it->second;
}

Var class_text_feature(const Bound& p, const LabelIndex& index, int class_index, bool gla_enabled) {
  if (!gla_enabled) return encode_prompt(p, build_plain_group_prompt(class_index, p.arch()));
  const auto& roster = index.roster.at(index.class_group.at(static_cast<std::size_t>(class_index)));
  return encode_prompt(p, build_group_prompt(roster, p.arch()));
}

Var similarity_logits(Var visual, Var text, Var logit_scale) {
  return mul_scalar(matmul(visual, transpose(text)), ad::exp(logit_scale));
}

namespace {

void check_labels(Var logits, std::span<const std::size_t> labels) {
  if (labels.size() != logits.rows()) throw ShapeError("one label per visual feature is required");
  for (auto y : labels) {
    if (y >= logits.cols()) throw PreconditionError("label has no text feature");
  }
}

Var weighted_negative_sum(Var log_probs, Tensor weights) {
  auto* g = log_probs.graph;
  return scale(sum(mul(log_probs, g->constant(std::move(weights)))), -1.0);
}

}  // namespace

Var contrastive_t2i(Var logits, std::span<const std::size_t> labels, std::size_t y) {
  check_labels(logits, labels);
  const std::size_t batch = logits.rows(), classes = logits.cols();
  const auto positives = static_cast<double>(std::count(labels.begin(), labels.end(), y));
  if (positives == 0.0) throw PreconditionError("empty positive set for text class");
  Tensor w({classes, batch});
  for (std::size_t a = 0; a < batch; ++a) {
    if (labels[a] == y) w.at(y, a) = 1.0 / positives;
  }
  return weighted_negative_sum(log_softmax_rows(transpose(logits)), std::move(w));
}

Var contrastive_i2t(Var logits, std::span<const std::size_t> labels, std::size_t i) {
  check_labels(logits, labels);
  if (i >= logits.rows()) throw PreconditionError("anchor index out of range");
  Tensor w({logits.rows(), logits.cols()});
  w.at(i, labels[i]) = 1.0;
  return weighted_negative_sum(log_softmax_rows(logits), std::move(w));
}

Var contrastive_t2i_mean(Var logits, std::span<const std::size_t> labels) {
  check_labels(logits, labels);
  const std::size_t batch = logits.rows(), classes = logits.cols();
  std::vector<double> positives(classes, 0.0);
  for (auto y : labels) positives[y] += 1.0;
  Tensor w({classes, batch});
  for (std::size_t i = 0; i < batch; ++i) {
    const auto y = labels[i];
    for (std::size_t a = 0; a < batch; ++a) {
      if (labels[a] == y) w.at(y, a) += 1.0 / (static_cast<double>(batch) * positives[y]);
    }
  }
  return weighted_negative_sum(log_softmax_rows(transpose(logits)), std::move(w));
}

Var contrastive_i2t_mean(Var logits, std::span<const std::size_t> labels) {
  check_labels(logits, labels);
  const std::size_t batch = logits.rows();
  Tensor w({batch, logits.cols()});
  for (std::size_t i = 0; i < batch; ++i) w.at(i, labels[i]) = 1.0 / static_cast<double>(batch);
  return weighted_negative_sum(log_softmax_rows(logits), std::move(w));
}

Stage1Terms stage1_loss(const Bound& p, std::span<const GroupSample> batch, std::span<const mvs::Mask> masks,
                        const LabelIndex& index, bool gla_enabled) {
  if (batch.size() < 2) throw PreconditionError("stage-1 batch needs at least two group views");
  if (masks.size() != batch.size()) throw PreconditionError("one mask per group view is required");
  auto& g = p.graph();

  std::vector<Var> group_features, member_features;
  std::vector<int> group_classes, member_ids;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto enc = grce::encode_group(p, batch[i], &masks[i]);
    group_features.push_back(enc.group_feature);
    group_classes.push_back(index.class_of(batch[i].group_id));
    member_features.push_back(select_rows(enc.member_features, enc.retained));
    for (auto j : enc.retained) member_ids.push_back(batch[i].members[j].identity_id);
  }

  const Var logit_scale = p[param::kLogitScale];
  auto columns = [](const std::vector<int>& labels, std::vector<int>& present) {
    present.assign(labels.begin(), labels.end());
    std::sort(present.begin(), present.end());
    present.erase(std::unique(present.begin(), present.end()), present.end());
    std::vector<std::size_t> cols;
    for (int y : labels) cols.push_back(static_cast<std::size_t>(std::lower_bound(present.begin(), present.end(), y) - present.begin()));
    return cols;
  };

  std::vector<int> classes;
  const auto group_cols = columns(group_classes, classes);
  std::vector<Var> class_text;
  for (int c : classes) class_text.push_back(class_text_feature(p, index, c, gla_enabled));
  const Var group_logits = similarity_logits(concat(group_features, 0), concat(class_text, 0), logit_scale);
  const Var group_i2t = contrastive_i2t_mean(group_logits, group_cols);
  const Var group_t2i = contrastive_t2i_mean(group_logits, group_cols);

  Var member_i2t = g.constant(Tensor::scalar(0.0));
  Var member_t2i = member_i2t;
  if (member_ids.size() >= 2) {
    std::vector<int> identities;
    const auto member_cols = columns(member_ids, identities);
    std::vector<Var> identity_text;
    for (int id : identities) identity_text.push_back(encode_prompt(p, build_member_prompt(id, p.arch())));
    const Var member_logits =
        similarity_logits(concat(member_features, 0), concat(identity_text, 0), logit_scale);
    member_i2t = contrastive_i2t_mean(member_logits, member_cols);
    member_t2i = contrastive_t2i_mean(member_logits, member_cols);
  }
  const Var total = add(add(group_i2t, group_t2i), add(member_i2t, member_t2i));
  return {total, group_i2t, group_t2i, member_i2t, member_t2i};
}

}  // namespace gcum::gla
