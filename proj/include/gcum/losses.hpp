#pragma once

#include <span>
#include <vector>

#include "gcum/autodiff.hpp"
#include "gcum/gla.hpp"
#include "gcum/model.hpp"
#include "gcum/mvs.hpp"
#include "gcum/synthdata.hpp"

namespace gcum::losses {

// q_true = 1 − ε + ε/N, q_other = ε/N.
Tensor smoothed_labels(std::size_t n_classes, std::size_t true_class, double epsilon);

// Σ_k −q_k log softmax(logits)_k for one row of logits (1×N).
ad::Var id_loss(ad::Var logits, std::size_t true_class, double epsilon);
// Batch mean of id_loss over the rows of logits (B×N).
ad::Var id_loss_mean(ad::Var logits, std::span<const std::size_t> labels, double epsilon);

// max(d_p − d_n + α, 0)
ad::Var triplet_loss(ad::Var d_pos, ad::Var d_neg, double alpha);
double triplet_loss(double d_pos, double d_neg, double alpha);

struct HardPair {
  std::size_t anchor = 0;
  std::size_t positive = 0;  // farthest same-label sample
  std::size_t negative = 0;  // nearest different-label sample
  double d_pos = 0.0;
  double d_neg = 0.0;
};

// Euclidean batch-hard mining over the rows of features. Every label must have
// at least two samples and the batch must contain at least two labels.
std::vector<HardPair> mine_batch_hard(const Tensor& features, std::span<const int> labels);

// Differentiable Euclidean distance between rows i and j of features (1×1).
ad::Var row_distance(ad::Var features, std::size_t i, std::size_t j);

// Smoothed cross-entropy over similarity logits cos(V', T_c)·exp(logit_scale)
// for every class c. text holds one unit-norm row per class.
ad::Var i2tce_loss(ad::Var refined, ad::Var text, ad::Var logit_scale, std::size_t true_class, double epsilon);
ad::Var i2tce_loss_mean(ad::Var refined, ad::Var text, ad::Var logit_scale, std::span<const std::size_t> labels,
                        double epsilon);

struct Stage2Terms {
  ad::Var total;
  ad::Var id;
  ad::Var triplet;
  ad::Var i2tce;
};

// Frozen per-class text features computed once from the stage-1 model.
Tensor class_text_features(const ModelState& stage1, const gla::LabelIndex& index, bool gla_enabled);

// L_stage2 = L_id + L_tri + L_i2tce, each a batch mean, over refined group
// features V'. masks may be empty (no member removal).
Stage2Terms stage2_loss(const Bound& p, std::span<const GroupSample> batch, std::span<const mvs::Mask> masks,
                        const gla::LabelIndex& index, const Tensor& text_features, const LossConfig& cfg);

}  // namespace gcum::losses
