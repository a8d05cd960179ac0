#include "gcum/losses.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "gcum/error.hpp"
#include "gcum/grce.hpp"

namespace gcum::losses {

using namespace gcum::ad;

Tensor smoothed_labels(std::size_t n_classes, std::size_t true_class, double epsilon) {
  if (n_classes < 2) throw PreconditionError("label smoothing needs at least two classes");
  if (true_class >= n_classes) throw PreconditionError("class index " + std::to_string(true_class) + " out of range");
  const double other = epsilon / static_cast<double>(n_classes);
  std::vector<double> q(n_classes, other);
  q[true_class] = 1.0 - epsilon + other;
  return Tensor::matrix(1, n_classes, std::move(q));
}

Var id_loss(Var logits, std::size_t true_class, double epsilon) {
  if (logits.rows() != 1) throw ShapeError("id_loss expects a single row of logits");
  const std::size_t labels[] = {true_class};
  return id_loss_mean(logits, labels, epsilon);
}

Var id_loss_mean(Var logits, std::span<const std::size_t> labels, double epsilon) {
  const std::size_t batch = logits.rows(), n = logits.cols();
  if (labels.size() != batch) throw ShapeError("one label per logit row is required");
  Tensor q({batch, n});
  for (std::size_t i = 0; i < batch; ++i) {
    const auto row = smoothed_labels(n, labels[i], epsilon);
    for (std::size_t k = 0; k < n; ++k) q.at(i, k) = row[k] / static_cast<double>(batch);
  }
  return scale(sum(mul(log_softmax_rows(logits), logits.graph->constant(std::move(q)))), -1.0);
}

Var triplet_loss(Var d_pos, Var d_neg, double alpha) {
  if (alpha < 0.0) throw PreconditionError("triplet margin must be >= 0");
  return max_const(add_scalar(sub(d_pos, d_neg), alpha), 0.0);
}

double triplet_loss(double d_pos, double d_neg, double alpha) {
  if (alpha < 0.0) throw PreconditionError("triplet margin must be >= 0");
  return std::max(d_pos - d_neg + alpha, 0.0);
}

namespace {
double euclidean(const Tensor& f, std::size_t i, std::size_t j) {
  double ss = 0.0;
  for (std::size_t k = 0; k < f.cols(); ++k) {
    const double d = f.at(i, k) - f.at(j, k);
    ss += d * d;
  }
  return std::sqrt(ss);
}
}  // namespace

std::vector<HardPair> mine_batch_hard(const Tensor& features, std::span<const int> labels) {
  const std::size_t batch = features.rows();
  if (labels.size() != batch) throw ShapeError("one label per feature row is required");
  std::map<int, int> counts;
  for (int y : labels) ++counts[y];
  if (counts.size() < 2) throw PreconditionError("batch-hard mining needs at least two labels");
  for (const auto& [y, c] : counts) {
    if (c < 2) throw PreconditionError("label " + std::to_string(y) + " has no positive partner in the batch");
  }
  std::vector<HardPair> out;
  for (std::size_t a = 0; a < batch; ++a) {
    HardPair h{a, a, a, -1.0, std::numeric_limits<double>::infinity()};
    for (std::size_t j = 0; j < batch; ++j) {
      if (j == a) continue;
      const double d = euclidean(features, a, j);
      if (labels[j] == labels[a]) {
        if (d > h.d_pos) h.d_pos = d, h.positive = j;
      } else if (d < h.d_neg) {
        h.d_neg = d, h.negative = j;
      }
    }
    out.push_back(h);
  }
  return out;
}

Var row_distance(Var features, std::size_t i, std::size_t j) {
  const std::size_t ri[] = {i}, rj[] = {j};
  const Var diff = sub(select_rows(features, ri), select_rows(features, rj));
  const Var squared = sum(mul(diff, diff));
  // Coincident rows: distance 0 with zero subgradient.
  if (squared.item() <= 0.0) return features.graph->constant(Tensor::scalar(0.0));
  return ad::sqrt(squared);
}

Var i2tce_loss(Var refined, Var text, Var logit_scale, std::size_t true_class, double epsilon) {
  if (refined.rows() != 1) throw ShapeError("i2tce_loss expects a single refined feature");
  const std::size_t labels[] = {true_class};
  return i2tce_loss_mean(refined, text, logit_scale, labels, epsilon);
}

Var i2tce_loss_mean(Var refined, Var text, Var logit_scale, std::span<const std::size_t> labels, double epsilon) {
  for (auto y : labels) {
    if (y >= text.rows()) throw PreconditionError("class " + std::to_string(y) + " has no text feature");
  }
  return id_loss_mean(gla::similarity_logits(refined, text, logit_scale), labels, epsilon);
}

Tensor class_text_features(const ModelState& stage1, const gla::LabelIndex& index, bool gla_enabled) {
  Graph g;
  const Bound p(g, stage1);
  std::vector<Var> rows;
  for (std::size_t c = 0; c < index.n_classes(); ++c) {
    rows.push_back(gla::class_text_feature(p, index, static_cast<int>(c), gla_enabled));
  }
  return concat(rows, 0).value();
}

Stage2Terms stage2_loss(const Bound& p, std::span<const GroupSample> batch, std::span<const mvs::Mask> masks,
                        const gla::LabelIndex& index, const Tensor& text_features, const LossConfig& cfg) {
  if (!masks.empty() && masks.size() != batch.size()) throw PreconditionError("one mask per group view is required");
  if (text_features.rows() != index.n_classes()) throw PreconditionError("one text feature per class is required");
  auto& g = p.graph();
  std::vector<Var> refined;
  std::vector<std::size_t> classes;
  std::vector<int> labels;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    refined.push_back(grce::group_forward(p, batch[i], masks.empty() ? nullptr : &masks[i]));
    classes.push_back(static_cast<std::size_t>(index.class_of(batch[i].group_id)));
    labels.push_back(batch[i].group_id);
  }
  const Var features = concat(refined, 0);

  const Var id = id_loss_mean(matmul(features, transpose(p[param::kClassifier])), classes, cfg.epsilon);

  const auto pairs = mine_batch_hard(features.value(), labels);
  std::vector<Var> hinges;
  for (const auto& h : pairs) {
    hinges.push_back(triplet_loss(row_distance(features, h.anchor, h.positive),
                                  row_distance(features, h.anchor, h.negative), cfg.alpha));
  }
  const Var triplet = mean(concat(hinges, 0));

  const Var text = g.constant(text_features);
  const Var i2tce = i2tce_loss_mean(features, text, p[param::kLogitScale], classes, cfg.epsilon);
  return {add(add(id, triplet), i2tce), id, triplet, i2tce};
}

}  // namespace gcum::losses
