#include "dimglo/objectives.hpp"

#include <cmath>
#include <sstream>

namespace dimglo {

double go_positive_coefficient(double pair_weight, double sim_pos,
                               double negative_sum, double beta,
                               Eigen::Index positive_count) {
  return -pair_weight * negative_sum /
         (beta * static_cast<double>(positive_count) * (sim_pos + negative_sum));
}

double go_negative_coefficient(double sim_neg, double weighted_inverse_sum,
                               double beta, Eigen::Index positive_count) {
  return sim_neg * weighted_inverse_sum /
         (beta * static_cast<double>(positive_count));
}

double go_anchor_value(const Vector& sims, const std::vector<int>& positives,
                       const std::vector<int>& negatives,
                       const Vector& pair_weights) {
  if (positives.empty()) return 0.0;
  double negative_sum = 0.0;
  for (int k : negatives) negative_sum += sims(k);
  double value = 0.0;
  for (std::size_t p = 0; p < positives.size(); ++p) {
    value += pair_weights(static_cast<Eigen::Index>(p)) *
             std::log1p(negative_sum / sims(positives[p]));
  }
  return value / static_cast<double>(positives.size());
}

LossResult go_loss(const Matrix& anchors, const IntVector& anchor_indices,
                   const FeatureBank& bank, const AnnotationMatrix& a,
                   const CameraGapTable& gaps, double beta) {
  if (beta <= 0.0) throw BetaNonPositiveError("go_loss: beta must be positive");
  if (anchors.cols() != bank.dim()) {
    throw BankMismatchError("go_loss: feature dimension mismatch");
  }
  if (a.size() != bank.size()) {
    throw BankMismatchError("go_loss: annotation size mismatch");
  }
  if (static_cast<Eigen::Index>(anchor_indices.size()) != anchors.rows()) {
    throw BankMismatchError("go_loss: anchor index count mismatch");
  }
  const Eigen::Index n = bank.size();
  for (int idx : anchor_indices) {
    if (idx < 0 || idx >= n) {
      throw BankMismatchError("go_loss: anchor index out of range");
    }
  }

  LossResult result;
  // One GEMM for all anchor-bank similarities, one for the gradient
  // contraction; the per-row work in between is linear.
  const Matrix sims =
      ((anchors * bank.rows().transpose()) / beta).array().exp();
  Matrix coeffs = Matrix::Zero(anchors.rows(), n);
  for (Eigen::Index r = 0; r < anchors.rows(); ++r) {
    const int self = anchor_indices[static_cast<std::size_t>(r)];
    const Eigen::Index pos_count = a.positive_count(self);
    if (pos_count == 0) continue;  // unannotated anchor: no loss, no pull

    const int cam_anchor = bank.camera_ids()[static_cast<std::size_t>(self)];

    // The anchor's own cached row is neither a positive nor a negative of
    // itself; every other non-positive row is a negative.
    double negative_sum = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k == self || a.positive(self, k)) continue;
      negative_sum += sims(r, k);
    }

    double value = 0.0;
    double weighted_inverse_sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!a.positive(self, j)) continue;
      const double weight =
          gaps.pair_weight(cam_anchor, bank.camera_ids()[static_cast<std::size_t>(j)]);
      value += weight * std::log1p(negative_sum / sims(r, j));
      weighted_inverse_sum += weight / (sims(r, j) + negative_sum);
      coeffs(r, j) = go_positive_coefficient(weight, sims(r, j), negative_sum,
                                             beta, pos_count);
    }
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k == self || a.positive(self, k)) continue;
      coeffs(r, k) = go_negative_coefficient(sims(r, k), weighted_inverse_sum,
                                             beta, pos_count);
    }
    result.value += value / static_cast<double>(pos_count);
  }
  result.gradients["anchors"] = coeffs * bank.rows();
  return result;
}

LossResult lo_loss(const Matrix& batch,
                   const std::vector<std::vector<bool>>& same_instance_mask,
                   double beta) {
  if (beta <= 0.0) throw BetaNonPositiveError("lo_loss: beta must be positive");
  const Eigen::Index k = batch.rows();
  if (same_instance_mask.size() != static_cast<std::size_t>(k)) {
    throw DimensionMismatchError("lo_loss: mask size mismatch");
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& row = same_instance_mask[static_cast<std::size_t>(i)];
    if (row.size() != static_cast<std::size_t>(k)) {
      throw DimensionMismatchError("lo_loss: mask row size mismatch");
    }
    if (!row[static_cast<std::size_t>(i)]) {
      throw Error("lo_loss: mask diagonal must be true");
    }
  }

  const Matrix sims = ((batch * batch.transpose()) / beta).array().exp();
  LossResult result;
  Matrix grad = Matrix::Zero(k, batch.cols());

  Vector z(k);  // 1 + per-anchor negative sum
  for (Eigen::Index i = 0; i < k; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (same_instance_mask[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) {
        continue;
      }
      s += sims(i, j);
    }
    z(i) = 1.0 + s;
    result.value += std::log(z(i));
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      if (same_instance_mask[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) {
        continue;
      }
      const double coeff = sims(i, j) / (beta * z(i));
      grad.row(i) += coeff * batch.row(j);  // i as anchor, pushed off j
      grad.row(j) += coeff * batch.row(i);  // j as i's negative
    }
  }
  result.gradients["batch"] = std::move(grad);
  return result;
}

namespace {

Matrix column(const Vector& v) { return v; }

}  // namespace

LossResult dnet_loss(const Vector& scores_src, const Vector& scores_tgt) {
  if (scores_src.size() == 0 || scores_tgt.size() == 0) {
    throw EmptyDomainError("dnet_loss: empty score sequence");
  }
  const double ns = static_cast<double>(scores_src.size());
  const double nt = static_cast<double>(scores_tgt.size());
  LossResult result;
  result.value = (scores_src.array() - 1.0).square().mean() +
                 scores_tgt.array().square().mean();
  result.gradients["scores_src"] = column(2.0 * (scores_src.array() - 1.0) / ns);
  result.gradients["scores_tgt"] = column(2.0 * scores_tgt.array() / nt);
  return result;
}

LossResult dim_loss(const Vector& scores_src, const Vector& scores_tgt) {
  if (scores_src.size() == 0 || scores_tgt.size() == 0) {
    throw EmptyDomainError("dim_loss: empty score sequence");
  }
  const double ns = static_cast<double>(scores_src.size());
  const double nt = static_cast<double>(scores_tgt.size());
  LossResult result;
  result.value = (scores_src.array() - 0.5).square().mean() +
                 (scores_tgt.array() - 0.5).square().mean();
  result.gradients["scores_src"] = column(2.0 * (scores_src.array() - 0.5) / ns);
  result.gradients["scores_tgt"] = column(2.0 * (scores_tgt.array() - 0.5) / nt);
  return result;
}

LossResult ce_loss(const Matrix& logits, const IntVector& labels) {
  const Eigen::Index k = logits.rows();
  const Eigen::Index m = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != k) {
    throw DimensionMismatchError("ce_loss: label count mismatch");
  }
  for (int label : labels) {
    if (label < 0 || label >= m) {
      throw LabelOutOfRangeError("ce_loss: label out of range");
    }
  }
  LossResult result;
  Matrix grad(k, m);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double shift = logits.row(i).maxCoeff();
    const Eigen::ArrayXd ex = (logits.row(i).array() - shift).exp();
    const double z = ex.sum();
    const Eigen::ArrayXd softmax = ex / z;
    result.value += -(logits(i, labels[static_cast<std::size_t>(i)]) - shift) +
                    std::log(z);
    grad.row(i) = softmax.matrix().transpose() / static_cast<double>(k);
    grad(i, labels[static_cast<std::size_t>(i)]) -= 1.0 / static_cast<double>(k);
  }
  result.value /= static_cast<double>(k);
  result.gradients["logits"] = std::move(grad);
  return result;
}

GradCheckReport finite_diff_check(
    const std::function<double(const Vector&)>& loss_evaluator,
    const Vector& point, const Vector& analytic_gradient, double h,
    double tolerance) {
  if (h <= 0.0) throw Error("finite_diff_check: h must be positive");
  if (point.size() != analytic_gradient.size()) {
    throw DimensionMismatchError("finite_diff_check: gradient size mismatch");
  }
  const double base = loss_evaluator(point);
  if (loss_evaluator(point) != base) {
    throw NonDeterministicLossError(
        "finite_diff_check: evaluator not deterministic");
  }

  GradCheckReport report;
  report.tolerance = tolerance;
  report.entries.resize(static_cast<std::size_t>(point.size()));
  Vector probe = point;
  for (Eigen::Index c = 0; c < point.size(); ++c) {
    probe(c) = point(c) + h;
    const double up = loss_evaluator(probe);
    probe(c) = point(c) - h;
    const double down = loss_evaluator(probe);
    probe(c) = point(c);

    GradCheckEntry& e = report.entries[static_cast<std::size_t>(c)];
    e.analytic = analytic_gradient(c);
    e.numeric = (up - down) / (2.0 * h);
    const double denom =
        std::max({std::abs(e.analytic), std::abs(e.numeric), 1e-3});
    e.rel_error = std::abs(e.analytic - e.numeric) / denom;
    report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
  }
  report.pass = report.max_rel_error < tolerance;
  return report;
}

std::string GradCheckReport::to_json() const {
  std::ostringstream out;
  out.precision(17);
  out << "{\"pass\":" << (pass ? "true" : "false")
      << ",\"tolerance\":" << tolerance
      << ",\"max_rel_error\":" << max_rel_error << ",\"coordinates\":"
      << entries.size() << "}";
  return out.str();
}

}  // namespace dimglo
