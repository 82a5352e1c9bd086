#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dimglo/camera_weighting.hpp"
#include "dimglo/common.hpp"
#include "dimglo/embedding.hpp"
#include "dimglo/label_prediction.hpp"

namespace dimglo {

/// Loss value with gradients keyed by parameter-block name, shapes
/// matching the blocks they differentiate.
struct LossResult {
  double value = 0.0;
  std::map<std::string, Matrix> gradients;
};

// Scalar coefficients from differentiating the global loss; the gradient
// of an anchor is  sum_j coeff_pos(j) * v_j + sum_k coeff_neg(k) * v_k.
// Exposed so the pull/push sign and hardness properties are directly
// testable.

/// Always negative (a pull toward the positive).
double go_positive_coefficient(double pair_weight, double sim_pos,
                               double negative_sum, double beta,
                               Eigen::Index positive_count);

/// Always positive (a push away from the negative). weighted_inverse_sum
/// is sum_j (g_ij + w) / (sim(i,j) + S_n) over the anchor's positives.
double go_negative_coefficient(double sim_neg, double weighted_inverse_sum,
                               double beta, Eigen::Index positive_count);

/// Per-anchor global term from precomputed similarities. The loss depends
/// only on the ratio of the negative sum to each positive similarity, so
/// scaling every similarity by a common factor leaves it unchanged.
double go_anchor_value(const Vector& sims, const std::vector<int>& positives,
                       const std::vector<int>& negatives,
                       const Vector& pair_weights);

/// Global optimization loss over a batch of live anchors against the
/// cached bank. Gradients flow to the anchors only ("anchors" block,
/// K x d); bank rows are constants. Anchors without positives contribute
/// zero loss and zero gradient.
LossResult go_loss(const Matrix& anchors, const IntVector& anchor_indices,
                   const FeatureBank& bank, const AnnotationMatrix& a,
                   const CameraGapTable& gaps, double beta);

/// Local optimization loss: every unmasked batch pair is treated as
/// negative. Gradient block "batch" (K x d) accumulates each feature's
/// role as anchor and as other anchors' negative.
LossResult lo_loss(const Matrix& batch,
                   const std::vector<std::vector<bool>>& same_instance_mask,
                   double beta);

/// Discriminator objective: source scores toward 1, target toward 0.
/// Gradient blocks "scores_src", "scores_tgt" (column vectors).
LossResult dnet_loss(const Vector& scores_src, const Vector& scores_tgt);

/// Confusion objective for the encoder: all scores toward 0.5.
LossResult dim_loss(const Vector& scores_src, const Vector& scores_tgt);

/// Mean softmax cross-entropy, max-shift stabilized. Gradient block
/// "logits" (K x M).
LossResult ce_loss(const Matrix& logits, const IntVector& labels);

struct GradCheckEntry {
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;

  std::string to_json() const;
};

/// Central-difference check of an analytic gradient at one point. The
/// evaluator must be deterministic; it is probed twice at the base point.
/// Relative errors use max(|analytic|, |numeric|, 1e-3) as denominator —
/// the floor keeps finite-difference noise on near-zero coordinates from
/// drowning the signal.
GradCheckReport finite_diff_check(
    const std::function<double(const Vector&)>& loss_evaluator,
    const Vector& point, const Vector& analytic_gradient, double h,
    double tolerance);

}  // namespace dimglo
