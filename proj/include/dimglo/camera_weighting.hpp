#pragma once

#include <string>

#include "dimglo/common.hpp"
#include "dimglo/embedding.hpp"
#include "dimglo/label_prediction.hpp"

namespace dimglo {

/// Pairwise camera gaps normalized to [0,1], plus the base weight that
/// makes the average positive-pair weight equal 1.
struct CameraGapTable {
  Matrix gap;              // C x C, symmetric, zero diagonal
  double base_weight = 1.0;  // w = 1 - mean_gap
  double mean_gap = 0.0;     // over positive pairs

  double pair_weight(int cam_a, int cam_b) const {
    return gap(cam_a, cam_b) + base_weight;
  }

  void write_csv(const std::string& path) const;
};

/// Squared maximum mean discrepancy with a Gaussian kernel
/// exp(-||x-y||^2 / (2 bw^2)). Within-set terms are unbiased for sets of
/// size >= 2 and biased (plain mean) for singletons; the result is clamped
/// at zero from below.
double mmd_gap(const Matrix& feats_a, const Matrix& feats_b, double bandwidth);

/// Median pairwise Euclidean distance of the pooled rows (median
/// heuristic); falls back to 1 when the median vanishes.
double median_bandwidth(const Matrix& pooled);

/// Affine rescale of the off-diagonal entries to [0,1] (min -> 0,
/// max -> 1); an all-equal table maps to all zeros.
Matrix normalize_gaps(const Matrix& raw);

/// g_m = mean normalized gap over the positive pairs of A; returns
/// w = 1 - g_m. Throws NoPositivePairsError when A is empty.
double base_weight(const Matrix& normalized_gaps, const AnnotationMatrix& a,
                   const IntVector& camera_ids);

/// Raw MMD gaps between per-camera feature subsets of the bank, normalized.
/// bandwidth <= 0 selects the median heuristic on all bank rows.
Matrix camera_gap_matrix(const FeatureBank& bank, double bandwidth = 0.0);

/// Full table against a given annotation matrix.
CameraGapTable make_gap_table(const Matrix& normalized_gaps,
                              const AnnotationMatrix& a,
                              const IntVector& camera_ids);

}  // namespace dimglo
