#pragma once

#include <string>
#include <vector>

#include "dimglo/common.hpp"

namespace dimglo {

/// Symmetric nonnegative distances with zero diagonal.
using DistanceMatrix = Matrix;

void validate_distance_matrix(const DistanceMatrix& dist);

/// Euclidean distances between rows; the "original" distance the
/// re-ranking blends back in (monotone in cosine for unit rows).
DistanceMatrix euclidean_distance_matrix(const Matrix& features);

/// Full-row argsort by (distance, index). Index tie-break keeps neighbor
/// sets deterministic for duplicate points.
std::vector<IntVector> rank_by_distance(const DistanceMatrix& dist);

struct KReciprocalParams {
  int k1 = 20;
  int k2 = 6;
  double lambda = 0.3;  // weight of the original distance in the blend

  /// Caps k1 at N/4 and k2 at k1 so small sets keep valid neighborhoods.
  KReciprocalParams scaled_for(Eigen::Index n) const;
};

/// k-reciprocal re-ranked distance: (1-lambda)*Jaccard + lambda*original.
/// Reciprocal neighbor sets are expanded with half-size candidate sets
/// (2/3 overlap rule), weighted by exp(-d) and locally query-expanded
/// over the k2 nearest rows. Original distance is Euclidean on the rows.
DistanceMatrix k_reciprocal_distance(const Matrix& features, int k1, int k2,
                                     double lambda);

/// Same re-ranking straight from a precomputed original distance matrix.
DistanceMatrix k_reciprocal_from_distances(const DistanceMatrix& original,
                                           int k1, int k2, double lambda);

struct ClusterAssignment {
  IntVector labels;  // -1 marks noise; others contiguous from 0
  int cluster_count = 0;
};

/// Hierarchical density-based clustering (mutual-reachability MST,
/// condensed tree, excess-of-mass cluster selection). min_samples <= 0
/// defaults to min_cluster_size.
ClusterAssignment density_cluster(const DistanceMatrix& dist,
                                  int min_cluster_size, int min_samples = 0);

/// Symmetric boolean positive-pair matrix with false diagonal.
class AnnotationMatrix {
 public:
  AnnotationMatrix() = default;
  explicit AnnotationMatrix(Eigen::Index n);

  Eigen::Index size() const { return n_; }
  bool positive(Eigen::Index i, Eigen::Index j) const {
    return flags_[static_cast<std::size_t>(i * n_ + j)] != 0;
  }
  void set_positive(Eigen::Index i, Eigen::Index j);
  Eigen::Index positive_count(Eigen::Index i) const;  // ||A_i||_1
  Eigen::Index total_pairs() const;                   // unordered

  /// One `i,j` line per unordered positive pair, i < j.
  void write_pair_csv(const std::string& path) const;

 private:
  Eigen::Index n_ = 0;
  std::vector<bool> flags_;
};

/// positive(i,j) iff same non-noise cluster and dist(i,j) <= alpha.
AnnotationMatrix select_positive_pairs(const ClusterAssignment& clusters,
                                       const DistanceMatrix& dist,
                                       double alpha);

struct PairMetrics {
  double precision = 0.0;
  double recall = 0.0;
  bool empty_prediction = false;  // precision undefined, reported as 0
};

/// Precision/recall of predicted positive pairs against ground-truth ids
/// (synthetic benchmarks only).
PairMetrics pair_metrics(const AnnotationMatrix& annotation,
                         const IntVector& truth_ids);

}  // namespace dimglo
