#include "dimglo/camera_weighting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

namespace dimglo {

namespace {

double gaussian_kernel(const Matrix& a, Eigen::Index i, const Matrix& b,
                       Eigen::Index j, double two_bw2) {
  const Vector diff = (a.row(i) - b.row(j)).transpose();
  return std::exp(-diff.squaredNorm() / two_bw2);
}

// Mean kernel over within-set pairs: off-diagonal mean when m >= 2
// (unbiased), plain mean including the diagonal for singletons.
double within_term(const Matrix& x, double two_bw2) {
  const Eigen::Index m = x.rows();
  if (m == 1) return 1.0;  // k(x,x) with a Gaussian kernel
  double sum = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      if (i == j) continue;
      sum += gaussian_kernel(x, i, x, j, two_bw2);
    }
  }
  return sum / (static_cast<double>(m) * static_cast<double>(m - 1));
}

}  // namespace

double mmd_gap(const Matrix& feats_a, const Matrix& feats_b, double bandwidth) {
  if (feats_a.rows() == 0 || feats_b.rows() == 0) {
    throw EmptySetError("mmd_gap: empty feature set");
  }
  if (feats_a.cols() != feats_b.cols()) {
    throw DimensionMismatchError("mmd_gap: dimension mismatch");
  }
  if (bandwidth <= 0.0) throw Error("mmd_gap: bandwidth must be positive");
  const double two_bw2 = 2.0 * bandwidth * bandwidth;

  double cross = 0.0;
  for (Eigen::Index i = 0; i < feats_a.rows(); ++i) {
    for (Eigen::Index j = 0; j < feats_b.rows(); ++j) {
      cross += gaussian_kernel(feats_a, i, feats_b, j, two_bw2);
    }
  }
  cross /= static_cast<double>(feats_a.rows()) * static_cast<double>(feats_b.rows());

  const double value = within_term(feats_a, two_bw2) +
                       within_term(feats_b, two_bw2) - 2.0 * cross;
  return value > 0.0 ? value : 0.0;
}

double median_bandwidth(const Matrix& pooled) {
  const Eigen::Index n = pooled.rows();
  if (n < 2) return 1.0;
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      dists.push_back((pooled.row(i) - pooled.row(j)).norm());
    }
  }
  const std::size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
  const double med = dists[mid];
  return med > 1e-12 ? med : 1.0;
}

Matrix normalize_gaps(const Matrix& raw) {
  const Eigen::Index c = raw.rows();
  if (c < 2 || raw.cols() != c) {
    throw DimensionMismatchError("normalize_gaps: need square C>=2 table");
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < c; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) {
      if (i == j) continue;
      lo = std::min(lo, raw(i, j));
      hi = std::max(hi, raw(i, j));
    }
  }
  Matrix out = Matrix::Zero(c, c);
  const double span = hi - lo;
  if (span <= 0.0) return out;  // all-equal gaps degrade to uniform weights
  for (Eigen::Index i = 0; i < c; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) {
      if (i == j) continue;
      out(i, j) = (raw(i, j) - lo) / span;
    }
  }
  return out;
}

double base_weight(const Matrix& normalized_gaps, const AnnotationMatrix& a,
                   const IntVector& camera_ids) {
  if (camera_ids.size() != static_cast<std::size_t>(a.size())) {
    throw DimensionMismatchError("base_weight: camera id count mismatch");
  }
  double sum = 0.0;
  long long count = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    for (Eigen::Index j = i + 1; j < a.size(); ++j) {
      if (!a.positive(i, j)) continue;
      sum += normalized_gaps(camera_ids[static_cast<std::size_t>(i)],
                             camera_ids[static_cast<std::size_t>(j)]);
      ++count;
    }
  }
  if (count == 0) throw NoPositivePairsError("base_weight: no positive pairs");
  return 1.0 - sum / static_cast<double>(count);
}

Matrix camera_gap_matrix(const FeatureBank& bank, double bandwidth) {
  const int cameras = bank.camera_count();
  if (cameras < 2) {
    throw Error("camera_gap_matrix: need at least 2 cameras");
  }
  if (bandwidth <= 0.0) bandwidth = median_bandwidth(bank.rows());

  std::vector<IntVector> by_camera(static_cast<std::size_t>(cameras));
  for (Eigen::Index i = 0; i < bank.size(); ++i) {
    by_camera[static_cast<std::size_t>(bank.camera_ids()[static_cast<std::size_t>(i)])]
        .push_back(static_cast<int>(i));
  }
  std::vector<Matrix> subsets(static_cast<std::size_t>(cameras));
  for (int c = 0; c < cameras; ++c) {
    const auto& idx = by_camera[static_cast<std::size_t>(c)];
    if (idx.empty()) throw EmptySetError("camera_gap_matrix: empty camera");
    Matrix sub(static_cast<Eigen::Index>(idx.size()), bank.dim());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      sub.row(static_cast<Eigen::Index>(r)) = bank.rows().row(idx[r]);
    }
    subsets[static_cast<std::size_t>(c)] = std::move(sub);
  }

  Matrix raw = Matrix::Zero(cameras, cameras);
  for (int a = 0; a < cameras; ++a) {
    for (int b = a + 1; b < cameras; ++b) {
      const double g = mmd_gap(subsets[static_cast<std::size_t>(a)],
                               subsets[static_cast<std::size_t>(b)], bandwidth);
      raw(a, b) = g;
      raw(b, a) = g;
    }
  }
  return normalize_gaps(raw);
}

CameraGapTable make_gap_table(const Matrix& normalized_gaps,
                              const AnnotationMatrix& a,
                              const IntVector& camera_ids) {
  CameraGapTable table;
  table.gap = normalized_gaps;
  table.base_weight = base_weight(normalized_gaps, a, camera_ids);
  table.mean_gap = 1.0 - table.base_weight;
  return table;
}

void CameraGapTable::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  out.precision(17);
  out << "camera_a,camera_b,gap\n";
  for (Eigen::Index i = 0; i < gap.rows(); ++i) {
    for (Eigen::Index j = 0; j < gap.cols(); ++j) {
      out << i << "," << j << "," << gap(i, j) << "\n";
    }
  }
  out << "base_weight,," << base_weight << "\n";
  out << "mean_gap,," << mean_gap << "\n";
}

}  // namespace dimglo
