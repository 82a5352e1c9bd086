#pragma once

#include <random>

#include "dimglo/common.hpp"
#include "dimglo/embedding.hpp"

namespace dimglo::testing {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng,
                            double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  }
  return m;
}

inline Matrix random_unit_rows(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m = random_matrix(rows, cols, rng);
  for (Eigen::Index i = 0; i < rows; ++i) {
    m.row(i) = l2_normalize(m.row(i)).transpose();
  }
  return m;
}

inline Vector random_unit(Eigen::Index dim, Rng& rng) {
  return l2_normalize(random_matrix(dim, 1, rng).col(0));
}

}  // namespace dimglo::testing
