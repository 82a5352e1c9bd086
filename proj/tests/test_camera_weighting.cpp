#include <cmath>

#include "dimglo/camera_weighting.hpp"
#include "doctest.h"
#include "test_utils.hpp"

using namespace dimglo;

namespace {

// Double-loop kernel-sum reference, independent of the library path.
double mmd_reference(const Matrix& x, const Matrix& y, double bw) {
  auto kernel = [&](const Vector& a, const Vector& b) {
    return std::exp(-(a - b).squaredNorm() / (2.0 * bw * bw));
  };
  auto within = [&](const Matrix& s) {
    const Eigen::Index m = s.rows();
    if (m == 1) return kernel(s.row(0), s.row(0));
    double sum = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        if (i != j) sum += kernel(s.row(i), s.row(j));
      }
    }
    return sum / static_cast<double>(m * (m - 1));
  };
  double cross = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < y.rows(); ++j) {
      cross += kernel(x.row(i), y.row(j));
    }
  }
  cross /= static_cast<double>(x.rows() * y.rows());
  const double v = within(x) + within(y) - 2.0 * cross;
  return v > 0.0 ? v : 0.0;
}

}  // namespace

TEST_SUITE_BEGIN("camera_weighting");

TEST_CASE("mmd of a set with itself is zero") {
  Rng rng(17);
  const Matrix x = testing::random_matrix(8, 4, rng);
  CHECK(mmd_gap(x, x, 1.0) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(mmd_gap(x, x, 0.5) <= 1e-9);
}

TEST_CASE("mmd singleton arithmetic") {
  Matrix a(1, 2), b(1, 2);
  a << 1, 0;
  b << 0, 1;
  const double want = 2.0 - 2.0 * std::exp(-1.0);
  CHECK(mmd_gap(a, b, 1.0) == doctest::Approx(want).epsilon(1e-12));
  CHECK(want == doctest::Approx(1.264241).epsilon(1e-6));
}

TEST_CASE("mmd matches the double-loop reference") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(50 + seed);
    const Matrix x = testing::random_matrix(10, 5, rng);
    const Matrix y = testing::random_matrix(10, 5, rng, 1.4);
    const double bw = median_bandwidth(x);
    CHECK(mmd_gap(x, y, bw) == mmd_reference(x, y, bw));
  }
}

TEST_CASE("mmd symmetry and errors") {
  Rng rng(23);
  const Matrix x = testing::random_matrix(6, 3, rng);
  const Matrix y = testing::random_matrix(9, 3, rng);
  CHECK(mmd_gap(x, y, 0.8) == doctest::Approx(mmd_gap(y, x, 0.8)).epsilon(1e-15));
  CHECK_THROWS_AS(mmd_gap(Matrix(0, 3), y, 1.0), EmptySetError);
  CHECK_THROWS_AS(mmd_gap(x, y, 0.0), Error);
}

TEST_CASE("normalize_gaps affine map") {
  Matrix raw(3, 3);
  raw << 0.0, 0.2, 0.5, 0.2, 0.0, 0.8, 0.5, 0.8, 0.0;
  const Matrix out = normalize_gaps(raw);
  CHECK(out(0, 1) == 0.0);
  CHECK(out(0, 2) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out(1, 2) == 1.0);
  CHECK(out(0, 0) == 0.0);

  // idempotent on an already-normalized table spanning [0,1]
  const Matrix twice = normalize_gaps(out);
  CHECK((twice - out).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("normalize_gaps degenerate cases") {
  Matrix equal(3, 3);
  equal << 0.0, 0.4, 0.4, 0.4, 0.0, 0.4, 0.4, 0.4, 0.0;
  CHECK(normalize_gaps(equal).cwiseAbs().maxCoeff() == 0.0);

  Matrix two(2, 2);
  two << 0.0, 0.37, 0.37, 0.0;
  CHECK(normalize_gaps(two).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("base_weight mirrors the mean gap") {
  Matrix gaps(2, 2);
  AnnotationMatrix a(2);
  a.set_positive(0, 1);
  const IntVector cams = {0, 1};

  SUBCASE("mean gap 0.60 gives w 0.40") {
    gaps << 0.0, 0.60, 0.60, 0.0;
    CHECK(base_weight(gaps, a, cams) == doctest::Approx(0.40).epsilon(1e-12));
  }
  SUBCASE("same-camera pairs give w 1") {
    gaps << 0.0, 0.9, 0.9, 0.0;
    AnnotationMatrix same(2);
    same.set_positive(0, 1);
    CHECK(base_weight(gaps, same, {1, 1}) == 1.0);
  }
  SUBCASE("mean gap 0.74 gives w 0.26") {
    gaps << 0.0, 0.74, 0.74, 0.0;
    CHECK(base_weight(gaps, a, cams) == doctest::Approx(0.26).epsilon(1e-12));
  }
  SUBCASE("no positive pairs") {
    gaps << 0.0, 0.5, 0.5, 0.0;
    CHECK_THROWS_AS(base_weight(gaps, AnnotationMatrix(2), cams),
                    NoPositivePairsError);
  }
}

TEST_CASE("mean positive-pair weight is one by construction") {
  Rng rng(61);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 20;
    const int cameras = 4;
    Matrix raw = Matrix::Zero(cameras, cameras);
    std::uniform_real_distribution<double> gap_dist(0.0, 2.0);
    for (int i = 0; i < cameras; ++i) {
      for (int j = i + 1; j < cameras; ++j) {
        raw(i, j) = raw(j, i) = gap_dist(rng);
      }
    }
    const Matrix gaps = normalize_gaps(raw);
    IntVector cams;
    std::uniform_int_distribution<int> cam_dist(0, cameras - 1);
    for (int i = 0; i < n; ++i) cams.push_back(cam_dist(rng));
    AnnotationMatrix a(n);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (coin(rng) < 0.2) a.set_positive(i, j);
      }
    }
    if (a.total_pairs() == 0) continue;
    const CameraGapTable table = make_gap_table(gaps, a, cams);
    double sum = 0.0;
    long long count = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (!a.positive(i, j)) continue;
        sum += table.pair_weight(cams[static_cast<std::size_t>(i)],
                                 cams[static_cast<std::size_t>(j)]);
        ++count;
      }
    }
    CHECK(sum / static_cast<double>(count) ==
          doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("camera_gap_matrix from a bank") {
  Rng rng(71);
  const int per_camera = 12;
  const int cameras = 3;
  Matrix feats(per_camera * cameras, 4);
  IntVector cams;
  for (int c = 0; c < cameras; ++c) {
    for (int i = 0; i < per_camera; ++i) {
      Vector v = testing::random_unit(4, rng);
      v(0) += 0.8 * c;  // camera-dependent displacement
      feats.row(c * per_camera + i) = l2_normalize(v).transpose();
      cams.push_back(c);
    }
  }
  const FeatureBank bank = FeatureBank::init(
      feats, cams, std::vector<Domain>(cams.size(), Domain::Target));
  const Matrix gaps = camera_gap_matrix(bank);
  CHECK(gaps.rows() == cameras);
  CHECK(gaps.diagonal().cwiseAbs().maxCoeff() == 0.0);
  CHECK(gaps.maxCoeff() == 1.0);
  CHECK(gaps.minCoeff() >= 0.0);
  // camera 0 vs 2 should be the widest gap given the ramp displacement
  CHECK(gaps(0, 2) == 1.0);
}

TEST_SUITE_END();
