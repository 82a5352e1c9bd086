#include <filesystem>
#include <fstream>
#include <set>

#include "dimglo/label_prediction.hpp"
#include "doctest.h"
#include "kr_oracle.hpp"
#include "test_utils.hpp"

using namespace dimglo;

TEST_SUITE_BEGIN("label_prediction");

TEST_CASE("k_reciprocal lambda=1 reduces to the original distance") {
  Rng rng(5);
  const Matrix feats = testing::random_unit_rows(12, 4, rng);
  const DistanceMatrix original = euclidean_distance_matrix(feats);
  const DistanceMatrix out = k_reciprocal_distance(feats, 4, 2, 1.0);
  CHECK((out - original).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("k_reciprocal identical points have zero re-ranked distance") {
  Rng rng(9);
  Matrix feats = testing::random_unit_rows(10, 4, rng);
  feats.row(1) = feats.row(0);
  const DistanceMatrix out = k_reciprocal_distance(feats, 4, 2, 0.3);
  CHECK(std::abs(out(0, 1)) < 1e-12);
}

TEST_CASE("k_reciprocal matches the brute-force reference exactly") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    Rng rng(100 + seed);
    const Matrix feats = testing::random_unit_rows(20, 4, rng);
    const DistanceMatrix original = euclidean_distance_matrix(feats);
    const DistanceMatrix got = k_reciprocal_distance(feats, 6, 2, 0.3);
    const Matrix want = testing::k_reciprocal_reference(original, 6, 2, 0.3);
    CHECK((got - want).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("k_reciprocal output stays a valid distance matrix") {
  Rng rng(41);
  const Matrix feats = testing::random_unit_rows(25, 6, rng);
  const DistanceMatrix out = k_reciprocal_distance(feats, 8, 3, 0.3);
  validate_distance_matrix(out);
  const double max_original =
      euclidean_distance_matrix(feats).maxCoeff();
  CHECK(out.maxCoeff() <= 1.0 + max_original);
  CHECK(out.minCoeff() >= 0.0);
}

TEST_CASE("k_reciprocal parameter validation") {
  Rng rng(2);
  const Matrix feats = testing::random_unit_rows(10, 3, rng);
  CHECK_THROWS_AS(k_reciprocal_distance(feats, 2, 5, 0.3), InvalidKError);
  CHECK_THROWS_AS(k_reciprocal_distance(feats, 10, 2, 0.3), InvalidKError);
  CHECK_THROWS_AS(k_reciprocal_distance(feats, 4, 0, 0.3), InvalidKError);
  const KReciprocalParams scaled = KReciprocalParams{20, 6, 0.3}.scaled_for(12);
  CHECK(scaled.k1 == 3);
  CHECK(scaled.k2 == 3);
}

TEST_CASE("density_cluster separates two tight blobs") {
  // 8 + 8 points, intra distances in [0.05, 0.1], inter in [1.0, 1.2].
  Rng rng(13);
  std::uniform_real_distribution<double> intra(0.05, 0.1);
  std::uniform_real_distribution<double> inter(1.0, 1.2);
  const int n = 16;
  DistanceMatrix dist = DistanceMatrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const bool same = (i < 8) == (j < 8);
      const double d = same ? intra(rng) : inter(rng);
      dist(i, j) = d;
      dist(j, i) = d;
    }
  }
  const ClusterAssignment got = density_cluster(dist, 2);
  CHECK(got.cluster_count == 2);
  for (int i = 0; i < 8; ++i) {
    CHECK(got.labels[static_cast<std::size_t>(i)] == got.labels[0]);
    CHECK(got.labels[static_cast<std::size_t>(8 + i)] == got.labels[8]);
  }
  CHECK(got.labels[0] != got.labels[8]);
  CHECK(got.labels[0] >= 0);
}

TEST_CASE("density_cluster zero-diameter set is one cluster") {
  const DistanceMatrix dist = DistanceMatrix::Zero(5, 5);
  const ClusterAssignment got = density_cluster(dist, 2);
  CHECK(got.cluster_count == 1);
  for (int label : got.labels) CHECK(label == 0);
}

TEST_CASE("density_cluster mutually distant points are noise") {
  DistanceMatrix dist(3, 3);
  dist << 0.0, 2.0, 2.5, 2.0, 0.0, 2.2, 2.5, 2.2, 0.0;
  const ClusterAssignment got = density_cluster(dist, 2);
  CHECK(got.cluster_count == 0);
  for (int label : got.labels) CHECK(label == -1);
}

TEST_CASE("density_cluster labels are contiguous from zero") {
  Rng rng(21);
  // three blobs of different sizes plus scattered noise
  const std::vector<int> blob_sizes = {6, 9, 5};
  const int noise_points = 4;
  int n = noise_points;
  for (int s : blob_sizes) n += s;
  Matrix centers = 10.0 * testing::random_matrix(3, 3, rng);
  Matrix points(n, 3);
  int at = 0;
  for (std::size_t b = 0; b < blob_sizes.size(); ++b) {
    for (int i = 0; i < blob_sizes[b]; ++i) {
      points.row(at++) = centers.row(static_cast<Eigen::Index>(b)) +
                         0.01 * testing::random_matrix(1, 3, rng);
    }
  }
  for (int i = 0; i < noise_points; ++i) {
    points.row(at++) = 100.0 * (i + 1) * Matrix::Ones(1, 3);
  }
  const ClusterAssignment got =
      density_cluster(euclidean_distance_matrix(points), 3);
  CHECK(got.cluster_count == 3);
  std::set<int> seen;
  for (int label : got.labels) {
    if (label >= 0) seen.insert(label);
  }
  CHECK(seen == std::set<int>{0, 1, 2});
}

TEST_CASE("select_positive_pairs thresholding") {
  DistanceMatrix dist(3, 3);
  dist << 0.0, 0.3, 0.6, 0.3, 0.0, 0.1, 0.6, 0.1, 0.0;
  ClusterAssignment clusters;

  SUBCASE("same cluster inside alpha is positive") {
    clusters.labels = {0, 0, 1};
    clusters.cluster_count = 2;
    const AnnotationMatrix a = select_positive_pairs(clusters, dist, 0.5);
    CHECK(a.positive(0, 1));
    CHECK(a.positive(1, 0));
    CHECK_FALSE(a.positive(0, 2));
  }
  SUBCASE("same cluster beyond alpha is discarded") {
    clusters.labels = {0, 1, 0};
    clusters.cluster_count = 2;
    const AnnotationMatrix a = select_positive_pairs(clusters, dist, 0.5);
    CHECK_FALSE(a.positive(0, 2));  // distance 0.6 > 0.5
  }
  SUBCASE("different clusters never pair") {
    clusters.labels = {0, 1, 1};
    clusters.cluster_count = 2;
    const AnnotationMatrix a = select_positive_pairs(clusters, dist, 0.5);
    CHECK_FALSE(a.positive(0, 1));  // distance 0.3 but labels differ
    CHECK(a.positive(1, 2));
  }
  SUBCASE("noise never pairs") {
    clusters.labels = {-1, -1, -1};
    clusters.cluster_count = 0;
    const AnnotationMatrix a = select_positive_pairs(clusters, dist, 0.5);
    CHECK(a.total_pairs() == 0);
  }
}

TEST_CASE("annotation grows monotonically with alpha") {
  Rng rng(31);
  const Matrix feats = testing::random_unit_rows(30, 5, rng);
  const DistanceMatrix dist = k_reciprocal_distance(feats, 7, 3, 0.3);
  const ClusterAssignment clusters = density_cluster(dist, 3);
  const std::vector<double> alphas = {0.2, 0.4, 0.6, 0.8, 1.0};
  for (std::size_t t = 0; t + 1 < alphas.size(); ++t) {
    const AnnotationMatrix narrow =
        select_positive_pairs(clusters, dist, alphas[t]);
    const AnnotationMatrix wide =
        select_positive_pairs(clusters, dist, alphas[t + 1]);
    for (Eigen::Index i = 0; i < narrow.size(); ++i) {
      for (Eigen::Index j = 0; j < narrow.size(); ++j) {
        if (narrow.positive(i, j)) CHECK(wide.positive(i, j));
      }
    }
  }
}

TEST_CASE("annotation symmetry and empty diagonal") {
  Rng rng(37);
  const Matrix feats = testing::random_unit_rows(24, 5, rng);
  const DistanceMatrix dist = k_reciprocal_distance(feats, 6, 2, 0.3);
  const ClusterAssignment clusters = density_cluster(dist, 3);
  const AnnotationMatrix a = select_positive_pairs(clusters, dist, 0.6);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    CHECK_FALSE(a.positive(i, i));
    for (Eigen::Index j = 0; j < a.size(); ++j) {
      CHECK(a.positive(i, j) == a.positive(j, i));
    }
  }
}

TEST_CASE("pair_metrics counting") {
  AnnotationMatrix a(4);

  SUBCASE("exact prediction") {
    a.set_positive(0, 1);
    a.set_positive(2, 3);
    const PairMetrics m = pair_metrics(a, {7, 7, 9, 9});
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK_FALSE(m.empty_prediction);
  }
  SUBCASE("empty prediction flags precision") {
    const PairMetrics m = pair_metrics(a, {7, 7, 9, 9});
    CHECK(m.precision == 0.0);
    CHECK(m.recall == 0.0);
    CHECK(m.empty_prediction);
  }
  SUBCASE("half of true pairs, no false positives") {
    a.set_positive(0, 1);
    const PairMetrics m = pair_metrics(a, {7, 7, 7, 9});
    // truth pairs: (0,1), (0,2), (1,2)
    CHECK(m.precision == 1.0);
    CHECK(m.recall == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
}

TEST_CASE("pair list export") {
  AnnotationMatrix a(3);
  a.set_positive(0, 2);
  const auto path =
      (std::filesystem::temp_directory_path() / "dimglo_pairs.csv").string();
  a.write_pair_csv(path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "i,j");
  std::getline(in, line);
  CHECK(line == "0,2");
  CHECK_FALSE(std::getline(in, line));
  std::filesystem::remove(path);
}

TEST_SUITE_END();
