#include <algorithm>
#include <numeric>

#include "dimglo/evaluation.hpp"
#include "doctest.h"
#include "test_utils.hpp"

using namespace dimglo;

namespace {

// Exhaustive AP reference: rank with the same exclusion and tie rules,
// then recount precision at every true match from scratch.
double ap_reference(const Vector& query_feat, int qid, int qcam,
                    const Matrix& gallery, const IntVector& gids,
                    const IntVector& gcams) {
  std::vector<int> kept;
  for (int g = 0; g < gallery.rows(); ++g) {
    if (gids[static_cast<std::size_t>(g)] == qid &&
        gcams[static_cast<std::size_t>(g)] == qcam) {
      continue;
    }
    kept.push_back(g);
  }
  std::vector<double> sims;
  for (int g : kept) sims.push_back(gallery.row(g).dot(query_feat));
  std::vector<std::size_t> order(kept.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sims[a] > sims[b];
  });

  double ap = 0.0;
  int matches = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (gids[static_cast<std::size_t>(kept[order[r]])] != qid) continue;
    ++matches;
    int hits_upto = 0;
    for (std::size_t p = 0; p <= r; ++p) {
      if (gids[static_cast<std::size_t>(kept[order[p]])] == qid) ++hits_upto;
    }
    ap += static_cast<double>(hits_upto) / static_cast<double>(r + 1);
  }
  return matches > 0 ? ap / matches : -1.0;
}

struct EvalInstance {
  Matrix query, gallery;
  IntVector qids, qcams, gids, gcams;
};

EvalInstance random_instance(std::uint64_t seed, int queries = 20,
                             int gallery_size = 40, int ids = 6, int cams = 3,
                             int d = 6) {
  Rng rng(seed);
  EvalInstance inst;
  inst.query = testing::random_unit_rows(queries, d, rng);
  inst.gallery = testing::random_unit_rows(gallery_size, d, rng);
  std::uniform_int_distribution<int> id_dist(0, ids - 1);
  std::uniform_int_distribution<int> cam_dist(0, cams - 1);
  for (int q = 0; q < queries; ++q) {
    inst.qids.push_back(id_dist(rng));
    inst.qcams.push_back(cam_dist(rng));
  }
  for (int g = 0; g < gallery_size; ++g) {
    inst.gids.push_back(id_dist(rng));
    inst.gcams.push_back(cam_dist(rng));
  }
  return inst;
}

}  // namespace

TEST_SUITE_BEGIN("evaluation");

TEST_CASE("single top match gives AP 1 and a rank-1 hit") {
  Matrix query(1, 2);
  query << 1, 0;
  Matrix gallery(3, 2);
  gallery << 1, 0, 0, 1, -1, 0;
  const EvalResult r = evaluate(query, {5}, {0}, gallery, {5, 6, 7}, {1, 1, 1});
  CHECK(r.per_query_ap[0] == 1.0);
  CHECK(r.rank1 == 1.0);
  CHECK(r.mean_ap == 1.0);
}

TEST_CASE("matches at ranks 1 and 3") {
  Matrix query(1, 2);
  query << 1, 0;
  Matrix gallery(4, 2);
  const double c = std::sqrt(0.5);
  gallery << 1, 0,      // match, rank 1
      0.9, std::sqrt(1 - 0.81),  // other id, rank 2
      c, c,             // match, rank 3
      0, 1;             // other id, rank 4
  for (Eigen::Index i = 0; i < 4; ++i) {
    gallery.row(i) = l2_normalize(gallery.row(i)).transpose();
  }
  const EvalResult r =
      evaluate(query, {1}, {0}, gallery, {1, 2, 1, 3}, {1, 1, 1, 1});
  CHECK(r.per_query_ap[0] == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(std::abs(r.per_query_ap[0] - 0.833333) < 1e-6);
}

TEST_CASE("AP matches the exhaustive reference exactly") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const EvalInstance inst = random_instance(900 + seed);
    const EvalResult r = evaluate(inst.query, inst.qids, inst.qcams,
                                  inst.gallery, inst.gids, inst.gcams);
    std::size_t at = 0;
    for (int q = 0; q < inst.query.rows(); ++q) {
      const double want =
          ap_reference(inst.query.row(q).transpose(), inst.qids[q],
                       inst.qcams[q], inst.gallery, inst.gids, inst.gcams);
      if (want < 0.0) continue;  // skipped query
      CHECK(r.per_query_ap[at] == want);
      ++at;
    }
    CHECK(at == r.per_query_ap.size());
  }
}

TEST_CASE("same-identity same-camera gallery items are excluded") {
  Matrix query(1, 2);
  query << 1, 0;
  Matrix gallery(2, 2);
  gallery << 1, 0, 0.5, std::sqrt(0.75);
  // the only same-id item shares the camera: query must be skipped
  CHECK_THROWS_AS(
      evaluate(query, {1}, {0}, gallery, {1, 2}, {0, 0}),
      NoValidQueriesError);

  // with a second query that has a valid match, the first is tallied
  Matrix queries(2, 2);
  queries << 1, 0, 0, 1;
  const EvalResult r =
      evaluate(queries, {1, 2}, {0, 0}, gallery, {1, 2}, {0, 1});
  CHECK(r.skipped_queries == 1);
  CHECK(r.per_query_ap.size() == 1);
}

TEST_CASE("cmc curve is monotone nondecreasing") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const EvalInstance inst = random_instance(950 + seed);
    const std::vector<double> curve =
        cmc_curve(inst.query, inst.qids, inst.qcams, inst.gallery, inst.gids,
                  inst.gcams, 15);
    for (std::size_t k = 1; k < curve.size(); ++k) {
      CHECK(curve[k] >= curve[k - 1]);
    }
    CHECK(curve.back() <= 1.0);
    // rank1/5/10 from evaluate agree with the curve
    const EvalResult r = evaluate(inst.query, inst.qids, inst.qcams,
                                  inst.gallery, inst.gids, inst.gcams);
    CHECK(r.rank1 == curve[0]);
    CHECK(r.rank5 == curve[4]);
    CHECK(r.rank10 == curve[9]);
    CHECK(r.rank1 <= r.rank5);
    CHECK(r.rank5 <= r.rank10);
  }
}

TEST_CASE("metrics are invariant under a common rotation") {
  const EvalInstance inst = random_instance(977);
  Rng rng(978);
  // orthonormal basis via Gram-Schmidt on a random matrix
  Matrix q = testing::random_matrix(6, 6, rng);
  for (Eigen::Index c = 0; c < 6; ++c) {
    for (Eigen::Index p = 0; p < c; ++p) {
      q.col(c) -= q.col(p).dot(q.col(c)) * q.col(p);
    }
    q.col(c).normalize();
  }
  const EvalResult base = evaluate(inst.query, inst.qids, inst.qcams,
                                   inst.gallery, inst.gids, inst.gcams);
  const EvalResult rotated =
      evaluate(inst.query * q, inst.qids, inst.qcams, inst.gallery * q,
               inst.gids, inst.gcams);
  CHECK(rotated.rank1 == base.rank1);
  CHECK(rotated.rank5 == base.rank5);
  CHECK(rotated.rank10 == base.rank10);
  CHECK(rotated.mean_ap == doctest::Approx(base.mean_ap).epsilon(1e-12));
}

TEST_CASE("duplicating the gallery preserves rank-1") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const EvalInstance inst = random_instance(990 + seed);
    Matrix doubled(inst.gallery.rows() * 2, inst.gallery.cols());
    doubled << inst.gallery, inst.gallery;
    IntVector gids2 = inst.gids, gcams2 = inst.gcams;
    gids2.insert(gids2.end(), inst.gids.begin(), inst.gids.end());
    gcams2.insert(gcams2.end(), inst.gcams.begin(), inst.gcams.end());
    const EvalResult base = evaluate(inst.query, inst.qids, inst.qcams,
                                     inst.gallery, inst.gids, inst.gcams);
    const EvalResult dup = evaluate(inst.query, inst.qids, inst.qcams, doubled,
                                    gids2, gcams2);
    CHECK(dup.rank1 == base.rank1);
    CHECK(dup.skipped_queries == base.skipped_queries);
  }
}

TEST_SUITE_END();
