#include "dimglo/label_prediction.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <thread>

namespace dimglo {

namespace {

constexpr double kSymmetryTol = 1e-9;
constexpr double kLambdaDistanceFloor = 1e-12;  // caps lambda at 1e12

// Interleaved two-worker split. Each row's result is written to its own
// slot, so the output is independent of the schedule; interleaving keeps
// triangular workloads balanced.
template <typename Fn>
void parallel_rows(Eigen::Index n, const Fn& fn) {
  if (n < 256) {
    for (Eigen::Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::thread other([&] {
    for (Eigen::Index i = 1; i < n; i += 2) fn(i);
  });
  for (Eigen::Index i = 0; i < n; i += 2) fn(i);
  other.join();
}

}  // namespace

void validate_distance_matrix(const DistanceMatrix& dist) {
  if (dist.rows() != dist.cols()) {
    throw DimensionMismatchError("distance matrix must be square");
  }
  for (Eigen::Index i = 0; i < dist.rows(); ++i) {
    if (dist(i, i) != 0.0) throw Error("distance matrix diagonal must be zero");
    for (Eigen::Index j = i + 1; j < dist.cols(); ++j) {
      if (dist(i, j) < 0.0) throw Error("distance matrix must be nonnegative");
      if (std::abs(dist(i, j) - dist(j, i)) > kSymmetryTol) {
        throw Error("distance matrix must be symmetric");
      }
    }
  }
}

DistanceMatrix euclidean_distance_matrix(const Matrix& features) {
  const Eigen::Index n = features.rows();
  const Matrix gram = features * features.transpose();
  DistanceMatrix dist = DistanceMatrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double sq = gram(i, i) + gram(j, j) - 2.0 * gram(i, j);
      const double d = sq > 0.0 ? std::sqrt(sq) : 0.0;
      dist(i, j) = d;
      dist(j, i) = d;
    }
  }
  return dist;
}

std::vector<IntVector> rank_by_distance(const DistanceMatrix& dist) {
  const Eigen::Index n = dist.rows();
  // Column-major storage makes row reads strided; sorting against a
  // materialized transpose keeps the inner loop contiguous.
  const Matrix by_row = dist.transpose();
  std::vector<IntVector> ranks(static_cast<std::size_t>(n));
  parallel_rows(n, [&](Eigen::Index i) {
    std::vector<std::pair<double, int>> row(static_cast<std::size_t>(n));
    const double* values = by_row.col(i).data();
    for (Eigen::Index j = 0; j < n; ++j) {
      row[static_cast<std::size_t>(j)] = {values[j], static_cast<int>(j)};
    }
    // pair comparison ties on the index, keeping neighbor order
    // deterministic for duplicate points
    std::sort(row.begin(), row.end());
    IntVector order(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) {
      order[static_cast<std::size_t>(j)] = row[static_cast<std::size_t>(j)].second;
    }
    ranks[static_cast<std::size_t>(i)] = std::move(order);
  });
  return ranks;
}

KReciprocalParams KReciprocalParams::scaled_for(Eigen::Index n) const {
  KReciprocalParams p = *this;
  const int cap = std::max(2, static_cast<int>(n / 4));
  p.k1 = std::min(p.k1, cap);
  p.k1 = std::min(p.k1, static_cast<int>(n) - 1);
  p.k2 = std::min(p.k2, p.k1);
  return p;
}

namespace {

// Sparse weight row, indices strictly ascending.
using SparseRow = std::vector<std::pair<int, double>>;

// First k+1 ranked entries (the row itself rides along at distance 0).
IntVector neighborhood(const std::vector<IntVector>& ranks, int i, int k) {
  const auto& r = ranks[static_cast<std::size_t>(i)];
  return IntVector(r.begin(), r.begin() + std::min<std::size_t>(r.size(), k + 1));
}

bool contains(const IntVector& sorted_set, int x) {
  return std::binary_search(sorted_set.begin(), sorted_set.end(), x);
}

// Reciprocal subset of the k-neighborhood of i: keep j when i also sits in
// j's k-neighborhood. Returned sorted ascending.
IntVector reciprocal_set(const std::vector<IntVector>& ranks,
                         const std::vector<IntVector>& sorted_neigh, int i,
                         int k) {
  IntVector out;
  for (int j : neighborhood(ranks, i, k)) {
    if (contains(sorted_neigh[static_cast<std::size_t>(j)], i)) out.push_back(j);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

DistanceMatrix k_reciprocal_distance(const Matrix& features, int k1, int k2,
                                     double lambda) {
  return k_reciprocal_from_distances(euclidean_distance_matrix(features), k1,
                                     k2, lambda);
}

DistanceMatrix k_reciprocal_from_distances(const DistanceMatrix& original,
                                           int k1, int k2, double lambda) {
  const Eigen::Index n = original.rows();
  if (n < 2) throw DimensionMismatchError("k_reciprocal_distance: need N >= 2");
  if (!(1 <= k2 && k2 <= k1 && k1 < n)) {
    throw InvalidKError("k_reciprocal_distance: need 1 <= k2 <= k1 < N");
  }
  if (lambda < 0.0 || lambda > 1.0) {
    throw Error("k_reciprocal_distance: lambda must be in [0,1]");
  }
  validate_distance_matrix(original);

  const auto ranks = rank_by_distance(original);
  const int half_k = k1 / 2;

  std::vector<IntVector> sorted_k1(static_cast<std::size_t>(n));
  std::vector<IntVector> sorted_half(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto nk = neighborhood(ranks, i, k1);
    std::sort(nk.begin(), nk.end());
    sorted_k1[static_cast<std::size_t>(i)] = std::move(nk);
    auto nh = neighborhood(ranks, i, half_k);
    std::sort(nh.begin(), nh.end());
    sorted_half[static_cast<std::size_t>(i)] = std::move(nh);
  }

  std::vector<SparseRow> weights(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const IntVector recip = reciprocal_set(ranks, sorted_k1, i, k1);

    // Expansion: pull in a candidate's half-size reciprocal set when at
    // least 2/3 of it already overlaps the base set.
    IntVector expanded = recip;
    for (int j : recip) {
      const IntVector cand = reciprocal_set(ranks, sorted_half, j, half_k);
      std::size_t overlap = 0;
      for (int c : cand) {
        if (contains(recip, c)) ++overlap;
      }
      if (3 * overlap > 2 * cand.size()) {
        expanded.insert(expanded.end(), cand.begin(), cand.end());
      }
    }
    std::sort(expanded.begin(), expanded.end());
    expanded.erase(std::unique(expanded.begin(), expanded.end()),
                   expanded.end());

    SparseRow row;
    row.reserve(expanded.size());
    double norm = 0.0;
    for (int j : expanded) {
      const double w = std::exp(-original(i, j));
      row.emplace_back(j, w);
      norm += w;
    }
    for (auto& [j, w] : row) w /= norm;
    weights[static_cast<std::size_t>(i)] = std::move(row);
  }

  // Local query expansion: average the weight rows of the k2 nearest rows.
  if (k2 > 1) {
    std::vector<SparseRow> expanded(static_cast<std::size_t>(n));
    std::vector<double> dense(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
      const auto& r = ranks[static_cast<std::size_t>(i)];
      IntVector touched;
      for (int t = 0; t < k2; ++t) {
        for (const auto& [j, w] : weights[static_cast<std::size_t>(r[t])]) {
          if (dense[static_cast<std::size_t>(j)] == 0.0) touched.push_back(j);
          dense[static_cast<std::size_t>(j)] += w;
        }
      }
      std::sort(touched.begin(), touched.end());
      SparseRow row;
      row.reserve(touched.size());
      for (int j : touched) {
        row.emplace_back(j, dense[static_cast<std::size_t>(j)] / k2);
        dense[static_cast<std::size_t>(j)] = 0.0;
      }
      expanded[static_cast<std::size_t>(i)] = std::move(row);
    }
    weights = std::move(expanded);
  }

  DistanceMatrix combined(n, n);
  parallel_rows(n, [&](Eigen::Index row_i) {
    const int i = static_cast<int>(row_i);
    const auto& a = weights[static_cast<std::size_t>(i)];
    const auto* a_data = a.data();
    const std::size_t a_size = a.size();
    for (int j = i; j < n; ++j) {
      const auto& b = weights[static_cast<std::size_t>(j)];
      const auto* b_data = b.data();
      const std::size_t b_size = b.size();
      double sum_min = 0.0, sum_max = 0.0;
      std::size_t p = 0, q = 0;
      while (p < a_size && q < b_size) {
        const int ai = a_data[p].first;
        const int bi = b_data[q].first;
        if (ai < bi) {
          sum_max += a_data[p].second;
          ++p;
        } else if (bi < ai) {
          sum_max += b_data[q].second;
          ++q;
        } else {
          sum_min += std::min(a_data[p].second, b_data[q].second);
          sum_max += std::max(a_data[p].second, b_data[q].second);
          ++p;
          ++q;
        }
      }
      for (; p < a_size; ++p) sum_max += a_data[p].second;
      for (; q < b_size; ++q) sum_max += b_data[q].second;
      const double jaccard = sum_max > 0.0 ? 1.0 - sum_min / sum_max : 1.0;
      const double d = (1.0 - lambda) * jaccard + lambda * original(i, j);
      combined(i, j) = d;
      combined(j, i) = d;
    }
  });
  return combined;
}

// ---------------------------------------------------------------------------
// Hierarchical density-based clustering
// ---------------------------------------------------------------------------

namespace {

struct DendroNode {
  int left = -1;   // < N: leaf index; >= N: internal node
  int right = -1;
  double distance = 0.0;
  int size = 1;
};

struct CondensedRow {
  int parent = 0;  // condensed cluster id
  int child = 0;   // point index when is_point, else condensed cluster id
  bool is_point = false;
  double lambda = 0.0;
  int size = 1;
};

double merge_lambda(double distance) {
  return 1.0 / std::max(distance, kLambdaDistanceFloor);
}

void collect_leaves(const std::vector<DendroNode>& nodes, int root, int n,
                    IntVector& out) {
  IntVector stack{root};
  while (!stack.empty()) {
    const int node = stack.back();
    stack.pop_back();
    if (node < n) {
      out.push_back(node);
    } else {
      stack.push_back(nodes[static_cast<std::size_t>(node - n)].left);
      stack.push_back(nodes[static_cast<std::size_t>(node - n)].right);
    }
  }
}

}  // namespace

ClusterAssignment density_cluster(const DistanceMatrix& dist,
                                  int min_cluster_size, int min_samples) {
  validate_distance_matrix(dist);
  if (min_cluster_size < 2) {
    throw Error("density_cluster: min_cluster_size must be >= 2");
  }
  const int n = static_cast<int>(dist.rows());
  ClusterAssignment result;
  result.labels.assign(static_cast<std::size_t>(n), -1);
  if (n < 2) return result;
  if (min_samples <= 0) min_samples = min_cluster_size;
  min_samples = std::min(min_samples, n);

  // A zero-diameter set never separates at any density level; it is one
  // cluster whenever it is large enough to be dense at all.
  if (dist.maxCoeff() <= kLambdaDistanceFloor) {
    if (n >= min_cluster_size) {
      std::fill(result.labels.begin(), result.labels.end(), 0);
      result.cluster_count = 1;
    }
    return result;
  }

  // Core distance: k-th nearest with the point counting as its own 0-th
  // neighbor, k = min_samples.
  Vector core(n);
  {
    std::vector<double> row(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) row[static_cast<std::size_t>(j)] = dist(i, j);
      std::nth_element(row.begin(), row.begin() + (min_samples - 1), row.end());
      core(i) = row[static_cast<std::size_t>(min_samples - 1)];
    }
  }

  // Prim's MST over mutual reachability distances.
  std::vector<int> mst_from(static_cast<std::size_t>(n), 0);
  std::vector<double> best(static_cast<std::size_t>(n),
                           std::numeric_limits<double>::infinity());
  std::vector<bool> in_tree(static_cast<std::size_t>(n), false);
  struct Edge {
    int a, b;
    double w;
  };
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(n) - 1);
  int current = 0;
  in_tree[0] = true;
  for (int step = 1; step < n; ++step) {
    for (int j = 0; j < n; ++j) {
      if (in_tree[static_cast<std::size_t>(j)]) continue;
      const double w =
          std::max({core(current), core(j), dist(current, j)});
      if (w < best[static_cast<std::size_t>(j)]) {
        best[static_cast<std::size_t>(j)] = w;
        mst_from[static_cast<std::size_t>(j)] = current;
      }
    }
    int next = -1;
    for (int j = 0; j < n; ++j) {
      if (!in_tree[static_cast<std::size_t>(j)] &&
          (next == -1 || best[static_cast<std::size_t>(j)] <
                             best[static_cast<std::size_t>(next)])) {
        next = j;
      }
    }
    edges.push_back({mst_from[static_cast<std::size_t>(next)], next,
                     best[static_cast<std::size_t>(next)]});
    in_tree[static_cast<std::size_t>(next)] = true;
    current = next;
  }
  std::stable_sort(edges.begin(), edges.end(),
                   [](const Edge& x, const Edge& y) { return x.w < y.w; });

  // Single-linkage dendrogram via union-find.
  std::vector<DendroNode> nodes;
  nodes.reserve(static_cast<std::size_t>(n) - 1);
  std::vector<int> find_root(static_cast<std::size_t>(2 * n - 1));
  std::iota(find_root.begin(), find_root.end(), 0);
  auto find = [&](int x) {
    while (find_root[static_cast<std::size_t>(x)] != x) {
      find_root[static_cast<std::size_t>(x)] =
          find_root[static_cast<std::size_t>(find_root[static_cast<std::size_t>(x)])];
      x = find_root[static_cast<std::size_t>(x)];
    }
    return x;
  };
  for (const Edge& e : edges) {
    const int ra = find(e.a);
    const int rb = find(e.b);
    DendroNode node;
    node.left = ra;
    node.right = rb;
    node.distance = e.w;
    node.size = (ra < n ? 1 : nodes[static_cast<std::size_t>(ra - n)].size) +
                (rb < n ? 1 : nodes[static_cast<std::size_t>(rb - n)].size);
    const int id = n + static_cast<int>(nodes.size());
    nodes.push_back(node);
    find_root[static_cast<std::size_t>(ra)] = id;
    find_root[static_cast<std::size_t>(rb)] = id;
  }

  // Condense the dendrogram: clusters persist through sub-threshold splits,
  // shedding the small side as point fall-outs.
  std::vector<CondensedRow> rows;
  std::vector<double> birth{0.0};   // per condensed cluster
  std::vector<int> parent_of{-1};
  std::vector<std::pair<int, int>> stack{{n + static_cast<int>(nodes.size()) - 1, 0}};
  auto node_size = [&](int id) {
    return id < n ? 1 : nodes[static_cast<std::size_t>(id - n)].size;
  };
  while (!stack.empty()) {
    const auto [id, cluster] = stack.back();
    stack.pop_back();
    const DendroNode& node = nodes[static_cast<std::size_t>(id - n)];
    const double lam = merge_lambda(node.distance);
    const bool big_l = node_size(node.left) >= min_cluster_size;
    const bool big_r = node_size(node.right) >= min_cluster_size;
    if (big_l && big_r) {
      for (int child_id : {node.left, node.right}) {
        const int cl = static_cast<int>(birth.size());
        birth.push_back(lam);
        parent_of.push_back(cluster);
        rows.push_back({cluster, cl, false, lam, node_size(child_id)});
        stack.emplace_back(child_id, cl);
      }
    } else if (big_l || big_r) {
      const int big = big_l ? node.left : node.right;
      const int small = big_l ? node.right : node.left;
      IntVector shed;
      collect_leaves(nodes, small, n, shed);
      for (int p : shed) rows.push_back({cluster, p, true, lam, 1});
      stack.emplace_back(big, cluster);
    } else {
      IntVector shed;
      collect_leaves(nodes, node.left, n, shed);
      collect_leaves(nodes, node.right, n, shed);
      for (int p : shed) rows.push_back({cluster, p, true, lam, 1});
    }
  }

  const int cluster_total = static_cast<int>(birth.size());
  std::vector<double> stability(static_cast<std::size_t>(cluster_total), 0.0);
  for (const CondensedRow& r : rows) {
    stability[static_cast<std::size_t>(r.parent)] +=
        (r.lambda - birth[static_cast<std::size_t>(r.parent)]) * r.size;
  }

  // Excess-of-mass selection over non-root clusters, bottom-up.
  std::vector<double> subtree(stability);
  std::vector<bool> selected(static_cast<std::size_t>(cluster_total), false);
  std::vector<double> child_sum(static_cast<std::size_t>(cluster_total), 0.0);
  for (int c = cluster_total - 1; c >= 1; --c) {
    if (child_sum[static_cast<std::size_t>(c)] > 0.0 &&
        stability[static_cast<std::size_t>(c)] <
            child_sum[static_cast<std::size_t>(c)]) {
      subtree[static_cast<std::size_t>(c)] = child_sum[static_cast<std::size_t>(c)];
      selected[static_cast<std::size_t>(c)] = false;
    } else {
      subtree[static_cast<std::size_t>(c)] = stability[static_cast<std::size_t>(c)];
      selected[static_cast<std::size_t>(c)] = true;
    }
    child_sum[static_cast<std::size_t>(parent_of[static_cast<std::size_t>(c)])] +=
        subtree[static_cast<std::size_t>(c)];
  }

  // A selected cluster is final only when no selected ancestor shadows it.
  std::vector<int> final_of(static_cast<std::size_t>(cluster_total), -1);
  for (int c = 1; c < cluster_total; ++c) {
    const int anc = final_of[static_cast<std::size_t>(parent_of[static_cast<std::size_t>(c)])];
    if (anc >= 0) {
      final_of[static_cast<std::size_t>(c)] = anc;
    } else if (selected[static_cast<std::size_t>(c)]) {
      final_of[static_cast<std::size_t>(c)] = c;
    }
  }

  std::vector<int> raw(static_cast<std::size_t>(n), -1);
  for (const CondensedRow& r : rows) {
    if (!r.is_point) continue;
    const int f = final_of[static_cast<std::size_t>(r.parent)];
    if (f >= 0) raw[static_cast<std::size_t>(r.child)] = f;
  }

  // Contiguous labels ordered by first member index.
  std::vector<int> remap(static_cast<std::size_t>(cluster_total), -1);
  int next_label = 0;
  for (int i = 0; i < n; ++i) {
    const int f = raw[static_cast<std::size_t>(i)];
    if (f < 0) continue;
    if (remap[static_cast<std::size_t>(f)] < 0) {
      remap[static_cast<std::size_t>(f)] = next_label++;
    }
    result.labels[static_cast<std::size_t>(i)] = remap[static_cast<std::size_t>(f)];
  }
  result.cluster_count = next_label;
  return result;
}

// ---------------------------------------------------------------------------
// AnnotationMatrix
// ---------------------------------------------------------------------------

AnnotationMatrix::AnnotationMatrix(Eigen::Index n)
    : n_(n), flags_(static_cast<std::size_t>(n * n), false) {}

void AnnotationMatrix::set_positive(Eigen::Index i, Eigen::Index j) {
  if (i < 0 || j < 0 || i >= n_ || j >= n_) {
    throw IndexOutOfRangeError("AnnotationMatrix::set_positive");
  }
  if (i == j) return;  // diagonal stays false
  flags_[static_cast<std::size_t>(i * n_ + j)] = true;
  flags_[static_cast<std::size_t>(j * n_ + i)] = true;
}

Eigen::Index AnnotationMatrix::positive_count(Eigen::Index i) const {
  Eigen::Index count = 0;
  for (Eigen::Index j = 0; j < n_; ++j) {
    if (positive(i, j)) ++count;
  }
  return count;
}

Eigen::Index AnnotationMatrix::total_pairs() const {
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < n_; ++i) {
    for (Eigen::Index j = i + 1; j < n_; ++j) {
      if (positive(i, j)) ++count;
    }
  }
  return count;
}

void AnnotationMatrix::write_pair_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  out << "i,j\n";
  for (Eigen::Index i = 0; i < n_; ++i) {
    for (Eigen::Index j = i + 1; j < n_; ++j) {
      if (positive(i, j)) out << i << "," << j << "\n";
    }
  }
}

AnnotationMatrix select_positive_pairs(const ClusterAssignment& clusters,
                                       const DistanceMatrix& dist,
                                       double alpha) {
  if (alpha <= 0.0) throw Error("select_positive_pairs: alpha must be > 0");
  const Eigen::Index n = dist.rows();
  if (clusters.labels.size() != static_cast<std::size_t>(n)) {
    throw DimensionMismatchError("select_positive_pairs: label count mismatch");
  }
  AnnotationMatrix a(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int li = clusters.labels[static_cast<std::size_t>(i)];
    if (li < 0) continue;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (clusters.labels[static_cast<std::size_t>(j)] == li &&
          dist(i, j) <= alpha) {
        a.set_positive(i, j);
      }
    }
  }
  return a;
}

PairMetrics pair_metrics(const AnnotationMatrix& annotation,
                         const IntVector& truth_ids) {
  const Eigen::Index n = annotation.size();
  if (truth_ids.size() != static_cast<std::size_t>(n)) {
    throw DimensionMismatchError("pair_metrics: truth length mismatch");
  }
  long long tp = 0, fp = 0, fn = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const bool pred = annotation.positive(i, j);
      const bool truth = truth_ids[static_cast<std::size_t>(i)] ==
                         truth_ids[static_cast<std::size_t>(j)];
      if (pred && truth) ++tp;
      if (pred && !truth) ++fp;
      if (!pred && truth) ++fn;
    }
  }
  PairMetrics m;
  if (tp + fp == 0) {
    m.empty_prediction = true;
    m.precision = 0.0;
  } else {
    m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  m.recall = (tp + fn) == 0 ? 0.0
                            : static_cast<double>(tp) / static_cast<double>(tp + fn);
  return m;
}

}  // namespace dimglo
