#include "dimglo/evaluation.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace dimglo {

namespace {

struct RankedQuery {
  std::vector<bool> match_at;  // per rank, true when the item matches
  bool valid = false;
};

RankedQuery rank_one_query(const Matrix& query_feats, int q,
                           const IntVector& query_ids,
                           const IntVector& query_cams,
                           const Matrix& gallery_feats,
                           const IntVector& gallery_ids,
                           const IntVector& gallery_cams) {
  const int qid = query_ids[static_cast<std::size_t>(q)];
  const int qcam = query_cams[static_cast<std::size_t>(q)];

  IntVector kept;
  for (int g = 0; g < gallery_feats.rows(); ++g) {
    const bool same_id = gallery_ids[static_cast<std::size_t>(g)] == qid;
    const bool same_cam = gallery_cams[static_cast<std::size_t>(g)] == qcam;
    if (same_id && same_cam) continue;  // standard junk exclusion
    kept.push_back(g);
  }

  RankedQuery out;
  const Vector sims = gallery_feats * query_feats.row(q).transpose();
  std::stable_sort(kept.begin(), kept.end(), [&](int a, int b) {
    return sims(a) > sims(b);  // stable: ties fall back to gallery index
  });
  out.match_at.reserve(kept.size());
  for (int g : kept) {
    const bool match = gallery_ids[static_cast<std::size_t>(g)] == qid;
    out.match_at.push_back(match);
    out.valid = out.valid || match;
  }
  return out;
}

void validate_eval_inputs(const Matrix& query_feats, const IntVector& query_ids,
                          const IntVector& query_cams,
                          const Matrix& gallery_feats,
                          const IntVector& gallery_ids,
                          const IntVector& gallery_cams) {
  if (query_feats.cols() != gallery_feats.cols()) {
    throw DimensionMismatchError("evaluate: feature dimension mismatch");
  }
  if (query_ids.size() != static_cast<std::size_t>(query_feats.rows()) ||
      query_cams.size() != query_ids.size() ||
      gallery_ids.size() != static_cast<std::size_t>(gallery_feats.rows()) ||
      gallery_cams.size() != gallery_ids.size()) {
    throw DimensionMismatchError("evaluate: metadata length mismatch");
  }
}

}  // namespace

EvalResult evaluate(const Matrix& query_feats, const IntVector& query_ids,
                    const IntVector& query_cams, const Matrix& gallery_feats,
                    const IntVector& gallery_ids,
                    const IntVector& gallery_cams) {
  validate_eval_inputs(query_feats, query_ids, query_cams, gallery_feats,
                       gallery_ids, gallery_cams);
  EvalResult result;
  int hits1 = 0, hits5 = 0, hits10 = 0;
  int counted = 0;
  for (int q = 0; q < query_feats.rows(); ++q) {
    const RankedQuery ranked =
        rank_one_query(query_feats, q, query_ids, query_cams, gallery_feats,
                       gallery_ids, gallery_cams);
    if (!ranked.valid) {
      ++result.skipped_queries;
      continue;
    }
    ++counted;

    int first_hit = 0;
    int match_count = 0;
    double ap = 0.0;
    for (std::size_t r = 0; r < ranked.match_at.size(); ++r) {
      if (!ranked.match_at[r]) continue;
      ++match_count;
      if (match_count == 1) first_hit = static_cast<int>(r) + 1;
      ap += static_cast<double>(match_count) / static_cast<double>(r + 1);
    }
    ap /= static_cast<double>(match_count);
    result.per_query_ap.push_back(ap);
    result.mean_ap += ap;
    if (first_hit <= 1) ++hits1;
    if (first_hit <= 5) ++hits5;
    if (first_hit <= 10) ++hits10;
  }
  if (counted == 0) throw NoValidQueriesError("evaluate: all queries skipped");
  result.mean_ap /= static_cast<double>(counted);
  result.rank1 = static_cast<double>(hits1) / counted;
  result.rank5 = static_cast<double>(hits5) / counted;
  result.rank10 = static_cast<double>(hits10) / counted;
  return result;
}

std::vector<double> cmc_curve(const Matrix& query_feats,
                              const IntVector& query_ids,
                              const IntVector& query_cams,
                              const Matrix& gallery_feats,
                              const IntVector& gallery_ids,
                              const IntVector& gallery_cams, int max_k) {
  validate_eval_inputs(query_feats, query_ids, query_cams, gallery_feats,
                       gallery_ids, gallery_cams);
  std::vector<double> curve(static_cast<std::size_t>(max_k), 0.0);
  int counted = 0;
  for (int q = 0; q < query_feats.rows(); ++q) {
    const RankedQuery ranked =
        rank_one_query(query_feats, q, query_ids, query_cams, gallery_feats,
                       gallery_ids, gallery_cams);
    if (!ranked.valid) continue;
    ++counted;
    int first_hit = 0;
    for (std::size_t r = 0; r < ranked.match_at.size(); ++r) {
      if (ranked.match_at[r]) {
        first_hit = static_cast<int>(r) + 1;
        break;
      }
    }
    for (int k = first_hit; k <= max_k; ++k) {
      curve[static_cast<std::size_t>(k - 1)] += 1.0;
    }
  }
  if (counted == 0) throw NoValidQueriesError("cmc_curve: all queries skipped");
  for (double& v : curve) v /= static_cast<double>(counted);
  return curve;
}

std::string EvalResult::to_json() const {
  std::ostringstream out;
  out.precision(17);
  out << "{\"rank1\":" << rank1 << ",\"rank5\":" << rank5
      << ",\"rank10\":" << rank10 << ",\"mAP\":" << mean_ap
      << ",\"queries\":" << per_query_ap.size()
      << ",\"skipped\":" << skipped_queries << "}";
  return out.str();
}

}  // namespace dimglo
