#pragma once

#include <string>
#include <vector>

#include "dimglo/common.hpp"

namespace dimglo {

struct EvalResult {
  double rank1 = 0.0;
  double rank5 = 0.0;
  double rank10 = 0.0;
  double mean_ap = 0.0;
  std::vector<double> per_query_ap;
  int skipped_queries = 0;

  std::string to_json() const;
};

/// Cross-camera retrieval metrics. Per query the gallery is ranked by
/// descending cosine similarity (ties broken by gallery index), gallery
/// items sharing both identity and camera with the query are excluded,
/// AP averages precision at each true match, and CMC@k counts queries
/// with a true match in the top k. Queries without any valid match are
/// skipped and tallied.
EvalResult evaluate(const Matrix& query_feats, const IntVector& query_ids,
                    const IntVector& query_cams, const Matrix& gallery_feats,
                    const IntVector& gallery_ids,
                    const IntVector& gallery_cams);

/// Full CMC curve value at k (1-based), from the same ranking rules.
std::vector<double> cmc_curve(const Matrix& query_feats,
                              const IntVector& query_ids,
                              const IntVector& query_cams,
                              const Matrix& gallery_feats,
                              const IntVector& gallery_ids,
                              const IntVector& gallery_cams, int max_k);

}  // namespace dimglo
