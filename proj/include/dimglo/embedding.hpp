#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dimglo/common.hpp"

namespace dimglo {

inline constexpr double kZeroNormFloor = 1e-12;

enum class Domain : std::uint8_t { Source = 0, Target = 1 };

std::string domain_name(Domain d);
Domain domain_from_name(const std::string& name);

/// Scales v to unit Euclidean norm. Throws ZeroVectorError when the norm
/// is below 1e-12.
Vector l2_normalize(const Vector& v);

/// exp((a.b)/beta), the similarity kernel shared by all losses.
double exp_similarity(const Vector& a, const Vector& b, double beta);

/// Row-by-row dot products of two unit-row matrices; entry (i,j) = a_i . b_j.
Matrix pairwise_cosine(const Matrix& a, const Matrix& b);

struct EpochClock {
  int epoch = 0;      // 1-based while training runs; 0 only before start
  int iteration = 0;

  void advance_epoch();
  void advance_iteration();
};

/// Blend weight for memory-bank updates: max(0, (100 - epoch) / epoch).
/// Unbounded for small epochs (trust fresh features early) and clamped to
/// zero from epoch 100 on, where the raw formula would turn negative.
double bank_update_weight(int epoch);

/// Unit-norm feature row per cached sample, with per-row camera id and
/// domain tag. Single-writer: the training loop owns mutation.
class FeatureBank {
 public:
  FeatureBank() = default;

  /// Rows are L2-normalized on ingest.
  static FeatureBank init(const Matrix& features, const IntVector& camera_ids,
                          const std::vector<Domain>& domains);

  /// row_i <- normalize(row_i + w_e * fresh_i) for each selected index,
  /// w_e = bank_update_weight(clock.epoch). Fresh rows must be unit-norm.
  void update(std::span<const int> indices, const Matrix& fresh,
              const EpochClock& clock);

  Eigen::Index size() const { return rows_.rows(); }
  Eigen::Index dim() const { return rows_.cols(); }
  const Matrix& rows() const { return rows_; }
  const IntVector& camera_ids() const { return camera_ids_; }
  const std::vector<Domain>& domains() const { return domains_; }
  int camera_count() const;

 private:
  Matrix rows_;
  IntVector camera_ids_;
  std::vector<Domain> domains_;
};

// Feature serialization: a bare column-count-prefixed binary layout
// (uint64 column count, then row-major doubles until EOF) and a CSV with
// `camera` and `domain` metadata columns ahead of the coordinates.

void write_features_binary(const std::string& path, const Matrix& features);
Matrix read_features_binary(const std::string& path);

void write_features_csv(const std::string& path, const Matrix& features,
                        const IntVector& camera_ids,
                        const std::vector<Domain>& domains);

struct CsvFeatures {
  Matrix features;
  IntVector camera_ids;
  std::vector<Domain> domains;
};
CsvFeatures read_features_csv(const std::string& path);

}  // namespace dimglo
