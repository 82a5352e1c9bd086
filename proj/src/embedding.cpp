#include "dimglo/embedding.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace dimglo {

std::string domain_name(Domain d) {
  return d == Domain::Source ? "source" : "target";
}

Domain domain_from_name(const std::string& name) {
  if (name == "source") return Domain::Source;
  if (name == "target") return Domain::Target;
  throw IoError("unknown domain tag: " + name);
}

Vector l2_normalize(const Vector& v) {
  const double norm = v.norm();
  if (norm < kZeroNormFloor) {
    throw ZeroVectorError("l2_normalize: zero vector");
  }
  return v / norm;
}

double exp_similarity(const Vector& a, const Vector& b, double beta) {
  if (beta <= 0.0) {
    throw BetaNonPositiveError("exp_similarity: beta must be positive");
  }
  if (a.size() != b.size()) {
    throw DimensionMismatchError("exp_similarity: dimension mismatch");
  }
  return std::exp(a.dot(b) / beta);
}

Matrix pairwise_cosine(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionMismatchError("pairwise_cosine: dimension mismatch");
  }
  return a * b.transpose();
}

void EpochClock::advance_epoch() {
  ++epoch;
  iteration = 0;
}

void EpochClock::advance_iteration() { ++iteration; }

double bank_update_weight(int epoch) {
  if (epoch == 0) {
    throw EpochZeroError("bank_update_weight: undefined at epoch 0");
  }
  const double w = (100.0 - epoch) / epoch;
  return w > 0.0 ? w : 0.0;
}

FeatureBank FeatureBank::init(const Matrix& features,
                              const IntVector& camera_ids,
                              const std::vector<Domain>& domains) {
  if (features.rows() < 1 || features.cols() < 1) {
    throw DimensionMismatchError("FeatureBank::init: empty feature matrix");
  }
  const auto n = static_cast<std::size_t>(features.rows());
  if (camera_ids.size() != n || domains.size() != n) {
    throw DimensionMismatchError("FeatureBank::init: metadata length mismatch");
  }
  FeatureBank bank;
  bank.rows_ = features;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    bank.rows_.row(i) = l2_normalize(features.row(i)).transpose();
  }
  bank.camera_ids_ = camera_ids;
  bank.domains_ = domains;
  return bank;
}

void FeatureBank::update(std::span<const int> indices, const Matrix& fresh,
                         const EpochClock& clock) {
  if (fresh.rows() != static_cast<Eigen::Index>(indices.size()) ||
      fresh.cols() != rows_.cols()) {
    throw DimensionMismatchError("FeatureBank::update: fresh shape mismatch");
  }
  const double w = bank_update_weight(clock.epoch);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const int i = indices[r];
    if (i < 0 || i >= rows_.rows()) {
      throw IndexOutOfRangeError("FeatureBank::update: index out of range");
    }
    if (w == 0.0) continue;
    const Vector blended = rows_.row(i).transpose() + w * fresh.row(r).transpose();
    rows_.row(i) = l2_normalize(blended).transpose();
  }
}

int FeatureBank::camera_count() const {
  int c = 0;
  for (int id : camera_ids_) c = std::max(c, id + 1);
  return c;
}

void write_features_binary(const std::string& path, const Matrix& features) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path);
  const std::uint64_t cols = static_cast<std::uint64_t>(features.cols());
  out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      const double v = features(i, j);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

Matrix read_features_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open for read: " + path);
  const std::streamoff total = in.tellg();
  in.seekg(0);
  std::uint64_t cols = 0;
  in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
  if (!in || cols == 0) throw IoError("bad feature file header: " + path);
  const std::streamoff payload = total - static_cast<std::streamoff>(sizeof(cols));
  const std::streamoff row_bytes = static_cast<std::streamoff>(cols * sizeof(double));
  if (payload % row_bytes != 0) throw IoError("truncated feature file: " + path);
  const Eigen::Index rows = static_cast<Eigen::Index>(payload / row_bytes);
  Matrix m(rows, static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      double v = 0;
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      m(i, j) = v;
    }
  }
  if (!in) throw IoError("read failed: " + path);
  return m;
}

void write_features_csv(const std::string& path, const Matrix& features,
                        const IntVector& camera_ids,
                        const std::vector<Domain>& domains) {
  if (camera_ids.size() != static_cast<std::size_t>(features.rows()) ||
      domains.size() != static_cast<std::size_t>(features.rows())) {
    throw DimensionMismatchError("write_features_csv: metadata length mismatch");
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  out << "camera,domain";
  for (Eigen::Index j = 0; j < features.cols(); ++j) out << ",f" << j;
  out << "\n";
  out.precision(17);
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    out << camera_ids[static_cast<std::size_t>(i)] << ","
        << domain_name(domains[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < features.cols(); ++j) out << "," << features(i, j);
    out << "\n";
  }
}

CsvFeatures read_features_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for read: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty csv: " + path);
  std::vector<std::vector<double>> rows;
  CsvFeatures out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    out.camera_ids.push_back(std::stoi(cell));
    std::getline(ss, cell, ',');
    out.domains.push_back(domain_from_name(cell));
    std::vector<double> coords;
    while (std::getline(ss, cell, ',')) coords.push_back(std::stod(cell));
    rows.push_back(std::move(coords));
  }
  if (rows.empty()) throw IoError("csv has no data rows: " + path);
  out.features.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) throw IoError("ragged csv: " + path);
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      out.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return out;
}

}  // namespace dimglo
