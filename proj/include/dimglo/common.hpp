#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace dimglo {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = std::vector<int>;

// All numerics are double precision; gradient checks at 1e-5 relative
// tolerance do not survive float32.

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define DIMGLO_DEFINE_ERROR(Name)                                     \
  struct Name : Error {                                               \
    explicit Name(const std::string& what = #Name) : Error(what) {}   \
  }

DIMGLO_DEFINE_ERROR(ZeroVectorError);
DIMGLO_DEFINE_ERROR(DimensionMismatchError);
DIMGLO_DEFINE_ERROR(IndexOutOfRangeError);
DIMGLO_DEFINE_ERROR(EpochZeroError);
DIMGLO_DEFINE_ERROR(InvalidKError);
DIMGLO_DEFINE_ERROR(EmptySetError);
DIMGLO_DEFINE_ERROR(NoPositivePairsError);
DIMGLO_DEFINE_ERROR(BetaNonPositiveError);
DIMGLO_DEFINE_ERROR(BankMismatchError);
DIMGLO_DEFINE_ERROR(EmptyDomainError);
DIMGLO_DEFINE_ERROR(LabelOutOfRangeError);
DIMGLO_DEFINE_ERROR(NonDeterministicLossError);
DIMGLO_DEFINE_ERROR(CacheMismatchError);
DIMGLO_DEFINE_ERROR(ShapeMismatchError);
DIMGLO_DEFINE_ERROR(NonFiniteInputError);
DIMGLO_DEFINE_ERROR(BatchLargerThanSetError);
DIMGLO_DEFINE_ERROR(StaleAnnotationError);
DIMGLO_DEFINE_ERROR(InvalidSpecError);
DIMGLO_DEFINE_ERROR(NoValidQueriesError);
DIMGLO_DEFINE_ERROR(IoError);
DIMGLO_DEFINE_ERROR(ConfigError);

#undef DIMGLO_DEFINE_ERROR

using Rng = std::mt19937_64;

// splitmix64, used to derive independent sub-stream seeds from one master
// seed without correlated low bits.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t sub_seed(std::uint64_t master, std::uint64_t stream) {
  return mix_seed(master ^ mix_seed(stream + 0x51ed2701ULL));
}

inline Rng make_rng(std::uint64_t master, std::uint64_t stream) {
  return Rng(sub_seed(master, stream));
}

}  // namespace dimglo
