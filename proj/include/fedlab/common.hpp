#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace fedlab {

#ifdef FEDLAB_USE_FLOAT
using Real = float;
#else
using Real = double;
#endif

using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<Real, 1, Eigen::Dynamic>;

using ClientId = std::int64_t;
using Rng = std::mt19937_64;

/// Tensor or matrix dimensions do not agree.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A precondition on caller-supplied values was violated.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed file contents (IDX, checkpoints).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// splitmix64 finalizer; used to derive independent stream seeds from the
/// single top-level experiment seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a) noexcept {
    return mix_seed(mix_seed(seed) ^ mix_seed(a + 0x632be59bd9b4e019ULL));
}

template <typename... Rest>
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, Rest... rest) noexcept {
    return derive_seed(derive_seed(seed, a), static_cast<std::uint64_t>(rest)...);
}

// Stream tags for derive_seed.
namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kData = 2;
inline constexpr std::uint64_t kPartition = 3;
inline constexpr std::uint64_t kMalicious = 4;
inline constexpr std::uint64_t kPoison = 5;
inline constexpr std::uint64_t kSample = 6;
inline constexpr std::uint64_t kTrain = 7;
inline constexpr std::uint64_t kDistill = 8;
inline constexpr std::uint64_t kGenerator = 9;
inline constexpr std::uint64_t kCleanSeed = 10;
}  // namespace stream

}  // namespace fedlab
