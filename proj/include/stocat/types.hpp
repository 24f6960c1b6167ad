#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace stocat {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Every stochastic routine takes its generator explicitly; runs never share one.
using Rng = std::mt19937_64;

/// Raised when an iterate or objective stops being finite, or when the
/// objective blows past the divergence guard.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

/// SplitMix64 finalizer; used to derive independent seeds from a master seed.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// seed_i = master xor mix64(i)
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return master ^ mix64(stream);
}

}  // namespace stocat
