#pragma once

#include <cstdint>
#include <random>

#include "smpc/linalg.hpp"

namespace smpc {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Private random stream. Streams for (seed, index) pairs are derived by
/// hashing, so run r's draws never depend on how many other runs exist or
/// in which order they are executed.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(splitmix64(seed)) {}
  RandomStream(std::uint64_t master_seed, std::uint64_t index)
      : engine_(splitmix64(splitmix64(master_seed) ^ splitmix64(~index))) {}

  double standard_normal() { return normal_(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Factor L with L L^T = Sigma: Cholesky when definite, PSD square root
/// otherwise (covers singular and zero covariances).
inline Matrix noise_factor(const Matrix& sigma) {
  if (max_abs(sigma) == 0.0) return Matrix::Zero(sigma.rows(), sigma.cols());
  try {
    return cholesky(sigma);
  } catch (const Error&) {
    return sqrt_psd(sigma);
  }
}

/// w = L xi with xi ~ N(0, I) drawn from the stream.
inline Vector sample_gaussian(const Matrix& factor, RandomStream& stream) {
  Vector xi(factor.cols());
  for (Eigen::Index i = 0; i < xi.size(); ++i) xi(i) = stream.standard_normal();
  return factor * xi;
}

}  // namespace smpc
