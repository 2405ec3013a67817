#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace vmc {

/// Deterministic random source owned by a single chain. All sampling code
/// draws through this wrapper so that a fixed seed fixes the whole stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }

  /// Uniform integer in [0, n).
  int uniform_int(int n) {
    return std::uniform_int_distribution<int>(0, n - 1)(engine_);
  }

  Eigen::VectorXd normal_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal_(engine_);
    return v;
  }

  Eigen::VectorXd uniform_vector(const Eigen::VectorXd& lower,
                                 const Eigen::VectorXd& upper) {
    Eigen::VectorXd v(lower.size());
    for (Eigen::Index i = 0; i < lower.size(); ++i)
      v[i] = lower[i] + (upper[i] - lower[i]) * uniform_(engine_);
    return v;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// SplitMix64 step, used to derive well-separated per-chain seeds from a
/// base seed and a chain index.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace vmc
