#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace covlab {

/// Default experiment seed used by the CLI when none is given.
inline constexpr std::uint64_t kDefaultSeed = 0xC0FFEE;

/**
 * Value-owned Gaussian stream. Two streams built from the same (seed, stream)
 * pair produce identical draws; successive draws from one stream differ.
 *
 * The engine is seeded through std::seed_seq, whose mixing is fixed by the
 * standard, so substreams for neighbouring replicate indices are decorrelated.
 */
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  /// Substream for replicate `index` of an experiment seeded with `seed`.
  static RngStream substream(std::uint64_t seed, std::uint64_t index) { return RngStream(seed, index); }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }

  void fill_normal(Eigen::Ref<Eigen::VectorXd> out);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace covlab
