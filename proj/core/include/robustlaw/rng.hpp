#pragma once

#include "robustlaw/types.hpp"

#include <cstdint>
#include <limits>

namespace robustlaw {

/// Identifies an independent random stream under a master seed. Streams are
/// derived hierarchically (experiment -> statement -> trial) with
/// derive_stream, so every trial owns its own stream and results do not
/// depend on how trials are scheduled.
using StreamId = std::uint64_t;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

StreamId derive_stream(StreamId parent, std::uint64_t index) noexcept;

/// Counter-based generator: draw k of stream s under seed m is a pure function
/// of (m, s, k). Satisfies UniformRandomBitGenerator so boost.random
/// distributions (whose algorithms are platform-independent) can consume it.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t master_seed, StreamId stream) noexcept;

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept;

  std::uint64_t counter() const noexcept { return counter_; }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  double normal();
  Vec normal_vector(Eigen::Index n, double stddev = 1.0);
  /// Index drawn from a probability vector by inverse CDF.
  int categorical(const Vec& probs) noexcept;

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace robustlaw
