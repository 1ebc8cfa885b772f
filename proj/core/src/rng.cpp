#include "robustlaw/rng.hpp"

#include <boost/random/normal_distribution.hpp>

namespace robustlaw {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

StreamId derive_stream(StreamId parent, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(parent) ^ (index * 0xd1342543de82ef95ULL + 0x632be59bd9b4e019ULL));
}

CounterRng::CounterRng(std::uint64_t master_seed, StreamId stream) noexcept
    : key_(splitmix64(splitmix64(master_seed) ^ splitmix64(stream ^ 0xa0761d6478bd642fULL))) {}

CounterRng::result_type CounterRng::operator()() noexcept {
  // Two rounds of the splitmix finalizer over (key, counter) decorrelate
  // neighbouring streams whose keys happen to be close.
  const std::uint64_t c = counter_++;
  return splitmix64(key_ ^ splitmix64(c));
}

double CounterRng::uniform() noexcept {
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double CounterRng::normal() {
  boost::random::normal_distribution<double> dist(0.0, 1.0);
  return dist(*this);
}

Vec CounterRng::normal_vector(Eigen::Index n, double stddev) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = stddev * normal();
  return v;
}

int CounterRng::categorical(const Vec& probs) noexcept {
  const double u = uniform();
  double acc = 0.0;
  const auto n = static_cast<int>(probs.size());
  for (int i = 0; i < n; ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Rounding left u above the accumulated mass; return the last positive entry.
  for (int i = n - 1; i >= 0; --i) {
    if (probs[i] > 0.0) return i;
  }
  return n - 1;
}

}  // namespace robustlaw
