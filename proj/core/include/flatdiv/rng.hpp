#pragma once

#include <cstdint>
#include <vector>

namespace flatdiv {

/// Splittable random stream keyed by (master_seed, stream_id).
///
/// Identical keys give bit-identical sequences on every run; independent
/// stream_ids give statistically independent streams, so parallel Monte-Carlo
/// trials can each own a stream without coordinating. The generator is
/// xoshiro256++ seeded through splitmix64; Gaussians come from Box-Muller
/// rather than std::normal_distribution, whose output is not specified by the
/// standard.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_id);

  std::uint64_t master_seed() const { return master_; }
  std::uint64_t stream_id() const { return id_; }

  /// Derives an independent stream; child(a) != child(b) for a != b.
  RngStream child(std::uint64_t tag) const;

  std::uint64_t next_u64();
  /// Uniform on [0, 1), 53-bit resolution.
  double next_double();
  /// Standard normal deviate.
  double next_gaussian();
  /// Uniform integer in {0, ..., n-1}; n >= 1.
  std::uint64_t next_below(std::uint64_t n);

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t s_[4];
  std::uint64_t master_ = 0;
  std::uint64_t id_ = 0;
  double cached_gauss_ = 0.0;
  bool has_cached_gauss_ = false;
};

}  // namespace flatdiv
