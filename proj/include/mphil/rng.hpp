#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace mphil {

/// Deterministic random stream over std::mt19937_64 with hand-rolled draw
/// algorithms, so results do not depend on the standard library's
/// distribution implementations and the full state round-trips through
/// checkpoints as text.
class RngStream {
public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0,1) with 53 random bits.
  double uniform();

  /// Standard normal via Box-Muller (two engine draws per call, no cache).
  double normal();

  /// Uniform index in [0, n); unbiased via rejection. n must be > 0.
  std::size_t uniform_index(std::size_t n);

  /// Uniform integer in [lo, hi] inclusive.
  long uniform_int(long lo, long hi);

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

  /// Engine state as text (round-trips exactly).
  std::string state() const;
  void set_state(const std::string& s);

private:
  std::mt19937_64 engine_;
};

}  // namespace mphil
