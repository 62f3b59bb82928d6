#include "mphil/rng.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mphil {

double RngStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  // u1 in (0,1] so log is safe.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::size_t RngStream::uniform_index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
  const std::uint64_t un = n;
  const std::uint64_t threshold = (~std::uint64_t{0} - un + 1) % un;  // 2^64 mod n
  std::uint64_t r = engine_();
  while (r < threshold) r = engine_();
  return static_cast<std::size_t>(r % un);
}

long RngStream::uniform_int(long lo, long hi) {
  if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
  return lo + static_cast<long>(uniform_index(static_cast<std::size_t>(hi - lo) + 1));
}

std::string RngStream::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void RngStream::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_;
  if (is.fail()) throw std::runtime_error("RngStream: malformed engine state");
}

}  // namespace mphil
