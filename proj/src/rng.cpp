#include "mixbridge/rng.hpp"

#include <cmath>
#include <numbers>

namespace mixbridge {
namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(product >> 32);
  lo = static_cast<std::uint32_t>(product);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace

Philox4x32::Counter Philox4x32::generate(Counter ctr, Key key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      stream_lo_(static_cast<std::uint32_t>(stream)),
      stream_hi_(static_cast<std::uint32_t>(stream >> 32)) {}

Philox4x32::Counter RandomStream::block(std::uint32_t tag, std::uint32_t step,
                                        std::uint32_t index) const {
  return Philox4x32::generate({stream_lo_, stream_hi_, (tag << 24) | (index & 0xFFFFFFu), step},
                              key_);
}

double RandomStream::uniform(std::uint32_t tag, std::uint32_t step, std::uint32_t index) const {
  const auto b = block(tag, step, index);
  return to_unit(b[0], b[1]);
}

void RandomStream::normals(std::uint32_t tag, std::uint32_t step, std::span<double> out) const {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t k = 0; k < out.size(); k += 2) {
    const auto b = block(tag, step, static_cast<std::uint32_t>(k / 2));
    const double u1 = to_unit(b[0], b[1]);
    const double u2 = to_unit(b[2], b[3]);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    out[k] = radius * std::cos(two_pi * u2);
    if (k + 1 < out.size()) out[k + 1] = radius * std::sin(two_pi * u2);
  }
}

std::uint64_t derive_stream(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  std::uint64_t h = splitmix64(a);
  h = splitmix64(h ^ b);
  h = splitmix64(h ^ c);
  return splitmix64(h ^ d);
}

}  // namespace mixbridge
