#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace mixbridge {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Stateless:
/// every output block is a pure function of (counter, key).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter counter, Key key);
};

/// Draw purposes. Each purpose owns a disjoint counter range inside a stream,
/// so adding draws of one kind never shifts draws of another.
namespace stream_tag {
inline constexpr std::uint32_t kCategory = 1;
inline constexpr std::uint32_t kInitial = 2;
inline constexpr std::uint32_t kIncrement = 3;
inline constexpr std::uint32_t kLabel = 4;
inline constexpr std::uint32_t kKmeans = 5;
inline constexpr std::uint32_t kSilhouette = 6;
inline constexpr std::uint32_t kStratum = 7;
}  // namespace stream_tag

/// One independent random stream, addressed by (seed, stream id). Draws are
/// indexed by (tag, step, index) rather than consumed sequentially, so e.g.
/// the noise particle p sees at step k does not depend on how many particles
/// were simulated.
///
/// Counter layout: [stream lo, stream hi, tag << 24 | index, step].
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream);

  Philox4x32::Counter block(std::uint32_t tag, std::uint32_t step, std::uint32_t index) const;

  /// Uniform on the open interval (0, 1), 53 bits.
  double uniform(std::uint32_t tag, std::uint32_t step, std::uint32_t index = 0) const;

  /// Standard normals via Box-Muller, two per Philox block.
  void normals(std::uint32_t tag, std::uint32_t step, std::span<double> out) const;

 private:
  Philox4x32::Key key_;
  std::uint32_t stream_lo_;
  std::uint32_t stream_hi_;
};

/// Mix several integers into one 64-bit stream id (splitmix64 finalizer chain).
std::uint64_t derive_stream(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0,
                            std::uint64_t d = 0);

}  // namespace mixbridge
