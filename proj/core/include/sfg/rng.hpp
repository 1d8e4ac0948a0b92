#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "sfg/tensor.hpp"

namespace sfg {

/// Philox4x32-10 counter-based generator.
///
/// The key is the 64-bit seed; the upper 64 bits of the 128-bit counter hold
/// the stream id, the lower 64 bits count blocks. Two generators with the
/// same (seed, stream) produce the same sequence on every platform, and
/// distinct streams never share a counter value.
///
/// Normals use the Box–Muller transform on pairs of 53-bit uniforms in (0, 1);
/// both outputs of a pair are used, cos branch first.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  /// Independent child generator. Deterministic in (seed, stream, id) and
  /// does not advance this generator.
  Rng substream(std::uint64_t id) const;

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  double uniform();  // open interval (0, 1)
  double normal();
  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t uniform_index(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int buffered_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// Tensor of i.i.d. standard normals drawn in row-major order.
Tensor randn(Rng& rng, std::vector<std::size_t> shape);

/// Raw Philox4x32-10 block function, exposed for known-answer tests.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

}  // namespace sfg
