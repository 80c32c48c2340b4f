#pragma once

#include <cstdint>
#include <random>

namespace attrib {

/// Deterministic random stream keyed by (seed, stream_id).
///
/// Draws are produced by std::mt19937_64, whose output sequence is fixed by
/// the standard, and transformed to uniforms/normals with explicit formulas
/// instead of the implementation-defined <random> distributions. Two streams
/// with the same key therefore yield identical sequences on every platform.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  /// Child stream for a sub-task. Derivation is a pure function of
  /// (seed, stream_id, tag) and does not advance this stream.
  RngStream derive(std::uint64_t tag) const;
  RngStream derive(std::uint64_t tag_a, std::uint64_t tag_b) const;

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal via Box-Muller.
  double normal();
  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// SplitMix64 finalizer; used to combine seeds and tags.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t combine_seeds(std::uint64_t a, std::uint64_t b);

}  // namespace attrib

#include <vector>

namespace attrib {

/// `count` distinct positions from [0, n) by a partial Fisher-Yates shuffle,
/// returned in draw order.
std::vector<std::size_t> sample_without_replacement(RngStream& rng, std::size_t n,
                                                    std::size_t count);

/// Seed for the index-th job under `rng`: a pure function of (seed, stream, index).
std::uint64_t job_seed(const RngStream& rng, std::uint64_t index);

}  // namespace attrib
