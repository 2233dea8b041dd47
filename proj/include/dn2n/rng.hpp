#pragma once

#include <array>
#include <cstdint>

namespace dn2n::rng {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds (Salmon et al., Random123).
PhiloxCounter philox4x32_10(PhiloxCounter counter, PhiloxKey key);

/// Distinguishes independent streams drawn from one seed.
enum class Purpose : std::uint32_t {
  ParamInit = 1,
  FrameNoise = 2,
  TauPermutation = 3,
  Transform = 4,
  Shuffle = 5,
  Prediction = 6,
  GradCheck = 7,
  Test = 100,
};

/// Sequential view over one counter-based stream identified by
/// (seed, purpose, a, b). Streams with different identities are independent,
/// so work can be split across threads without changing any drawn value.
class Stream {
 public:
  Stream(std::uint64_t seed, Purpose purpose, std::uint64_t a = 0, std::uint64_t b = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform in (0, 1].
  double uniform_pos() { return 1.0 - uniform(); }
  /// Standard normal (Box-Muller, second variate cached).
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  PhiloxKey key_;
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

/// Poisson variate: sequential-search inversion for rate < 30, PTRS
/// transformed rejection (Hormann 1993) otherwise.
std::uint64_t poisson(Stream& stream, double rate);

}  // namespace dn2n::rng
