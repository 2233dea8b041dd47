#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dn2n/image.hpp"
#include "dn2n/rng.hpp"

namespace dn2n::synth {

enum class DenatureMode { Slow, Fast };

std::string to_string(DenatureMode mode);
/// Parses "slow" / "fast"; throws std::invalid_argument otherwise.
DenatureMode parse_mode(const std::string& text);

/// Toy scene: a disc of value `inside` on a background of value `outside`,
/// squeezed horizontally into an ellipse by the denaturation factor q.
/// Coordinates are 1-based, a horizontal and b vertical, (1,1) top-left.
struct ToySpec {
  std::size_t side = 192;
  double center_a = 97.0;
  double center_b = 97.0;
  double radius = 72.0;  // (3/4) * (side/2)
  double inside = 175.0;
  double outside = 75.0;
  std::size_t frames = 24;  // N; the sequence has N+1 frames

  /// Toy scene for a given side: center side/2+1, radius (3/4)(side/2).
  static ToySpec for_side(std::size_t side, std::size_t frames = 24);
  void validate() const;
};

/// Denaturation factor q_i for frame i of N. Natural log / exp.
///   slow: q_i = ln(sqrt(i) (sqrt(e) - e) / N + e)
///   fast: q_i = exp(-i^1.1 ln 2 / N)
double q_schedule(DenatureMode mode, std::size_t i, std::size_t n);

/// Clean frame for factor q: pixel (a, b) is `inside` iff
/// (a - ca)^2 / q^2 + (b - cb)^2 <= radius^2.
Image render_clean_frame(const ToySpec& spec, double q);

struct NoiseSpec {
  double lambda = 25.0;  // Poisson scale
  double sigma = 25.0;   // Gaussian std, raw255 units
  std::uint64_t seed = 1;

  void validate() const;
};

/// y = Poisson(lambda * x) / lambda + N(0, sigma^2), per pixel, unclamped.
Image add_poisson_gaussian(const Image& clean, const NoiseSpec& noise, rng::Stream& stream);

struct ToyDataset {
  FrameSequence clean;
  FrameSequence noisy;
};

/// N+1 clean frames rendered with q_0..q_N and independently noised copies.
/// Frame i is observed at t = i/10 and uses noise stream (noise.seed, FrameNoise, i).
ToyDataset make_toy_dataset(DenatureMode mode, const ToySpec& toy, const NoiseSpec& noise,
                            std::size_t threads = 1);

/// Random relabelling of frames 1..N: tau_i = scale * perm(i).
struct TauSampler {
  std::size_t n = 24;
  double scale = 0.1;
};

struct TauEntry {
  double tau;
  std::size_t frame;  // index into the frame sequence, in 1..N
};

std::vector<TauEntry> sample_tau(const TauSampler& sampler, rng::Stream& stream);
/// Same entries with the identity permutation.
std::vector<TauEntry> identity_tau(const TauSampler& sampler);

/// Frame order for load_frame_directory: lexicographic by file name, or the
/// names listed (one per line) in a manifest file.
struct FrameOrdering {
  std::optional<std::filesystem::path> manifest;
};

/// Loads every .pgm / .dnf frame of `dir` as a raw255 sequence with t_i = i * time_step.
FrameSequence load_frame_directory(const std::filesystem::path& dir, const FrameOrdering& ordering = {},
                                   double time_step = 0.1);

}  // namespace dn2n::synth
