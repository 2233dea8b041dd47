#include "dn2n/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "dn2n/errors.hpp"
#include "dn2n/frame_io.hpp"
#include "dn2n/parallel.hpp"

namespace dn2n::synth {

std::string to_string(DenatureMode mode) { return mode == DenatureMode::Slow ? "slow" : "fast"; }

DenatureMode parse_mode(const std::string& text) {
  if (text == "slow") return DenatureMode::Slow;
  if (text == "fast") return DenatureMode::Fast;
  throw std::invalid_argument("mode must be 'slow' or 'fast', got '" + text + "'");
}

ToySpec ToySpec::for_side(std::size_t side, std::size_t frames) {
  ToySpec s;
  s.side = side;
  s.center_a = s.center_b = static_cast<double>(side / 2 + 1);
  s.radius = 0.75 * (static_cast<double>(side) / 2.0);
  s.frames = frames;
  return s;
}

void ToySpec::validate() const {
  const double lo = 1.0, hi = static_cast<double>(side);
  if (side == 0) throw std::invalid_argument("ToySpec: side must be positive");
  if (center_a < lo || center_a > hi || center_b < lo || center_b > hi) {
    throw std::invalid_argument("ToySpec: center outside the image");
  }
  if (!(radius > 0.0)) throw std::invalid_argument("ToySpec: radius must be positive");
  if (inside == outside) throw std::invalid_argument("ToySpec: inside and outside values must differ");
  if (inside < 0.0 || outside < 0.0) throw std::invalid_argument("ToySpec: pixel values must be >= 0");
  if (frames == 0) throw std::invalid_argument("ToySpec: at least one denatured frame required");
}

double q_schedule(DenatureMode mode, std::size_t i, std::size_t n) {
  if (n == 0 || i > n) throw std::out_of_range("q_schedule: frame index out of range");
  if (i == 0) return 1.0;
  const double di = static_cast<double>(i);
  const double dn = static_cast<double>(n);
  if (mode == DenatureMode::Slow) {
    const double e = std::numbers::e;
    return std::log(std::sqrt(di) * (std::sqrt(e) - e) / dn + e);
  }
  return std::exp(-std::pow(di, 1.1) * std::numbers::ln2 / dn);
}

Image render_clean_frame(const ToySpec& spec, double q) {
  spec.validate();
  if (!(q > 0.0)) throw std::invalid_argument("render_clean_frame: q must be positive");
  const std::size_t n = spec.side;
  std::vector<double> px(n * n);
  const double r2 = spec.radius * spec.radius;
  for (std::size_t row = 0; row < n; ++row) {
    const double db = static_cast<double>(row + 1) - spec.center_b;
    for (std::size_t col = 0; col < n; ++col) {
      const double da = static_cast<double>(col + 1) - spec.center_a;
      const bool inside = (da * da) / (q * q) + db * db <= r2;
      px[row * n + col] = inside ? spec.inside : spec.outside;
    }
  }
  return Image(n, n, std::move(px), PixelDomain::Raw255);
}

void NoiseSpec::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("NoiseSpec: lambda must be > 0");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("NoiseSpec: sigma must be >= 0");
}

Image add_poisson_gaussian(const Image& clean, const NoiseSpec& noise, rng::Stream& stream) {
  noise.validate();
  if (clean.domain() != PixelDomain::Raw255) {
    throw std::invalid_argument("add_poisson_gaussian: expected a raw255 image");
  }
  std::vector<double> out(clean.size());
  auto x = clean.pixels();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < 0.0) throw std::invalid_argument("add_poisson_gaussian: negative clean pixel");
    const double z = static_cast<double>(rng::poisson(stream, noise.lambda * x[i]));
    const double delta = noise.sigma == 0.0 ? 0.0 : noise.sigma * stream.normal();
    out[i] = z / noise.lambda + delta;
  }
  return Image(clean.height(), clean.width(), std::move(out), PixelDomain::Raw255);
}

ToyDataset make_toy_dataset(DenatureMode mode, const ToySpec& toy, const NoiseSpec& noise,
                            std::size_t threads) {
  toy.validate();
  noise.validate();
  const std::size_t count = toy.frames + 1;
  std::vector<Image> clean(count), noisy(count);
  parallel_for(count, threads, [&](std::size_t i) {
    clean[i] = render_clean_frame(toy, q_schedule(mode, i, toy.frames));
    rng::Stream stream(noise.seed, rng::Purpose::FrameNoise, i);
    noisy[i] = add_poisson_gaussian(clean[i], noise, stream);
  });
  return {FrameSequence::uniform(std::move(clean)), FrameSequence::uniform(std::move(noisy))};
}

std::vector<TauEntry> identity_tau(const TauSampler& sampler) {
  if (sampler.n == 0) throw std::invalid_argument("TauSampler: N must be >= 1");
  std::vector<TauEntry> out(sampler.n);
  for (std::size_t i = 0; i < sampler.n; ++i) {
    out[i] = {sampler.scale * static_cast<double>(i + 1), i + 1};
  }
  return out;
}

std::vector<TauEntry> sample_tau(const TauSampler& sampler, rng::Stream& stream) {
  std::vector<TauEntry> out = identity_tau(sampler);
  for (std::size_t i = out.size(); i > 1; --i) std::swap(out[i - 1], out[stream.below(i)]);
  return out;
}

FrameSequence load_frame_directory(const std::filesystem::path& dir, const FrameOrdering& ordering,
                                   double time_step) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  if (ordering.manifest) {
    std::ifstream in(*ordering.manifest);
    if (!in) throw DataError("cannot open frame manifest " + ordering.manifest->string());
    std::string line;
    while (std::getline(in, line)) {
      if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      line.erase(0, line.find_first_not_of(" \t\r"));
      line.erase(line.find_last_not_of(" \t\r") + 1);
      if (!line.empty()) files.push_back(dir / line);
    }
  } else {
    for (const auto& entry : fs::directory_iterator(dir)) {
      const auto ext = entry.path().extension();
      if (entry.is_regular_file() && (ext == ".pgm" || ext == ".dnf")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  }
  if (files.empty()) throw DataError("no frames found in " + dir.string());
  std::vector<Image> frames;
  frames.reserve(files.size());
  for (const auto& f : files) {
    frames.push_back(read_frame(f));
    if (!frames.back().same_shape(frames.front())) {
      throw DataError("frame " + f.string() + " differs in shape from " + files.front().string());
    }
  }
  return FrameSequence::uniform(std::move(frames), time_step);
}

}  // namespace dn2n::synth
