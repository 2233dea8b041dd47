#include "dn2n/dataset.hpp"

#include <cstdio>

#include "dn2n/errors.hpp"
#include "dn2n/frame_io.hpp"

namespace dn2n::synth {

std::string frame_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%03zu.dnf", index);
  return buf;
}

KeyValues dataset_manifest(DenatureMode mode, const ToySpec& toy, const NoiseSpec& noise,
                           const FrameSequence& seq) {
  KeyValues kv;
  kv.set("mode", to_string(mode));
  kv.set("lambda", noise.lambda);
  kv.set("sigma", noise.sigma);
  kv.set("seed", noise.seed);
  kv.set("frames", std::uint64_t{toy.frames});
  kv.set("size", std::uint64_t{toy.side});
  std::string times;
  for (std::size_t i = 0; i < seq.times().size(); ++i) {
    if (i) times += ",";
    times += format_double(seq.times()[i]);
  }
  kv.set("times", times);
  return kv;
}

void write_dataset(const std::filesystem::path& dir, const ToyDataset& data, const KeyValues& manifest) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "clean");
  fs::create_directories(dir / "noisy");
  for (std::size_t i = 0; i < data.clean.size(); ++i) {
    write_float_frame(dir / "clean" / frame_file_name(i), data.clean[i]);
    write_float_frame(dir / "noisy" / frame_file_name(i), data.noisy[i]);
  }
  manifest.write(dir / "manifest.txt");
}

FrameSequence read_dataset_frames(const std::filesystem::path& dir, const std::string& subdir) {
  const auto path = dir / subdir;
  if (!std::filesystem::is_directory(path)) throw DataError("missing frame directory " + path.string());
  return load_frame_directory(path);
}

}  // namespace dn2n::synth
