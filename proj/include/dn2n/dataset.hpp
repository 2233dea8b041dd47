#pragma once

#include <filesystem>
#include <string>

#include "dn2n/kvfile.hpp"
#include "dn2n/synth.hpp"

namespace dn2n::synth {

// On-disk toy dataset:
//   DIR/clean/frame_%03d.dnf   DIR/noisy/frame_%03d.dnf   DIR/manifest.txt
// manifest.txt keys: mode, lambda, sigma, seed, frames (N), size, times.

std::string frame_file_name(std::size_t index);

KeyValues dataset_manifest(DenatureMode mode, const ToySpec& toy, const NoiseSpec& noise,
                           const FrameSequence& seq);

void write_dataset(const std::filesystem::path& dir, const ToyDataset& data, const KeyValues& manifest);

/// Reads DIR/<subdir> as a raw255 sequence ordered by file name.
FrameSequence read_dataset_frames(const std::filesystem::path& dir, const std::string& subdir);

}  // namespace dn2n::synth
