#include "dn2n/model_io.hpp"

#include <cstring>
#include <stdexcept>

#include "dn2n/errors.hpp"
#include "dn2n/frame_io.hpp"
#include "dn2n/kvfile.hpp"
#include "dn2n/le_bytes.hpp"

namespace dn2n::nn {
namespace {

constexpr char kMagic[4] = {'D', 'N', 'M', '1'};

}  // namespace

std::vector<std::uint8_t> encode_spec_descriptor(const ModelSpec& spec) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(spec.in_channels));
  w.u32(static_cast<std::uint32_t>(spec.out_channels));
  w.u32(static_cast<std::uint32_t>(spec.kernel));
  w.f64(spec.leaky_slope);
  w.u32(static_cast<std::uint32_t>(spec.levels.size()));
  for (std::size_t width : spec.levels) w.u32(static_cast<std::uint32_t>(width));
  return std::move(w).take();
}

std::vector<std::uint8_t> encode_model(const ModelSpec& spec, const ParamStore& params) {
  spec.validate();
  if (!params.same_layout(make_param_layout(spec))) {
    throw std::invalid_argument("encode_model: parameters do not match the spec");
  }
  const auto descriptor = encode_spec_descriptor(spec);
  ByteWriter w;
  w.raw(kMagic, 4);
  w.u32(kModelFormatVersion);
  w.raw(descriptor.data(), descriptor.size());
  w.u64(fnv1a(descriptor.data(), descriptor.size()));
  w.u64(params.size());
  for (double v : params.values()) w.f64(v);
  return std::move(w).take();
}

SavedModel decode_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("model file: bad magic");
  }
  ByteReader r(bytes.subspan(4));
  const std::uint32_t version = r.u32();
  if (version != kModelFormatVersion) {
    throw FormatError("model file: unsupported version " + std::to_string(version));
  }
  SavedModel out;
  out.spec.in_channels = r.u32();
  out.spec.out_channels = r.u32();
  out.spec.kernel = r.u32();
  out.spec.leaky_slope = r.f64();
  const std::uint32_t nl = r.u32();
  if (nl == 0 || nl > 16) throw FormatError("model file: invalid level count");
  out.spec.levels.resize(nl);
  for (auto& width : out.spec.levels) width = r.u32();
  const auto descriptor = encode_spec_descriptor(out.spec);
  if (r.u64() != fnv1a(descriptor.data(), descriptor.size())) {
    throw FormatError("model file: spec hash mismatch");
  }
  try {
    out.params = make_param_layout(out.spec);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("model file: ") + e.what());
  }
  if (r.u64() != out.params.size()) throw FormatError("model file: parameter count mismatch");
  if (r.remaining() != out.params.size() * 8) throw FormatError("model file: truncated parameters");
  for (double& v : out.params.values()) v = r.f64();
  return out;
}

void save_model(const std::filesystem::path& path, const ModelSpec& spec, const ParamStore& params) {
  write_file_bytes(path, encode_model(spec, params));
}

SavedModel load_model(const std::filesystem::path& path) { return decode_model(read_file_bytes(path)); }

}  // namespace dn2n::nn
