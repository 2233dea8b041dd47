#include "dn2n/frame_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <stdexcept>
#include <string>

#include "dn2n/errors.hpp"
#include "dn2n/le_bytes.hpp"

namespace dn2n {
namespace {

constexpr char kFloatMagic[4] = {'D', 'N', 'F', '1'};
constexpr std::size_t kFloatHeader = 12;

}  // namespace

std::vector<std::uint8_t> encode_float_frame(const Image& im) {
  if (im.height() > std::numeric_limits<std::uint32_t>::max() ||
      im.width() > std::numeric_limits<std::uint32_t>::max()) {
    throw std::invalid_argument("encode_float_frame: dimensions exceed 32 bits");
  }
  ByteWriter out;
  out.raw(kFloatMagic, 4);
  out.u32(static_cast<std::uint32_t>(im.height()));
  out.u32(static_cast<std::uint32_t>(im.width()));
  for (double v : im.pixels()) out.f64(v);
  return std::move(out).take();
}

Image decode_float_frame(std::span<const std::uint8_t> bytes, PixelDomain domain) {
  if (bytes.size() < kFloatHeader || std::memcmp(bytes.data(), kFloatMagic, 4) != 0) {
    throw FormatError("float frame: bad magic");
  }
  ByteReader in(bytes.subspan(4));
  const std::uint64_t h = in.u32();
  const std::uint64_t w = in.u32();
  const std::uint64_t count = h * w;
  if (count > (bytes.size() - kFloatHeader) / 8 || count * 8 != bytes.size() - kFloatHeader) {
    throw FormatError("float frame: payload size does not match " + std::to_string(h) + "x" +
                      std::to_string(w));
  }
  std::vector<double> pixels(count);
  for (double& v : pixels) v = in.f64();
  try {
    return Image(h, w, std::move(pixels), domain);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("float frame: ") + e.what());
  }
}

std::vector<std::uint8_t> encode_pgm(const Image& im) {
  const Image raw = im.domain() == PixelDomain::Unit ? denormalize(im, true) : im;
  const std::string header =
      "P5\n" + std::to_string(raw.width()) + " " + std::to_string(raw.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + raw.size());
  for (double v : raw.pixels()) {
    const double clamped = std::clamp(v, 0.0, 255.0);
    // nearbyint honours the default round-to-nearest-even mode
    out.push_back(static_cast<std::uint8_t>(std::nearbyint(clamped)));
  }
  return out;
}

Image decode_pgm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&]() -> std::uint64_t {
    skip_space_and_comments();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw FormatError("pgm: malformed header");
    std::uint64_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > (1ull << 31)) throw FormatError("pgm: header value too large");
    }
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw FormatError("pgm: bad magic");
  pos = 2;
  const std::uint64_t w = read_uint();
  const std::uint64_t h = read_uint();
  const std::uint64_t maxval = read_uint();
  if (maxval == 0 || maxval > 255) throw FormatError("pgm: only 8-bit maxval is supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("pgm: malformed header");
  ++pos;
  if (w == 0 || h == 0 || w * h != bytes.size() - pos) throw FormatError("pgm: truncated payload");
  std::vector<double> pixels(w * h);
  const double scale = 255.0 / static_cast<double>(maxval);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    pixels[i] = maxval == 255 ? bytes[pos + i] : bytes[pos + i] * scale;
  }
  return Image(h, w, std::move(pixels), PixelDomain::Raw255);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

void write_float_frame(const std::filesystem::path& path, const Image& im) {
  write_file_bytes(path, encode_float_frame(im));
}

Image read_float_frame(const std::filesystem::path& path, PixelDomain domain) {
  return decode_float_frame(read_file_bytes(path), domain);
}

void write_pgm(const std::filesystem::path& path, const Image& im) {
  write_file_bytes(path, encode_pgm(im));
}

Image read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file_bytes(path)); }

Image read_frame(const std::filesystem::path& path) {
  const auto ext = path.extension();
  if (ext == ".pgm") return read_pgm(path);
  if (ext == ".dnf") return read_float_frame(path);
  throw DataError("unsupported frame format: " + path.string());
}

void write_frame(const std::filesystem::path& path, const Image& im) {
  const auto ext = path.extension();
  if (ext == ".pgm") return write_pgm(path, im);
  if (ext == ".dnf") return write_float_frame(path, im);
  throw DataError("unsupported frame format: " + path.string());
}

}  // namespace dn2n
