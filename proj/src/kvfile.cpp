#include "dn2n/kvfile.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dn2n/errors.hpp"

namespace dn2n {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

KeyValues KeyValues::parse(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw DataError("line " + std::to_string(lineno) + ": expected key=value");
    }
    kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValues KeyValues::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse(buf.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void KeyValues::set(const std::string& key, std::string value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(key, std::move(value));
}

void KeyValues::set(const std::string& key, double value) { set(key, format_double(value)); }
void KeyValues::set(const std::string& key, std::int64_t value) { set(key, std::to_string(value)); }
void KeyValues::set(const std::string& key, std::uint64_t value) { set(key, std::to_string(value)); }

void KeyValues::merge(const KeyValues& other) {
  for (const auto& [k, v] : other.entries_) set(k, v);
}

bool KeyValues::contains(const std::string& key) const { return get(key).has_value(); }

std::optional<std::string> KeyValues::get(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

std::string KeyValues::require(const std::string& key) const {
  auto v = get(key);
  if (!v) throw DataError("missing key '" + key + "'");
  return *v;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  return v ? parse_double(*v) : fallback;
}

std::uint64_t KeyValues::get_uint(const std::string& key, std::uint64_t fallback) const {
  auto v = get(key);
  return v ? parse_uint(*v) : fallback;
}

std::string KeyValues::str() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

void KeyValues::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << str();
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
  const std::string t = trim(text);
  if (t == "inf") return HUGE_VAL;
  if (t == "-inf") return -HUGE_VAL;
  double v = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size()) {
    throw std::invalid_argument("not a number: '" + text + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& text) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size()) {
    throw std::invalid_argument("not a non-negative integer: '" + text + "'");
  }
  return v;
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string fnv1a_hex(const std::string& text) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(text.data(), text.size())));
  return buf;
}

}  // namespace dn2n
