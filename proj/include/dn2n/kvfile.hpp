#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dn2n {

/// Ordered flat key=value document: one pair per line, '#' starts a comment.
/// Insertion order is preserved so written files are byte-stable.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text);
  static KeyValues read(const std::filesystem::path& path);

  /// Replaces an existing key in place or appends a new one.
  void set(const std::string& key, std::string value);
  void set(const std::string& key, double value);
  void set(const std::string& key, std::int64_t value);
  void set(const std::string& key, std::uint64_t value);
  void set(const std::string& key, int value) { set(key, std::int64_t{value}); }
  void merge(const KeyValues& other);

  bool contains(const std::string& key) const;
  std::optional<std::string> get(const std::string& key) const;
  std::string require(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string str() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// Shortest round-trip decimal form of a double ("inf"/"-inf"/"nan" for non-finite values).
std::string format_double(double v);
double parse_double(const std::string& text);
std::uint64_t parse_uint(const std::string& text);

/// 64-bit FNV-1a over the bytes of `text`, rendered as 16 hex digits.
std::string fnv1a_hex(const std::string& text);
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace dn2n
