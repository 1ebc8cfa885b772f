#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace robustlaw {

/// Flat `block.key = value` configuration text.
///
///   # comment
///   loss.kind = square
///   model.weights = [0.2, 0.3, 0.5]
///
/// Values are scalars or bracketed comma-separated lists. Keys are unique;
/// a repeated key is a ConfigError. All lookups throw ConfigError on missing
/// or malformed values unless a default is supplied.
class Config {
 public:
  Config() = default;

  static Config parse(std::string_view text);
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& key) const;
  void set(const std::string& key, std::string value);
  void erase(const std::string& key);

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_list(const std::string& key) const;
  std::vector<std::string> get_string_list(const std::string& key) const;

  /// Sorted, whitespace- and number-normalized rendering; two configs that
  /// differ only in key order or numeric spelling render identically.
  std::string canonical() const;
  /// FNV-1a 64 over canonical().
  std::uint64_t hash() const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  const std::string& raw(const std::string& key) const;

  std::map<std::string, std::string> entries_;
};

std::string hex64(std::uint64_t value);

}  // namespace robustlaw
