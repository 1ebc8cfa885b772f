#include "robustlaw/config.hpp"

#include "robustlaw/types.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace robustlaw {
namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return v;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  if (value.size() < 2 || value.front() != '[' || value.back() != ']') {
    items.push_back(value);
    return items;
  }
  const std::string inner = trim(std::string_view(value).substr(1, value.size() - 2));
  if (inner.empty()) return items;
  std::size_t start = 0;
  while (true) {
    const auto comma = inner.find(',', start);
    items.push_back(trim(std::string_view(inner).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return items;
}

std::string normalize_scalar(const std::string& s) {
  if (auto v = parse_number(s)) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return buf;
  }
  return s;
}

std::string normalize_value(const std::string& value) {
  if (!value.empty() && value.front() == '[') {
    std::string out = "[";
    const auto items = split_list(value);
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (i) out += ",";
      out += normalize_scalar(items[i]);
    }
    return out + "]";
  }
  return normalize_scalar(value);
}

}  // namespace

Config Config::parse(std::string_view text) {
  Config cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ConfigError, "line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) {
      throw Error(ErrorCode::ConfigError, "line " + std::to_string(lineno) + ": empty key");
    }
    if (cfg.entries_.count(key)) {
      throw Error(ErrorCode::ConfigError, "line " + std::to_string(lineno) + ": duplicate key " + key);
    }
    cfg.entries_.emplace(std::move(key), std::move(value));
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool Config::has(const std::string& key) const { return entries_.count(key) != 0; }

void Config::set(const std::string& key, std::string value) { entries_[key] = trim(value); }

void Config::erase(const std::string& key) { entries_.erase(key); }

const std::string& Config::raw(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw Error(ErrorCode::ConfigError, "missing key " + key);
  return it->second;
}

std::string Config::get_string(const std::string& key) const { return raw(key); }

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? raw(key) : fallback;
}

double Config::get_double(const std::string& key) const {
  auto v = parse_number(raw(key));
  if (!v) throw Error(ErrorCode::ConfigError, key + ": not a number: " + raw(key));
  return *v;
}

double Config::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

std::int64_t Config::get_int(const std::string& key) const {
  const std::string& s = raw(key);
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    // Accept integral spellings like 1e5.
    auto d = parse_number(s);
    if (!d || *d != static_cast<double>(static_cast<std::int64_t>(*d))) {
      throw Error(ErrorCode::ConfigError, key + ": not an integer: " + s);
    }
    return static_cast<std::int64_t>(*d);
  }
  return v;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

std::uint64_t Config::get_u64(const std::string& key) const {
  const std::string& s = raw(key);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::ConfigError, key + ": not an unsigned 64-bit integer: " + s);
  }
  return v;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string& s = raw(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw Error(ErrorCode::ConfigError, key + ": not a boolean: " + s);
}

std::vector<double> Config::get_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(raw(key))) {
    auto v = parse_number(item);
    if (!v) throw Error(ErrorCode::ConfigError, key + ": list entry is not a number: " + item);
    out.push_back(*v);
  }
  return out;
}

std::vector<std::string> Config::get_string_list(const std::string& key) const {
  return split_list(raw(key));
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += '=';
    out += normalize_value(v);
    out += '\n';
  }
  return out;
}

std::uint64_t Config::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace robustlaw
