#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "profkg/error.hpp"
#include "profkg/hash.hpp"

namespace profkg {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// Flat `key = value` settings. Lines starting with '#' are comments; later keys win.
// Lookups fall back to the caller's default, so precedence is flag > file > default
// once flags are overlaid on the file.
class Config {
 public:
  Config() = default;

  static Config parse(std::string_view text, const std::string& origin = "<config>") {
    Config c;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const auto nl = text.find('\n', pos);
      const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
      pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
      ++line_no;
      const std::string_view line = detail::trim(raw);
      if (line.empty() || line.front() == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw ParseError(origin, line_no, "expected 'key = value'");
      const std::string_view key = detail::trim(line.substr(0, eq));
      if (key.empty()) throw ParseError(origin, line_no, "empty key");
      c.values_[std::string(key)] = std::string(detail::trim(line.substr(eq + 1)));
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::config_missing, "config not found: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    Config c = parse(buf.str(), path);
    c.base_dir_ = std::filesystem::path(path).parent_path().string();
    return c;
  }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  void erase(const std::string& key) { values_.erase(key); }
  bool has(const std::string& key) const { return values_.contains(key); }
  const std::map<std::string, std::string>& values() const { return values_; }
  const std::string& base_dir() const { return base_dir_; }
  void set_base_dir(std::string dir) { base_dir_ = std::move(dir); }

  // Keys of `higher` replace ours.
  void overlay(const Config& higher) {
    for (const auto& [k, v] : higher.values_) values_[k] = v;
  }

  std::optional<std::string> get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  std::string get_string(const std::string& key, const std::string& fallback = "") const {
    return get(key).value_or(fallback);
  }

  // Relative paths resolve against the directory of the loaded file.
  std::string get_path(const std::string& key, const std::string& fallback = "") const {
    const std::string v = get_string(key, fallback);
    if (v.empty() || std::filesystem::path(v).is_absolute() || base_dir_.empty()) return v;
    return (std::filesystem::path(base_dir_) / v).lexically_normal().string();
  }

  double get_double(const std::string& key, double fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    try {
      std::size_t used = 0;
      const double d = std::stod(*v, &used);
      if (used == v->size()) return d;
    } catch (const std::exception&) {
    }
    throw invalid(key, *v, "a number");
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || ptr != v->data() + v->size()) throw invalid(key, *v, "a non-negative integer");
    return out;
  }

  std::size_t get_size(const std::string& key, std::size_t fallback) const {
    return static_cast<std::size_t>(get_u64(key, fallback));
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    std::string s = *v;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw invalid(key, *v, "a boolean");
  }

  std::string dump() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

  // Hash of the sorted key/value pairs, skipping `ignored` keys.
  std::string hash(const std::vector<std::string>& ignored = {}) const {
    std::string canon;
    for (const auto& [k, v] : values_)
      if (std::find(ignored.begin(), ignored.end(), k) == ignored.end()) canon += k + "=" + v + "\n";
    return to_hex(fnv1a64(canon));
  }

 private:
  static Error invalid(const std::string& key, const std::string& value, const char* expected) {
    return Error(ErrorCode::config_invalid, "'" + key + "' = '" + value + "' is not " + expected);
  }

  std::map<std::string, std::string> values_;
  std::string base_dir_;
};

}  // namespace profkg
