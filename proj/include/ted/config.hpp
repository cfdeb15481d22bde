#pragma once

// Flat key-value configuration: one `section.key = value` per line, `#`
// starts a comment. Later assignments override earlier ones.

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ted/error.hpp"

namespace ted {

class Config {
 public:
  Config() = default;

  static Config parse(std::istream& is) {
    Config c;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(lineno, "expected 'key = value'");
      auto key = trim(line.substr(0, eq));
      if (key.empty()) throw ParseError(lineno, "empty key");
      c.values_[key] = trim(line.substr(eq + 1));
    }
    return c;
  }

  static Config parse_string(const std::string& text) {
    std::istringstream is(text);
    return parse(is);
  }

  static Config load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config '" + path + "'");
    return parse(is);
  }

  /// Applies a `key=value` override.
  void set(const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError(assignment, "override must be key=value");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
  }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : to_double(key, it->second);
  }

  std::size_t get_size(const std::string& key, std::size_t fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : to_size(key, it->second);
  }

  bool get_bool(const std::string& key, bool fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const auto& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key, "expected a boolean, got '" + v + "'");
  }

  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<double> out;
    for (const auto& part : split(it->second)) out.push_back(to_double(key, part));
    return out;
  }

  std::vector<std::size_t> get_sizes(const std::string& key, std::vector<std::size_t> fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<std::size_t> out;
    for (const auto& part : split(it->second)) out.push_back(to_size(key, part));
    return out;
  }

  /// Keys present in the file that no getter has asked for.
  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : values_)
      if (!used_.count(k)) out.push_back(k);
    return out;
  }

  void reject_unused() const {
    auto unused = unused_keys();
    if (!unused.empty()) throw ConfigError(unused.front(), "unknown key");
  }

  /// Canonical text form, sorted by key.
  std::string to_string() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

 private:
  static std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, ',')) {
      cur = trim(cur);
      if (!cur.empty()) out.push_back(cur);
    }
    return out;
  }

  static double to_double(const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ConfigError(key, "expected a number, got '" + v + "'");
    }
  }

  static std::size_t to_size(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
      throw ConfigError(key, "expected a nonnegative integer, got '" + v + "'");
    return out;
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

/// Parses "N" or "N..M" (inclusive) into a seed list.
inline std::vector<std::uint64_t> parse_seed_range(const std::string& s) {
  auto dots = s.find("..");
  auto num = [&](const std::string& part) {
    std::uint64_t v = 0;
    auto t = Config::trim(part);
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size() || t.empty()) throw ConfigError("seeds", "bad seed '" + s + "'");
    return v;
  };
  if (dots == std::string::npos) return {num(s)};
  const auto lo = num(s.substr(0, dots));
  const auto hi = num(s.substr(dots + 2));
  if (hi < lo) throw ConfigError("seeds", "empty seed range '" + s + "'");
  std::vector<std::uint64_t> out;
  for (auto v = lo; v <= hi; ++v) out.push_back(v);
  return out;
}

}  // namespace ted
