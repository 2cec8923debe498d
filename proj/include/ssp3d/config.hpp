#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ssp3d/errors.hpp"

namespace ssp3d {

// Plain-text "key = value" configuration. CLI flags override file values;
// the effective configuration is echoed into every checkpoint and report.
class Config {
 public:
  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) order_.push_back(key);
    values_[key] = value;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get(const std::string& key, const std::string& def) const {
    auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
  }

  std::string require(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: missing required key '" + key + "'");
    return it->second;
  }

  double get_double(const std::string& key, double def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    try {
      return std::stod(it->second);
    } catch (...) {
      throw ConfigError("config: key '" + key + "' is not a number: " + it->second);
    }
  }

  std::int64_t get_int(const std::string& key, std::int64_t def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    try {
      return std::stoll(it->second);
    } catch (...) {
      throw ConfigError("config: key '" + key + "' is not an integer: " + it->second);
    }
  }

  bool get_bool(const std::string& key, bool def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config: key '" + key + "' is not a boolean: " + v);
  }

  static Config from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    Config c;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      const std::size_t eq = line.find('=');
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      if (eq == std::string::npos)
        throw ConfigError("config: malformed line " + std::to_string(lineno) + " in " + path);
      auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return c;
  }

  static Config from_string(const std::string& text) {
    std::istringstream ss(text);
    Config c;
    std::string line;
    while (std::getline(ss, line)) {
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return c;
  }

  // Canonical text form (keys in first-set order).
  std::string echo() const {
    std::string out;
    for (const auto& k : order_) out += k + " = " + values_.at(k) + "\n";
    return out;
  }

  const std::vector<std::string>& keys() const { return order_; }

 private:
  std::vector<std::string> order_;
  std::map<std::string, std::string> values_;
};

}  // namespace ssp3d
