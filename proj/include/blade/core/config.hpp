#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "blade/core/error.hpp"
#include "blade/core/random.hpp"

namespace blade {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

/// Flat `key = value` configuration with `[section]` headers and `#` comments.
/// Keys are stored sorted so the canonical serialization (and its hash) is
/// stable across reorderings of the same file.
class Config {
 public:
  Config() = default;

  static Config parse(std::istream& in, const std::string& origin = "<stream>") {
    Config cfg;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string t = trim(line);
      size_t hash = t.find('#');
      if (hash != std::string::npos) t = trim(t.substr(0, hash));
      if (t.empty()) continue;
      if (t.front() == '[') {
        if (t.back() != ']') throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
        section = trim(t.substr(1, t.size() - 2));
        if (section.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty section name");
        cfg.sections_[section];
        continue;
      }
      size_t eq = t.find('=');
      if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      std::string key = trim(t.substr(0, eq));
      std::string val = trim(t.substr(eq + 1));
      if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
      if (section.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": key outside any [section]");
      auto& sec = cfg.sections_[section];
      if (sec.count(key)) throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
      sec[key] = val;
    }
    return cfg;
  }

  static Config parse_string(const std::string& text) {
    std::istringstream is(text);
    return parse(is);
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse(in, path);
  }

  bool has(const std::string& section, const std::string& key) const {
    auto it = sections_.find(section);
    return it != sections_.end() && it->second.count(key) > 0;
  }
  bool has_section(const std::string& section) const { return sections_.count(section) > 0; }

  const std::string& raw(const std::string& section, const std::string& key) const {
    auto it = sections_.find(section);
    if (it == sections_.end()) throw ConfigError("missing config section [" + section + "]");
    auto kt = it->second.find(key);
    if (kt == it->second.end()) throw ConfigError("missing config key [" + section + "] " + key);
    return kt->second;
  }

  std::string get_string(const std::string& s, const std::string& k) const { return raw(s, k); }
  std::string get_string(const std::string& s, const std::string& k, const std::string& dflt) const {
    return has(s, k) ? raw(s, k) : dflt;
  }

  long get_int(const std::string& s, const std::string& k) const { return parse_int(raw(s, k), s, k); }
  long get_int(const std::string& s, const std::string& k, long dflt) const {
    return has(s, k) ? get_int(s, k) : dflt;
  }

  double get_real(const std::string& s, const std::string& k) const { return parse_real(raw(s, k), s, k); }
  double get_real(const std::string& s, const std::string& k, double dflt) const {
    return has(s, k) ? get_real(s, k) : dflt;
  }

  bool get_bool(const std::string& s, const std::string& k) const {
    std::string v = raw(s, k);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key [" + s + "] " + k + ": expected boolean, got '" + v + "'");
  }
  bool get_bool(const std::string& s, const std::string& k, bool dflt) const {
    return has(s, k) ? get_bool(s, k) : dflt;
  }

  /// Whitespace-separated integer list.
  std::vector<long> get_int_list(const std::string& s, const std::string& k) const {
    std::istringstream is(raw(s, k));
    std::vector<long> out;
    std::string tok;
    while (is >> tok) out.push_back(parse_int(tok, s, k));
    return out;
  }
  std::vector<long> get_int_list(const std::string& s, const std::string& k, std::vector<long> dflt) const {
    return has(s, k) ? get_int_list(s, k) : dflt;
  }

  void set(const std::string& section, const std::string& key, const std::string& value) {
    sections_[section][key] = value;
  }

  std::vector<std::string> section_names() const {
    std::vector<std::string> out;
    for (auto& [name, _] : sections_) out.push_back(name);
    return out;
  }
  const std::map<std::string, std::string>& section(const std::string& name) const {
    auto it = sections_.find(name);
    if (it == sections_.end()) throw ConfigError("missing config section [" + name + "]");
    return it->second;
  }

  /// Sorted, normalized rendering; the provenance hash is taken over this.
  std::string canonical() const {
    std::ostringstream os;
    for (auto& [name, kv] : sections_) {
      os << "[" << name << "]\n";
      for (auto& [k, v] : kv) os << k << " = " << v << "\n";
    }
    return os.str();
  }

  uint64_t hash() const { return fnv1a64(canonical()); }

 private:
  static long parse_int(const std::string& v, const std::string& s, const std::string& k) {
    try {
      size_t pos = 0;
      long r = std::stol(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return r;
    } catch (const std::exception&) {
      throw ConfigError("config key [" + s + "] " + k + ": expected integer, got '" + v + "'");
    }
  }
  static double parse_real(const std::string& v, const std::string& s, const std::string& k) {
    try {
      size_t pos = 0;
      double r = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return r;
    } catch (const std::exception&) {
      throw ConfigError("config key [" + s + "] " + k + ": expected real, got '" + v + "'");
    }
  }

  std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace blade
