// SPDX-License-Identifier: Apache-2.0
#ifndef UCTS_RUNCONFIG_HPP
#define UCTS_RUNCONFIG_HPP

// Layered key=value run configuration for the CLI. Three layers with strict
// precedence: command-line flag > config file > built-in default. Every
// subcommand declares its full key set up front; any other key — from a flag
// or a file — is rejected by name. Config files are plain text `key = value`
// lines with `#` comments.

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ucts/common.hpp"

namespace ucts {

class RunConfig {
 public:
  /// Declare the allowed keys and their built-in defaults. An empty default
  /// means "no default": get() on such a key throws unless a file or flag
  /// supplied it.
  explicit RunConfig(
      std::vector<std::pair<std::string, std::string>> defaults) {
    for (auto& [k, v] : defaults) {
      if (defaults_.count(k)) throw ConfigError("duplicate config key: " + k);
      defaults_[k] = v;
    }
  }

  void check_known(const std::string& key, const std::string& origin) const {
    if (!defaults_.count(key))
      throw ConfigError("unknown config key '" + key + "' (" + origin + ")");
  }

  /// Layer 2: parse `key = value` lines; '#' starts a comment, blank lines
  /// are skipped.
  void load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const std::size_t eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config file " + path + ":" +
                          std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      check_known(key, path + ":" + std::to_string(lineno));
      file_[key] = value;
    }
  }

  /// Layer 3 (highest precedence): a --key value flag.
  void set_flag(const std::string& key, const std::string& value) {
    check_known(key, "command line");
    flags_[key] = value;
  }

  bool is_set(const std::string& key) const {
    check_known(key, "lookup");
    if (flags_.count(key) || file_.count(key)) return true;
    return !defaults_.at(key).empty();
  }

  std::string get(const std::string& key) const {
    check_known(key, "lookup");
    if (auto it = flags_.find(key); it != flags_.end()) return it->second;
    if (auto it = file_.find(key); it != file_.end()) return it->second;
    const std::string& d = defaults_.at(key);
    if (d.empty())
      throw ConfigError("required config key '" + key + "' was not provided");
    return d;
  }

  long long get_int(const std::string& key) const {
    return parse<long long>(key);
  }
  std::uint64_t get_uint64(const std::string& key) const {
    return parse<std::uint64_t>(key);
  }
  double get_double(const std::string& key) const { return parse<double>(key); }
  bool get_bool(const std::string& key) const {
    const std::string v = get(key);
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError("config key '" + key + "' expects a boolean, got '" + v +
                      "'");
  }
  /// Comma-separated list of values (e.g. "32,64,128" or "1e-3,1e-4").
  template <typename T>
  std::vector<T> get_list(const std::string& key) const {
    std::vector<T> out;
    std::istringstream is(get(key));
    std::string item;
    while (std::getline(is, item, ',')) {
      std::istringstream vs(trim(item));
      T v{};
      vs >> v;
      if (vs.fail() || !vs.eof())
        throw ConfigError("config key '" + key + "': bad list element '" +
                          item + "'");
      out.push_back(v);
    }
    if (out.empty())
      throw ConfigError("config key '" + key + "': empty list");
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  }

  template <typename T>
  T parse(const std::string& key) const {
    const std::string v = get(key);
    std::istringstream is(v);
    T out{};
    is >> out;
    if (is.fail() || !is.eof())
      throw ConfigError("config key '" + key + "' has a malformed value '" +
                        v + "'");
    return out;
  }

  std::map<std::string, std::string> defaults_, file_, flags_;
};

}  // namespace ucts

#endif  // UCTS_RUNCONFIG_HPP
