#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "mdlopt/errors.hpp"

namespace mdlopt {

// Flat `key = value` config file. Lines starting with '#' are comments.
// Keys are dotted paths (e.g. "model.hidden"). Values are stored verbatim;
// typed getters parse on access. Serialization is sorted and therefore
// byte-stable, which lets run directories snapshot their exact config.
class KvConfig {
 public:
  KvConfig() = default;

  static KvConfig parse_text(const std::string& text) {
    KvConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      std::string s = strip(line);
      if (s.empty() || s[0] == '#') continue;
      auto eq = s.find('=');
      if (eq == std::string::npos)
        throw DataError("config line " + std::to_string(lineno) + ": missing '='");
      std::string key = strip(s.substr(0, eq));
      std::string val = strip(s.substr(eq + 1));
      if (key.empty())
        throw DataError("config line " + std::to_string(lineno) + ": empty key");
      cfg.values_[key] = val;
    }
    return cfg;
  }

  static KvConfig load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_text(ss.str());
  }

  std::string dump() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
    return os.str();
  }

  void save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write config file: " + path);
    f << dump();
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set(const std::string& key, double value) {
    std::ostringstream os;
    os.precision(12);
    os << value;
    values_[key] = os.str();
  }
  void set(const std::string& key, int64_t value) { values_[key] = std::to_string(value); }

  std::string get_str(const std::string& key, const std::string& dflt) const {
    auto it = values_.find(key);
    return it == values_.end() ? dflt : it->second;
  }

  double get_num(const std::string& key, double dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    try {
      size_t pos = 0;
      double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw DataError("config key '" + key + "': not a number: " + it->second);
    }
  }

  int64_t get_int(const std::string& key, int64_t dflt) const {
    return static_cast<int64_t>(get_num(key, static_cast<double>(dflt)));
  }

  bool get_bool(const std::string& key, bool dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw DataError("config key '" + key + "': not a bool: " + it->second);
  }

  const std::map<std::string, std::string>& items() const { return values_; }

 private:
  static std::string strip(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  }

  std::map<std::string, std::string> values_;
};

}  // namespace mdlopt
