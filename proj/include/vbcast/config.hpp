#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "vbcast/error.hpp"
#include "vbcast/scenario.hpp"

namespace vbcast {

/// Value of a config key: number, string, boolean or a homogeneous array.
struct ConfigValue {
  std::variant<double, std::string, bool, std::vector<double>, std::vector<std::string>> v;
  int line = 0;
};

/// Flat key = value document. `[section]` headers prefix the following keys with "section.".
/// Grammar is the TOML subset of bare keys, numbers, "strings", true/false and one-line arrays.
class ConfigDocument {
 public:
  static ConfigDocument parse(std::istream& in, const std::string& origin = "<config>") {
    ConfigDocument doc;
    std::string raw, section;
    int line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      const std::string line = trim(strip_comment(raw));
      if (line.empty()) continue;
      auto where = [&] { return origin + ":" + std::to_string(line_no) + ": "; };
      if (line.front() == '[') {
        require(line.back() == ']' && line.size() > 2, ErrorKind::Config, where() + "malformed section header");
        section = trim(line.substr(1, line.size() - 2));
        require(valid_key(section), ErrorKind::Config, where() + "bad section name '" + section + "'");
        continue;
      }
      const auto eq = line.find('=');
      require(eq != std::string::npos, ErrorKind::Config, where() + "expected key = value");
      std::string key = trim(line.substr(0, eq));
      require(valid_key(key), ErrorKind::Config, where() + "bad key '" + key + "'");
      if (!section.empty()) key = section + "." + key;
      require(!doc.values_.count(key), ErrorKind::Config, where() + "duplicate key '" + key + "'");
      ConfigValue cv = parse_value(trim(line.substr(eq + 1)), where());
      cv.line = line_no;
      doc.values_.emplace(key, std::move(cv));
      doc.order_.push_back(key);
    }
    return doc;
  }

  static ConfigDocument parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  static ConfigDocument load(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::Config, "cannot open config '" + path + "'");
    return parse(in, path);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::vector<std::string>& keys() const { return order_; }

  double number(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const double* d = std::get_if<double>(&it->second.v);
    require(d != nullptr, ErrorKind::Config, "key '" + key + "' must be a number");
    used_.push_back(key);
    return *d;
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) const {
    const double d = number(key, static_cast<double>(fallback));
    require(d == std::floor(d) && std::fabs(d) < 9e15, ErrorKind::Config, "key '" + key + "' must be an integer");
    return static_cast<std::int64_t>(d);
  }

  std::string string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string* s = std::get_if<std::string>(&it->second.v);
    require(s != nullptr, ErrorKind::Config, "key '" + key + "' must be a string");
    used_.push_back(key);
    return *s;
  }

  bool boolean(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const bool* b = std::get_if<bool>(&it->second.v);
    require(b != nullptr, ErrorKind::Config, "key '" + key + "' must be true or false");
    used_.push_back(key);
    return *b;
  }

  std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    used_.push_back(key);
    if (const double* d = std::get_if<double>(&it->second.v)) return {*d};
    const auto* a = std::get_if<std::vector<double>>(&it->second.v);
    require(a != nullptr, ErrorKind::Config, "key '" + key + "' must be a number array");
    return *a;
  }

  std::vector<std::string> strings(const std::string& key, const std::vector<std::string>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    used_.push_back(key);
    if (const std::string* s = std::get_if<std::string>(&it->second.v)) return {*s};
    const auto* a = std::get_if<std::vector<std::string>>(&it->second.v);
    require(a != nullptr, ErrorKind::Config, "key '" + key + "' must be a string array");
    return *a;
  }

  /// Keys never read through an accessor; typos surface as configuration errors.
  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& k : order_)
      if (std::find(used_.begin(), used_.end(), k) == used_.end()) out.push_back(k);
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
  }

  static std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') quoted = !quoted;
      if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
  }

  static bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    return std::all_of(k.begin(), k.end(), [](char c) {
      return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
    });
  }

  static ConfigValue parse_value(const std::string& text, const std::string& where) {
    require(!text.empty(), ErrorKind::Config, where + "missing value");
    ConfigValue cv;
    if (text.front() == '[') {
      require(text.back() == ']', ErrorKind::Config, where + "unterminated array");
      const std::string body = trim(text.substr(1, text.size() - 2));
      std::vector<std::string> items;
      std::string cur;
      bool quoted = false;
      for (char c : body) {
        if (c == '"') quoted = !quoted;
        if (c == ',' && !quoted) {
          items.push_back(trim(cur));
          cur.clear();
        } else {
          cur += c;
        }
      }
      if (!trim(cur).empty()) items.push_back(trim(cur));
      if (items.empty()) {
        cv.v = std::vector<double>{};
        return cv;
      }
      if (items.front().front() == '"') {
        std::vector<std::string> out;
        for (const auto& it : items) out.push_back(parse_string_literal(it, where));
        cv.v = out;
      } else {
        std::vector<double> out;
        for (const auto& it : items) out.push_back(parse_number(it, where));
        cv.v = out;
      }
      return cv;
    }
    if (text.front() == '"') {
      cv.v = parse_string_literal(text, where);
    } else if (text == "true" || text == "false") {
      cv.v = text == "true";
    } else {
      cv.v = parse_number(text, where);
    }
    return cv;
  }

  static std::string parse_string_literal(const std::string& t, const std::string& where) {
    require(t.size() >= 2 && t.front() == '"' && t.back() == '"', ErrorKind::Config, where + "bad string " + t);
    return t.substr(1, t.size() - 2);
  }

  static double parse_number(std::string t, const std::string& where) {
    t.erase(std::remove(t.begin(), t.end(), '_'), t.end());
    double out = 0.0;
    if (!t.empty() && t.front() == '+') t.erase(0, 1);
    require(detail::parse_double(t, out), ErrorKind::Config, where + "expected a number, got '" + t + "'");
    return out;
  }

  std::map<std::string, ConfigValue> values_;
  std::vector<std::string> order_;
  mutable std::vector<std::string> used_;
};

}  // namespace vbcast
