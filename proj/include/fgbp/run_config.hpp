#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fgbp/error.hpp"

namespace fgbp {

// TOML-style run configuration: [section] headers, key = value lines with
// string/integer/float/boolean scalars, # comments. Every key a command does
// not consume is rejected, and the fully-resolved config is re-emitted next
// to the run outputs.
class RunConfig {
 public:
  struct Value {
    enum class Kind { String, Integer, Float, Boolean };
    Kind kind = Kind::String;
    std::string str;
    long long integer = 0;
    double real = 0.0;
    bool boolean = false;

    std::string render() const {
      char buf[40];
      switch (kind) {
        case Kind::String: return "\"" + str + "\"";
        case Kind::Integer: return std::to_string(integer);
        case Kind::Float:
          std::snprintf(buf, sizeof(buf), "%.17g", real);
          return buf;
        case Kind::Boolean: return boolean ? "true" : "false";
      }
      return "";
    }
  };

  static RunConfig parse(const std::string& text) {
    RunConfig cfg;
    std::string section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      std::size_t eol = text.find('\n', pos);
      if (eol == std::string::npos) eol = text.size();
      std::string line = text.substr(pos, eol - pos);
      pos = eol + 1;
      ++line_no;
      strip_comment(line);
      trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw ValidationError("config line " + std::to_string(line_no) +
                                ": malformed section header");
        section = line.substr(1, line.size() - 2);
        trim(section);
        if (!valid_name(section))
          throw ValidationError("config line " + std::to_string(line_no) +
                                ": bad section name \"" + section + "\"");
        continue;
      }
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ValidationError("config line " + std::to_string(line_no) +
                              ": expected key = value");
      std::string key = line.substr(0, eq);
      std::string raw = line.substr(eq + 1);
      trim(key);
      trim(raw);
      if (!valid_name(key))
        throw ValidationError("config line " + std::to_string(line_no) +
                              ": bad key \"" + key + "\"");
      if (section.empty())
        throw ValidationError("config line " + std::to_string(line_no) +
                              ": key \"" + key + "\" outside any section");
      if (cfg.sections_[section].count(key))
        throw ValidationError("config line " + std::to_string(line_no) +
                              ": duplicate key " + section + "." + key);
      cfg.sections_[section][key] = parse_scalar(raw, line_no);
    }
    return cfg;
  }

  static RunConfig parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read config " + path);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return parse(text);
  }

  // --set section.key=value
  void apply_override(const std::string& dotted) {
    const std::size_t eq = dotted.find('=');
    const std::size_t dot = dotted.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
      throw ValidationError("--set expects section.key=value, got \"" + dotted +
                            "\"");
    std::string section = dotted.substr(0, dot);
    std::string key = dotted.substr(dot + 1, eq - dot - 1);
    std::string raw = dotted.substr(eq + 1);
    trim(section);
    trim(key);
    trim(raw);
    if (!valid_name(section) || !valid_name(key))
      throw ValidationError("--set: bad section.key in \"" + dotted + "\"");
    sections_[section][key] = parse_scalar(raw, 0);
  }

  bool has(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
  }

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const {
    const Value* v = touch(section, key);
    if (!v) return fallback;
    if (v->kind != Value::Kind::String)
      throw ValidationError("config " + section + "." + key +
                            ": expected a string");
    return v->str;
  }
  std::string require_string(const std::string& section,
                             const std::string& key) const {
    if (!has(section, key))
      throw ValidationError("config " + section + "." + key + " is required");
    return get_string(section, key, "");
  }

  long long get_int(const std::string& section, const std::string& key,
                    long long fallback) const {
    const Value* v = touch(section, key);
    if (!v) return fallback;
    if (v->kind != Value::Kind::Integer)
      throw ValidationError("config " + section + "." + key +
                            ": expected an integer");
    return v->integer;
  }

  double get_double(const std::string& section, const std::string& key,
                    double fallback) const {
    const Value* v = touch(section, key);
    if (!v) return fallback;
    if (v->kind == Value::Kind::Integer) return static_cast<double>(v->integer);
    if (v->kind != Value::Kind::Float)
      throw ValidationError("config " + section + "." + key +
                            ": expected a number");
    return v->real;
  }

  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const {
    const Value* v = touch(section, key);
    if (!v) return fallback;
    if (v->kind != Value::Kind::Boolean)
      throw ValidationError("config " + section + "." + key +
                            ": expected true or false");
    return v->boolean;
  }

  std::uint64_t get_u64(const std::string& section, const std::string& key,
                        std::uint64_t fallback) const {
    const Value* v = touch(section, key);
    if (!v) return fallback;
    if (v->kind != Value::Kind::Integer || v->integer < 0)
      throw ValidationError("config " + section + "." + key +
                            ": expected a non-negative integer");
    return static_cast<std::uint64_t>(v->integer);
  }

  // "20,50,100" (or a single integer value) -> vector
  std::vector<int> get_int_list(const std::string& section,
                                const std::string& key,
                                std::vector<int> fallback) const {
    const Value* v = touch(section, key);
    if (!v) return fallback;
    if (v->kind == Value::Kind::Integer)
      return {static_cast<int>(v->integer)};
    if (v->kind != Value::Kind::String)
      throw ValidationError("config " + section + "." + key +
                            ": expected \"k1,k2,...\"");
    std::vector<int> out;
    std::string token;
    for (char c : v->str + ",") {
      if (c == ',') {
        trim(token);
        if (!token.empty()) {
          try {
            out.push_back(std::stoi(token));
          } catch (...) {
            throw ValidationError("config " + section + "." + key +
                                  ": bad integer \"" + token + "\"");
          }
          token.clear();
        }
      } else {
        token += c;
      }
    }
    if (out.empty())
      throw ValidationError("config " + section + "." + key + ": empty list");
    return out;
  }

  // Typo safety: any key never consumed by the command is an error.
  void reject_unknown() const {
    std::vector<std::string> unknown;
    for (const auto& [section, keys] : sections_)
      for (const auto& [key, value] : keys)
        if (!used_.count(section + "." + key)) unknown.push_back(section + "." + key);
    if (!unknown.empty()) {
      std::string msg = "unknown config keys:";
      for (const std::string& k : unknown) msg += " " + k;
      throw ValidationError(msg);
    }
  }

  // Resolved echo, sections and keys sorted.
  std::string to_toml() const {
    std::string out;
    for (const auto& [section, keys] : sections_) {
      out += "[" + section + "]\n";
      for (const auto& [key, value] : keys)
        out += key + " = " + value.render() + "\n";
      out += "\n";
    }
    return out;
  }

  void set_value(const std::string& section, const std::string& key, Value v) {
    sections_[section][key] = std::move(v);
  }
  static Value str_value(std::string s) {
    Value v;
    v.kind = Value::Kind::String;
    v.str = std::move(s);
    return v;
  }
  static Value int_value(long long i) {
    Value v;
    v.kind = Value::Kind::Integer;
    v.integer = i;
    return v;
  }
  static Value bool_value(bool b) {
    Value v;
    v.kind = Value::Kind::Boolean;
    v.boolean = b;
    return v;
  }
  static Value float_value(double d) {
    Value v;
    v.kind = Value::Kind::Float;
    v.real = d;
    return v;
  }

 private:
  static void trim(std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    s = s.substr(b, e - b);
  }

  static void strip_comment(std::string& s) {
    bool in_string = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') in_string = !in_string;
      if (s[i] == '#' && !in_string) {
        s.resize(i);
        return;
      }
    }
  }

  static bool valid_name(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_')
        return false;
    return true;
  }

  static Value parse_scalar(const std::string& raw, std::size_t line_no) {
    const std::string where =
        line_no ? " at line " + std::to_string(line_no) : "";
    if (raw.empty()) throw ValidationError("config: empty value" + where);
    Value v;
    if (raw.front() == '"') {
      if (raw.size() < 2 || raw.back() != '"')
        throw ValidationError("config: unterminated string" + where);
      v.kind = Value::Kind::String;
      v.str = raw.substr(1, raw.size() - 2);
      return v;
    }
    if (raw == "true" || raw == "false") {
      v.kind = Value::Kind::Boolean;
      v.boolean = raw == "true";
      return v;
    }
    // integer, then float, else bare string
    try {
      std::size_t used = 0;
      const long long i = std::stoll(raw, &used);
      if (used == raw.size()) {
        v.kind = Value::Kind::Integer;
        v.integer = i;
        return v;
      }
    } catch (...) {
    }
    try {
      std::size_t used = 0;
      const double d = std::stod(raw, &used);
      if (used == raw.size()) {
        v.kind = Value::Kind::Float;
        v.real = d;
        return v;
      }
    } catch (...) {
    }
    v.kind = Value::Kind::String;
    v.str = raw;
    return v;
  }

  const Value* touch(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) return nullptr;
    auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    used_.insert(section + "." + key);
    return &k->second;
  }

  std::map<std::string, std::map<std::string, Value>> sections_;
  mutable std::set<std::string> used_;
};

}  // namespace fgbp
