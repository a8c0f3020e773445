#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fgbp/error.hpp"

namespace fgbp {

// Deterministic JSON emitter. Objects keep insertion order and doubles are
// printed with %.17g so every value round-trips bit-exactly and repeated runs
// produce byte-identical files. Parsing is done with nlohmann/json; this
// class only writes.
class Json {
 public:
  enum class Kind { Null, Bool, Int, Double, String, Array, Object };

  Json() : kind_(Kind::Null) {}

  static Json null() { return Json(); }
  static Json boolean(bool b) {
    Json v;
    v.kind_ = Kind::Bool;
    v.bool_ = b;
    return v;
  }
  static Json integer(long long i) {
    Json v;
    v.kind_ = Kind::Int;
    v.int_ = i;
    return v;
  }
  static Json number(double d) {
    Json v;
    v.kind_ = Kind::Double;
    v.double_ = d;
    return v;
  }
  static Json string(std::string s) {
    Json v;
    v.kind_ = Kind::String;
    v.str_ = std::move(s);
    return v;
  }
  static Json array() {
    Json v;
    v.kind_ = Kind::Array;
    return v;
  }
  static Json object() {
    Json v;
    v.kind_ = Kind::Object;
    return v;
  }

  template <typename It>
  static Json number_array(It begin, It end) {
    Json a = array();
    for (It it = begin; it != end; ++it) a.push(number(static_cast<double>(*it)));
    return a;
  }
  static Json number_array(const std::vector<double>& xs) {
    return number_array(xs.begin(), xs.end());
  }
  static Json integer_array(const std::vector<int>& xs) {
    Json a = array();
    for (int x : xs) a.push(integer(x));
    return a;
  }

  Json& push(Json v) {
    require(Kind::Array, "push");
    items_.push_back(std::move(v));
    return *this;
  }

  Json& set(const std::string& key, Json v) {
    require(Kind::Object, "set");
    keys_.push_back(key);
    items_.push_back(std::move(v));
    return *this;
  }

  Kind kind() const { return kind_; }

  std::string dump(int indent = -1) const {
    std::string out;
    write(out, indent, 0);
    return out;
  }

 private:
  void require(Kind k, const char* op) const {
    if (kind_ != k) throw ValidationError(std::string("Json: bad ") + op);
  }

  static void append_escaped(std::string& out, const std::string& s) {
    out += '"';
    for (unsigned char c : s) {
      switch (c) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\b': out += "\\b"; break;
        case '\f': out += "\\f"; break;
        case '\n': out += "\\n"; break;
        case '\r': out += "\\r"; break;
        case '\t': out += "\\t"; break;
        default:
          if (c < 0x20) {
            char buf[8];
            std::snprintf(buf, sizeof(buf), "\\u%04x", c);
            out += buf;
          } else {
            out += static_cast<char>(c);
          }
      }
    }
    out += '"';
  }

  static void append_double(std::string& out, double d) {
    if (!std::isfinite(d)) {
      // JSON has no inf/nan; emit null and let readers treat it as missing.
      out += "null";
      return;
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", d);
    out += buf;
  }

  void write(std::string& out, int indent, int depth) const {
    const bool pretty = indent >= 0;
    auto newline = [&](int d) {
      if (!pretty) return;
      out += '\n';
      out.append(static_cast<std::size_t>(indent * d), ' ');
    };
    switch (kind_) {
      case Kind::Null: out += "null"; break;
      case Kind::Bool: out += bool_ ? "true" : "false"; break;
      case Kind::Int: out += std::to_string(int_); break;
      case Kind::Double: append_double(out, double_); break;
      case Kind::String: append_escaped(out, str_); break;
      case Kind::Array: {
        out += '[';
        for (std::size_t i = 0; i < items_.size(); ++i) {
          if (i) out += ',';
          newline(depth + 1);
          items_[i].write(out, indent, depth + 1);
        }
        if (!items_.empty()) newline(depth);
        out += ']';
        break;
      }
      case Kind::Object: {
        out += '{';
        for (std::size_t i = 0; i < items_.size(); ++i) {
          if (i) out += ',';
          newline(depth + 1);
          append_escaped(out, keys_[i]);
          out += pretty ? ": " : ":";
          items_[i].write(out, indent, depth + 1);
        }
        if (!items_.empty()) newline(depth);
        out += '}';
        break;
      }
    }
  }

  Kind kind_;
  bool bool_ = false;
  long long int_ = 0;
  double double_ = 0.0;
  std::string str_;
  std::vector<std::string> keys_;
  std::vector<Json> items_;
};

}  // namespace fgbp
