#pragma once

// Minimal TOML subset parser for pipeline configuration files. Supports
// [table] and [table.sub] headers, bare keys, strings with basic escapes,
// integers, floats, booleans, and flat arrays (trailing comma allowed).
// Dates, inline tables and multi-line strings are out of scope.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "emerge/common.hpp"

namespace emerge::toml {

struct Value {
  enum class Kind { Str, Int, Float, Bool, Array };
  Kind kind = Kind::Str;
  std::string s;
  int64_t i = 0;
  double f = 0.0;
  bool b = false;
  std::vector<Value> arr;

  double as_double() const {
    if (kind == Kind::Float) return f;
    if (kind == Kind::Int) return static_cast<double>(i);
    throw ConfigError("toml: value is not a number");
  }
};

// Keys are flattened to "table.key" form.
using Table = std::map<std::string, Value>;

namespace detail {

inline bool is_bare_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
}

inline std::string parse_error(int line, const std::string& what) {
  return "toml parse error at line " + std::to_string(line) + ": " + what;
}

inline std::string unescape(std::string_view raw, int line) {
  std::string out;
  out.reserve(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    char c = raw[i];
    if (c != '\\') {
      out.push_back(c);
      continue;
    }
    if (++i >= raw.size()) throw ParseError(parse_error(line, "dangling escape"));
    switch (raw[i]) {
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      case 'r': out.push_back('\r'); break;
      case '"': out.push_back('"'); break;
      case '\\': out.push_back('\\'); break;
      default: throw ParseError(parse_error(line, "unsupported escape"));
    }
  }
  return out;
}

// scans one scalar or array starting at pos; advances pos past it
inline Value parse_value(const std::string& text, size_t& pos, int line);

inline void skip_inline_ws(const std::string& text, size_t& pos) {
  while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
}

inline Value parse_scalar(const std::string& text, size_t& pos, int line) {
  Value v;
  if (text[pos] == '"') {
    size_t end = pos + 1;
    while (end < text.size() && text[end] != '"') {
      if (text[end] == '\\') ++end;
      ++end;
    }
    if (end >= text.size()) throw ParseError(parse_error(line, "unterminated string"));
    v.kind = Value::Kind::Str;
    v.s = unescape(std::string_view(text).substr(pos + 1, end - pos - 1), line);
    pos = end + 1;
    return v;
  }
  size_t end = pos;
  while (end < text.size() && text[end] != ',' && text[end] != ']' && text[end] != '\n' &&
         text[end] != '#') {
    ++end;
  }
  std::string token = trim(std::string_view(text).substr(pos, end - pos));
  pos = end;
  if (token.empty()) throw ParseError(parse_error(line, "empty value"));
  if (token == "true" || token == "false") {
    v.kind = Value::Kind::Bool;
    v.b = (token == "true");
    return v;
  }
  bool is_float = token.find_first_of(".eE") != std::string::npos;
  try {
    size_t used = 0;
    if (is_float) {
      v.kind = Value::Kind::Float;
      v.f = std::stod(token, &used);
    } else {
      v.kind = Value::Kind::Int;
      v.i = std::stoll(token, &used, 10);
    }
    if (used != token.size()) throw std::invalid_argument(token);
  } catch (const std::exception&) {
    throw ParseError(parse_error(line, "cannot parse value '" + token + "'"));
  }
  return v;
}

inline Value parse_value(const std::string& text, size_t& pos, int line) {
  skip_inline_ws(text, pos);
  if (pos >= text.size()) throw ParseError(parse_error(line, "missing value"));
  if (text[pos] != '[') return parse_scalar(text, pos, line);
  Value v;
  v.kind = Value::Kind::Array;
  ++pos;  // '['
  while (true) {
    while (pos < text.size() &&
           (text[pos] == ' ' || text[pos] == '\t' || text[pos] == '\n' || text[pos] == '\r')) {
      ++pos;
    }
    if (pos >= text.size()) throw ParseError(parse_error(line, "unterminated array"));
    if (text[pos] == ']') {
      ++pos;
      break;
    }
    v.arr.push_back(parse_scalar(text, pos, line));
    while (pos < text.size() &&
           (text[pos] == ' ' || text[pos] == '\t' || text[pos] == '\n' || text[pos] == '\r')) {
      ++pos;
    }
    if (pos < text.size() && text[pos] == ',') {
      ++pos;
      continue;
    }
    if (pos < text.size() && text[pos] == ']') {
      ++pos;
      break;
    }
    throw ParseError(parse_error(line, "expected ',' or ']' in array"));
  }
  return v;
}

}  // namespace detail

inline Table parse(const std::string& text) {
  Table table;
  std::string prefix;
  size_t pos = 0;
  int line = 1;
  auto advance_lines = [&](size_t from, size_t to) {
    for (size_t i = from; i < to && i < text.size(); ++i) {
      if (text[i] == '\n') ++line;
    }
  };
  while (pos < text.size()) {
    size_t line_start = pos;
    size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string stripped = trim(std::string_view(text).substr(pos, eol - pos));
    if (stripped.empty() || stripped[0] == '#') {
      advance_lines(line_start, eol + 1);
      pos = eol + 1;
      continue;
    }
    if (stripped[0] == '[') {
      size_t close = stripped.find(']');
      if (close == std::string::npos) {
        throw ParseError(detail::parse_error(line, "unterminated table header"));
      }
      prefix = trim(std::string_view(stripped).substr(1, close - 1));
      if (prefix.empty()) throw ParseError(detail::parse_error(line, "empty table name"));
      for (char c : prefix) {
        if (!detail::is_bare_key_char(c)) {
          throw ParseError(detail::parse_error(line, "bad table name '" + prefix + "'"));
        }
      }
      advance_lines(line_start, eol + 1);
      pos = eol + 1;
      continue;
    }
    size_t eq = text.find('=', pos);
    if (eq == std::string::npos || eq > eol) {
      throw ParseError(detail::parse_error(line, "expected 'key = value'"));
    }
    std::string key = trim(std::string_view(text).substr(pos, eq - pos));
    if (key.empty()) throw ParseError(detail::parse_error(line, "empty key"));
    for (char c : key) {
      if (!detail::is_bare_key_char(c)) {
        throw ParseError(detail::parse_error(line, "bad key '" + key + "'"));
      }
    }
    size_t vpos = eq + 1;
    Value v = detail::parse_value(text, vpos, line);
    detail::skip_inline_ws(text, vpos);
    if (vpos < text.size() && text[vpos] != '\n' && text[vpos] != '#' && text[vpos] != '\r') {
      throw ParseError(detail::parse_error(line, "trailing characters after value"));
    }
    std::string full = prefix.empty() ? key : prefix + "." + key;
    if (table.count(full)) {
      throw ParseError(detail::parse_error(line, "duplicate key '" + full + "'"));
    }
    table[full] = std::move(v);
    // arrays may span lines; continue after the value
    size_t next_nl = text.find('\n', vpos);
    if (next_nl == std::string::npos) next_nl = text.size();
    advance_lines(line_start, next_nl + 1);
    pos = next_nl + 1;
  }
  return table;
}

inline Table parse_file(const std::filesystem::path& path) { return parse(read_file(path)); }

// ---------------------------------------------------------------------------
// typed accessors

inline bool has(const Table& t, const std::string& key) { return t.count(key) > 0; }

inline std::string get_string(const Table& t, const std::string& key, const std::string& dflt) {
  auto it = t.find(key);
  if (it == t.end()) return dflt;
  if (it->second.kind != Value::Kind::Str) throw ConfigError("toml: '" + key + "' is not a string");
  return it->second.s;
}

inline std::string require_string(const Table& t, const std::string& key) {
  auto it = t.find(key);
  if (it == t.end()) throw ConfigError("toml: missing required key '" + key + "'");
  if (it->second.kind != Value::Kind::Str) throw ConfigError("toml: '" + key + "' is not a string");
  return it->second.s;
}

inline double get_double(const Table& t, const std::string& key, double dflt) {
  auto it = t.find(key);
  if (it == t.end()) return dflt;
  return it->second.as_double();
}

inline int64_t get_int(const Table& t, const std::string& key, int64_t dflt) {
  auto it = t.find(key);
  if (it == t.end()) return dflt;
  if (it->second.kind != Value::Kind::Int) throw ConfigError("toml: '" + key + "' is not an integer");
  return it->second.i;
}

inline bool get_bool(const Table& t, const std::string& key, bool dflt) {
  auto it = t.find(key);
  if (it == t.end()) return dflt;
  if (it->second.kind != Value::Kind::Bool) throw ConfigError("toml: '" + key + "' is not a bool");
  return it->second.b;
}

inline std::vector<std::string> get_string_array(const Table& t, const std::string& key,
                                                 std::vector<std::string> dflt = {}) {
  auto it = t.find(key);
  if (it == t.end()) return dflt;
  if (it->second.kind != Value::Kind::Array) throw ConfigError("toml: '" + key + "' is not an array");
  std::vector<std::string> out;
  for (const auto& v : it->second.arr) {
    if (v.kind != Value::Kind::Str) throw ConfigError("toml: '" + key + "' has non-string element");
    out.push_back(v.s);
  }
  return out;
}

inline std::vector<double> get_double_array(const Table& t, const std::string& key,
                                            std::vector<double> dflt = {}) {
  auto it = t.find(key);
  if (it == t.end()) return dflt;
  if (it->second.kind != Value::Kind::Array) throw ConfigError("toml: '" + key + "' is not an array");
  std::vector<double> out;
  for (const auto& v : it->second.arr) out.push_back(v.as_double());
  return out;
}

inline std::vector<int64_t> get_int_array(const Table& t, const std::string& key,
                                          std::vector<int64_t> dflt = {}) {
  auto it = t.find(key);
  if (it == t.end()) return dflt;
  if (it->second.kind != Value::Kind::Array) throw ConfigError("toml: '" + key + "' is not an array");
  std::vector<int64_t> out;
  for (const auto& v : it->second.arr) {
    if (v.kind != Value::Kind::Int) throw ConfigError("toml: '" + key + "' has non-integer element");
    out.push_back(v.i);
  }
  return out;
}

// distinct immediate children of a table prefix, e.g. profile names under "gateway."
inline std::vector<std::string> child_tables(const Table& t, const std::string& prefix) {
  std::vector<std::string> names;
  std::string want = prefix + ".";
  for (const auto& [key, _] : t) {
    if (key.rfind(want, 0) != 0) continue;
    std::string rest = key.substr(want.size());
    size_t dot = rest.find('.');
    if (dot == std::string::npos) continue;
    std::string child = rest.substr(0, dot);
    if (names.empty() || names.back() != child) {
      if (std::find(names.begin(), names.end(), child) == names.end()) names.push_back(child);
    }
  }
  return names;
}

}  // namespace emerge::toml
