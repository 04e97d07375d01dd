#include "deer/tomlmini.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace deer::toml {

namespace {

std::string strip(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Removes a trailing comment, respecting quoted strings.
std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

Value parse_scalar(const std::string& raw, int line_no) {
  std::string t = strip(raw);
  Value v;
  if (t.empty()) throw Error(ErrorKind::data, "toml: empty value on line " + std::to_string(line_no));
  if (t.front() == '"') {
    if (t.size() < 2 || t.back() != '"')
      throw Error(ErrorKind::data, "toml: unterminated string on line " + std::to_string(line_no));
    v.type = Value::Type::string;
    v.str = t.substr(1, t.size() - 2);
    return v;
  }
  if (t == "true" || t == "false") {
    v.type = Value::Type::boolean;
    v.boolean = (t == "true");
    return v;
  }
  if (t.find_first_of(".eE") != std::string::npos && t.find("0x") == std::string::npos) {
    v.type = Value::Type::floating;
    try {
      v.floating = std::stod(t);
    } catch (...) {
      throw Error(ErrorKind::data, "toml: bad number '" + t + "' on line " + std::to_string(line_no));
    }
    return v;
  }
  v.type = Value::Type::integer;
  try {
    v.integer = std::stoll(t, nullptr, 0);
  } catch (...) {
    throw Error(ErrorKind::data, "toml: bad value '" + t + "' on line " + std::to_string(line_no));
  }
  return v;
}

Value parse_value(const std::string& raw, int line_no) {
  std::string t = strip(raw);
  if (!t.empty() && t.front() == '[') {
    if (t.back() != ']')
      throw Error(ErrorKind::data, "toml: unterminated array on line " + std::to_string(line_no));
    Value v;
    v.type = Value::Type::array;
    std::string inner = t.substr(1, t.size() - 2);
    std::string cur;
    bool in_str = false;
    for (char c : inner) {
      if (c == '"') in_str = !in_str;
      if (c == ',' && !in_str) {
        if (!strip(cur).empty()) v.array.push_back(parse_scalar(cur, line_no));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!strip(cur).empty()) v.array.push_back(parse_scalar(cur, line_no));
    return v;
  }
  return parse_scalar(t, line_no);
}

}  // namespace

f64 Value::as_number() const {
  switch (type) {
    case Type::integer: return static_cast<f64>(integer);
    case Type::floating: return floating;
    case Type::boolean: return boolean ? 1.0 : 0.0;
    default: throw Error(ErrorKind::data, "toml: value is not a number");
  }
}

Document Document::parse(const std::string& text) {
  Document doc;
  std::istringstream ss(text);
  std::string line;
  std::string table;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    line = strip(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw Error(ErrorKind::data, "toml: bad table header on line " + std::to_string(line_no));
      table = strip(line.substr(1, line.size() - 2));
      continue;
    }
    size_t eq = std::string::npos;
    bool in_str = false;
    for (size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_str = !in_str;
      if (line[i] == '=' && !in_str) {
        eq = i;
        break;
      }
    }
    if (eq == std::string::npos)
      throw Error(ErrorKind::data, "toml: expected key = value on line " + std::to_string(line_no));
    std::string key = strip(line.substr(0, eq));
    if (key.empty())
      throw Error(ErrorKind::data, "toml: empty key on line " + std::to_string(line_no));
    std::string full = table.empty() ? key : table + "." + key;
    doc.values_[full] = parse_value(line.substr(eq + 1), line_no);
  }
  return doc;
}

Document Document::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::io, "cannot open file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

const Value& Document::at(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw Error(ErrorKind::data, "toml: missing key '" + key + "'");
  return it->second;
}

std::string Document::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second.type != Value::Type::string)
    throw Error(ErrorKind::data, "toml: key '" + key + "' is not a string");
  return it->second.str;
}

i64 Document::get_int(const std::string& key, i64 fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  return static_cast<i64>(it->second.as_number());
}

f64 Document::get_double(const std::string& key, f64 fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  return it->second.as_number();
}

bool Document::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second.type != Value::Type::boolean)
    throw Error(ErrorKind::data, "toml: key '" + key + "' is not a bool");
  return it->second.boolean;
}

std::vector<f64> Document::get_number_array(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return {};
  if (it->second.type != Value::Type::array)
    throw Error(ErrorKind::data, "toml: key '" + key + "' is not an array");
  std::vector<f64> out;
  for (const auto& v : it->second.array) out.push_back(v.as_number());
  return out;
}

std::vector<std::string> Document::get_string_array(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return {};
  if (it->second.type != Value::Type::array)
    throw Error(ErrorKind::data, "toml: key '" + key + "' is not an array");
  std::vector<std::string> out;
  for (const auto& v : it->second.array) {
    if (v.type != Value::Type::string)
      throw Error(ErrorKind::data, "toml: key '" + key + "' is not a string array");
    out.push_back(v.str);
  }
  return out;
}

}  // namespace deer::toml
