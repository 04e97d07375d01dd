#pragma once

#include <map>
#include <string>
#include <vector>

#include "deer/types.hpp"

namespace deer::toml {

// Minimal TOML subset: comments, [tables], and key = scalar | [scalar, ...]
// where scalar is a quoted string, integer, float, or bool. Keys are flattened
// to "table.key". Enough for workload specs and experiment recipes.
struct Value {
  enum class Type { string, integer, floating, boolean, array } type = Type::string;
  std::string str;
  i64 integer = 0;
  f64 floating = 0.0;
  bool boolean = false;
  std::vector<Value> array;

  f64 as_number() const;
};

class Document {
 public:
  static Document parse(const std::string& text);
  static Document parse_file(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const Value& at(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  i64 get_int(const std::string& key, i64 fallback) const;
  f64 get_double(const std::string& key, f64 fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<f64> get_number_array(const std::string& key) const;
  std::vector<std::string> get_string_array(const std::string& key) const;

  const std::map<std::string, Value>& values() const { return values_; }

 private:
  std::map<std::string, Value> values_;
};

}  // namespace deer::toml
