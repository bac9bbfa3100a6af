#pragma once

// Minimal JSON Schema subset validator: type, required, properties, items,
// enum, minimum, maximum, exclusiveMinimum, exclusiveMaximum and local $ref.

#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

namespace schema {

using nlohmann::json;

class Validator {
public:
  explicit Validator(json root) : root_(std::move(root)) {}

  static Validator from_file(const std::string& path) {
    std::ifstream in(path);
    return Validator(json::parse(in));
  }

  std::vector<std::string> validate(const json& doc) const {
    std::vector<std::string> errors;
    check(doc, root_, "$", errors);
    return errors;
  }

private:
  const json& resolve(const json& s) const {
    if (!s.contains("$ref")) return s;
    std::string ref = s["$ref"].get<std::string>();
    const json* node = &root_;
    std::size_t pos = 2; // skip "#/"
    while (pos < ref.size()) {
      auto next = ref.find('/', pos);
      std::string key = ref.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
      node = &(*node)[key];
      if (next == std::string::npos) break;
      pos = next + 1;
    }
    return resolve(*node);
  }

  static bool type_matches(const json& v, const std::string& t) {
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "boolean") return v.is_boolean();
    if (t == "null") return v.is_null();
    if (t == "integer") return v.is_number_integer();
    if (t == "number") return v.is_number();
    return false;
  }

  void check(const json& v, const json& raw, const std::string& where, std::vector<std::string>& errors) const {
    const json& s = resolve(raw);
    if (s.contains("type")) {
      bool ok = false;
      if (s["type"].is_array()) {
        for (const auto& t : s["type"]) ok = ok || type_matches(v, t.get<std::string>());
      } else {
        ok = type_matches(v, s["type"].get<std::string>());
      }
      if (!ok) {
        errors.push_back(where + ": wrong type");
        return;
      }
    }
    if (s.contains("enum")) {
      bool found = false;
      for (const auto& e : s["enum"]) found = found || e == v;
      if (!found) errors.push_back(where + ": not in enum");
    }
    if (v.is_number()) {
      const double x = v.get<double>();
      if (s.contains("minimum") && x < s["minimum"].get<double>()) errors.push_back(where + ": below minimum");
      if (s.contains("maximum") && x > s["maximum"].get<double>()) errors.push_back(where + ": above maximum");
      if (s.contains("exclusiveMinimum") && x <= s["exclusiveMinimum"].get<double>())
        errors.push_back(where + ": not above exclusiveMinimum");
      if (s.contains("exclusiveMaximum") && x >= s["exclusiveMaximum"].get<double>())
        errors.push_back(where + ": not below exclusiveMaximum");
    }
    if (v.is_object()) {
      if (s.contains("required"))
        for (const auto& key : s["required"])
          if (!v.contains(key.get<std::string>())) errors.push_back(where + ": missing " + key.get<std::string>());
      if (s.contains("properties"))
        for (const auto& [key, sub] : s["properties"].items())
          if (v.contains(key)) check(v[key], sub, where + "." + key, errors);
    }
    if (v.is_array() && s.contains("items"))
      for (std::size_t i = 0; i < v.size(); ++i) check(v[i], s["items"], where + "[" + std::to_string(i) + "]", errors);
  }

  json root_;
};

} // namespace schema
