#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "bigthick/time.hpp"

namespace bigthick {

using Json = nlohmann::json;

inline Json instant_json(Instant t) { return format_instant(t); }

inline Json instant_json(const std::optional<Instant>& t) {
  return t ? Json(format_instant(*t)) : Json(nullptr);
}

inline Instant get_instant(const Json& j, const char* key) {
  return parse_instant(j.at(key).get<std::string>());
}

inline std::optional<Instant> get_optional_instant(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return parse_instant(j.at(key).get<std::string>());
}

inline std::optional<std::string> get_optional_string(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::string>();
}

template <typename T>
Json optional_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

}  // namespace bigthick
