#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace bigthick::context {

struct LocationTerm {
  std::string entity_class = "Location";
  std::optional<std::string> part_of;  // enclosing location, itself a vocabulary term
};

/// Closed vocabularies for the five context questions, loaded from the
/// experiment configuration.
struct Vocabulary {
  std::vector<std::string> activities;
  std::map<std::string, LocationTerm> locations;
  std::vector<std::string> moods;                 // order defines the mood index
  std::map<std::string, std::string> objects;     // term -> entity class
  std::vector<std::string> persons;

  bool has_activity(const std::string& term) const;
  bool has_location(const std::string& term) const { return locations.count(term) > 0; }
  bool has_object(const std::string& term) const { return objects.count(term) > 0; }
  bool has_person(const std::string& term) const;
  /// Position in `moods`, or -1 when absent.
  int mood_index(const std::string& term) const;

  /// Throws on dangling or cyclic part_of chains.
  void check() const;

  /// Student-life vocabulary used by the simulator and the demo.
  static Vocabulary standard();
};

void to_json(nlohmann::json& j, const Vocabulary& v);
void from_json(const nlohmann::json& j, Vocabulary& v);

}  // namespace bigthick::context
