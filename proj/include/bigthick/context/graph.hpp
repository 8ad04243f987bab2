#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "bigthick/time.hpp"

namespace bigthick::context {

struct Text {
  std::string value;
  bool operator==(const Text&) const = default;
};

struct Number {
  double value = 0.0;
  std::optional<std::string> unit;
  bool operator==(const Number&) const = default;
};

struct Timestamp {
  Instant value;
  bool operator==(const Timestamp&) const = default;
};

/// Geographic coordinate in degrees. Use make() to construct checked values.
struct GeoPoint {
  double latitude = 0.0;
  double longitude = 0.0;

  static GeoPoint make(double latitude, double longitude);
  bool operator==(const GeoPoint&) const = default;
};

using AttributeValue = std::variant<Text, Number, Timestamp, GeoPoint>;

struct Entity {
  std::string id;
  std::string entity_class;
  std::map<std::string, AttributeValue> attributes;

  bool operator==(const Entity&) const = default;
};

enum class Predicate { PartOf, In, HasActivity, With };

const char* to_string(Predicate p);
Predicate parse_predicate(const std::string& name);

struct Relation {
  std::string subject;
  Predicate predicate = Predicate::In;
  std::string object;

  bool operator==(const Relation&) const = default;
};

struct Graph {
  std::vector<Entity> entities;
  std::vector<Relation> relations;

  const Entity* find(const std::string& id) const;
  Entity* find(const std::string& id);
  bool contains(const std::string& id) const { return find(id) != nullptr; }

  /// Adds the entity unless one with the same id exists; returns the stored one.
  Entity& add(Entity entity);
  /// Adds the relation unless an equal one exists.
  void relate(const std::string& subject, Predicate predicate, const std::string& object);

  bool operator==(const Graph&) const = default;
};

/// Content-derived id: equal (class, name) pairs always map to the same id.
std::string entity_id(const std::string& entity_class, const std::string& name);

struct ValidationReport {
  std::vector<std::string> duplicate_ids;
  std::vector<std::string> empty_classes;
  std::vector<std::string> dangling_refs;
  /// Each entry is one PartOf cycle, members sorted by id.
  std::vector<std::vector<std::string>> partof_cycles;

  std::size_t error_count() const {
    return duplicate_ids.size() + empty_classes.size() + dangling_refs.size() +
           partof_cycles.size();
  }
  bool ok() const { return error_count() == 0; }
};

ValidationReport validate_graph(const Graph& graph);

/// Follows PartOf edges from `id` to the outermost container. Stops on a cycle.
std::string partof_root(const Graph& graph, const std::string& id);

}  // namespace bigthick::context
