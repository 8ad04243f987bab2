#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "bigthick/context/graph.hpp"
#include "bigthick/context/vocabulary.hpp"
#include "bigthick/time.hpp"

namespace bigthick::context {

/// One answer per context question. Empty optionals / lists mean unanswered.
struct DiaryAnswerSet {
  std::optional<std::string> what;
  std::optional<std::string> where;
  std::optional<std::string> mood;
  std::vector<std::string> objects;
  std::vector<std::string> who;
  std::optional<Instant> notification_time;
  std::optional<Instant> answer_time;

  bool operator==(const DiaryAnswerSet&) const = default;
};

enum class SensorKind { Geo, Accelerometer, AppUsage };

const char* to_string(SensorKind kind);
SensorKind parse_sensor_kind(const std::string& name);

struct Acceleration {
  double magnitude = 0.0;  // m/s^2
  bool operator==(const Acceleration&) const = default;
};

struct AppUsage {
  std::string app;
  double seconds = 0.0;
  bool operator==(const AppUsage&) const = default;
};

struct SensorReading {
  Instant timestamp;
  std::variant<GeoPoint, Acceleration, AppUsage> value;

  SensorKind kind() const { return static_cast<SensorKind>(value.index()); }
  bool operator==(const SensorReading&) const = default;
};

struct SensorBatch {
  std::string participant;
  std::vector<SensorReading> readings;

  bool operator==(const SensorBatch&) const = default;
};

enum class Dimension { WA, WE, WI, WO, WU };

Dimension parse_dimension(const std::string& name);

/// A participant's situational context at one instant: the subject entity
/// plus the five context dimensions, all resolved in `graph`.
struct ContextSnapshot {
  std::string participant;
  Instant timestamp;
  std::string me;
  std::optional<std::string> wa;  // activity entity
  std::optional<std::string> we;  // location entity
  std::optional<std::string> wi;  // mood term, mirrored as me's Mood attribute
  std::vector<std::string> wo;    // object entities
  std::vector<std::string> wu;    // person entities
  Graph graph;

  bool operator==(const ContextSnapshot&) const = default;
};

struct AnnotateOptions {
  Minutes window{15};
};

struct Annotated {
  ContextSnapshot snapshot;
  std::size_t out_of_window = 0;  // readings ignored because of the time window
};

/// Throws Error(Vocabulary) naming the offending field for unknown terms and
/// Error(InvalidArgument) when the participant id is empty.
ContextSnapshot build_snapshot(const Vocabulary& vocabulary, const std::string& participant,
                               Instant timestamp, const DiaryAnswerSet& answers,
                               const std::optional<SensorBatch>& sensors = std::nullopt,
                               const AnnotateOptions& options = {});

Annotated annotate_with_sensors(const ContextSnapshot& snapshot, const SensorBatch& batch,
                                const AnnotateOptions& options = {});

struct DimensionValue {
  std::vector<Entity> entities;
  std::optional<std::string> mood;
};

DimensionValue query_dimension(const ContextSnapshot& snapshot, Dimension dim);

/// Graph checks plus dimension-reference resolution and mood vocabulary.
ValidationReport validate_snapshot(const ContextSnapshot& snapshot, const Vocabulary& vocabulary);

// Serialization. Keys are emitted in sorted order, so dumps are stable.
void to_json(nlohmann::json& j, const AttributeValue& v);
void from_json(const nlohmann::json& j, AttributeValue& v);
void to_json(nlohmann::json& j, const ContextSnapshot& s);
void from_json(const nlohmann::json& j, ContextSnapshot& s);
void to_json(nlohmann::json& j, const DiaryAnswerSet& a);
void from_json(const nlohmann::json& j, DiaryAnswerSet& a);
void to_json(nlohmann::json& j, const SensorReading& r);
void from_json(const nlohmann::json& j, SensorReading& r);

/// Throws Error(Vocabulary) naming the first field whose term is unknown.
void check_answers(const Vocabulary& vocabulary, const DiaryAnswerSet& answers);

}  // namespace bigthick::context
