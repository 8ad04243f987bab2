#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bigthick/time.hpp"

namespace bigthick::monitor {

struct DayCounts {
  int sent = 0;
  int answered = 0;
  int expired = 0;
  int skipped = 0;
  std::map<std::string, int> sensor_records;  // by sensor kind

  bool operator==(const DayCounts&) const = default;
};

struct ParticipantSummary {
  std::string participant;
  std::map<Date, DayCounts> days;
  double mean_response_delay_minutes = 0.0;
  int answered_with_delay = 0;
  double completion_rate = 0.0;

  int total_sent() const;
  int total_answered() const;
  int total_expired() const;
  int total_skipped() const;
  int total_sensor_records() const;
};

enum class Severity { Info, Warning, Critical };

struct Alert {
  std::string id;
  Severity severity = Severity::Warning;
  std::optional<std::string> participant;
  std::string rule;
  std::string message;
  Instant raised_at;
  std::optional<Instant> resolved_at;

  bool open() const { return !resolved_at.has_value(); }
  bool operator==(const Alert&) const = default;
};

enum class GoalMetric { AnswersPerDay, SensorCoverage, ResponseDelay };

struct Goal {
  std::string id;
  std::string participant;
  GoalMetric metric = GoalMetric::AnswersPerDay;
  double target = 1.0;
  int window_days = 7;

  bool operator==(const Goal&) const = default;
};

struct GoalProgress {
  double fraction = 0.0;  // in [0, 1]
  bool on_track = false;
  double achieved = 0.0;
};

const char* to_string(Severity s);
const char* to_string(GoalMetric m);
GoalMetric parse_goal_metric(const std::string& name);

void to_json(nlohmann::json& j, const Goal& g);
void from_json(const nlohmann::json& j, Goal& g);
void to_json(nlohmann::json& j, const Alert& a);
void to_json(nlohmann::json& j, const ParticipantSummary& s);
void to_json(nlohmann::json& j, const GoalProgress& p);

}  // namespace bigthick::monitor
