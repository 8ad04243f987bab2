#include "bigthick/monitor/types.hpp"

#include "bigthick/error.hpp"
#include "bigthick/json_util.hpp"

namespace bigthick::monitor {

int ParticipantSummary::total_sent() const {
  int n = 0;
  for (const auto& [d, c] : days) n += c.sent;
  return n;
}

int ParticipantSummary::total_answered() const {
  int n = 0;
  for (const auto& [d, c] : days) n += c.answered;
  return n;
}

int ParticipantSummary::total_expired() const {
  int n = 0;
  for (const auto& [d, c] : days) n += c.expired;
  return n;
}

int ParticipantSummary::total_skipped() const {
  int n = 0;
  for (const auto& [d, c] : days) n += c.skipped;
  return n;
}

int ParticipantSummary::total_sensor_records() const {
  int n = 0;
  for (const auto& [d, c] : days) {
    for (const auto& [k, v] : c.sensor_records) n += v;
  }
  return n;
}

const char* to_string(Severity s) {
  switch (s) {
    case Severity::Info: return "info";
    case Severity::Warning: return "warning";
    case Severity::Critical: return "critical";
  }
  return "?";
}

const char* to_string(GoalMetric m) {
  switch (m) {
    case GoalMetric::AnswersPerDay: return "answers_per_day";
    case GoalMetric::SensorCoverage: return "sensor_coverage";
    case GoalMetric::ResponseDelay: return "response_delay";
  }
  return "?";
}

GoalMetric parse_goal_metric(const std::string& name) {
  for (auto m : {GoalMetric::AnswersPerDay, GoalMetric::SensorCoverage, GoalMetric::ResponseDelay}) {
    if (name == to_string(m)) return m;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown goal metric: " + name);
}

void to_json(Json& j, const Goal& g) {
  j = Json{{"id", g.id},
           {"participant", g.participant},
           {"metric", to_string(g.metric)},
           {"target", g.target},
           {"window_days", g.window_days}};
}

void from_json(const Json& j, Goal& g) {
  g.id = j.at("id").get<std::string>();
  g.participant = j.at("participant").get<std::string>();
  g.metric = parse_goal_metric(j.at("metric").get<std::string>());
  g.target = j.at("target").get<double>();
  g.window_days = j.value("window_days", 7);
  if (!(g.target > 0.0)) throw Error(ErrorCode::InvalidArgument, "goal target must be positive");
  if (g.window_days < 1) throw Error(ErrorCode::InvalidArgument, "goal window must be at least one day");
}

void to_json(Json& j, const Alert& a) {
  j = Json{{"id", a.id},
           {"severity", to_string(a.severity)},
           {"participant", optional_json(a.participant)},
           {"rule", a.rule},
           {"message", a.message},
           {"raised_at", format_instant(a.raised_at)},
           {"resolved_at", instant_json(a.resolved_at)}};
}

void to_json(Json& j, const ParticipantSummary& s) {
  Json days = Json::array();
  for (const auto& [d, c] : s.days) {
    days.push_back({{"date", format_date(d)},
                    {"sent", c.sent},
                    {"answered", c.answered},
                    {"expired", c.expired},
                    {"skipped", c.skipped},
                    {"sensor_records", c.sensor_records}});
  }
  j = Json{{"participant", s.participant},
           {"days", std::move(days)},
           {"sent", s.total_sent()},
           {"answered", s.total_answered()},
           {"expired", s.total_expired()},
           {"skipped", s.total_skipped()},
           {"sensor_records", s.total_sensor_records()},
           {"mean_response_delay_minutes", s.mean_response_delay_minutes},
           {"completion_rate", s.completion_rate}};
}

void to_json(Json& j, const GoalProgress& p) {
  j = Json{{"fraction", p.fraction}, {"on_track", p.on_track}, {"achieved", p.achieved}};
}

}  // namespace bigthick::monitor
