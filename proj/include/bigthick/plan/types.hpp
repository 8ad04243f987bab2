#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "bigthick/context/snapshot.hpp"
#include "bigthick/time.hpp"

namespace bigthick::plan {

using context::SensorKind;

enum class TaskKind { Question, Sensor };
enum class QuestionKind { What, Where, Mood, Objects, Who, Custom };

struct EveryMinutes {
  int minutes = 60;
  bool operator==(const EveryMinutes&) const = default;
};

struct DailyAt {
  std::vector<ClockTime> times;
  bool operator==(const DailyAt&) const = default;
};

/// EveryMinutes is anchored at midnight of each plan day.
using Recurrence = std::variant<EveryMinutes, DailyAt>;

struct TaskTemplate {
  std::string id;
  TaskKind kind = TaskKind::Question;
  QuestionKind question_kind = QuestionKind::What;
  SensorKind sensor_kind = SensorKind::Geo;
  Recurrence recurrence = DailyAt{};
  Minutes validity_window{60};
  int priority = 0;

  /// Minutes of day at which the template fires, ascending.
  std::vector<int> occurrences() const;
  bool operator==(const TaskTemplate&) const = default;
};

/// Daily interval [start, end); wraps past midnight when start > end.
struct QuietHours {
  ClockTime start;
  ClockTime end;

  bool contains(int minute_of_day) const;
  bool covers_whole_day() const;
  bool operator==(const QuietHours&) const = default;
};

struct PlanConstraints {
  Minutes min_gap{0};
  std::optional<QuietHours> quiet_hours;
  std::optional<int> max_daily_questions;  // absent: unlimited
  bool operator==(const PlanConstraints&) const = default;
};

struct ExperimentPlan {
  std::string id;
  std::string researcher;
  Date start;
  Date end;  // exclusive
  std::vector<TaskTemplate> templates;
  PlanConstraints constraints;

  /// Throws Error(InvalidArgument) describing the first violated invariant.
  void check() const;
  const TaskTemplate* find_template(const std::string& id) const;
  bool operator==(const ExperimentPlan&) const = default;
};

enum class ActionState { Pending, Notified, Answered, Expired, Skipped, Snoozed };

const char* to_string(ActionState s);
ActionState parse_action_state(const std::string& name);
bool is_terminal(ActionState s);
bool is_legal_transition(ActionState from, ActionState to);

struct Transition {
  ActionState from = ActionState::Pending;
  ActionState to = ActionState::Pending;
  Instant at;
  bool operator==(const Transition&) const = default;
};

struct ScheduledAction {
  std::string id;
  std::string plan_id;
  std::string participant;
  std::string template_id;
  TaskKind kind = TaskKind::Question;
  int priority = 0;
  Minutes validity_window{60};
  Instant due_time;
  ActionState state = ActionState::Pending;
  /// Notified(at), Answered(at), Snoozed(until); empty otherwise.
  std::optional<Instant> state_time;
  std::vector<Transition> history;

  bool terminal() const { return is_terminal(state); }
  Instant expires_at() const { return due_time + validity_window; }
  /// Time of the most recent Notified transition, if any.
  std::optional<Instant> last_notified() const;
  bool operator==(const ScheduledAction&) const = default;
};

enum class AvoidSource { Predicted, Declared };

struct AvoidWindow {
  std::string participant;
  Date date;
  ClockTime start;
  ClockTime end;
  AvoidSource source = AvoidSource::Predicted;
  double confidence = 1.0;

  bool contains(Instant t) const;
  bool operator==(const AvoidWindow&) const = default;
};

struct Snooze {
  Minutes duration{30};
  bool operator==(const Snooze&) const = default;
};
struct Move {
  Instant new_time;
  bool operator==(const Move&) const = default;
};
struct Skip {
  bool operator==(const Skip&) const = default;
};
using ReplanOp = std::variant<Snooze, Move, Skip>;

struct ReplanRequest {
  std::string action_id;
  std::string participant;
  ReplanOp op;
  Instant requested_at;
  bool operator==(const ReplanRequest&) const = default;
};

/// An accepted re-plan, kept as a training signal for the scheduler.
struct ReplanEvent {
  ReplanRequest request;
  Instant previous_due;
  ActionState previous_state = ActionState::Pending;
  bool operator==(const ReplanEvent&) const = default;
};

enum class OutcomeKind { Answered, Expired, Error };

struct ExecutionOutcome {
  std::string action_id;
  std::string participant;
  OutcomeKind kind = OutcomeKind::Answered;
  std::optional<Instant> notification_time;
  std::optional<Instant> answer_time;

  /// Answer delay in whole minutes, when answered.
  std::optional<double> delay_minutes() const;
  bool operator==(const ExecutionOutcome&) const = default;
};

const char* to_string(OutcomeKind k);

void to_json(nlohmann::json& j, const TaskTemplate& t);
void from_json(const nlohmann::json& j, TaskTemplate& t);
void to_json(nlohmann::json& j, const ExperimentPlan& p);
void from_json(const nlohmann::json& j, ExperimentPlan& p);
void to_json(nlohmann::json& j, const ScheduledAction& a);
void from_json(const nlohmann::json& j, ScheduledAction& a);
void to_json(nlohmann::json& j, const AvoidWindow& w);
void from_json(const nlohmann::json& j, AvoidWindow& w);
void to_json(nlohmann::json& j, const ReplanRequest& r);
void from_json(const nlohmann::json& j, ReplanRequest& r);
void to_json(nlohmann::json& j, const ReplanEvent& e);
void from_json(const nlohmann::json& j, ReplanEvent& e);
void to_json(nlohmann::json& j, const ExecutionOutcome& o);
void from_json(const nlohmann::json& j, ExecutionOutcome& o);

inline constexpr int kPlanSchemaVersion = 1;

}  // namespace bigthick::plan
