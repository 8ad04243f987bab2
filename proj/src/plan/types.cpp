#include "bigthick/plan/types.hpp"

#include <algorithm>
#include <set>

#include "bigthick/error.hpp"
#include "bigthick/json_util.hpp"

namespace bigthick::plan {

std::vector<int> TaskTemplate::occurrences() const {
  std::vector<int> out;
  if (const auto* every = std::get_if<EveryMinutes>(&recurrence)) {
    for (int m = 0; m < kMinutesPerDay; m += every->minutes) out.push_back(m);
  } else {
    for (const auto& t : std::get<DailyAt>(recurrence).times) out.push_back(t.minute);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
  }
  return out;
}

bool QuietHours::contains(int minute_of_day) const {
  if (start.minute <= end.minute) return minute_of_day >= start.minute && minute_of_day < end.minute;
  return minute_of_day >= start.minute || minute_of_day < end.minute;
}

bool QuietHours::covers_whole_day() const {
  return start.minute == 0 && end.minute == kMinutesPerDay;
}

void ExperimentPlan::check() const {
  auto fail = [&](const std::string& msg) {
    throw Error(ErrorCode::InvalidArgument, "plan '" + id + "': " + msg);
  };
  if (id.empty()) throw Error(ErrorCode::InvalidArgument, "plan id is empty");
  if (!(start < end)) fail("start date must precede end date");
  if (constraints.min_gap < Minutes{0}) fail("min_gap must be non-negative");
  if (constraints.max_daily_questions && *constraints.max_daily_questions < 0) {
    fail("max_daily_questions must be non-negative");
  }
  std::set<std::string> ids;
  for (const auto& t : templates) {
    if (t.id.empty()) fail("template with empty id");
    if (!ids.insert(t.id).second) fail("duplicate template id '" + t.id + "'");
    if (t.validity_window <= Minutes{0}) fail("template '" + t.id + "': validity_window must be positive");
    if (const auto* every = std::get_if<EveryMinutes>(&t.recurrence)) {
      if (every->minutes < 1) fail("template '" + t.id + "': recurrence interval below 1 minute");
    } else {
      const auto& times = std::get<DailyAt>(t.recurrence).times;
      if (times.empty()) fail("template '" + t.id + "': no daily times");
      for (const auto& c : times) {
        if (c.minute < 0 || c.minute >= kMinutesPerDay) fail("template '" + t.id + "': time out of range");
      }
    }
  }
}

const TaskTemplate* ExperimentPlan::find_template(const std::string& template_id) const {
  auto it = std::find_if(templates.begin(), templates.end(),
                         [&](const TaskTemplate& t) { return t.id == template_id; });
  return it == templates.end() ? nullptr : &*it;
}

const char* to_string(ActionState s) {
  switch (s) {
    case ActionState::Pending: return "pending";
    case ActionState::Notified: return "notified";
    case ActionState::Answered: return "answered";
    case ActionState::Expired: return "expired";
    case ActionState::Skipped: return "skipped";
    case ActionState::Snoozed: return "snoozed";
  }
  return "?";
}

ActionState parse_action_state(const std::string& name) {
  for (auto s : {ActionState::Pending, ActionState::Notified, ActionState::Answered,
                 ActionState::Expired, ActionState::Skipped, ActionState::Snoozed}) {
    if (name == to_string(s)) return s;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown action state: " + name);
}

bool is_terminal(ActionState s) {
  return s == ActionState::Answered || s == ActionState::Expired || s == ActionState::Skipped;
}

bool is_legal_transition(ActionState from, ActionState to) {
  using S = ActionState;
  switch (from) {
    case S::Pending: return to == S::Notified || to == S::Snoozed || to == S::Skipped;
    case S::Snoozed: return to == S::Pending;
    // Notified -> Snoozed lets a participant snooze a delivered prompt.
    case S::Notified: return to == S::Answered || to == S::Expired || to == S::Snoozed;
    default: return false;
  }
}

std::optional<Instant> ScheduledAction::last_notified() const {
  for (auto it = history.rbegin(); it != history.rend(); ++it) {
    if (it->to == ActionState::Notified) return it->at;
  }
  return std::nullopt;
}

bool AvoidWindow::contains(Instant t) const {
  if (date_of(t) != date) return false;
  int m = minute_of_day(t);
  return m >= start.minute && m < end.minute;
}

std::optional<double> ExecutionOutcome::delay_minutes() const {
  if (kind != OutcomeKind::Answered || !notification_time || !answer_time) return std::nullopt;
  return std::chrono::duration<double, std::ratio<60>>(*answer_time - *notification_time).count();
}

const char* to_string(OutcomeKind k) {
  switch (k) {
    case OutcomeKind::Answered: return "answered";
    case OutcomeKind::Expired: return "expired";
    case OutcomeKind::Error: return "error";
  }
  return "?";
}

// --- serialization ---------------------------------------------------------

namespace {

const char* question_name(QuestionKind q) {
  switch (q) {
    case QuestionKind::What: return "what";
    case QuestionKind::Where: return "where";
    case QuestionKind::Mood: return "mood";
    case QuestionKind::Objects: return "objects";
    case QuestionKind::Who: return "who";
    case QuestionKind::Custom: return "custom";
  }
  return "?";
}

QuestionKind parse_question(const std::string& name) {
  for (auto q : {QuestionKind::What, QuestionKind::Where, QuestionKind::Mood, QuestionKind::Objects,
                 QuestionKind::Who, QuestionKind::Custom}) {
    if (name == question_name(q)) return q;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown question kind: " + name);
}

Json clocks_json(const std::vector<ClockTime>& times) {
  Json arr = Json::array();
  for (const auto& t : times) arr.push_back(format_clock(t));
  return arr;
}

}  // namespace

void to_json(Json& j, const TaskTemplate& t) {
  j = Json{{"id", t.id},
           {"kind", t.kind == TaskKind::Question ? "question" : "sensor"},
           {"validity_minutes", t.validity_window.count()},
           {"priority", t.priority}};
  if (t.kind == TaskKind::Question) {
    j["question"] = question_name(t.question_kind);
  } else {
    j["sensor"] = context::to_string(t.sensor_kind);
  }
  if (const auto* every = std::get_if<EveryMinutes>(&t.recurrence)) {
    j["every_minutes"] = every->minutes;
  } else {
    j["daily_at"] = clocks_json(std::get<DailyAt>(t.recurrence).times);
  }
}

void from_json(const Json& j, TaskTemplate& t) {
  t = TaskTemplate{};
  t.id = j.at("id").get<std::string>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "question") {
    t.kind = TaskKind::Question;
    t.question_kind = parse_question(j.value("question", "what"));
  } else if (kind == "sensor") {
    t.kind = TaskKind::Sensor;
    t.sensor_kind = context::parse_sensor_kind(j.at("sensor").get<std::string>());
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown task kind: " + kind);
  }
  if (j.contains("every_minutes")) {
    t.recurrence = EveryMinutes{j.at("every_minutes").get<int>()};
  } else {
    DailyAt daily;
    for (const auto& c : j.at("daily_at")) daily.times.push_back(parse_clock(c.get<std::string>()));
    t.recurrence = std::move(daily);
  }
  t.validity_window = Minutes{j.value("validity_minutes", 60)};
  t.priority = j.value("priority", 0);
}

void to_json(Json& j, const ExperimentPlan& p) {
  Json constraints{{"min_gap_minutes", p.constraints.min_gap.count()}};
  constraints["quiet_hours"] =
      p.constraints.quiet_hours
          ? Json{{"start", format_clock(p.constraints.quiet_hours->start)},
                 {"end", format_clock(p.constraints.quiet_hours->end)}}
          : Json(nullptr);
  constraints["max_daily_questions"] = optional_json(p.constraints.max_daily_questions);
  j = Json{{"schema_version", kPlanSchemaVersion},
           {"id", p.id},
           {"researcher", p.researcher},
           {"start", format_date(p.start)},
           {"end", format_date(p.end)},
           {"templates", p.templates},
           {"constraints", std::move(constraints)}};
}

void from_json(const Json& j, ExperimentPlan& p) {
  int version = j.value("schema_version", kPlanSchemaVersion);
  if (version != kPlanSchemaVersion) {
    throw Error(ErrorCode::InvalidArgument, "unsupported plan schema_version " + std::to_string(version));
  }
  p = ExperimentPlan{};
  p.id = j.at("id").get<std::string>();
  p.researcher = j.value("researcher", "");
  p.start = parse_date(j.at("start").get<std::string>());
  p.end = parse_date(j.at("end").get<std::string>());
  j.at("templates").get_to(p.templates);
  if (j.contains("constraints")) {
    const auto& c = j.at("constraints");
    p.constraints.min_gap = Minutes{c.value("min_gap_minutes", 0)};
    if (c.contains("quiet_hours") && !c.at("quiet_hours").is_null()) {
      p.constraints.quiet_hours = QuietHours{parse_clock(c.at("quiet_hours").at("start").get<std::string>()),
                                             parse_clock(c.at("quiet_hours").at("end").get<std::string>())};
    }
    if (c.contains("max_daily_questions") && !c.at("max_daily_questions").is_null()) {
      p.constraints.max_daily_questions = c.at("max_daily_questions").get<int>();
    }
  }
}

void to_json(Json& j, const ScheduledAction& a) {
  Json history = Json::array();
  for (const auto& t : a.history) {
    history.push_back({{"from", to_string(t.from)}, {"to", to_string(t.to)}, {"at", format_instant(t.at)}});
  }
  j = Json{{"id", a.id},
           {"plan_id", a.plan_id},
           {"participant", a.participant},
           {"template_id", a.template_id},
           {"kind", a.kind == TaskKind::Question ? "question" : "sensor"},
           {"priority", a.priority},
           {"validity_minutes", a.validity_window.count()},
           {"due_time", format_instant(a.due_time)},
           {"state", to_string(a.state)},
           {"state_time", instant_json(a.state_time)},
           {"history", std::move(history)}};
}

void from_json(const Json& j, ScheduledAction& a) {
  a = ScheduledAction{};
  a.id = j.at("id").get<std::string>();
  a.plan_id = j.at("plan_id").get<std::string>();
  a.participant = j.at("participant").get<std::string>();
  a.template_id = j.at("template_id").get<std::string>();
  a.kind = j.at("kind").get<std::string>() == "sensor" ? TaskKind::Sensor : TaskKind::Question;
  a.priority = j.at("priority").get<int>();
  a.validity_window = Minutes{j.at("validity_minutes").get<int>()};
  a.due_time = get_instant(j, "due_time");
  a.state = parse_action_state(j.at("state").get<std::string>());
  a.state_time = get_optional_instant(j, "state_time");
  for (const auto& t : j.at("history")) {
    a.history.push_back(Transition{parse_action_state(t.at("from").get<std::string>()),
                                   parse_action_state(t.at("to").get<std::string>()), get_instant(t, "at")});
  }
}

void to_json(Json& j, const AvoidWindow& w) {
  j = Json{{"participant", w.participant},
           {"date", format_date(w.date)},
           {"start", format_clock(w.start)},
           {"end", format_clock(w.end)},
           {"source", w.source == AvoidSource::Predicted ? "predicted" : "declared"},
           {"confidence", w.confidence}};
}

void from_json(const Json& j, AvoidWindow& w) {
  w.participant = j.at("participant").get<std::string>();
  w.date = parse_date(j.at("date").get<std::string>());
  w.start = parse_clock(j.at("start").get<std::string>());
  w.end = parse_clock(j.at("end").get<std::string>());
  w.source = j.value("source", "predicted") == "declared" ? AvoidSource::Declared : AvoidSource::Predicted;
  w.confidence = j.value("confidence", 1.0);
  if (!(w.start < w.end)) throw Error(ErrorCode::InvalidArgument, "avoid window start must precede end");
  if (!(w.confidence >= 0.0 && w.confidence <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "avoid window confidence outside [0,1]");
  }
}

void to_json(Json& j, const ReplanRequest& r) {
  j = Json{{"action_id", r.action_id}, {"participant", r.participant}, {"now", format_instant(r.requested_at)}};
  std::visit(
      [&](const auto& op) {
        using T = std::decay_t<decltype(op)>;
        if constexpr (std::is_same_v<T, Snooze>) {
          j["op"] = Json{{"type", "snooze"}, {"minutes", op.duration.count()}};
        } else if constexpr (std::is_same_v<T, Move>) {
          j["op"] = Json{{"type", "move"}, {"to", format_instant(op.new_time)}};
        } else {
          j["op"] = Json{{"type", "skip"}};
        }
      },
      r.op);
}

void from_json(const Json& j, ReplanRequest& r) {
  r.action_id = j.at("action_id").get<std::string>();
  r.participant = j.value("participant", "");
  r.requested_at = get_instant(j, "now");
  const auto& op = j.at("op");
  const auto type = op.at("type").get<std::string>();
  if (type == "snooze") {
    r.op = Snooze{Minutes{op.at("minutes").get<int>()}};
  } else if (type == "move") {
    r.op = Move{get_instant(op, "to")};
  } else if (type == "skip") {
    r.op = Skip{};
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown replan op: " + type);
  }
}

void to_json(Json& j, const ReplanEvent& e) {
  j = Json{{"request", e.request},
           {"previous_due", format_instant(e.previous_due)},
           {"previous_state", to_string(e.previous_state)}};
}

void from_json(const Json& j, ReplanEvent& e) {
  e.request = j.at("request").get<ReplanRequest>();
  e.previous_due = get_instant(j, "previous_due");
  e.previous_state = parse_action_state(j.at("previous_state").get<std::string>());
}

void to_json(Json& j, const ExecutionOutcome& o) {
  j = Json{{"action_id", o.action_id},
           {"participant", o.participant},
           {"kind", to_string(o.kind)},
           {"notification_time", instant_json(o.notification_time)},
           {"answer_time", instant_json(o.answer_time)}};
  if (auto d = o.delay_minutes()) j["delay_minutes"] = *d;
}

void from_json(const Json& j, ExecutionOutcome& o) {
  o.action_id = j.at("action_id").get<std::string>();
  o.participant = j.at("participant").get<std::string>();
  const auto kind = j.at("kind").get<std::string>();
  o.kind = kind == "answered" ? OutcomeKind::Answered
           : kind == "expired" ? OutcomeKind::Expired
                               : OutcomeKind::Error;
  o.notification_time = get_optional_instant(j, "notification_time");
  o.answer_time = get_optional_instant(j, "answer_time");
}

}  // namespace bigthick::plan
