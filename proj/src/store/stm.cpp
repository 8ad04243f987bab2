#include "bigthick/store/stm.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "bigthick/error.hpp"
#include "bigthick/json_util.hpp"

namespace bigthick::store {

namespace {

constexpr StmEventKind kAllKinds[] = {
    StmEventKind::PlanCreated, StmEventKind::ParticipantEnrolled, StmEventKind::ActionsExpanded,
    StmEventKind::Replan,      StmEventKind::StateTransition,     StmEventKind::Outcome,
    StmEventKind::AvoidWindowsPublished, StmEventKind::GoalSet,   StmEventKind::GoalRemoved,
};

plan::Schedule& schedule_of(StmState& state, const std::string& participant) {
  if (!state.participants.count(participant)) {
    throw Error(ErrorCode::NotFound, "unknown participant '" + participant + "'");
  }
  return state.schedules[participant];
}

void apply_expanded(StmState& state, const Json& p) {
  const auto participant = p.at("participant").get<std::string>();
  auto actions = p.at("actions").get<std::vector<plan::ScheduledAction>>();
  auto from = p.contains("replace_from") && !p.at("replace_from").is_null()
                  ? std::optional<Date>(parse_date(p.at("replace_from").get<std::string>()))
                  : std::nullopt;
  auto to = p.contains("replace_to") && !p.at("replace_to").is_null()
                ? std::optional<Date>(parse_date(p.at("replace_to").get<std::string>()))
                : std::nullopt;
  plan::Schedule& schedule = schedule_of(state, participant);
  if (from && to) {
    std::vector<std::string> stale;
    for (const auto& [id, a] : schedule.actions()) {
      Date d = date_of(a.due_time);
      if (a.state == plan::ActionState::Pending && a.history.empty() && d >= *from && d < *to) {
        stale.push_back(id);
      }
    }
    for (const auto& id : stale) schedule.erase(id);
  }
  for (auto& a : actions) {
    if (!schedule.find(a.id)) schedule.insert(std::move(a));
  }
}

}  // namespace

const char* to_string(StmEventKind kind) {
  switch (kind) {
    case StmEventKind::PlanCreated: return "PlanCreated";
    case StmEventKind::ParticipantEnrolled: return "ParticipantEnrolled";
    case StmEventKind::ActionsExpanded: return "ActionsExpanded";
    case StmEventKind::Replan: return "Replan";
    case StmEventKind::StateTransition: return "StateTransition";
    case StmEventKind::Outcome: return "Outcome";
    case StmEventKind::AvoidWindowsPublished: return "AvoidWindowsPublished";
    case StmEventKind::GoalSet: return "GoalSet";
    case StmEventKind::GoalRemoved: return "GoalRemoved";
  }
  return "?";
}

StmEventKind parse_stm_event_kind(const std::string& name) {
  for (auto k : kAllKinds) {
    if (name == to_string(k)) return k;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown STM event kind: " + name);
}

void to_json(Json& j, const StmEvent& e) {
  j = Json{{"seq", e.seq}, {"kind", to_string(e.kind)}, {"payload", e.payload},
           {"recorded_at", format_instant(e.recorded_at)}};
}

void from_json(const Json& j, StmEvent& e) {
  e.seq = j.at("seq").get<std::uint64_t>();
  e.kind = parse_stm_event_kind(j.at("kind").get<std::string>());
  e.payload = j.at("payload");
  e.recorded_at = get_instant(j, "recorded_at");
}

void to_json(Json& j, const ParticipantRecord& p) {
  j = Json{{"id", p.id},
           {"token", p.token},
           {"gender", optional_json(p.gender)},
           {"department", optional_json(p.department)},
           {"traits", p.traits},
           {"enrolled_at", format_instant(p.enrolled_at)}};
}

void from_json(const Json& j, ParticipantRecord& p) {
  p.id = j.at("id").get<std::string>();
  p.token = j.value("token", "");
  p.gender = j.contains("gender") && !j.at("gender").is_null() ? std::optional<int>(j.at("gender").get<int>())
                                                               : std::nullopt;
  p.department = j.contains("department") && !j.at("department").is_null()
                     ? std::optional<int>(j.at("department").get<int>())
                     : std::nullopt;
  p.traits = j.value("traits", std::vector<double>{});
  p.enrolled_at = get_instant(j, "enrolled_at");
}

const plan::Schedule* StmState::schedule(const std::string& participant) const {
  auto it = schedules.find(participant);
  return it == schedules.end() ? nullptr : &it->second;
}

std::vector<plan::AvoidWindow> StmState::windows_for(const std::string& participant) const {
  std::vector<plan::AvoidWindow> out;
  auto it = avoid_windows.find(participant);
  if (it == avoid_windows.end()) return out;
  for (const auto& [date, windows] : it->second) out.insert(out.end(), windows.begin(), windows.end());
  return out;
}

Json state_to_json(const StmState& s) {
  Json schedules = Json::object();
  for (const auto& [participant, schedule] : s.schedules) {
    Json actions = Json::array();
    for (const auto& [id, a] : schedule.actions()) actions.push_back(a);
    schedules[participant] = std::move(actions);
  }
  Json avoid = Json::object();
  for (const auto& [participant, by_date] : s.avoid_windows) {
    Json dates = Json::object();
    for (const auto& [date, windows] : by_date) dates[format_date(date)] = windows;
    avoid[participant] = std::move(dates);
  }
  Json plans = Json::object();
  for (const auto& [id, p] : s.plans) plans[id] = p;
  Json participants = Json::object();
  for (const auto& [id, p] : s.participants) participants[id] = p;
  Json goals = Json::object();
  for (const auto& [id, g] : s.goals) goals[id] = g;
  return Json{{"last_seq", s.last_seq},   {"plans", std::move(plans)},
              {"participants", std::move(participants)},
              {"schedules", std::move(schedules)},
              {"avoid_windows", std::move(avoid)},
              {"outcomes", s.outcomes},   {"replans", s.replans},
              {"goals", std::move(goals)}};
}

StmState state_from_json(const Json& j) {
  StmState s;
  s.last_seq = j.at("last_seq").get<std::uint64_t>();
  for (const auto& [id, p] : j.at("plans").items()) s.plans.emplace(id, p.get<plan::ExperimentPlan>());
  for (const auto& [id, p] : j.at("participants").items()) s.participants.emplace(id, p.get<ParticipantRecord>());
  for (const auto& [participant, actions] : j.at("schedules").items()) {
    plan::Schedule schedule;
    for (const auto& a : actions) schedule.insert(a.get<plan::ScheduledAction>());
    s.schedules.emplace(participant, std::move(schedule));
  }
  for (const auto& [participant, dates] : j.at("avoid_windows").items()) {
    auto& by_date = s.avoid_windows[participant];
    for (const auto& [date, windows] : dates.items()) {
      by_date.emplace(parse_date(date), windows.get<std::vector<plan::AvoidWindow>>());
    }
  }
  j.at("outcomes").get_to(s.outcomes);
  j.at("replans").get_to(s.replans);
  for (const auto& [id, g] : j.at("goals").items()) s.goals.emplace(id, g.get<monitor::Goal>());
  return s;
}

void apply_event(StmState& state, const StmEvent& event) {
  if (event.seq <= state.last_seq) {
    throw Error(ErrorCode::InvalidArgument, "event seq " + std::to_string(event.seq) + " is not increasing");
  }
  const Json& p = event.payload;
  switch (event.kind) {
    case StmEventKind::PlanCreated: {
      auto plan = p.at("plan").get<plan::ExperimentPlan>();
      plan.check();
      if (state.plans.count(plan.id)) throw Error(ErrorCode::Conflict, "plan '" + plan.id + "' already exists");
      state.plans.emplace(plan.id, std::move(plan));
      break;
    }
    case StmEventKind::ParticipantEnrolled: {
      auto record = p.at("participant").get<ParticipantRecord>();
      if (state.participants.count(record.id)) {
        throw Error(ErrorCode::Conflict, "participant '" + record.id + "' already enrolled");
      }
      state.schedules[record.id];
      state.participants.emplace(record.id, std::move(record));
      break;
    }
    case StmEventKind::ActionsExpanded:
      apply_expanded(state, p);
      break;
    case StmEventKind::Replan: {
      auto request = p.at("request").get<plan::ReplanRequest>();
      plan::Schedule& schedule = schedule_of(state, p.at("participant").get<std::string>());
      const auto& action = schedule.at(request.action_id);
      auto plan_it = state.plans.find(action.plan_id);
      if (plan_it == state.plans.end()) throw Error(ErrorCode::NotFound, "unknown plan '" + action.plan_id + "'");
      state.replans.push_back(plan::apply_replan(schedule, plan_it->second, request));
      break;
    }
    case StmEventKind::StateTransition: {
      plan::Schedule& schedule = schedule_of(state, p.at("participant").get<std::string>());
      if (!p.contains("changes")) {
        plan::apply_change(schedule, p.at("change").get<plan::StateChange>());
        break;
      }
      // Batches are checked in full before the first change is applied.
      auto changes = p.at("changes").get<std::vector<plan::StateChange>>();
      std::set<std::string> seen;
      for (const auto& c : changes) {
        const auto& a = schedule.at(c.action_id);
        if (!seen.insert(c.action_id).second) {
          throw Error(ErrorCode::InvalidArgument, "action '" + c.action_id + "' changes twice in one batch");
        }
        if (!plan::is_legal_transition(a.state, c.to)) {
          throw Error(ErrorCode::Conflict, "action '" + a.id + "': illegal transition " + plan::to_string(a.state) +
                                               " -> " + plan::to_string(c.to));
        }
        if (!a.history.empty() && c.at < a.history.back().at) {
          throw Error(ErrorCode::InvalidArgument, "action '" + a.id + "': transition time precedes history");
        }
      }
      for (const auto& c : changes) plan::apply_change(schedule, c);
      break;
    }
    case StmEventKind::Outcome: {
      plan::Schedule& schedule = schedule_of(state, p.at("participant").get<std::string>());
      const auto kind = p.at("kind").get<std::string>();
      plan::OutcomeInput input{kind == "answered"  ? plan::OutcomeKind::Answered
                               : kind == "expired" ? plan::OutcomeKind::Expired
                                                   : plan::OutcomeKind::Error,
                               get_instant(p, "at")};
      auto result = plan::record_outcome(schedule, p.at("action_id").get<std::string>(), input);
      if (result.changed) state.outcomes.push_back(result.outcome);
      break;
    }
    case StmEventKind::AvoidWindowsPublished: {
      const auto participant = p.at("participant").get<std::string>();
      Date date = parse_date(p.at("date").get<std::string>());
      auto windows = p.at("windows").get<std::vector<plan::AvoidWindow>>();
      state.avoid_windows[participant][date] = std::move(windows);
      break;
    }
    case StmEventKind::GoalSet: {
      auto goal = p.at("goal").get<monitor::Goal>();
      state.goals[goal.id] = std::move(goal);
      break;
    }
    case StmEventKind::GoalRemoved:
      state.goals.erase(p.at("id").get<std::string>());
      break;
  }
  state.last_seq = event.seq;
}

StmState rebuild_state(const std::vector<StmEvent>& events) {
  StmState state;
  for (const auto& e : events) apply_event(state, e);
  return state;
}

Json expanded_payload(const std::string& participant, const std::vector<plan::ScheduledAction>& actions,
                      std::optional<Date> replace_from, std::optional<Date> replace_to) {
  return Json{{"participant", participant},
              {"actions", actions},
              {"replace_from", replace_from ? Json(format_date(*replace_from)) : Json(nullptr)},
              {"replace_to", replace_to ? Json(format_date(*replace_to)) : Json(nullptr)}};
}

Json replan_payload(const std::string& participant, const plan::ReplanRequest& request) {
  return Json{{"participant", participant}, {"request", request}};
}

Json transition_payload(const std::string& participant, const plan::StateChange& change) {
  return Json{{"participant", participant}, {"change", change}};
}

Json transitions_payload(const std::string& participant, const std::vector<plan::StateChange>& changes) {
  return Json{{"participant", participant}, {"changes", changes}};
}

Json outcome_payload(const std::string& participant, const std::string& action_id, const plan::OutcomeInput& input) {
  return Json{{"participant", participant},
              {"action_id", action_id},
              {"kind", plan::to_string(input.kind)},
              {"at", format_instant(input.at)}};
}

Json avoid_payload(const std::string& participant, Date date, const std::vector<plan::AvoidWindow>& windows) {
  return Json{{"participant", participant}, {"date", format_date(date)}, {"windows", windows}};
}

std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& dir, const std::string& name) {
  std::optional<std::filesystem::path> best;
  std::uint64_t best_seq = 0;
  if (!std::filesystem::exists(dir)) return best;
  const std::string prefix = name + ".";
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto file = entry.path().filename().string();
    if (file.rfind(prefix, 0) != 0 || entry.path().extension() != ".ckpt") continue;
    const auto middle = file.substr(prefix.size(), file.size() - prefix.size() - 5);
    if (middle.empty() || !std::all_of(middle.begin(), middle.end(), ::isdigit)) continue;
    std::uint64_t seq = std::stoull(middle);
    if (!best || seq > best_seq) {
      best = entry.path();
      best_seq = seq;
    }
  }
  return best;
}

StmStore::StmStore(const std::filesystem::path& dir, Durability durability, const std::string& name)
    : dir_((std::filesystem::create_directories(dir), dir)),
      name_(name),
      log_(dir / (name + ".log"), durability) {
  if (auto ckpt = latest_checkpoint(dir_, name_)) {
    std::ifstream in(*ckpt);
    Json doc = Json::parse(in);
    checkpoint_seq_ = doc.at("seq").get<std::uint64_t>();
    checkpoint_state_ = state_from_json(doc.at("state"));
  }
  state_ = checkpoint_state_;
  for (const auto& record : log_.initial_records()) {
    auto event = record.get<StmEvent>();
    if (event.seq <= checkpoint_seq_) continue;
    apply_event(state_, event);
    events_.push_back(std::move(event));
  }
  log_.release_initial_records();
}

std::uint64_t StmStore::append(StmEventKind kind, Json payload, Instant recorded_at) {
  StmEvent event{state_.last_seq + 1, kind, std::move(payload), recorded_at};
  apply_event(state_, event);
  log_.append(event);
  events_.push_back(std::move(event));
  return state_.last_seq;
}

std::vector<StmEvent> StmStore::scan(const StmFilter& filter) const {
  std::vector<StmEvent> out;
  for (const auto& e : events_) {
    if (filter.kind && e.kind != *filter.kind) continue;
    if (filter.from && e.recorded_at < *filter.from) continue;
    if (filter.to && !(e.recorded_at < *filter.to)) continue;
    if (filter.participant) {
      const Json* p = nullptr;
      if (e.payload.contains("participant")) p = &e.payload.at("participant");
      if (!p) continue;
      if (p->is_string() ? p->get<std::string>() != *filter.participant
                         : p->value("id", std::string{}) != *filter.participant) {
        continue;
      }
    }
    out.push_back(e);
  }
  return out;
}

std::filesystem::path StmStore::compact(std::uint64_t up_to_seq) {
  if (up_to_seq < checkpoint_seq_ || up_to_seq > state_.last_seq) {
    throw Error(ErrorCode::InvalidArgument, "compaction point outside the live log");
  }
  StmState at_point = checkpoint_state_;
  auto split = std::find_if(events_.begin(), events_.end(), [&](const StmEvent& e) { return e.seq > up_to_seq; });
  for (auto it = events_.begin(); it != split; ++it) apply_event(at_point, *it);

  const auto path = dir_ / (name_ + "." + std::to_string(up_to_seq) + ".ckpt");
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << Json{{"seq", up_to_seq}, {"state", state_to_json(at_point)}}.dump();
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "cannot write checkpoint " + tmp.string());
  }
  {
    int fd = ::open(tmp.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd >= 0) {
      ::fsync(fd);
      ::close(fd);
    }
  }
  std::filesystem::rename(tmp, path);

  std::vector<Json> rest;
  for (auto it = split; it != events_.end(); ++it) rest.push_back(*it);
  log_.rewrite(rest);

  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    const auto file = entry.path().filename().string();
    if (entry.path() != path && entry.path().extension() == ".ckpt" && file.rfind(name_ + ".", 0) == 0) {
      std::filesystem::remove(entry.path());
    }
  }
  events_.erase(events_.begin(), split);
  checkpoint_state_ = std::move(at_point);
  checkpoint_seq_ = up_to_seq;
  return path;
}

}  // namespace bigthick::store
