#include "bigthick/plan/schedule.hpp"

#include <algorithm>
#include <cstdlib>

#include "bigthick/error.hpp"
#include "bigthick/json_util.hpp"

namespace bigthick::plan {

void Schedule::index(const ScheduledAction& a) {
  switch (a.state) {
    case ActionState::Pending: pending_.emplace(a.due_time, a.id); break;
    case ActionState::Snoozed: snoozed_.emplace(a.state_time.value_or(a.due_time), a.id); break;
    case ActionState::Notified: notified_.emplace(a.expires_at(), a.id); break;
    default: break;
  }
}

void Schedule::unindex(const ScheduledAction& a) {
  pending_.erase({a.due_time, a.id});
  snoozed_.erase({a.state_time.value_or(a.due_time), a.id});
  notified_.erase({a.expires_at(), a.id});
}

void Schedule::insert(ScheduledAction action) {
  erase(action.id);
  index(action);
  auto id = action.id;
  actions_.emplace(std::move(id), std::move(action));
}

bool Schedule::erase(const std::string& id) {
  auto it = actions_.find(id);
  if (it == actions_.end()) return false;
  unindex(it->second);
  actions_.erase(it);
  return true;
}

const ScheduledAction* Schedule::find(const std::string& id) const {
  auto it = actions_.find(id);
  return it == actions_.end() ? nullptr : &it->second;
}

const ScheduledAction& Schedule::at(const std::string& id) const {
  const auto* a = find(id);
  if (!a) throw Error(ErrorCode::NotFound, "unknown action '" + id + "'");
  return *a;
}

void Schedule::modify(const std::string& id, const std::function<void(ScheduledAction&)>& fn) {
  auto it = actions_.find(id);
  if (it == actions_.end()) throw Error(ErrorCode::NotFound, "unknown action '" + id + "'");
  ScheduledAction copy = it->second;
  fn(copy);  // may throw; the stored action stays untouched
  unindex(it->second);
  it->second = std::move(copy);
  index(it->second);
}

std::vector<std::string> Schedule::pending_due(Instant now) const {
  std::vector<std::string> ids;
  for (auto it = pending_.begin(); it != pending_.end() && std::get<0>(*it) <= now; ++it) {
    ids.push_back(std::get<1>(*it));
  }
  return ids;
}

std::vector<std::string> Schedule::snoozes_ended(Instant now) const {
  std::vector<std::string> ids;
  for (auto it = snoozed_.begin(); it != snoozed_.end() && std::get<0>(*it) <= now; ++it) {
    ids.push_back(std::get<1>(*it));
  }
  return ids;
}

std::vector<std::string> Schedule::expired(Instant now) const {
  std::vector<std::string> ids;
  for (auto it = notified_.begin(); it != notified_.end() && std::get<0>(*it) < now; ++it) {
    ids.push_back(std::get<1>(*it));
  }
  return ids;
}

std::vector<std::string> Schedule::notified() const {
  std::vector<std::string> ids;
  for (const auto& key : notified_) ids.push_back(std::get<1>(key));
  return ids;
}

std::optional<Instant> Schedule::next_wake() const {
  std::optional<Instant> out;
  if (!pending_.empty()) out = std::get<0>(*pending_.begin());
  if (!snoozed_.empty()) out = out ? std::min(*out, std::get<0>(*snoozed_.begin())) : std::get<0>(*snoozed_.begin());
  return out;
}

void transition(ScheduledAction& action, ActionState to, Instant at, std::optional<Instant> state_time) {
  if (!is_legal_transition(action.state, to)) {
    throw Error(ErrorCode::Conflict, "action '" + action.id + "': illegal transition " +
                                         to_string(action.state) + " -> " + to_string(to));
  }
  if (!action.history.empty() && at < action.history.back().at) {
    throw Error(ErrorCode::InvalidArgument, "action '" + action.id + "': transition time precedes history");
  }
  action.history.push_back(Transition{action.state, to, at});
  action.state = to;
  switch (to) {
    case ActionState::Notified:
    case ActionState::Answered: action.state_time = at; break;
    case ActionState::Snoozed: action.state_time = state_time.value_or(at); break;
    default: action.state_time.reset(); break;
  }
}

std::vector<ScheduledAction> due_actions(const Schedule& schedule, Instant now) {
  std::vector<ScheduledAction> out;
  for (const auto& id : schedule.pending_due(now)) out.push_back(schedule.at(id));
  std::stable_sort(out.begin(), out.end(), [](const ScheduledAction& a, const ScheduledAction& b) {
    if (a.priority != b.priority) return a.priority > b.priority;
    return a.due_time < b.due_time;
  });
  return out;
}

std::vector<StateChange> clock_changes(const Schedule& schedule, Instant now) {
  std::vector<StateChange> out;
  for (const auto& id : schedule.snoozes_ended(now)) {
    out.push_back(StateChange{id, ActionState::Pending, *schedule.at(id).state_time});
  }
  for (const auto& id : schedule.expired(now)) {
    out.push_back(StateChange{id, ActionState::Expired, now});
  }
  return out;
}

void apply_change(Schedule& schedule, const StateChange& change) {
  schedule.modify(change.action_id, [&](ScheduledAction& a) {
    const bool snooze_release = a.state == ActionState::Snoozed && change.to == ActionState::Pending;
    transition(a, change.to, change.at);
    if (snooze_release) a.due_time = change.at;
  });
}

ReplanEvent apply_replan(Schedule& schedule, const ExperimentPlan& plan, const ReplanRequest& request) {
  const ScheduledAction& current = schedule.at(request.action_id);
  if (!request.participant.empty() && request.participant != current.participant) {
    throw Error(ErrorCode::NotFound, "action '" + request.action_id + "' does not belong to participant '" +
                                         request.participant + "'");
  }
  if (current.terminal()) {
    throw Error(ErrorCode::Conflict, "action '" + current.id + "' already settled (" +
                                         to_string(current.state) + ")");
  }
  ReplanEvent event{request, current.due_time, current.state};

  std::visit(
      [&](const auto& op) {
        using T = std::decay_t<decltype(op)>;
        if constexpr (std::is_same_v<T, Snooze>) {
          if (op.duration <= Minutes{0} || op.duration > Minutes{24 * 60}) {
            throw Error(ErrorCode::InvalidArgument, "snooze duration must be in (0, 24h]");
          }
          schedule.modify(current.id, [&](ScheduledAction& a) {
            transition(a, ActionState::Snoozed, request.requested_at, request.requested_at + op.duration);
          });
        } else if constexpr (std::is_same_v<T, Move>) {
          if (current.state != ActionState::Pending) {
            throw Error(ErrorCode::Conflict, "action '" + current.id + "' cannot be moved while " +
                                                 to_string(current.state));
          }
          if (op.new_time < Instant{plan.start} || op.new_time >= Instant{plan.end}) {
            throw Error(ErrorCode::InvalidArgument, "move target outside plan dates");
          }
          const auto gap = plan.constraints.min_gap;
          if (current.kind == TaskKind::Question && gap > Minutes{0}) {
            for (const auto& [id, other] : schedule.actions()) {
              if (id == current.id || other.kind != TaskKind::Question || other.state == ActionState::Skipped) {
                continue;
              }
              auto diff = op.new_time > other.due_time ? op.new_time - other.due_time : other.due_time - op.new_time;
              if (diff < gap) {
                throw Error(ErrorCode::Conflict, "move violates min_gap with action '" + id + "' due " +
                                                     format_instant(other.due_time));
              }
            }
          }
          schedule.modify(current.id, [&](ScheduledAction& a) { a.due_time = op.new_time; });
        } else {
          schedule.modify(current.id, [&](ScheduledAction& a) {
            transition(a, ActionState::Skipped, request.requested_at);
          });
        }
      },
      request.op);
  return event;
}

ExecutionOutcome outcome_of(const ScheduledAction& action) {
  ExecutionOutcome o;
  o.action_id = action.id;
  o.participant = action.participant;
  o.notification_time = action.last_notified();
  if (action.state == ActionState::Answered) {
    o.kind = OutcomeKind::Answered;
    o.answer_time = action.state_time;
  } else {
    o.kind = OutcomeKind::Expired;
  }
  return o;
}

OutcomeResult record_outcome(Schedule& schedule, const std::string& action_id, const OutcomeInput& input) {
  const ScheduledAction& current = schedule.at(action_id);
  if (current.terminal()) {
    return OutcomeResult{outcome_of(current), false, current.state};
  }
  if (current.state != ActionState::Notified) {
    throw Error(ErrorCode::Conflict, "action '" + action_id + "' has not been delivered (" +
                                         to_string(current.state) + ")");
  }
  if (input.kind == OutcomeKind::Answered && input.at > current.expires_at()) {
    throw Error(ErrorCode::Conflict, "action '" + action_id + "' answered after its validity window");
  }
  const ActionState to = input.kind == OutcomeKind::Answered ? ActionState::Answered : ActionState::Expired;
  schedule.modify(action_id, [&](ScheduledAction& a) { transition(a, to, input.at); });
  const ScheduledAction& settled = schedule.at(action_id);
  ExecutionOutcome o = outcome_of(settled);
  o.kind = input.kind;
  return OutcomeResult{o, true, settled.state};
}

void to_json(Json& j, const StateChange& c) {
  j = Json{{"action_id", c.action_id}, {"to", to_string(c.to)}, {"at", format_instant(c.at)}};
}

void from_json(const Json& j, StateChange& c) {
  c.action_id = j.at("action_id").get<std::string>();
  c.to = parse_action_state(j.at("to").get<std::string>());
  c.at = get_instant(j, "at");
}

}  // namespace bigthick::plan
