#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "bigthick/plan/types.hpp"

namespace bigthick::plan {

/// One participant's scheduled actions with time indexes over the
/// clock-driven states. Every mutation goes through insert/erase/modify so the
/// indexes stay in sync.
class Schedule {
 public:
  void insert(ScheduledAction action);  // adds or replaces by id
  bool erase(const std::string& id);
  const ScheduledAction* find(const std::string& id) const;
  /// Throws Error(NotFound).
  const ScheduledAction& at(const std::string& id) const;
  void modify(const std::string& id, const std::function<void(ScheduledAction&)>& fn);

  const std::map<std::string, ScheduledAction>& actions() const { return actions_; }
  std::size_t size() const { return actions_.size(); }

  /// Ids of Pending actions with due_time <= now.
  std::vector<std::string> pending_due(Instant now) const;
  /// Ids of Snoozed actions whose snooze ended at or before now.
  std::vector<std::string> snoozes_ended(Instant now) const;
  /// Ids of Notified actions with now > expires_at().
  std::vector<std::string> expired(Instant now) const;
  /// Ids of Notified actions, by expiry.
  std::vector<std::string> notified() const;
  /// Earliest instant after which pending_due or snoozes_ended grows.
  std::optional<Instant> next_wake() const;

  bool operator==(const Schedule& other) const { return actions_ == other.actions_; }

 private:
  using Key = std::tuple<Instant, std::string>;
  void index(const ScheduledAction& a);
  void unindex(const ScheduledAction& a);

  std::map<std::string, ScheduledAction> actions_;
  std::set<Key> pending_;   // by due_time
  std::set<Key> snoozed_;   // by snooze end
  std::set<Key> notified_;  // by expiry
};

/// Applies a legal transition and appends it to the history. Throws
/// Error(Conflict) for illegal transitions and Error(InvalidArgument) when
/// `at` precedes the last recorded transition.
void transition(ScheduledAction& action, ActionState to, Instant at,
                std::optional<Instant> state_time = std::nullopt);

/// Pending actions with due_time <= now, highest priority first, then by due time.
std::vector<ScheduledAction> due_actions(const Schedule& schedule, Instant now);

/// A transition produced by delivery or by the clock (snooze end, expiry).
struct StateChange {
  std::string action_id;
  ActionState to = ActionState::Pending;
  Instant at;

  bool operator==(const StateChange&) const = default;
};

/// Clock-driven changes due at `now`: snoozes ending (back to Pending with
/// due_time = snooze end) and Notified actions past their validity window.
std::vector<StateChange> clock_changes(const Schedule& schedule, Instant now);

void apply_change(Schedule& schedule, const StateChange& change);

/// Validates and applies a participant re-plan. Throws Error(NotFound) for
/// unknown actions, Error(Conflict) for settled actions, illegal transitions
/// and min_gap violations (message names the conflicting action), and
/// Error(InvalidArgument) for out-of-range durations or targets.
ReplanEvent apply_replan(Schedule& schedule, const ExperimentPlan& plan, const ReplanRequest& request);

struct OutcomeInput {
  OutcomeKind kind = OutcomeKind::Answered;
  Instant at;
};

struct OutcomeResult {
  ExecutionOutcome outcome;
  bool changed = false;  // false when the action was already settled
  ActionState state = ActionState::Answered;
};

/// Settles a Notified action. Settling an already-terminal action is a no-op
/// that reports the prior outcome. Throws Error(Conflict) when the action was
/// never delivered or the answer arrives after the validity window.
OutcomeResult record_outcome(Schedule& schedule, const std::string& action_id, const OutcomeInput& input);

/// Outcome view of a terminal action.
ExecutionOutcome outcome_of(const ScheduledAction& action);

void to_json(nlohmann::json& j, const StateChange& c);
void from_json(const nlohmann::json& j, StateChange& c);

}  // namespace bigthick::plan
