#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bigthick/monitor/types.hpp"
#include "bigthick/plan/schedule.hpp"
#include "bigthick/plan/types.hpp"
#include "bigthick/store/event_log.hpp"

namespace bigthick::store {

enum class StmEventKind {
  PlanCreated,
  ParticipantEnrolled,
  ActionsExpanded,
  Replan,
  StateTransition,
  Outcome,
  AvoidWindowsPublished,
  GoalSet,
  GoalRemoved,
};

const char* to_string(StmEventKind kind);
StmEventKind parse_stm_event_kind(const std::string& name);

struct StmEvent {
  std::uint64_t seq = 0;
  StmEventKind kind = StmEventKind::PlanCreated;
  nlohmann::json payload;
  Instant recorded_at;
};

void to_json(nlohmann::json& j, const StmEvent& e);
void from_json(const nlohmann::json& j, StmEvent& e);

struct ParticipantRecord {
  std::string id;
  std::string token;
  std::optional<int> gender;
  std::optional<int> department;
  std::vector<double> traits;  // personality trait scores
  Instant enrolled_at;

  bool operator==(const ParticipantRecord&) const = default;
};

void to_json(nlohmann::json& j, const ParticipantRecord& p);
void from_json(const nlohmann::json& j, ParticipantRecord& p);

/// Live operational state: the fold of every STM event.
struct StmState {
  std::uint64_t last_seq = 0;
  std::map<std::string, plan::ExperimentPlan> plans;
  std::map<std::string, ParticipantRecord> participants;
  std::map<std::string, plan::Schedule> schedules;
  std::map<std::string, std::map<Date, std::vector<plan::AvoidWindow>>> avoid_windows;
  std::vector<plan::ExecutionOutcome> outcomes;
  std::vector<plan::ReplanEvent> replans;
  std::map<std::string, monitor::Goal> goals;

  const plan::Schedule* schedule(const std::string& participant) const;
  std::vector<plan::AvoidWindow> windows_for(const std::string& participant) const;
};

nlohmann::json state_to_json(const StmState& state);
StmState state_from_json(const nlohmann::json& j);

/// Applies one event; throws if the payload does not match its kind or the
/// transition it encodes is illegal (the state is left unchanged in that case).
void apply_event(StmState& state, const StmEvent& event);

/// Fold from the empty state.
StmState rebuild_state(const std::vector<StmEvent>& events);

// Payload builders, one per event kind.
nlohmann::json expanded_payload(const std::string& participant, const std::vector<plan::ScheduledAction>& actions,
                                std::optional<Date> replace_from = std::nullopt,
                                std::optional<Date> replace_to = std::nullopt);
nlohmann::json replan_payload(const std::string& participant, const plan::ReplanRequest& request);
nlohmann::json transition_payload(const std::string& participant, const plan::StateChange& change);
/// Several changes in one event, applied all-or-nothing.
nlohmann::json transitions_payload(const std::string& participant, const std::vector<plan::StateChange>& changes);
nlohmann::json outcome_payload(const std::string& participant, const std::string& action_id,
                               const plan::OutcomeInput& input);
nlohmann::json avoid_payload(const std::string& participant, Date date,
                             const std::vector<plan::AvoidWindow>& windows);

struct StmFilter {
  std::optional<std::string> participant;
  std::optional<Instant> from;  // inclusive, on recorded_at
  std::optional<Instant> to;    // exclusive
  std::optional<StmEventKind> kind;
};

/// Short-term memory: append-only event log plus the folded state. One writer
/// per store, enforced by a lock file.
class StmStore {
 public:
  StmStore(const std::filesystem::path& dir, Durability durability = Durability::Fsync,
           const std::string& name = "stm");

  /// Applies the event to the live state, then appends it durably. Returns its seq.
  std::uint64_t append(StmEventKind kind, nlohmann::json payload, Instant recorded_at);

  const StmState& state() const { return state_; }
  std::vector<StmEvent> scan(const StmFilter& filter = {}) const;
  const RecoveryReport& recovery() const { return log_.recovery(); }
  std::uint64_t checkpoint_seq() const { return checkpoint_seq_; }

  /// Writes "<name>.<seq>.ckpt" holding the state folded up to `up_to_seq` and
  /// truncates the log to later events. Returns the checkpoint path.
  std::filesystem::path compact(std::uint64_t up_to_seq);

 private:
  std::filesystem::path dir_;
  std::string name_;
  EventLog log_;
  StmState state_;
  std::uint64_t checkpoint_seq_ = 0;
  StmState checkpoint_state_;
  std::vector<StmEvent> events_;  // events after the checkpoint, in seq order
};

/// Latest checkpoint in `dir` for store `name`, if any.
std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& dir, const std::string& name);

}  // namespace bigthick::store
