#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bigthick/context/snapshot.hpp"
#include "bigthick/sim/behavior.hpp"

namespace bigthick::sim {

enum class SimEventKind { ActivityChange, Notified, Answered, Snoozed, Ignored, SensorEmitted };

const char* to_string(SimEventKind kind);

struct SimEvent {
  Instant time;
  std::string participant;
  SimEventKind kind = SimEventKind::ActivityChange;
  std::string action_id;                         // Notified, Answered, Snoozed, Ignored
  Whereabouts whereabouts;                       // ActivityChange
  std::optional<context::DiaryAnswerSet> answers;  // Answered
  std::optional<context::SensorBatch> batch;     // SensorEmitted
  Minutes snooze{0};                             // Snoozed

  bool operator==(const SimEvent&) const = default;
};

void to_json(nlohmann::json& j, const SimEvent& e);

struct SimOptions {
  std::uint64_t seed = 1;
  Minutes snooze{30};
  int geo_every_minutes = 15;
};

/// Participants' side of an experiment over simulated minutes. Reactions are
/// drawn from keyed randomness, so a participant's behavior does not depend
/// on what else happened in the run.
class Simulation {
 public:
  Simulation(std::vector<BehaviorProfile> cohort, Instant start, SimOptions options = {});

  Instant now() const { return now_; }
  const std::vector<BehaviorProfile>& cohort() const { return cohort_; }
  const BehaviorProfile& profile(const std::string& id) const;

  /// A question reached the participant's phone; the reaction is decided by
  /// the next step(). Throws Error(NotFound) for an unknown participant.
  void deliver(const std::string& participant, const std::string& action_id, Instant expires_at);

  /// Emits the events of minute now() for every participant in id order,
  /// then advances one minute.
  std::vector<SimEvent> step();

 private:
  struct Delivery {
    std::string action_id;
    Instant expires_at;
  };
  struct PendingAnswer {
    Instant at;
    std::string action_id;
    Instant notified;
  };
  struct Participant {
    std::optional<Whereabouts> last;
    std::vector<Delivery> inbox;
    std::vector<PendingAnswer> answers;  // sorted by at
  };

  context::DiaryAnswerSet answer_for(const BehaviorProfile& p, const std::string& action_id, Instant notified,
                                     Instant at) const;

  std::vector<BehaviorProfile> cohort_;
  std::map<std::string, std::size_t> index_;
  std::vector<Participant> state_;
  Instant now_;
  SimOptions options_;
};

}  // namespace bigthick::sim
