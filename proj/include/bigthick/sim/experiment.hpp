#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bigthick/plan/types.hpp"
#include "bigthick/scheduler/dataset.hpp"
#include "bigthick/scheduler/features.hpp"
#include "bigthick/service/service.hpp"
#include "bigthick/sim/simulation.hpp"

namespace bigthick::sim {

enum class Policy { Fixed, Adaptive };

const char* to_string(Policy policy);
Policy parse_policy(const std::string& name);

struct ExperimentOptions {
  Policy policy = Policy::Fixed;
  int days = 28;
  std::uint64_t seed = 1;
  /// Service data directory; must not hold a previous run.
  std::filesystem::path data_dir;
  store::Durability durability = store::Durability::Os;
  /// Adaptive only: train at the midnight that starts this day, then refresh
  /// avoid windows every midnight after.
  int warmup_days = 14;
  std::string family = "random_forest";
  int clusters = 4;
  int upload_every_minutes = 60;
  SimOptions sim;
  bool keep_events = true;
  /// Sees every event as it happens, kept or not.
  std::function<void(const SimEvent&)> on_event;
};

struct ExperimentResult {
  std::vector<SimEvent> events;
  /// Rows at every question notification, labeled from ground truth.
  std::vector<scheduler::LabeledRow> dataset;
  scheduler::FeatureSchema schema;
  std::size_t requests = 0;
  std::size_t rejected_answers = 0;  // answers the service refused (409)
  std::optional<nlohmann::json> training;  // the train response, adaptive only
  Instant start;
  Instant end;
};

/// Runs the cohort against a real Service over [plan.start, plan.start + days)
/// in simulated minutes. Every write goes through Service::handle. The
/// service stays open in `service_out` when given, for inspection.
ExperimentResult run_experiment(const std::vector<BehaviorProfile>& cohort, const plan::ExperimentPlan& plan,
                                const ExperimentOptions& options,
                                std::unique_ptr<service::Service>* service_out = nullptr);

/// Feature rows at every question notification in the service's stores,
/// labeled by the busy encoding of the ground-truth activity at that instant.
std::vector<scheduler::LabeledRow> export_dataset(const std::vector<BehaviorProfile>& cohort,
                                                  const store::StmState& stm, const scheduler::HistoryIndex& history,
                                                  const scheduler::FeatureSchema& schema);

inline constexpr const char* kSimResearcherToken = "sim-researcher";
inline constexpr const char* kSimParticipantSecret = "sim-participant-secret";

}  // namespace bigthick::sim
