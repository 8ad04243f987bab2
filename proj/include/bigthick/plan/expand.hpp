#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bigthick/plan/types.hpp"

namespace bigthick::plan {

struct ExpandOptions {
  /// Predicted windows below this confidence are ignored; declared windows always apply.
  double confidence_threshold = 0.6;
  /// Restricts expansion to days in [from, to).
  std::optional<Date> from;
  std::optional<Date> to;
  /// Question times already committed elsewhere in the schedule. New placements
  /// keep min_gap from them and they count toward their day's question cap.
  std::vector<Instant> fixed_questions;
};

struct Expansion {
  std::vector<ScheduledAction> actions;  // ordered by (due_time, id)
  std::vector<std::string> diagnostics;
};

/// Deterministic: identical inputs yield identical actions, ids included.
///
/// Question occurrences are placed in (priority desc, nominal time, template
/// order) order at the earliest minute at or after their nominal time, on the
/// same day, that is outside quiet hours and honored avoid windows and keeps
/// min_gap from every question already placed. Occurrences with no such
/// minute, or beyond the daily cap, are dropped with a diagnostic. Sensor
/// actions are never displaced.
Expansion expand_plan(const ExperimentPlan& plan, const std::string& participant,
                      const std::vector<AvoidWindow>& avoid, const ExpandOptions& options = {});

std::string make_action_id(const std::string& plan_id, const std::string& participant,
                           const std::string& template_id, Date day, int occurrence);

bool is_honored(const AvoidWindow& window, double confidence_threshold);

}  // namespace bigthick::plan
