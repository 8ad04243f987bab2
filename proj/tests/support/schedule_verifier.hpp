#pragma once

#include <string>
#include <vector>

#include "bigthick/plan/types.hpp"

namespace bigthick::testing {

/// Re-checks expand_plan's post-conditions from scratch: question times avoid
/// quiet hours and honored avoid windows, consecutive questions keep min_gap,
/// daily caps hold, and sensor actions sit exactly on their recurrences.
/// Returns one message per violation.
std::vector<std::string> verify_schedule(const plan::ExperimentPlan& plan, const std::string& participant,
                                         const std::vector<plan::AvoidWindow>& avoid,
                                         const std::vector<plan::ScheduledAction>& actions,
                                         double confidence_threshold = 0.6);

}  // namespace bigthick::testing
