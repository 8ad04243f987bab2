#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bigthick/plan/types.hpp"
#include "bigthick/scheduler/features.hpp"
#include "bigthick/scheduler/model.hpp"

namespace bigthick::scheduler {

struct AvoidOptions {
  int slot_minutes = 30;
  double tau = 0.6;
  /// The model overload reads each slot's context this long before the slot,
  /// so a day can be scored before any of its data exists. A week matches a
  /// weekly timetable.
  Minutes history_lag{7 * 24 * 60};
};

/// Scores each slot of `date` at its midpoint; slots scoring at least tau
/// become windows, adjacent ones merge, and a merged window's confidence is
/// the mean score of its slots.
std::vector<plan::AvoidWindow> derive_avoid_windows(const std::function<double(Instant)>& proba,
                                                    const std::string& participant, Date date,
                                                    const AvoidOptions& options = {});

std::vector<plan::AvoidWindow> derive_avoid_windows(const TrainedModel& model, const HistoryIndex& history,
                                                    const std::string& participant, Date date,
                                                    const AvoidOptions& options = {});

}  // namespace bigthick::scheduler
