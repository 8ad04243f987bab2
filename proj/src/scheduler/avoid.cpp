#include "bigthick/scheduler/avoid.hpp"

#include <algorithm>

#include "bigthick/error.hpp"

namespace bigthick::scheduler {

std::vector<plan::AvoidWindow> derive_avoid_windows(const std::function<double(Instant)>& proba,
                                                    const std::string& participant, Date date,
                                                    const AvoidOptions& options) {
  if (options.slot_minutes < 1 || options.slot_minutes > kMinutesPerDay) {
    throw Error(ErrorCode::InvalidArgument, "slot width must be between 1 minute and 24 hours");
  }
  std::vector<plan::AvoidWindow> out;
  double sum = 0.0;
  int slots = 0;
  for (int start = 0; start < kMinutesPerDay; start += options.slot_minutes) {
    const int end = std::min(start + options.slot_minutes, kMinutesPerDay);
    const Instant mid = Instant{date} + std::chrono::seconds{(start + end) * 30};
    const double p = proba(mid);
    if (p < options.tau) continue;
    if (!out.empty() && out.back().end.minute == start) {
      out.back().end = ClockTime{end};
    } else {
      if (!out.empty()) out.back().confidence = sum / slots;
      out.push_back(plan::AvoidWindow{participant, date, ClockTime{start}, ClockTime{end},
                                      plan::AvoidSource::Predicted, 0.0});
      sum = 0.0;
      slots = 0;
    }
    sum += p;
    ++slots;
  }
  if (!out.empty()) out.back().confidence = sum / slots;
  return out;
}

std::vector<plan::AvoidWindow> derive_avoid_windows(const TrainedModel& model, const HistoryIndex& history,
                                                    const std::string& participant, Date date,
                                                    const AvoidOptions& options) {
  return derive_avoid_windows(
      [&](Instant t) {
        auto x = extract_features(history, participant, t - options.history_lag, model.schema);
        // Clock slots describe the slot itself; the lagged context fills the rest.
        if (model.schema.time) {
          auto now = time_features(t);
          std::copy(now.begin(), now.end(), x.begin());
        }
        return model.predict_proba(x);
      },
      participant, date, options);
}

}  // namespace bigthick::scheduler
