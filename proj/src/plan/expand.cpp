#include "bigthick/plan/expand.hpp"

#include <algorithm>
#include <array>
#include <set>

namespace bigthick::plan {
namespace {

long long absolute_minute(Instant t) {
  return std::chrono::floor<Minutes>(t.time_since_epoch()).count();
}

struct Occurrence {
  const TaskTemplate* task;
  std::size_t template_order;
  int nominal;
  int index;  // occurrence number within the template for this day
};

}  // namespace

std::string make_action_id(const std::string& plan_id, const std::string& participant,
                           const std::string& template_id, Date day, int occurrence) {
  return plan_id + ":" + participant + ":" + template_id + ":" + format_date(day) + ":" +
         std::to_string(occurrence);
}

bool is_honored(const AvoidWindow& window, double confidence_threshold) {
  return window.source == AvoidSource::Declared || window.confidence >= confidence_threshold;
}

Expansion expand_plan(const ExperimentPlan& plan, const std::string& participant,
                      const std::vector<AvoidWindow>& avoid, const ExpandOptions& options) {
  plan.check();
  Expansion out;
  const auto& c = plan.constraints;
  const long long gap = c.min_gap.count();

  std::set<long long> placed_questions;
  for (Instant t : options.fixed_questions) placed_questions.insert(absolute_minute(t));

  auto gap_ok = [&](long long m) {
    if (gap <= 0) return true;
    auto it = placed_questions.lower_bound(m - gap + 1);
    return it == placed_questions.end() || *it > m + gap - 1;
  };

  auto make_action = [&](const TaskTemplate& t, Date day, int index, int minute) {
    ScheduledAction a;
    a.id = make_action_id(plan.id, participant, t.id, day, index);
    a.plan_id = plan.id;
    a.participant = participant;
    a.template_id = t.id;
    a.kind = t.kind;
    a.priority = t.priority;
    a.validity_window = t.validity_window;
    a.due_time = at_clock(day, ClockTime{minute});
    return a;
  };

  Date first = options.from ? std::max(*options.from, plan.start) : plan.start;
  Date last = options.to ? std::min(*options.to, plan.end) : plan.end;

  for (Date day = first; day < last; day += std::chrono::days{1}) {
    const std::string day_label = format_date(day);
    std::vector<ScheduledAction> day_actions;

    std::vector<Occurrence> questions;
    for (std::size_t ti = 0; ti < plan.templates.size(); ++ti) {
      const auto& t = plan.templates[ti];
      auto minutes = t.occurrences();
      for (std::size_t k = 0; k < minutes.size(); ++k) {
        if (t.kind == TaskKind::Sensor) {
          day_actions.push_back(make_action(t, day, static_cast<int>(k), minutes[k]));
        } else {
          questions.push_back(Occurrence{&t, ti, minutes[k], static_cast<int>(k)});
        }
      }
    }

    if (!questions.empty()) {
      std::array<bool, kMinutesPerDay> blocked{};
      if (c.quiet_hours) {
        for (int m = 0; m < kMinutesPerDay; ++m) blocked[m] = c.quiet_hours->contains(m);
      }
      if (c.quiet_hours && c.quiet_hours->covers_whole_day()) {
        out.diagnostics.push_back(day_label + ": quiet hours cover the whole day; no questions scheduled");
        questions.clear();
      }
      for (const auto& w : avoid) {
        if (w.participant != participant || w.date != day || !is_honored(w, options.confidence_threshold)) {
          continue;
        }
        for (int m = w.start.minute; m < std::min(w.end.minute, kMinutesPerDay); ++m) blocked[m] = true;
      }

      std::stable_sort(questions.begin(), questions.end(), [](const Occurrence& a, const Occurrence& b) {
        if (a.task->priority != b.task->priority) return a.task->priority > b.task->priority;
        if (a.nominal != b.nominal) return a.nominal < b.nominal;
        return a.template_order < b.template_order;
      });

      const long long day_start = absolute_minute(Instant{day});
      int count = static_cast<int>(std::count_if(
          options.fixed_questions.begin(), options.fixed_questions.end(),
          [&](Instant t) { return date_of(t) == day; }));

      for (const auto& o : questions) {
        const std::string label = day_label + " " + o.task->id + "#" + std::to_string(o.index);
        if (c.max_daily_questions && count >= *c.max_daily_questions) {
          out.diagnostics.push_back(label + ": dropped, daily question cap reached");
          continue;
        }
        int chosen = -1;
        for (int m = o.nominal; m < kMinutesPerDay; ++m) {
          if (!blocked[m] && gap_ok(day_start + m)) {
            chosen = m;
            break;
          }
        }
        if (chosen < 0) {
          out.diagnostics.push_back(label + ": dropped, no feasible slot later that day");
          continue;
        }
        placed_questions.insert(day_start + chosen);
        ++count;
        day_actions.push_back(make_action(*o.task, day, o.index, chosen));
      }
    }

    std::sort(day_actions.begin(), day_actions.end(), [](const auto& a, const auto& b) {
      return a.due_time != b.due_time ? a.due_time < b.due_time : a.id < b.id;
    });
    for (auto& a : day_actions) out.actions.push_back(std::move(a));
  }
  return out;
}

}  // namespace bigthick::plan
