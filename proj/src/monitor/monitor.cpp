#include "bigthick/monitor/monitor.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "bigthick/error.hpp"
#include "bigthick/hash.hpp"
#include "bigthick/json_util.hpp"

namespace bigthick::monitor {
namespace {

using plan::ActionState;

std::optional<Instant> first_transition(const plan::ScheduledAction& a, ActionState to) {
  for (const auto& t : a.history) {
    if (t.to == to) return t.at;
  }
  return std::nullopt;
}

std::string alert_id(const std::string& rule, const std::string& participant, const std::string& key) {
  return hex64(fnv1a64(rule + '\x1f' + participant + '\x1f' + key));
}

}  // namespace

ParticipantSummary summarize(const std::string& participant, const store::StmState& stm,
                             const store::LtmStore& ltm, const DateRange& range) {
  ParticipantSummary s;
  s.participant = participant;
  double delay_sum = 0.0;
  if (const plan::Schedule* schedule = stm.schedule(participant)) {
    for (const auto& [id, a] : schedule->actions()) {
      if (a.kind != plan::TaskKind::Question) continue;
      if (auto t = first_transition(a, ActionState::Notified); t && range.contains(date_of(*t))) {
        s.days[date_of(*t)].sent++;
      }
      if (a.history.empty() || !a.terminal()) continue;
      const Instant settled = a.history.back().at;
      if (!range.contains(date_of(settled))) continue;
      auto& day = s.days[date_of(settled)];
      switch (a.state) {
        case ActionState::Answered: {
          day.answered++;
          if (auto n = a.last_notified()) {
            delay_sum += std::chrono::duration<double>(settled - *n).count() / 60.0;
            s.answered_with_delay++;
          }
          break;
        }
        case ActionState::Expired: day.expired++; break;
        case ActionState::Skipped: day.skipped++; break;
        default: break;
      }
    }
  }
  for (const auto* r : ltm.scan(store::LtmFilter{participant, {}, {}, store::LtmKind::Sensor})) {
    const Instant t = get_instant(r->payload, "ts");
    if (!range.contains(date_of(t))) continue;
    s.days[date_of(t)].sensor_records[r->payload.at("kind").get<std::string>()]++;
  }
  if (s.answered_with_delay > 0) s.mean_response_delay_minutes = delay_sum / s.answered_with_delay;
  const int sent = s.total_sent();
  s.completion_rate = sent > 0 ? std::min(1.0, static_cast<double>(s.total_answered()) / sent) : 0.0;
  return s;
}

const char* to_string(SeriesMetric m) {
  switch (m) {
    case SeriesMetric::Answered: return "answered";
    case SeriesMetric::Sent: return "sent";
    case SeriesMetric::Expired: return "expired";
    case SeriesMetric::Skipped: return "skipped";
    case SeriesMetric::SensorRecords: return "sensor_records";
  }
  return "?";
}

SeriesMetric parse_series_metric(const std::string& name) {
  for (auto m : {SeriesMetric::Answered, SeriesMetric::Sent, SeriesMetric::Expired, SeriesMetric::Skipped,
                 SeriesMetric::SensorRecords}) {
    if (name == to_string(m)) return m;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown metric '" + name + "'");
}

int day_value(const DayCounts& c, SeriesMetric metric) {
  switch (metric) {
    case SeriesMetric::Answered: return c.answered;
    case SeriesMetric::Sent: return c.sent;
    case SeriesMetric::Expired: return c.expired;
    case SeriesMetric::Skipped: return c.skipped;
    case SeriesMetric::SensorRecords: {
      int n = 0;
      for (const auto& [k, v] : c.sensor_records) n += v;
      return n;
    }
  }
  return 0;
}

Comparison compare(const std::vector<std::string>& participants, SeriesMetric metric, const store::StmState& stm,
                   const store::LtmStore& ltm, const DateRange& range) {
  DateRange r = range;
  for (const auto& [id, p] : stm.plans) {
    if (!range.from) r.from = r.from ? std::min(*r.from, p.start) : p.start;
    if (!range.to) r.to = r.to ? std::max(*r.to, p.end) : p.end;
  }
  if (!r.from || !r.to) throw Error(ErrorCode::InvalidArgument, "comparison needs a date range or a plan");
  if (*r.to < *r.from) throw Error(ErrorCode::InvalidArgument, "comparison range ends before it starts");

  Comparison c;
  c.metric = metric;
  c.first_day = *r.from;
  const auto days = static_cast<std::size_t>((*r.to - *r.from).count());
  for (const auto& id : participants) {
    auto summary = summarize(id, stm, ltm, r);
    Series s{id, id, std::vector<int>(days, 0)};
    for (const auto& [d, counts] : summary.days) s.values[static_cast<std::size_t>((d - *r.from).count())] = day_value(counts, metric);
    c.series.push_back(std::move(s));
  }
  return c;
}

void anonymize(Comparison& comparison, const std::optional<std::string>& keep) {
  int n = 0;
  for (auto& s : comparison.series) {
    if (keep && s.participant == *keep) continue;
    s.label = "P" + std::to_string(++n);
    s.participant = s.label;
  }
}

std::vector<Ranked> rank_participants(const store::StmState& stm, const store::LtmStore& ltm, bool most,
                                      std::size_t limit, const DateRange& range) {
  std::vector<Ranked> out;
  for (const auto& [id, p] : stm.participants) {
    auto s = summarize(id, stm, ltm, range);
    out.push_back(Ranked{id, s.total_answered() + 0.01 * s.total_sensor_records()});
  }
  std::stable_sort(out.begin(), out.end(), [&](const Ranked& a, const Ranked& b) {
    if (a.contribution != b.contribution) return most ? a.contribution > b.contribution : a.contribution < b.contribution;
    return a.participant < b.participant;
  });
  if (out.size() > limit) out.resize(limit);
  return out;
}

double expected_geo_per_day(const std::string& participant, const store::StmState& stm) {
  const plan::Schedule* schedule = stm.schedule(participant);
  if (!schedule) return 0.0;
  std::set<std::string> plans;
  for (const auto& [id, a] : schedule->actions()) plans.insert(a.plan_id);
  double per_day = 0.0;
  for (const auto& pid : plans) {
    auto it = stm.plans.find(pid);
    if (it == stm.plans.end()) continue;
    for (const auto& t : it->second.templates) {
      if (t.kind == plan::TaskKind::Sensor && t.sensor_kind == context::SensorKind::Geo) {
        per_day += static_cast<double>(t.occurrences().size());
      }
    }
  }
  return per_day;
}

namespace {

// Geo cadence of a participant's plans, if any plan collects geo readings.
std::optional<Minutes> geo_cadence(const std::string& participant, const store::StmState& stm,
                                   std::optional<Date>& start, std::optional<Date>& end) {
  const plan::Schedule* schedule = stm.schedule(participant);
  if (!schedule) return std::nullopt;
  std::set<std::string> plans;
  for (const auto& [id, a] : schedule->actions()) plans.insert(a.plan_id);
  std::optional<Minutes> cadence;
  for (const auto& pid : plans) {
    auto it = stm.plans.find(pid);
    if (it == stm.plans.end()) continue;
    for (const auto& t : it->second.templates) {
      if (t.kind != plan::TaskKind::Sensor || t.sensor_kind != context::SensorKind::Geo) continue;
      Minutes c{kMinutesPerDay};
      if (const auto* e = std::get_if<plan::EveryMinutes>(&t.recurrence)) {
        c = Minutes{e->minutes};
      } else {
        auto occ = t.occurrences();
        int widest = occ.empty() ? kMinutesPerDay : occ.front() + kMinutesPerDay - occ.back();
        for (std::size_t i = 1; i < occ.size(); ++i) widest = std::max(widest, occ[i] - occ[i - 1]);
        c = Minutes{widest};
      }
      cadence = cadence ? std::min(*cadence, c) : c;
      start = start ? std::min(*start, it->second.start) : it->second.start;
      end = end ? std::max(*end, it->second.end) : it->second.end;
    }
  }
  return cadence;
}

}  // namespace

std::vector<Alert> evaluate_alert_rules(const store::StmState& stm, const store::LtmStore& ltm, Instant now,
                                        const AlertConfig& config) {
  std::vector<Alert> alerts;
  for (const auto& [participant, record] : stm.participants) {
    // Sensor gaps over the active period [max(plan start, enrolment), min(now, plan end)).
    std::optional<Date> start_day, end_day;
    if (auto cadence = geo_cadence(participant, stm, start_day, end_day)) {
      const auto limit = std::chrono::duration_cast<std::chrono::seconds>(*cadence * config.sensor_gap_factor);
      const Instant active_from = std::max(Instant{*start_day}, record.enrolled_at);
      const Instant active_to = std::min(now, Instant{*end_day});
      std::vector<Instant> times;
      for (const auto* r : ltm.scan(store::LtmFilter{participant, {}, {}, store::LtmKind::Sensor})) {
        if (r->payload.at("kind") != "geo") continue;
        const Instant t = get_instant(r->payload, "ts");
        if (t >= active_from && t <= active_to) times.push_back(t);
      }
      std::sort(times.begin(), times.end());
      Instant prev = active_from;
      auto check = [&](Instant next, bool closed) {
        if (next - prev <= limit) return;
        Alert a;
        a.id = alert_id("sensor_gap", participant, format_instant(prev));
        a.severity = Severity::Warning;
        a.participant = participant;
        a.rule = "sensor_gap";
        a.message = "no geo readings from " + format_instant(prev) + (closed ? " to " + format_instant(next) : "");
        a.raised_at = prev + limit;
        if (closed) a.resolved_at = next;
        alerts.push_back(std::move(a));
      };
      if (active_from < active_to) {
        for (Instant t : times) {
          check(t, true);
          prev = t;
        }
        check(active_to, false);
      }
    }

    const plan::Schedule* schedule = stm.schedule(participant);
    if (!schedule) continue;

    // Response drought over the trailing window.
    int notified = 0, answered = 0;
    std::optional<Instant> first;
    std::map<Date, std::pair<int, int>> per_day;  // notified, expired, by notification day
    for (const auto& [id, a] : schedule->actions()) {
      if (a.kind != plan::TaskKind::Question) continue;
      for (std::size_t i = 0; i < a.history.size(); ++i) {
        const auto& t = a.history[i];
        if (t.at >= now) break;
        if (t.to == ActionState::Notified && t.at >= now - config.drought_window) {
          ++notified;
          first = first ? std::min(*first, t.at) : t.at;
        }
        if (t.to == ActionState::Answered && t.at >= now - config.drought_window) ++answered;
      }
      if (auto n = first_transition(a, ActionState::Notified)) {
        auto& [sent, expired] = per_day[date_of(*n)];
        ++sent;
        if (a.state == ActionState::Expired && a.history.back().at < now) ++expired;
      }
    }
    if (notified >= config.drought_min_notifications && answered == 0) {
      Alert a;
      a.id = alert_id("response_drought", participant, format_instant(*first));
      a.severity = Severity::Warning;
      a.participant = participant;
      a.rule = "response_drought";
      a.message = std::to_string(notified) + " notifications without an answer since " + format_instant(*first);
      a.raised_at = now;
      alerts.push_back(std::move(a));
    }

    // Expiry spikes on completed days.
    for (const auto& [day, counts] : per_day) {
      const Instant day_end = Instant{day + std::chrono::days{1}};
      if (day_end > now) continue;
      const auto [sent, expired] = counts;
      if (sent < config.expiry_spike_min_notified) continue;
      if (static_cast<double>(expired) <= config.expiry_spike_fraction * sent) continue;
      Alert a;
      a.id = alert_id("expiry_spike", participant, format_date(day));
      a.severity = Severity::Warning;
      a.participant = participant;
      a.rule = "expiry_spike";
      a.message = std::to_string(expired) + " of " + std::to_string(sent) + " questions expired on " + format_date(day);
      a.raised_at = day_end;
      alerts.push_back(std::move(a));
    }
  }

  // Answers that reference no known question action.
  for (const auto* r : ltm.scan(store::LtmFilter{{}, {}, now + std::chrono::seconds{1}, store::LtmKind::Answer})) {
    const std::string action_id = r->payload.value("action_id", "");
    const plan::Schedule* schedule = stm.schedule(r->participant);
    const plan::ScheduledAction* action = schedule ? schedule->find(action_id) : nullptr;
    if (action && action->kind == plan::TaskKind::Question) continue;
    Alert a;
    a.id = alert_id("inconsistent_record", r->participant, r->id);
    a.severity = Severity::Critical;
    a.participant = r->participant;
    a.rule = "inconsistent_record";
    a.message = "answer record " + r->id + " references unknown action '" + action_id + "'";
    a.raised_at = r->recorded_at;
    alerts.push_back(std::move(a));
  }

  std::sort(alerts.begin(), alerts.end(), [](const Alert& a, const Alert& b) {
    return a.raised_at != b.raised_at ? a.raised_at < b.raised_at : a.id < b.id;
  });
  return alerts;
}

GoalProgress goal_progress(const Goal& goal, const ParticipantSummary& summary, const GoalContext& context) {
  const Date first = context.today - std::chrono::days{goal.window_days - 1};
  int answered = 0, sensor = 0;
  for (const auto& [day, c] : summary.days) {
    if (day < first || day > context.today) continue;
    answered += c.answered;
    sensor += day_value(c, SeriesMetric::SensorRecords);
  }
  GoalProgress p;
  switch (goal.metric) {
    case GoalMetric::AnswersPerDay:
      p.achieved = static_cast<double>(answered) / goal.window_days;
      p.fraction = std::min(1.0, p.achieved / goal.target);
      p.on_track = p.achieved >= goal.target;
      break;
    case GoalMetric::SensorCoverage: {
      const double expected = context.expected_sensor_records_per_day * goal.window_days;
      p.achieved = expected > 0 ? std::min(1.0, sensor / expected) : 0.0;
      p.fraction = std::min(1.0, p.achieved / goal.target);
      p.on_track = p.achieved >= goal.target;
      break;
    }
    case GoalMetric::ResponseDelay:
      // Delay is not tracked per day, so the whole-summary mean stands in.
      p.achieved = summary.mean_response_delay_minutes;
      if (summary.answered_with_delay == 0) {
        p.fraction = 0.0;
        p.on_track = false;
      } else {
        p.fraction = p.achieved <= goal.target ? 1.0 : goal.target / p.achieved;
        p.on_track = p.achieved <= goal.target;
      }
      break;
  }
  p.fraction = std::clamp(p.fraction, 0.0, 1.0);
  return p;
}

std::vector<DelayRow> delay_series(const store::StmState& stm, const store::LtmStore& ltm,
                                   const std::optional<std::string>& participant) {
  std::map<std::pair<std::string, std::string>, const store::LtmRecord*> answers;
  for (const auto* r : ltm.scan(store::LtmFilter{participant, {}, {}, store::LtmKind::Answer})) {
    answers[{r->participant, r->payload.value("action_id", "")}] = r;
  }
  std::vector<DelayRow> rows;
  for (const auto& [pid, schedule] : stm.schedules) {
    if (participant && pid != *participant) continue;
    for (const auto& [id, a] : schedule.actions()) {
      if (a.state != ActionState::Answered) continue;
      auto notified = a.last_notified();
      if (!notified) continue;
      DelayRow row;
      row.participant = pid;
      row.action_id = id;
      row.notified = *notified;
      row.delay_minutes = std::chrono::duration<double>(*a.state_time - *notified).count() / 60.0;
      row.hour = minute_of_day(*notified) / 60;
      row.weekday = weekday_index(date_of(*notified));
      if (auto it = answers.find({pid, id}); it != answers.end()) {
        auto set = it->second->payload.at("answers").get<context::DiaryAnswerSet>();
        row.activity = set.what;
        row.location = set.where;
        row.mood = set.mood;
        row.companions = static_cast<int>(set.who.size());
      }
      rows.push_back(std::move(row));
    }
  }
  std::sort(rows.begin(), rows.end(), [](const DelayRow& a, const DelayRow& b) {
    return a.notified != b.notified ? a.notified < b.notified : a.participant < b.participant;
  });
  return rows;
}

void to_json(Json& j, const Comparison& c) {
  Json series = Json::array();
  for (const auto& s : c.series) series.push_back(Json{{"participant", s.participant}, {"label", s.label}, {"values", s.values}});
  Json days = Json::array();
  const std::size_t n = c.series.empty() ? 0 : c.series.front().values.size();
  for (std::size_t i = 0; i < n; ++i) days.push_back(format_date(c.first_day + std::chrono::days{static_cast<int>(i)}));
  j = Json{{"metric", to_string(c.metric)}, {"first_day", format_date(c.first_day)}, {"days", days}, {"series", series}};
}

void to_json(Json& j, const Ranked& r) { j = Json{{"participant", r.participant}, {"contribution", r.contribution}}; }

void to_json(Json& j, const DelayRow& r) {
  j = Json{{"participant", r.participant},
           {"action_id", r.action_id},
           {"notified", format_instant(r.notified)},
           {"delay_minutes", r.delay_minutes},
           {"hour", r.hour},
           {"weekday", r.weekday},
           {"activity", optional_json(r.activity)},
           {"location", optional_json(r.location)},
           {"mood", optional_json(r.mood)},
           {"companions", r.companions}};
}

}  // namespace bigthick::monitor
