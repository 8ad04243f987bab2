#include "bigthick/sim/simulation.hpp"

#include <algorithm>
#include <cmath>

#include "bigthick/context/vocabulary.hpp"
#include "bigthick/error.hpp"
#include "bigthick/hash.hpp"
#include "bigthick/json_util.hpp"
#include "bigthick/random.hpp"
#include "bigthick/scheduler/labels.hpp"

namespace bigthick::sim {

namespace {

enum Draw : std::uint64_t { kAnswer = 1, kSnooze, kDelay, kMood, kCompany, kJitterLat, kJitterLon };

constexpr const char* kFriends[] = {"Peter", "Anna", "Marco", "Giulia", "Luca", "Sara"};

std::uint64_t minute_number(Instant t) {
  return static_cast<std::uint64_t>(std::chrono::floor<Minutes>(t.time_since_epoch()).count());
}

SimEvent make_event(Instant t, const std::string& participant, SimEventKind kind, std::string action_id = {}) {
  SimEvent e;
  e.time = t;
  e.participant = participant;
  e.kind = kind;
  e.action_id = std::move(action_id);
  return e;
}

/// 1 + Geometric(q) minutes by inversion.
int answer_delay(double q, double u) {
  if (q >= 1.0) return 1;
  return 1 + static_cast<int>(std::floor(std::log1p(-u) / std::log1p(-q)));
}

}  // namespace

const char* to_string(SimEventKind kind) {
  switch (kind) {
    case SimEventKind::ActivityChange: return "activity_change";
    case SimEventKind::Notified: return "notified";
    case SimEventKind::Answered: return "answered";
    case SimEventKind::Snoozed: return "snoozed";
    case SimEventKind::Ignored: return "ignored";
    case SimEventKind::SensorEmitted: return "sensor_emitted";
  }
  return "unknown";
}

void to_json(Json& j, const SimEvent& e) {
  j = Json{{"time", format_instant(e.time)}, {"participant", e.participant}, {"kind", to_string(e.kind)}};
  switch (e.kind) {
    case SimEventKind::ActivityChange:
      j["activity"] = e.whereabouts.activity;
      j["location"] = e.whereabouts.location;
      break;
    case SimEventKind::SensorEmitted: j["readings"] = e.batch->readings; break;
    case SimEventKind::Answered:
      j["action_id"] = e.action_id;
      j["answers"] = *e.answers;
      break;
    case SimEventKind::Snoozed:
      j["action_id"] = e.action_id;
      j["minutes"] = e.snooze.count();
      break;
    default: j["action_id"] = e.action_id; break;
  }
}

Simulation::Simulation(std::vector<BehaviorProfile> cohort, Instant start, SimOptions options)
    : cohort_(std::move(cohort)), now_(std::chrono::floor<Minutes>(start)), options_(options) {
  if (options_.geo_every_minutes < 1) throw Error(ErrorCode::InvalidArgument, "geo cadence must be positive");
  std::sort(cohort_.begin(), cohort_.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < cohort_.size(); ++i) {
    auto problems = check_profile(cohort_[i]);
    if (!problems.empty()) throw Error(ErrorCode::InvalidArgument, cohort_[i].id + ": " + problems.front());
    if (!index_.emplace(cohort_[i].id, i).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate participant '" + cohort_[i].id + "'");
    }
  }
  state_.resize(cohort_.size());
}

const BehaviorProfile& Simulation::profile(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw Error(ErrorCode::NotFound, "unknown participant '" + id + "'");
  return cohort_[it->second];
}

void Simulation::deliver(const std::string& participant, const std::string& action_id, Instant expires_at) {
  auto it = index_.find(participant);
  if (it == index_.end()) throw Error(ErrorCode::NotFound, "unknown participant '" + participant + "'");
  state_[it->second].inbox.push_back(Delivery{action_id, expires_at});
}

context::DiaryAnswerSet Simulation::answer_for(const BehaviorProfile& p, const std::string& action_id,
                                               Instant notified, Instant at) const {
  const auto key = mix_seed(options_.seed, p.seed);
  const auto action = fnv1a64(action_id);
  const auto w = whereabouts(p, at);
  context::DiaryAnswerSet a;
  a.what = w.activity;
  a.where = w.location;
  a.notification_time = notified;
  a.answer_time = at;

  const auto& moods = context::Vocabulary::standard().moods;
  double total = 0.0;
  for (double x : p.mood_weights) total += x;
  double u = keyed_uniform(key, action, minute_number(at), kMood) * total;
  for (std::size_t m = 0; m < p.mood_weights.size() && m < moods.size(); ++m) {
    if (u < p.mood_weights[m] || m + 1 == p.mood_weights.size()) {
      a.mood = moods[m];
      break;
    }
    u -= p.mood_weights[m];
  }

  const double company = keyed_uniform(key, action, minute_number(at), kCompany);
  if (w.activity == "lecture" || w.activity == "study_group") {
    a.who = {"classmates"};
    a.objects = {w.activity == "lecture" ? "notebook" : "laptop"};
  } else if (w.activity == "study_alone") {
    a.objects = {"book", "laptop"};
  } else if (w.activity == "eating") {
    if (company < 0.5) a.who = {"family"};
    a.objects = {"plate"};
  } else {
    if (company < 0.3) a.who = {kFriends[static_cast<std::size_t>(company / 0.05) % 6]};
    if (w.activity == "social_media") a.objects = {"phone"};
  }
  return a;
}

std::vector<SimEvent> Simulation::step() {
  std::vector<SimEvent> out;
  const Instant t = now_;
  const auto minute = minute_number(t);
  for (std::size_t i = 0; i < cohort_.size(); ++i) {
    const auto& p = cohort_[i];
    auto& s = state_[i];
    const auto key = mix_seed(options_.seed, p.seed);
    const auto w = whereabouts(p, t);
    if (!s.last || *s.last != w) {
      auto e = make_event(t, p.id, SimEventKind::ActivityChange);
      e.whereabouts = w;
      out.push_back(std::move(e));
      s.last = w;
    }

    if (minute_of_day(t) % options_.geo_every_minutes == 0) {
      const auto at = position(p, w.location);
      const double dlat = (keyed_uniform(key, minute, kJitterLat) - 0.5) * 4e-4;
      const double dlon = (keyed_uniform(key, minute, kJitterLon) - 0.5) * 4e-4;
      auto e = make_event(t, p.id, SimEventKind::SensorEmitted);
      e.batch = context::SensorBatch{
          p.id, {context::SensorReading{t, context::GeoPoint::make(at.latitude + dlat, at.longitude + dlon)}}};
      out.push_back(std::move(e));
    }

    for (const auto& d : s.inbox) {
      out.push_back(make_event(t, p.id, SimEventKind::Notified, d.action_id));
      const auto action = fnv1a64(d.action_id);
      const bool busy = scheduler::is_busy_activity(w.activity);
      const double p_answer = busy ? p.busy_answer_probability : p.base_answer_probability;
      if (keyed_uniform(key, action, minute, kAnswer) < p_answer) {
        const Instant at = t + Minutes{answer_delay(p.delay_parameter, keyed_uniform(key, action, minute, kDelay))};
        if (at <= d.expires_at) {
          auto pos = std::upper_bound(s.answers.begin(), s.answers.end(), at,
                                      [](Instant x, const PendingAnswer& a) { return x < a.at; });
          s.answers.insert(pos, PendingAnswer{at, d.action_id, t});
          continue;
        }
      } else if (busy && keyed_uniform(key, action, minute, kSnooze) < p.snooze_propensity) {
        auto e = make_event(t, p.id, SimEventKind::Snoozed, d.action_id);
        e.snooze = options_.snooze;
        out.push_back(std::move(e));
        continue;
      }
      out.push_back(make_event(t, p.id, SimEventKind::Ignored, d.action_id));
    }
    s.inbox.clear();

    std::size_t done = 0;
    for (; done < s.answers.size() && s.answers[done].at <= t; ++done) {
      const auto& a = s.answers[done];
      auto e = make_event(t, p.id, SimEventKind::Answered, a.action_id);
      e.answers = answer_for(p, a.action_id, a.notified, t);
      out.push_back(std::move(e));
    }
    s.answers.erase(s.answers.begin(), s.answers.begin() + static_cast<std::ptrdiff_t>(done));
  }
  now_ += Minutes{1};
  return out;
}

}  // namespace bigthick::sim
