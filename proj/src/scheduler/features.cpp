#include "bigthick/scheduler/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "bigthick/json_util.hpp"
#include "bigthick/random.hpp"
#include "bigthick/store/ltm.hpp"
#include "bigthick/store/stm.hpp"

namespace bigthick::scheduler {

std::vector<std::string> FeatureSchema::names() const {
  std::vector<std::string> out;
  if (time) {
    out.push_back("hour_sin");
    out.push_back("hour_cos");
    for (int d = 0; d < 7; ++d) out.push_back("weekday_" + std::to_string(d));
  }
  if (location) {
    for (std::size_t c = 0; c < centroids.size(); ++c) out.push_back("loc_" + std::to_string(c));
    out.push_back("loc_unknown");
  }
  if (companion) out.push_back("companion");
  if (response_rate) out.push_back("response_rate");
  if (mood) out.push_back("mood");
  if (demographics) {
    out.push_back("gender");
    out.push_back("department");
  }
  for (int t = 0; t < traits; ++t) out.push_back("trait_" + std::to_string(t));
  return out;
}

FeatureSchema FeatureSchema::time_only() {
  FeatureSchema s;
  s.location = s.companion = s.response_rate = s.mood = s.demographics = false;
  s.traits = 0;
  return s;
}

void to_json(Json& j, const FeatureSchema& s) {
  Json centroids = Json::array();
  for (const auto& c : s.centroids) centroids.push_back(Json::array({c.latitude, c.longitude}));
  j = Json{{"time", s.time},
           {"location", s.location},
           {"companion", s.companion},
           {"response_rate", s.response_rate},
           {"mood", s.mood},
           {"demographics", s.demographics},
           {"traits", s.traits},
           {"centroids", centroids},
           {"moods", s.moods},
           {"response_window_minutes", s.response_window.count()},
           {"geo_max_age_minutes", s.geo_max_age.count()},
           {"answer_max_age_minutes", s.answer_max_age.count()},
           {"names", s.names()}};
}

void from_json(const Json& j, FeatureSchema& s) {
  s.time = j.at("time").get<bool>();
  s.location = j.at("location").get<bool>();
  s.companion = j.at("companion").get<bool>();
  s.response_rate = j.at("response_rate").get<bool>();
  s.mood = j.at("mood").get<bool>();
  s.demographics = j.at("demographics").get<bool>();
  s.traits = j.at("traits").get<int>();
  s.centroids.clear();
  for (const auto& c : j.at("centroids")) {
    s.centroids.push_back(context::GeoPoint::make(c.at(0).get<double>(), c.at(1).get<double>()));
  }
  s.moods = j.at("moods").get<std::vector<std::string>>();
  s.response_window = Minutes{j.at("response_window_minutes").get<long>()};
  s.geo_max_age = Minutes{j.at("geo_max_age_minutes").get<long>()};
  s.answer_max_age = Minutes{j.at("answer_max_age_minutes").get<long>()};
}

HistoryIndex HistoryIndex::from_stores(const store::StmState& stm, const store::LtmStore& ltm) {
  HistoryIndex index;
  for (const auto& [id, p] : stm.participants) index.set_profile(id, Profile{p.gender, p.department, p.traits});
  for (const auto& [participant, schedule] : stm.schedules) {
    for (const auto& [id, action] : schedule.actions()) {
      if (action.kind != plan::TaskKind::Question) continue;
      const auto& h = action.history;
      for (std::size_t i = 0; i < h.size(); ++i) {
        if (h[i].to != plan::ActionState::Notified) continue;
        NotificationRecord r{h[i].at, std::nullopt};
        if (i + 1 < h.size() && h[i + 1].to == plan::ActionState::Answered) r.answered = h[i + 1].at;
        index.add_notification(participant, r);
      }
    }
  }
  for (const auto& record : ltm.records()) {
    if (record.kind == store::LtmKind::Answer) {
      const auto& p = record.payload;
      AnswerRecord a{record.recorded_at, p.at("answers").get<context::DiaryAnswerSet>()};
      if (auto at = get_optional_instant(p, "at")) a.at = *at;
      index.add_answer(record.participant, std::move(a));
    } else if (record.kind == store::LtmKind::Sensor) {
      auto reading = record.payload.get<context::SensorReading>();
      if (const auto* g = std::get_if<context::GeoPoint>(&reading.value)) {
        index.add_geo(record.participant, GeoRecord{reading.timestamp, *g});
      }
    }
  }
  index.finalize();
  return index;
}

void HistoryIndex::add_notification(const std::string& participant, NotificationRecord record) {
  notifications_[participant].push_back(record);
}

void HistoryIndex::add_answer(const std::string& participant, AnswerRecord record) {
  answers_[participant].push_back(std::move(record));
}

void HistoryIndex::add_geo(const std::string& participant, GeoRecord record) {
  geo_[participant].push_back(record);
}

void HistoryIndex::set_profile(const std::string& participant, Profile profile) {
  profiles_[participant] = std::move(profile);
}

void HistoryIndex::finalize() {
  for (auto& [p, v] : notifications_) {
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.notified < b.notified; });
  }
  for (auto& [p, v] : answers_) {
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.at < b.at; });
  }
  for (auto& [p, v] : geo_) {
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.at < b.at; });
  }
}

namespace {

// Last element of a time-sorted series strictly before `at` and no older than max_age.
template <typename T>
const T* last_before(const std::vector<T>& series, Instant at, Minutes max_age) {
  auto it = std::lower_bound(series.begin(), series.end(), at, [](const T& r, Instant t) { return r.at < t; });
  if (it == series.begin()) return nullptr;
  --it;
  return at - it->at <= max_age ? &*it : nullptr;
}

double squared_distance(const context::GeoPoint& a, const context::GeoPoint& b) {
  const double dl = a.latitude - b.latitude;
  const double dg = a.longitude - b.longitude;
  return dl * dl + dg * dg;
}

std::size_t nearest(const std::vector<context::GeoPoint>& centroids, const context::GeoPoint& p) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    double d = squared_distance(centroids[c], p);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace

std::optional<double> HistoryIndex::response_rate(const std::string& participant, Instant at,
                                                  Minutes window) const {
  auto it = notifications_.find(participant);
  if (it == notifications_.end()) return std::nullopt;
  const auto& v = it->second;
  auto first = std::lower_bound(v.begin(), v.end(), at - window,
                                [](const NotificationRecord& r, Instant t) { return r.notified < t; });
  std::size_t notified = 0, answered = 0;
  for (auto r = first; r != v.end() && r->notified < at; ++r) {
    ++notified;
    if (r->answered && *r->answered < at) ++answered;
  }
  if (notified == 0) return std::nullopt;
  return static_cast<double>(answered) / static_cast<double>(notified);
}

const GeoRecord* HistoryIndex::last_geo(const std::string& participant, Instant at, Minutes max_age) const {
  auto it = geo_.find(participant);
  return it == geo_.end() ? nullptr : last_before(it->second, at, max_age);
}

const AnswerRecord* HistoryIndex::last_answer(const std::string& participant, Instant at, Minutes max_age) const {
  auto it = answers_.find(participant);
  return it == answers_.end() ? nullptr : last_before(it->second, at, max_age);
}

const Profile* HistoryIndex::profile(const std::string& participant) const {
  auto it = profiles_.find(participant);
  return it == profiles_.end() ? nullptr : &it->second;
}

const std::vector<AnswerRecord>& HistoryIndex::answers(const std::string& participant) const {
  static const std::vector<AnswerRecord> none;
  auto it = answers_.find(participant);
  return it == answers_.end() ? none : it->second;
}

std::vector<context::GeoPoint> HistoryIndex::all_geo() const {
  std::vector<context::GeoPoint> out;
  for (const auto& [p, v] : geo_) {
    for (const auto& g : v) out.push_back(g.point);
  }
  return out;
}

std::vector<std::string> HistoryIndex::participants() const {
  std::set<std::string> ids;
  for (const auto& [p, v] : notifications_) ids.insert(p);
  for (const auto& [p, v] : answers_) ids.insert(p);
  for (const auto& [p, v] : geo_) ids.insert(p);
  for (const auto& [p, v] : profiles_) ids.insert(p);
  return {ids.begin(), ids.end()};
}

namespace {

struct Clustering {
  std::vector<context::GeoPoint> centroids;
  double inertia = 0.0;
};

Clustering kmeans_once(const std::vector<context::GeoPoint>& points, int k, Rng& rng, int iterations) {
  Clustering out;
  auto& centroids = out.centroids;
  centroids.push_back(points[uniform_index(rng, points.size())]);
  std::vector<double> d2(points.size());
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = squared_distance(points[i], centroids[nearest(centroids, points[i])]);
      total += d2[i];
    }
    if (total == 0.0) break;  // fewer distinct points than k
    double r = uniform01(rng) * total;
    std::size_t pick = points.size() - 1;
    for (std::size_t i = 0; i < points.size(); ++i) {
      r -= d2[i];
      if (r < 0) {
        pick = i;
        break;
      }
    }
    centroids.push_back(points[pick]);
  }
  std::vector<std::size_t> assign(points.size(), 0);
  for (int it = 0; it < iterations; ++it) {
    bool changed = it == 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      auto c = nearest(centroids, points[i]);
      if (c != assign[i]) changed = true;
      assign[i] = c;
    }
    if (!changed) break;
    std::vector<double> lat(centroids.size(), 0.0), lon(centroids.size(), 0.0);
    std::vector<std::size_t> count(centroids.size(), 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      lat[assign[i]] += points[i].latitude;
      lon[assign[i]] += points[i].longitude;
      ++count[assign[i]];
    }
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      if (count[c] > 0) centroids[c] = context::GeoPoint::make(lat[c] / count[c], lon[c] / count[c]);
    }
  }
  for (const auto& p : points) out.inertia += squared_distance(p, centroids[nearest(centroids, p)]);
  return out;
}

}  // namespace

std::vector<context::GeoPoint> cluster_locations(const std::vector<context::GeoPoint>& points, int k,
                                                 std::uint64_t seed, int iterations, int restarts) {
  if (points.empty() || k <= 0) return {};
  Rng rng(seed);
  Clustering best;
  for (int r = 0; r < std::max(1, restarts); ++r) {
    auto c = kmeans_once(points, k, rng, iterations);
    if (r == 0 || c.inertia < best.inertia) best = std::move(c);
  }
  return best.centroids;
}

std::vector<double> time_features(Instant at) {
  std::vector<double> out(9, 0.0);
  const double hour = minute_of_day(at) / 60.0;
  const double angle = 2.0 * std::numbers::pi * hour / 24.0;
  out[0] = std::sin(angle);
  out[1] = std::cos(angle);
  out[2 + weekday_index(date_of(at))] = 1.0;
  return out;
}

std::vector<double> extract_features(const HistoryIndex& history, const std::string& participant, Instant at,
                                     const FeatureSchema& schema) {
  std::vector<double> out;
  out.reserve(schema.dimension());
  if (schema.time) {
    auto t = time_features(at);
    out.insert(out.end(), t.begin(), t.end());
  }
  const AnswerRecord* answer = history.last_answer(participant, at, schema.answer_max_age);
  if (schema.location) {
    std::vector<double> slots(schema.centroids.size() + 1, 0.0);
    const GeoRecord* geo = history.last_geo(participant, at, schema.geo_max_age);
    if (geo && !schema.centroids.empty()) {
      slots[nearest(schema.centroids, geo->point)] = 1.0;
    } else {
      slots.back() = 1.0;
    }
    out.insert(out.end(), slots.begin(), slots.end());
  }
  if (schema.companion) out.push_back(answer && !answer->answers.who.empty() ? 1.0 : 0.0);
  if (schema.response_rate) {
    out.push_back(history.response_rate(participant, at, schema.response_window).value_or(0.5));
  }
  if (schema.mood) {
    double mood = -1.0;
    if (answer && answer->answers.mood) {
      auto it = std::find(schema.moods.begin(), schema.moods.end(), *answer->answers.mood);
      if (it != schema.moods.end()) mood = static_cast<double>(it - schema.moods.begin());
    }
    out.push_back(mood);
  }
  const Profile* profile = history.profile(participant);
  if (schema.demographics) {
    out.push_back(profile && profile->gender ? *profile->gender : -1.0);
    out.push_back(profile && profile->department ? *profile->department : -1.0);
  }
  for (int t = 0; t < schema.traits; ++t) {
    out.push_back(profile && t < static_cast<int>(profile->traits.size()) ? profile->traits[t] : 0.0);
  }
  return out;
}

}  // namespace bigthick::scheduler
