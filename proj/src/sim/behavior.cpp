#include "bigthick/sim/behavior.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bigthick/context/vocabulary.hpp"
#include "bigthick/error.hpp"
#include "bigthick/json_util.hpp"
#include "bigthick/random.hpp"
#include "bigthick/scheduler/labels.hpp"

namespace bigthick::sim {

namespace {

TimetableEntry block(int weekday, const char* start, const char* end, const char* activity = "lecture") {
  return TimetableEntry{weekday, parse_clock(start), parse_clock(end), activity};
}

bool overlaps(const TimetableEntry& a, const TimetableEntry& b) {
  return a.weekday == b.weekday && a.start < b.end && b.start < a.end;
}

bool in_unit(double p) { return p >= 0.0 && p <= 1.0; }

void check_range(const std::pair<double, double>& r, const char* name) {
  if (!in_unit(r.first) || !in_unit(r.second) || r.first > r.second) {
    throw Error(ErrorCode::InvalidArgument, std::string(name) + " must be an ordered range within [0, 1]");
  }
}

std::string participant_id(const std::string& prefix, std::size_t index, std::size_t size) {
  const std::size_t width = std::max<std::size_t>(2, std::to_string(size).size());
  auto n = std::to_string(index + 1);
  return prefix + std::string(width - n.size(), '0') + n;
}

struct FreeChoice {
  double weight;
  const char* activity;
  const char* location;
};

constexpr FreeChoice kFree[] = {
    {0.30, "resting", "sitting room"}, {0.25, "social_media", "sitting room"}, {0.10, "housework", "kitchen"},
    {0.10, "sport", "gym"},            {0.10, "shopping", "shop"},             {0.15, "travelling", "street"},
};

context::GeoPoint offset(const context::GeoPoint& p, double dlat, double dlon) {
  return context::GeoPoint::make(p.latitude + dlat, p.longitude + dlon);
}

}  // namespace

std::vector<std::string> check_profile(const BehaviorProfile& p) {
  std::vector<std::string> out;
  if (p.id.empty()) out.push_back("empty participant id");
  if (!in_unit(p.base_answer_probability)) out.push_back("base answer probability outside [0, 1]");
  if (!in_unit(p.busy_answer_probability)) out.push_back("busy answer probability outside [0, 1]");
  if (!(p.busy_answer_probability < p.base_answer_probability)) {
    out.push_back("busy answer probability must be below the base probability");
  }
  if (!(p.delay_parameter > 0.0 && p.delay_parameter <= 1.0)) out.push_back("delay parameter outside (0, 1]");
  if (!in_unit(p.snooze_propensity)) out.push_back("snooze propensity outside [0, 1]");
  if (p.term_end < p.term_start) out.push_back("term ends before it starts");
  for (std::size_t i = 0; i < p.timetable.size(); ++i) {
    const auto& e = p.timetable[i];
    if (e.weekday < 0 || e.weekday > 6) out.push_back("timetable weekday out of range");
    if (!(e.start.minute >= 0 && e.start < e.end && e.end.minute <= kMinutesPerDay)) {
      out.push_back("timetable block " + format_clock(e.start) + "-" + format_clock(e.end) + " is empty or out of range");
    }
    if (!scheduler::is_busy_activity(e.activity)) out.push_back("timetable activity '" + e.activity + "' is not busy");
    for (std::size_t j = i + 1; j < p.timetable.size(); ++j) {
      if (overlaps(e, p.timetable[j])) {
        out.push_back("timetable blocks overlap on weekday " + std::to_string(e.weekday) + " at " + format_clock(e.start));
      }
    }
  }
  double total = 0.0;
  for (double w : p.mood_weights) {
    if (!(w >= 0.0)) out.push_back("negative mood weight");
    total += w;
  }
  if (!(total > 0.0)) out.push_back("mood weights must have a positive sum");
  return out;
}

void CohortConfig::check() const {
  if (term_end < term_start) throw Error(ErrorCode::InvalidArgument, "term ends before it starts");
  check_range(base_answer_probability, "base_answer_probability");
  check_range(busy_answer_probability, "busy_answer_probability");
  check_range(snooze_propensity, "snooze_propensity");
  check_range(delay_parameter, "delay_parameter");
  if (!(delay_parameter.first > 0.0)) throw Error(ErrorCode::InvalidArgument, "delay_parameter must be positive");
  if (!(busy_answer_probability.second < base_answer_probability.first)) {
    throw Error(ErrorCode::InvalidArgument, "busy answer probabilities must lie below the base range");
  }
  if (study_blocks < 0 || study_blocks > 10) throw Error(ErrorCode::InvalidArgument, "study_blocks must be in [0, 10]");
  if (neighbourhoods < 1) throw Error(ErrorCode::InvalidArgument, "neighbourhoods must be positive");
  if (!(home_spread_deg > 0.0 && home_spread_deg < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "home_spread_deg must be in (0, 1)");
  }
  for (const auto& t : templates) {
    BehaviorProfile probe;
    probe.id = t.name;
    probe.timetable = t.entries;
    probe.base_answer_probability = 1.0;
    probe.busy_answer_probability = 0.0;
    probe.mood_weights = {1.0};
    auto problems = check_profile(probe);
    if (!problems.empty()) throw Error(ErrorCode::InvalidArgument, "template '" + t.name + "': " + problems.front());
  }
}

std::vector<TimetableTemplate> default_templates() {
  return {
      {"track-a",
       {block(0, "09:00", "11:00"), block(0, "14:00", "16:00"), block(1, "11:00", "13:00", "study_group"),
        block(2, "09:00", "11:00"), block(3, "14:00", "17:00"), block(4, "10:00", "12:00")}},
      {"track-b",
       {block(0, "11:00", "13:00"), block(1, "09:00", "11:00"), block(1, "15:00", "17:00", "study_group"),
        block(2, "14:00", "16:00"), block(3, "09:00", "12:00"), block(4, "14:00", "16:00")}},
      {"track-c",
       {block(0, "15:00", "17:00"), block(1, "13:00", "15:00"), block(2, "10:00", "12:00", "study_group"),
        block(2, "16:00", "18:00"), block(3, "11:00", "13:00"), block(4, "09:00", "11:00")}},
      {"track-d",
       {block(0, "10:00", "12:00"), block(1, "16:00", "18:00"), block(2, "11:00", "13:00"),
        block(3, "15:00", "17:00", "study_group"), block(4, "11:00", "13:00"), block(4, "15:00", "17:00")}},
  };
}

std::vector<BehaviorProfile> generate_cohort(const CohortConfig& config) {
  config.check();
  const auto templates = config.templates.empty() ? default_templates() : config.templates;
  const auto moods = context::Vocabulary::standard().moods.size();
  std::vector<context::GeoPoint> districts;
  Rng layout(mix_seed(config.seed, 0));
  for (int n = 0; n < config.neighbourhoods; ++n) {
    const double angle = 2.0 * std::numbers::pi * (n + uniform(layout, -0.2, 0.2)) / config.neighbourhoods;
    const double radius = uniform(layout, config.home_spread_deg / 2.0, config.home_spread_deg);
    districts.push_back(offset(config.campus, radius * std::sin(angle), radius * std::cos(angle)));
  }
  const double district_radius = config.home_spread_deg / 8.0;
  std::vector<BehaviorProfile> out;
  out.reserve(config.size);
  for (std::size_t i = 0; i < config.size; ++i) {
    Rng rng(mix_seed(config.seed, i + 1));
    BehaviorProfile p;
    p.id = participant_id(config.id_prefix, i, config.size);
    p.seed = mix_seed(config.seed ^ 0x5EED5EEDULL, i + 1);
    p.term_start = config.term_start;
    p.term_end = config.term_end;
    p.timetable = templates[i % templates.size()].entries;
    for (int added = 0, attempts = 0; added < config.study_blocks && attempts < 200; ++attempts) {
      const int weekday = static_cast<int>(uniform_index(rng, 5));
      const int start = 8 * 60 + 60 * static_cast<int>(uniform_index(rng, 10));
      TimetableEntry e{weekday, ClockTime{start}, ClockTime{start + 120}, "study_alone"};
      if (std::any_of(p.timetable.begin(), p.timetable.end(), [&](const auto& b) { return overlaps(b, e); })) continue;
      p.timetable.push_back(e);
      ++added;
    }
    std::sort(p.timetable.begin(), p.timetable.end(), [](const auto& a, const auto& b) {
      return a.weekday != b.weekday ? a.weekday < b.weekday : a.start < b.start;
    });
    p.base_answer_probability = uniform(rng, config.base_answer_probability.first, config.base_answer_probability.second);
    p.busy_answer_probability = uniform(rng, config.busy_answer_probability.first, config.busy_answer_probability.second);
    p.delay_parameter = uniform(rng, config.delay_parameter.first, config.delay_parameter.second);
    p.snooze_propensity = uniform(rng, config.snooze_propensity.first, config.snooze_propensity.second);
    p.campus = config.campus;
    const auto& district = districts[uniform_index(rng, districts.size())];
    p.home = offset(district, uniform(rng, -district_radius, district_radius), uniform(rng, -district_radius, district_radius));
    for (std::size_t m = 0; m < moods; ++m) p.mood_weights.push_back(uniform(rng, 0.2, 1.0));
    out.push_back(std::move(p));
  }
  return out;
}

Whereabouts whereabouts(const BehaviorProfile& p, Instant t) {
  const Date day = date_of(t);
  const int minute = minute_of_day(t);
  if (day >= p.term_start && day < p.term_end) {
    const int weekday = weekday_index(day);
    for (const auto& e : p.timetable) {
      if (e.weekday == weekday && minute >= e.start.minute && minute < e.end.minute) {
        return {e.activity, e.activity == "lecture" ? "lecture hall" : "library"};
      }
    }
  }
  if (minute < 7 * 60) return {"sleeping", "bedroom"};
  if ((minute >= 12 * 60 && minute < 13 * 60) || (minute >= 19 * 60 && minute < 20 * 60)) return {"eating", "kitchen"};
  const auto day_number = static_cast<std::uint64_t>(day.time_since_epoch().count());
  double u = keyed_uniform(p.seed, day_number, static_cast<std::uint64_t>(minute / 60), 0x46524545ULL);
  for (const auto& c : kFree) {
    if (u < c.weight) return {c.activity, c.location};
    u -= c.weight;
  }
  return {kFree[0].activity, kFree[0].location};
}

bool in_class(const BehaviorProfile& profile, Instant t) {
  return scheduler::is_busy_activity(whereabouts(profile, t).activity);
}

context::GeoPoint position(const BehaviorProfile& p, const std::string& location) {
  if (location == "lecture hall" || location == "campus") return p.campus;
  if (location == "library") return offset(p.campus, 0.0020, 0.0010);
  if (location == "canteen") return offset(p.campus, -0.0010, 0.0020);
  if (location == "gym") {
    return offset(p.home, keyed_uniform(p.seed, 1) * 0.02 - 0.01, keyed_uniform(p.seed, 2) * 0.02 - 0.01);
  }
  if (location == "shop") {
    return offset(p.home, keyed_uniform(p.seed, 3) * 0.02 - 0.01, keyed_uniform(p.seed, 4) * 0.02 - 0.01);
  }
  if (location == "street") {
    return context::GeoPoint::make((p.home.latitude + p.campus.latitude) / 2, (p.home.longitude + p.campus.longitude) / 2);
  }
  return p.home;
}

// ---- json ----

namespace {

Json point_json(const context::GeoPoint& p) { return Json::array({p.latitude, p.longitude}); }

context::GeoPoint point_from(const Json& j) { return context::GeoPoint::make(j.at(0).get<double>(), j.at(1).get<double>()); }

Json range_json(const std::pair<double, double>& r) { return Json::array({r.first, r.second}); }

void read_range(const Json& j, const char* key, std::pair<double, double>& r) {
  if (!j.contains(key)) return;
  r = {j.at(key).at(0).get<double>(), j.at(key).at(1).get<double>()};
}

}  // namespace

void to_json(Json& j, const TimetableEntry& e) {
  j = Json{{"weekday", e.weekday}, {"start", format_clock(e.start)}, {"end", format_clock(e.end)}, {"activity", e.activity}};
}

void from_json(const Json& j, TimetableEntry& e) {
  e.weekday = j.at("weekday").get<int>();
  e.start = parse_clock(j.at("start").get<std::string>());
  e.end = parse_clock(j.at("end").get<std::string>());
  e.activity = j.value("activity", "lecture");
}

void to_json(Json& j, const BehaviorProfile& p) {
  j = Json{{"id", p.id},
           {"seed", p.seed},
           {"timetable", p.timetable},
           {"term_start", format_date(p.term_start)},
           {"term_end", format_date(p.term_end)},
           {"base_answer_probability", p.base_answer_probability},
           {"busy_answer_probability", p.busy_answer_probability},
           {"delay_parameter", p.delay_parameter},
           {"snooze_propensity", p.snooze_propensity},
           {"home", point_json(p.home)},
           {"campus", point_json(p.campus)},
           {"mood_weights", p.mood_weights}};
}

void from_json(const Json& j, BehaviorProfile& p) {
  p.id = j.at("id").get<std::string>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.timetable = j.at("timetable").get<std::vector<TimetableEntry>>();
  p.term_start = parse_date(j.at("term_start").get<std::string>());
  p.term_end = parse_date(j.at("term_end").get<std::string>());
  p.base_answer_probability = j.at("base_answer_probability").get<double>();
  p.busy_answer_probability = j.at("busy_answer_probability").get<double>();
  p.delay_parameter = j.at("delay_parameter").get<double>();
  p.snooze_propensity = j.at("snooze_propensity").get<double>();
  p.home = point_from(j.at("home"));
  p.campus = point_from(j.at("campus"));
  p.mood_weights = j.at("mood_weights").get<std::vector<double>>();
}

void to_json(Json& j, const CohortConfig& c) {
  Json templates = Json::array();
  for (const auto& t : c.templates) templates.push_back(Json{{"name", t.name}, {"entries", t.entries}});
  j = Json{{"size", c.size},
           {"seed", c.seed},
           {"term_start", format_date(c.term_start)},
           {"term_end", format_date(c.term_end)},
           {"id_prefix", c.id_prefix},
           {"base_answer_probability", range_json(c.base_answer_probability)},
           {"busy_answer_probability", range_json(c.busy_answer_probability)},
           {"delay_parameter", range_json(c.delay_parameter)},
           {"snooze_propensity", range_json(c.snooze_propensity)},
           {"study_blocks", c.study_blocks},
           {"campus", point_json(c.campus)},
           {"neighbourhoods", c.neighbourhoods},
           {"home_spread_deg", c.home_spread_deg},
           {"templates", templates}};
}

void from_json(const Json& j, CohortConfig& c) {
  c = CohortConfig{};
  c.size = j.value("size", c.size);
  c.seed = j.value("seed", c.seed);
  c.term_start = parse_date(j.at("term_start").get<std::string>());
  c.term_end = parse_date(j.at("term_end").get<std::string>());
  c.id_prefix = j.value("id_prefix", c.id_prefix);
  read_range(j, "base_answer_probability", c.base_answer_probability);
  read_range(j, "busy_answer_probability", c.busy_answer_probability);
  read_range(j, "delay_parameter", c.delay_parameter);
  read_range(j, "snooze_propensity", c.snooze_propensity);
  c.study_blocks = j.value("study_blocks", c.study_blocks);
  if (j.contains("campus")) c.campus = point_from(j.at("campus"));
  c.neighbourhoods = j.value("neighbourhoods", c.neighbourhoods);
  c.home_spread_deg = j.value("home_spread_deg", c.home_spread_deg);
  if (j.contains("templates")) {
    for (const auto& t : j.at("templates")) {
      c.templates.push_back(TimetableTemplate{t.at("name").get<std::string>(), t.at("entries").get<std::vector<TimetableEntry>>()});
    }
  }
}

}  // namespace bigthick::sim
