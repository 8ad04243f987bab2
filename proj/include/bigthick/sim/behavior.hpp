#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bigthick/context/graph.hpp"
#include "bigthick/time.hpp"

namespace bigthick::sim {

/// A weekly block. Activity is one of the busy activities.
struct TimetableEntry {
  int weekday = 0;  // Monday = 0
  ClockTime start;
  ClockTime end;
  std::string activity = "lecture";

  bool operator==(const TimetableEntry&) const = default;
};

struct BehaviorProfile {
  std::string id;
  std::uint64_t seed = 0;  // keys every per-participant draw
  std::vector<TimetableEntry> timetable;
  Date term_start;  // the timetable applies on [term_start, term_end)
  Date term_end;
  double base_answer_probability = 0.85;
  double busy_answer_probability = 0.05;
  /// Answer delay in minutes is 1 + Geometric(p) with this success probability.
  double delay_parameter = 0.3;
  double snooze_propensity = 0.5;
  context::GeoPoint home;
  context::GeoPoint campus;
  std::vector<double> mood_weights;  // over the vocabulary moods, in order

  bool operator==(const BehaviorProfile&) const = default;
};

/// Empty when every invariant holds; otherwise one message per violation.
std::vector<std::string> check_profile(const BehaviorProfile& profile);

struct TimetableTemplate {
  std::string name;
  std::vector<TimetableEntry> entries;
};

struct CohortConfig {
  std::size_t size = 40;
  std::uint64_t seed = 1;
  Date term_start;
  Date term_end;
  std::string id_prefix = "S";
  std::pair<double, double> base_answer_probability{0.75, 0.95};
  std::pair<double, double> busy_answer_probability{0.02, 0.10};
  std::pair<double, double> delay_parameter{0.15, 0.40};
  std::pair<double, double> snooze_propensity{0.3, 0.7};
  int study_blocks = 2;  // extra weekly study_alone blocks per participant
  context::GeoPoint campus = context::GeoPoint::make(46.0669, 11.1503);
  /// Homes fall in this many residential neighbourhoods, each centered
  /// between home_spread_deg / 2 and home_spread_deg from campus.
  int neighbourhoods = 3;
  double home_spread_deg = 0.03;
  /// Empty means the built-in course tracks.
  std::vector<TimetableTemplate> templates;

  /// Throws Error(InvalidArgument).
  void check() const;
};

std::vector<TimetableTemplate> default_templates();

/// Deterministic in the config. Participant i gets template i mod n plus
/// `study_blocks` random non-overlapping study blocks.
std::vector<BehaviorProfile> generate_cohort(const CohortConfig& config);

/// What the participant is doing and where, as vocabulary terms.
struct Whereabouts {
  std::string activity;
  std::string location;

  bool operator==(const Whereabouts&) const = default;
};

/// Ground truth at `t`: the covering timetable block, else sleep before
/// 07:00, meals 12:00-13:00 and 19:00-20:00, else a free activity drawn per
/// hour from the profile seed. Pure in (profile, t).
Whereabouts whereabouts(const BehaviorProfile& profile, Instant t);

bool in_class(const BehaviorProfile& profile, Instant t);

/// Coordinates of a named location for this participant.
context::GeoPoint position(const BehaviorProfile& profile, const std::string& location);

void to_json(nlohmann::json& j, const TimetableEntry& e);
void from_json(const nlohmann::json& j, TimetableEntry& e);
void to_json(nlohmann::json& j, const BehaviorProfile& p);
void from_json(const nlohmann::json& j, BehaviorProfile& p);
void from_json(const nlohmann::json& j, CohortConfig& c);
void to_json(nlohmann::json& j, const CohortConfig& c);

}  // namespace bigthick::sim
