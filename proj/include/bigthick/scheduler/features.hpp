#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bigthick/context/graph.hpp"
#include "bigthick/context/snapshot.hpp"
#include "bigthick/context/vocabulary.hpp"
#include "bigthick/time.hpp"

namespace bigthick::store {
struct StmState;
class LtmStore;
}  // namespace bigthick::store

namespace bigthick::scheduler {

/// Which slots a feature vector carries, in this fixed order:
///   hour_sin, hour_cos, weekday_0..6            (time)
///   loc_0..loc_{k-1}, loc_unknown              (location)
///   companion                                   (companion)
///   response_rate                               (response_rate)
///   mood                                        (mood)
///   gender, department                          (demographics)
///   trait_0..trait_{n-1}                        (traits)
struct FeatureSchema {
  bool time = true;
  bool location = true;
  bool companion = true;
  bool response_rate = true;
  bool mood = true;
  bool demographics = false;
  int traits = 0;

  std::vector<context::GeoPoint> centroids;  // location clusters
  std::vector<std::string> moods;            // mood index = position here
  Minutes response_window{48 * 60};
  Minutes geo_max_age{60};
  Minutes answer_max_age{180};

  std::vector<std::string> names() const;
  std::size_t dimension() const { return names().size(); }
  bool operator==(const FeatureSchema&) const = default;

  /// Time slots only; usable for any future instant.
  static FeatureSchema time_only();
};

void to_json(nlohmann::json& j, const FeatureSchema& s);
void from_json(const nlohmann::json& j, FeatureSchema& s);

struct Profile {
  std::optional<int> gender;
  std::optional<int> department;
  std::vector<double> traits;
};

struct NotificationRecord {
  Instant notified;
  std::optional<Instant> answered;
};

struct AnswerRecord {
  Instant at;
  context::DiaryAnswerSet answers;
};

struct GeoRecord {
  Instant at;
  context::GeoPoint point;
};

/// Per-participant history in time order, read from both stores. Queries only
/// look at records strictly before the query instant.
class HistoryIndex {
 public:
  static HistoryIndex from_stores(const store::StmState& stm, const store::LtmStore& ltm);

  void add_notification(const std::string& participant, NotificationRecord record);
  void add_answer(const std::string& participant, AnswerRecord record);
  void add_geo(const std::string& participant, GeoRecord record);
  void set_profile(const std::string& participant, Profile profile);
  /// Sorts every series; call once after the last add.
  void finalize();

  /// Answered / notified over notifications in [at - window, at); answers
  /// count only when they arrived before `at`. nullopt with no notifications.
  std::optional<double> response_rate(const std::string& participant, Instant at, Minutes window) const;
  const GeoRecord* last_geo(const std::string& participant, Instant at, Minutes max_age) const;
  const AnswerRecord* last_answer(const std::string& participant, Instant at, Minutes max_age) const;
  const Profile* profile(const std::string& participant) const;
  /// Every answer of `participant` in time order.
  const std::vector<AnswerRecord>& answers(const std::string& participant) const;

  std::vector<context::GeoPoint> all_geo() const;
  std::vector<std::string> participants() const;

 private:
  std::map<std::string, std::vector<NotificationRecord>> notifications_;
  std::map<std::string, std::vector<AnswerRecord>> answers_;
  std::map<std::string, std::vector<GeoRecord>> geo_;
  std::map<std::string, Profile> profiles_;
};

/// Deterministic k-means: `restarts` seeded k-means++ starts with Lloyd
/// iterations each; the lowest-inertia result wins.
std::vector<context::GeoPoint> cluster_locations(const std::vector<context::GeoPoint>& points, int k,
                                                 std::uint64_t seed, int iterations = 50, int restarts = 5);

/// Builds the vector for `participant` at `at`. Total: absent data gives the
/// neutral values (response rate 0.5, mood -1, the unknown location slot).
std::vector<double> extract_features(const HistoryIndex& history, const std::string& participant, Instant at,
                                     const FeatureSchema& schema);

/// Time slots only, for schemas where every other slot is disabled.
std::vector<double> time_features(Instant at);

}  // namespace bigthick::scheduler
