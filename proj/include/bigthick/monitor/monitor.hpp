#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bigthick/monitor/types.hpp"
#include "bigthick/store/ltm.hpp"
#include "bigthick/store/stm.hpp"

namespace bigthick::monitor {

/// Half-open date range; absent ends are unbounded.
struct DateRange {
  std::optional<Date> from;
  std::optional<Date> to;
  bool contains(Date d) const { return (!from || d >= *from) && (!to || d < *to); }
};

/// Question counts are dated by the transition that produced them: sent on the
/// first notification, answered/expired/skipped on settlement. Sensor records
/// are dated by reading time. Completion = answered / sent.
ParticipantSummary summarize(const std::string& participant, const store::StmState& stm,
                             const store::LtmStore& ltm, const DateRange& range = {});

enum class SeriesMetric { Answered, Sent, Expired, Skipped, SensorRecords };

const char* to_string(SeriesMetric m);
SeriesMetric parse_series_metric(const std::string& name);
int day_value(const DayCounts& counts, SeriesMetric metric);

struct Series {
  std::string participant;
  std::string label;  // participant id, or an anonymized alias
  std::vector<int> values;
};

struct Comparison {
  SeriesMetric metric = SeriesMetric::Answered;
  Date first_day;  // day index 0
  std::vector<Series> series;
};

/// Daily series over [from, to) aligned on the day index; days without data
/// are 0. The default range spans every plan in the store.
Comparison compare(const std::vector<std::string>& participants, SeriesMetric metric, const store::StmState& stm,
                   const store::LtmStore& ltm, const DateRange& range = {});

/// Replaces every label except `keep` with P1, P2, ... in series order.
void anonymize(Comparison& comparison, const std::optional<std::string>& keep);

struct Ranked {
  std::string participant;
  double contribution = 0.0;
};

/// Contribution = answered questions + 0.01 * sensor records. Ties go to the
/// smaller participant id.
std::vector<Ranked> rank_participants(const store::StmState& stm, const store::LtmStore& ltm, bool most,
                                      std::size_t limit, const DateRange& range = {});

struct AlertConfig {
  double sensor_gap_factor = 2.0;  // times the geo cadence
  Minutes drought_window{24 * 60};
  int drought_min_notifications = 3;
  double expiry_spike_fraction = 0.5;
  int expiry_spike_min_notified = 2;
};

/// Pure function of (stores, now). Ids are content hashes, so repeated
/// evaluation yields the same alerts. Results are ordered by (raised_at, id).
std::vector<Alert> evaluate_alert_rules(const store::StmState& stm, const store::LtmStore& ltm, Instant now,
                                        const AlertConfig& config = {});

struct GoalContext {
  Date today;
  double expected_sensor_records_per_day = 0.0;
};

/// Progress over the goal's trailing window ending at `today` (inclusive).
///   answers_per_day: mean answered per day against the target.
///   sensor_coverage: records over expected records, target in (0, 1].
///   response_delay:  lower is better; fraction = target / mean delay.
GoalProgress goal_progress(const Goal& goal, const ParticipantSummary& summary, const GoalContext& context);

/// Geo readings expected per day from the participant's plan sensor templates.
double expected_geo_per_day(const std::string& participant, const store::StmState& stm);

struct DelayRow {
  std::string participant;
  std::string action_id;
  Instant notified;
  double delay_minutes = 0.0;
  int hour = 0;
  int weekday = 0;
  std::optional<std::string> activity;
  std::optional<std::string> location;
  std::optional<std::string> mood;
  int companions = 0;
};

/// Answered questions joined with their diary answers, for relating response
/// time to context. No statistics are computed.
std::vector<DelayRow> delay_series(const store::StmState& stm, const store::LtmStore& ltm,
                                   const std::optional<std::string>& participant = std::nullopt);

void to_json(nlohmann::json& j, const Comparison& c);
void to_json(nlohmann::json& j, const Ranked& r);
void to_json(nlohmann::json& j, const DelayRow& r);

}  // namespace bigthick::monitor
