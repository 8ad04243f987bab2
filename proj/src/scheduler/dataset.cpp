#include "bigthick/scheduler/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "bigthick/error.hpp"
#include "bigthick/scheduler/labels.hpp"
#include "bigthick/store/stm.hpp"

namespace bigthick::scheduler {

std::vector<LabeledRow> build_training_rows(const store::StmState& stm, const HistoryIndex& history,
                                            const context::Vocabulary& vocabulary, const FeatureSchema& schema,
                                            const LabelOptions& options) {
  std::vector<LabeledRow> rows;
  auto admit = [&](Instant t) { return !options.before || t < *options.before; };
  auto add = [&](const std::string& participant, Instant at, int y) {
    rows.push_back(LabeledRow{participant, at, extract_features(history, participant, at, schema), y});
  };

  for (const auto& participant : history.participants()) {
    for (const auto& a : history.answers(participant)) {
      if (!admit(a.at) || !a.answers.what) continue;
      add(participant, a.answers.notification_time.value_or(a.at), encode_label(vocabulary, *a.answers.what));
    }
  }
  if (options.snoozes_are_busy) {
    for (const auto& r : stm.replans) {
      if (!std::holds_alternative<plan::Snooze>(r.request.op) || !admit(r.request.requested_at)) continue;
      const auto* schedule = stm.schedule(r.request.participant);
      const auto* action = schedule ? schedule->find(r.request.action_id) : nullptr;
      if (action && action->kind == plan::TaskKind::Question) add(r.request.participant, r.request.requested_at, 1);
    }
  }
  if (options.expiries_are_busy) {
    for (const auto& [participant, schedule] : stm.schedules) {
      for (const auto& [id, action] : schedule.actions()) {
        if (action.kind != plan::TaskKind::Question) continue;
        if (action.state != plan::ActionState::Expired || action.history.empty()) continue;
        if (!admit(action.history.back().at)) continue;
        if (auto notified = action.last_notified()) add(participant, *notified, 1);
      }
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const LabeledRow& a, const LabeledRow& b) {
    return a.at != b.at ? a.at < b.at : a.participant < b.participant;
  });
  return rows;
}

FeatureSchema fit_schema(const HistoryIndex& history, const context::Vocabulary& vocabulary, int clusters,
                         std::uint64_t seed, bool demographics, int traits) {
  FeatureSchema s;
  s.centroids = cluster_locations(history.all_geo(), clusters, seed);
  s.moods = vocabulary.moods;
  s.demographics = demographics;
  s.traits = traits;
  return s;
}

Split chronological_split(std::vector<LabeledRow> rows, double train_fraction, bool per_participant) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "train fraction must be in (0, 1)");
  }
  auto by_time = [](const LabeledRow& a, const LabeledRow& b) {
    return a.at != b.at ? a.at < b.at : a.participant < b.participant;
  };
  std::stable_sort(rows.begin(), rows.end(), by_time);
  Split split;
  auto cut = [&](std::size_t n) { return static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n))); };
  if (!per_participant) {
    const std::size_t k = cut(rows.size());
    split.train.assign(rows.begin(), rows.begin() + static_cast<long>(k));
    split.test.assign(rows.begin() + static_cast<long>(k), rows.end());
    return split;
  }
  std::map<std::string, std::vector<const LabeledRow*>> groups;
  for (const auto& r : rows) groups[r.participant].push_back(&r);
  for (const auto& [p, group] : groups) {
    const std::size_t k = cut(group.size());
    for (std::size_t i = 0; i < group.size(); ++i) (i < k ? split.train : split.test).push_back(*group[i]);
  }
  std::stable_sort(split.train.begin(), split.train.end(), by_time);
  std::stable_sort(split.test.begin(), split.test.end(), by_time);
  return split;
}

Dataset to_dataset(const std::vector<LabeledRow>& rows) {
  Dataset out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(Example{r.x, r.y});
  return out;
}

}  // namespace bigthick::scheduler
