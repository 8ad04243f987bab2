#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bigthick/context/vocabulary.hpp"
#include "bigthick/scheduler/features.hpp"
#include "bigthick/scheduler/model.hpp"

namespace bigthick::store {
struct StmState;
}

namespace bigthick::scheduler {

struct LabeledRow {
  std::string participant;
  Instant at;
  std::vector<double> x;
  int y = 0;
};

/// Label sources in service data. Answered diary questions are labeled from
/// their activity; snoozes and expiries are weak busy signals.
struct LabelOptions {
  bool snoozes_are_busy = true;
  bool expiries_are_busy = true;
  /// Only events strictly before this instant are used.
  std::optional<Instant> before;
};

/// Rows ordered by (at, participant). Features are taken at the notification
/// (or snooze) instant and use only history before it.
std::vector<LabeledRow> build_training_rows(const store::StmState& stm, const HistoryIndex& history,
                                            const context::Vocabulary& vocabulary, const FeatureSchema& schema,
                                            const LabelOptions& options = {});

/// Full feature schema with location clusters fitted on every geo reading.
FeatureSchema fit_schema(const HistoryIndex& history, const context::Vocabulary& vocabulary, int clusters,
                         std::uint64_t seed, bool demographics = false, int traits = 0);

struct Split {
  std::vector<LabeledRow> train;
  std::vector<LabeledRow> test;
};

/// Chronological split: the earliest `train_fraction` of rows train, the rest
/// test. Per participant or pooled across the cohort; never shuffles time.
Split chronological_split(std::vector<LabeledRow> rows, double train_fraction, bool per_participant);

Dataset to_dataset(const std::vector<LabeledRow>& rows);

}  // namespace bigthick::scheduler
