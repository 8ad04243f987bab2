#pragma once

#include <cstddef>
#include <vector>

#include <nlohmann/json.hpp>

#include "bigthick/scheduler/model.hpp"

namespace bigthick::scheduler {

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const { return tp + fp + fn + tn; }
  bool operator==(const Confusion&) const = default;
};

struct EvalMetrics {
  double accuracy = 0.0;
  double kappa = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double auc = 0.5;
  Confusion confusion;
};

/// Metrics from a confusion matrix; precision, recall and F1 are 0 when
/// undefined and kappa is 0 when chance agreement is 1.
EvalMetrics metrics_from_confusion(const Confusion& c);

/// Probability that a random positive outscores a random negative, ties
/// counted one half (midrank formula). 0.5 when either class is absent.
double auc_score(const std::vector<double>& scores, const std::vector<int>& labels);

/// Throws Error(InvalidArgument) for empty or mismatched inputs.
EvalMetrics evaluate_scores(const std::vector<double>& scores, const std::vector<int>& labels,
                            double threshold = 0.5);
EvalMetrics evaluate(const TrainedModel& model, const Dataset& test, double threshold = 0.5);

void to_json(nlohmann::json& j, const EvalMetrics& m);

}  // namespace bigthick::scheduler
