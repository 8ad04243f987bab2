#include "bigthick/scheduler/evaluate.hpp"

#include <algorithm>
#include <numeric>

#include "bigthick/error.hpp"

namespace bigthick::scheduler {

EvalMetrics metrics_from_confusion(const Confusion& c) {
  EvalMetrics m;
  m.confusion = c;
  const double n = static_cast<double>(c.total());
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const double fn = static_cast<double>(c.fn), tn = static_cast<double>(c.tn);
  m.accuracy = (tp + tn) / n;
  m.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  const double pe = ((tp + fp) * (tp + fn) + (fn + tn) * (fp + tn)) / (n * n);
  m.kappa = pe < 1.0 ? (m.accuracy - pe) / (1.0 - pe) : 0.0;
  return m;
}

double auc_score(const std::vector<double>& scores, const std::vector<int>& labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        positive_rank_sum += midrank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return 0.5;
  const double p = static_cast<double>(positives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

EvalMetrics evaluate_scores(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
  if (scores.empty()) throw Error(ErrorCode::InvalidArgument, "evaluation set is empty");
  if (scores.size() != labels.size()) throw Error(ErrorCode::InvalidArgument, "scores and labels differ in length");
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) {
      (predicted ? c.tp : c.fn)++;
    } else {
      (predicted ? c.fp : c.tn)++;
    }
  }
  EvalMetrics m = metrics_from_confusion(c);
  m.auc = auc_score(scores, labels);
  return m;
}

EvalMetrics evaluate(const TrainedModel& model, const Dataset& test, double threshold) {
  std::vector<double> scores;
  std::vector<int> labels;
  scores.reserve(test.size());
  labels.reserve(test.size());
  for (const auto& e : test) {
    scores.push_back(model.predict_proba(e.x));
    labels.push_back(e.y);
  }
  return evaluate_scores(scores, labels, threshold);
}

void to_json(nlohmann::json& j, const EvalMetrics& m) {
  j = nlohmann::json{{"accuracy", m.accuracy},
                     {"kappa", m.kappa},
                     {"precision", m.precision},
                     {"recall", m.recall},
                     {"f1", m.f1},
                     {"auc", m.auc},
                     {"confusion", {{"tp", m.confusion.tp}, {"fp", m.confusion.fp},
                                    {"fn", m.confusion.fn}, {"tn", m.confusion.tn}}}};
}

}  // namespace bigthick::scheduler
