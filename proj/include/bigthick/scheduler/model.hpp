#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "bigthick/scheduler/features.hpp"

namespace bigthick::scheduler {

struct Example {
  std::vector<double> x;
  int y = 0;
};

using Dataset = std::vector<Example>;

enum class Family { DecisionTree, RandomForest, LogisticRegression, GaussianNB, NeuralNet };

const char* to_string(Family f);
Family parse_family(const std::string& name);
inline constexpr Family kAllFamilies[] = {Family::RandomForest, Family::DecisionTree, Family::NeuralNet,
                                          Family::LogisticRegression, Family::GaussianNB};

// ---- trees ----

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;  // x[feature] < threshold goes left
  int left = -1;
  int right = -1;
  double proba = 0.0;  // positive fraction of the node's samples
  std::uint32_t samples = 0;
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict_proba(const std::vector<double>& x) const;
  int depth() const;
  bool operator==(const DecisionTree&) const = default;
};

struct TreeParams {
  int max_depth = 8;
  int min_samples_leaf = 1;
  /// Features considered per split; 0 means all of them.
  int max_features = 0;
  std::uint64_t seed = 0;
};

/// CART on weighted Gini impurity. `rows` indexes into `data` and may repeat
/// (bootstrap multiplicity). Split candidates are midpoints between adjacent
/// distinct values; ties go to the lowest feature index, then the lowest
/// threshold. A node splits only when it strictly lowers impurity.
DecisionTree fit_tree(const Dataset& data, const std::vector<std::size_t>& rows, const TreeParams& params);
DecisionTree train_decision_tree(const Dataset& data, const TreeParams& params);

/// Gini impurity 1 - p0^2 - p1^2 of a node with `positives` of `n` samples.
double gini(std::size_t positives, std::size_t n);

struct ForestParams {
  int n_trees = 100;
  int max_depth = 10;
  int min_samples_leaf = 2;
  bool bootstrap = true;
  /// Per-split subsample of ceil(sqrt(d)) features; false uses all of them.
  bool subsample_features = true;
  std::uint64_t seed = 0;
  /// Worker threads; 0 picks the hardware concurrency. Output does not depend on it.
  unsigned threads = 0;
};

struct RandomForest {
  std::vector<DecisionTree> trees;  // tree i was grown from seed + i

  double predict_proba(const std::vector<double>& x) const;
  bool operator==(const RandomForest&) const = default;
};

RandomForest train_random_forest(const Dataset& data, const ForestParams& params);

// ---- standardized linear and neural models ----

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;  // population std, 1 where the column is constant

  static Standardizer fit(const Dataset& data);
  std::vector<double> apply(const std::vector<double>& x) const;
  Dataset apply(const Dataset& data) const;
  bool operator==(const Standardizer&) const = default;
};

struct LogisticParams {
  double learning_rate = 0.5;
  int epochs = 300;
  double l2 = 1e-4;
  std::uint64_t seed = 0;  // initialization is zero; kept for the model record
};

struct LogisticModel {
  Standardizer standardizer;
  std::vector<double> weights;
  double bias = 0.0;

  double predict_proba(const std::vector<double>& x) const;
  bool operator==(const LogisticModel&) const = default;
};

struct LogisticFit {
  LogisticModel model;
  std::vector<double> loss_trace;  // loss before the first update, then after each epoch
};

LogisticFit train_logistic_regression(const Dataset& data, const LogisticParams& params);

/// Mean cross-entropy plus (l2/2)*|w|^2 for params = [w..., b] on already
/// standardized data. Writes the analytic gradient when `grad` is non-null.
double logistic_loss(const Dataset& data, const std::vector<double>& params, double l2,
                     std::vector<double>* grad = nullptr);

struct GaussianNB {
  std::vector<double> mean[2];
  std::vector<double> variance[2];
  double log_prior[2] = {0.0, 0.0};
  bool has_class[2] = {false, false};

  double predict_proba(const std::vector<double>& x) const;
  bool operator==(const GaussianNB&) const = default;
};

struct NaiveBayesParams {
  double variance_floor = 1e-9;
};

GaussianNB train_gaussian_nb(const Dataset& data, const NaiveBayesParams& params = {});

struct NeuralParams {
  int hidden_units = 8;
  double learning_rate = 0.5;
  int epochs = 400;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
};

/// One hidden layer of logistic units and a sigmoid output.
struct NeuralNet {
  Standardizer standardizer;
  int inputs = 0;
  int hidden = 0;
  /// Flattened [W1 (hidden x inputs, row-major), b1 (hidden), w2 (hidden), b2].
  std::vector<double> params;

  double predict_proba(const std::vector<double>& x) const;
  bool operator==(const NeuralNet&) const = default;
};

std::size_t neural_param_count(int inputs, int hidden);
/// Seeded uniform initialization in +-1/sqrt(fan_in).
std::vector<double> neural_init(int inputs, int hidden, std::uint64_t seed);
/// Same loss as logistic_loss, for the network on already standardized data.
double neural_loss(const Dataset& data, int hidden, const std::vector<double>& params, double l2,
                   std::vector<double>* grad = nullptr);

NeuralNet train_neural_net(const Dataset& data, const NeuralParams& params);

// ---- family-agnostic model ----

struct TrainConfig {
  TreeParams tree;
  ForestParams forest;
  LogisticParams logistic;
  NaiveBayesParams naive_bayes;
  NeuralParams neural;
  std::uint64_t seed = 0;  // overrides the per-family seeds
};

struct TrainedModel {
  Family family = Family::RandomForest;
  FeatureSchema schema;
  std::uint64_t seed = 0;
  std::variant<DecisionTree, RandomForest, LogisticModel, GaussianNB, NeuralNet> params;

  double predict_proba(const std::vector<double>& x) const;
  bool operator==(const TrainedModel&) const = default;
};

/// Throws Error(InvalidArgument) on empty data or inconsistent dimensions.
TrainedModel train(Family family, const Dataset& data, const FeatureSchema& schema, const TrainConfig& config);

inline constexpr int kModelFormatVersion = 1;

void to_json(nlohmann::json& j, const TrainedModel& m);
void from_json(const nlohmann::json& j, TrainedModel& m);

}  // namespace bigthick::scheduler
