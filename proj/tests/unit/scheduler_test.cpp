#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bigthick/error.hpp"
#include "bigthick/random.hpp"
#include "bigthick/scheduler/avoid.hpp"
#include "bigthick/scheduler/dataset.hpp"
#include "bigthick/scheduler/evaluate.hpp"
#include "bigthick/scheduler/labels.hpp"
#include "bigthick/store/stm.hpp"

namespace bigthick::scheduler {
namespace {

const Date kMonday = parse_date("2024-03-04");

FeatureSchema plain_schema(int d) {
  FeatureSchema s = FeatureSchema::time_only();
  s.time = false;
  s.traits = d;
  return s;
}

Dataset random_dataset(Rng& rng, std::size_t n, int d, double noise = 0.1) {
  Dataset data;
  for (std::size_t i = 0; i < n; ++i) {
    Example e;
    double score = 0.0;
    for (int k = 0; k < d; ++k) {
      e.x.push_back(uniform(rng, -2, 2));
      score += (k % 2 ? -1.0 : 1.0) * e.x.back();
    }
    e.y = (score + uniform(rng, -noise, noise) > 0) ? 1 : 0;
    data.push_back(e);
  }
  return data;
}

// ---- labels ----

TEST(EncodeLabel, StudyAndLectureAreBusy) {
  auto v = context::Vocabulary::standard();
  EXPECT_EQ(encode_label(v, "lecture"), 1);
  EXPECT_EQ(encode_label(v, "study_alone"), 1);
  EXPECT_EQ(encode_label(v, "study_group"), 1);
  EXPECT_EQ(encode_label(v, "sleeping"), 0);
  for (const auto& a : v.activities) {
    EXPECT_EQ(encode_label(v, a), a == "lecture" || a == "study_alone" || a == "study_group" ? 1 : 0);
  }
  EXPECT_THROW(encode_label(v, "skydiving"), Error);
}

// ---- features ----

TEST(ExtractFeatures, TimeSlots) {
  HistoryIndex h;
  h.finalize();
  FeatureSchema s = FeatureSchema::time_only();
  const Instant tuesday = parse_instant("2024-03-05T10:30:00Z");
  auto x = extract_features(h, "P01", tuesday, s);
  ASSERT_EQ(x.size(), 9u);
  EXPECT_DOUBLE_EQ(x[0], std::sin(2 * std::numbers::pi * 10.5 / 24));
  EXPECT_DOUBLE_EQ(x[1], std::cos(2 * std::numbers::pi * 10.5 / 24));
  for (int d = 0; d < 7; ++d) EXPECT_EQ(x[2 + d], d == 1 ? 1.0 : 0.0);
  EXPECT_EQ(s.names()[0], "hour_sin");
}

TEST(ExtractFeatures, ResponseRateOverTrailingWindow) {
  HistoryIndex h;
  const Instant now = parse_instant("2024-03-06T12:00:00Z");
  // Three answered and one unanswered inside the window; older ones ignored.
  for (int i = 0; i < 4; ++i) {
    Instant t = now - Minutes{60 * (i + 1)};
    h.add_notification("P01", NotificationRecord{t, i < 3 ? std::optional<Instant>(t + Minutes{5}) : std::nullopt});
  }
  h.add_notification("P01", NotificationRecord{now - Minutes{49 * 60}, std::nullopt});
  // Answered only after `now`: counts as notified, not answered.
  h.add_notification("P02", NotificationRecord{now - Minutes{10}, now + Minutes{1}});
  h.finalize();
  EXPECT_EQ(h.response_rate("P01", now, Minutes{48 * 60}), 0.75);
  EXPECT_EQ(h.response_rate("P02", now, Minutes{48 * 60}), 0.0);
  EXPECT_EQ(h.response_rate("P03", now, Minutes{48 * 60}), std::nullopt);

  FeatureSchema s;
  s.moods = context::Vocabulary::standard().moods;
  auto x = extract_features(h, "P01", now, s);
  EXPECT_EQ(x[s.dimension() - 2], 0.75);
}

TEST(ExtractFeatures, EmptyHistoryIsNeutral) {
  HistoryIndex h;
  h.finalize();
  FeatureSchema s;
  s.centroids = {context::GeoPoint::make(46, 11), context::GeoPoint::make(45, 10)};
  s.moods = context::Vocabulary::standard().moods;
  s.demographics = true;
  s.traits = 2;
  auto x = extract_features(h, "P01", parse_instant("2024-03-05T10:30:00Z"), s);
  const auto names = s.names();
  ASSERT_EQ(x.size(), names.size());
  auto slot = [&](const std::string& n) { return x[std::find(names.begin(), names.end(), n) - names.begin()]; };
  EXPECT_EQ(slot("loc_0"), 0.0);
  EXPECT_EQ(slot("loc_1"), 0.0);
  EXPECT_EQ(slot("loc_unknown"), 1.0);
  EXPECT_EQ(slot("companion"), 0.0);
  EXPECT_EQ(slot("response_rate"), 0.5);
  EXPECT_EQ(slot("mood"), -1.0);
  EXPECT_EQ(slot("gender"), -1.0);
  EXPECT_EQ(slot("trait_1"), 0.0);
}

TEST(ExtractFeatures, UsesOnlyEarlierHistory) {
  HistoryIndex h;
  const Instant t = parse_instant("2024-03-05T10:00:00Z");
  context::DiaryAnswerSet a;
  a.mood = "happy";
  a.who = {"Peter"};
  h.add_answer("P01", AnswerRecord{t, a});
  h.add_geo("P01", GeoRecord{t, context::GeoPoint::make(46, 11)});
  h.finalize();
  FeatureSchema s;
  s.centroids = {context::GeoPoint::make(46, 11)};
  s.moods = context::Vocabulary::standard().moods;
  auto at = extract_features(h, "P01", t, s);
  auto after = extract_features(h, "P01", t + Minutes{1}, s);
  auto stale = extract_features(h, "P01", t + Minutes{181}, s);
  // slots: 9 time, loc_0, loc_unknown, companion, response_rate, mood
  EXPECT_EQ(at[9], 0.0);
  EXPECT_EQ(at[11], 0.0);
  EXPECT_EQ(at[13], -1.0);
  EXPECT_EQ(after[9], 1.0);
  EXPECT_EQ(after[11], 1.0);
  EXPECT_EQ(after[13], 4.0);
  EXPECT_EQ(stale[10], 1.0);
  EXPECT_EQ(stale[13], -1.0);
}

TEST(ClusterLocations, DeterministicAndSeparatesGroups) {
  std::vector<context::GeoPoint> pts;
  Rng rng(1);
  for (int i = 0; i < 60; ++i) {
    const double base = i % 3 == 0 ? 46.0 : i % 3 == 1 ? 45.0 : 44.0;
    pts.push_back(context::GeoPoint::make(base + uniform(rng, -0.01, 0.01), 11 + uniform(rng, -0.01, 0.01)));
  }
  auto a = cluster_locations(pts, 3, 9);
  auto b = cluster_locations(pts, 3, 9);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.size(), 3u);
  std::vector<double> lats;
  for (auto& c : a) lats.push_back(std::round(c.latitude));
  std::sort(lats.begin(), lats.end());
  EXPECT_EQ(lats, (std::vector<double>{44, 45, 46}));
  EXPECT_TRUE(cluster_locations({}, 3, 1).empty());
}

// ---- trees ----

TEST(DecisionTree, GiniOfBalancedNode) {
  EXPECT_DOUBLE_EQ(gini(5, 10), 0.5);
  EXPECT_EQ(gini(0, 10), 0.0);
  EXPECT_EQ(gini(10, 10), 0.0);
}

TEST(DecisionTree, PureDataIsOneLeaf) {
  Dataset d{{{1.0}, 1}, {{2.0}, 1}, {{3.0}, 1}};
  auto t = train_decision_tree(d, {});
  ASSERT_EQ(t.nodes.size(), 1u);
  EXPECT_EQ(t.predict_proba({0.0}), 1.0);
  EXPECT_THROW(train_decision_tree({}, {}), Error);
}

TEST(DecisionTree, OneDimensionalThreshold) {
  Dataset d;
  for (int i = 0; i < 20; ++i) {
    double x = -1.0 + 0.1 * i - 0.05;
    d.push_back({{x}, x >= 0 ? 1 : 0});
  }
  auto t = train_decision_tree(d, {});
  ASSERT_EQ(t.depth(), 1);
  EXPECT_GE(t.nodes[0].threshold, -0.05);
  EXPECT_LE(t.nodes[0].threshold, 0.05);
}

// Oracle: enumerate every (feature, midpoint) split and keep the lowest
// weighted Gini; the tree's root must pick the same one.
TEST(DecisionTree, RootSplitMatchesBruteForce) {
  Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const int d = 1 + static_cast<int>(uniform_index(rng, 4));
    const std::size_t n = 4 + uniform_index(rng, 30);
    Dataset data;
    for (std::size_t i = 0; i < n; ++i) {
      Example e;
      for (int k = 0; k < d; ++k) e.x.push_back(static_cast<double>(uniform_index(rng, 6)));
      e.y = static_cast<int>(uniform_index(rng, 2));
      data.push_back(e);
    }
    TreeParams params;
    params.max_depth = 1;
    auto tree = train_decision_tree(data, params);

    std::size_t pos = 0;
    for (auto& e : data) pos += e.y;
    double best = gini(pos, n);
    int best_f = -1;
    double best_t = 0;
    for (int f = 0; f < d; ++f) {
      std::vector<double> values;
      for (auto& e : data) values.push_back(e.x[f]);
      std::sort(values.begin(), values.end());
      values.erase(std::unique(values.begin(), values.end()), values.end());
      for (std::size_t i = 0; i + 1 < values.size(); ++i) {
        const double t = (values[i] + values[i + 1]) / 2;
        std::size_t nl = 0, pl = 0;
        for (auto& e : data) {
          if (e.x[f] < t) {
            ++nl;
            pl += e.y;
          }
        }
        const double g = (nl * gini(pl, nl) + (n - nl) * gini(pos - pl, n - nl)) / n;
        if (g < best - 1e-12) {
          best = g;
          best_f = f;
          best_t = t;
        }
      }
    }
    if (best_f < 0) {
      ASSERT_EQ(tree.nodes.size(), 1u) << "trial " << trial;
    } else {
      ASSERT_EQ(tree.nodes[0].feature, best_f) << "trial " << trial;
      ASSERT_EQ(tree.nodes[0].threshold, best_t) << "trial " << trial;
    }
  }
}

TEST(DecisionTree, RespectsDepthAndLeafSize) {
  Rng rng(2);
  auto data = random_dataset(rng, 300, 4, 2.0);
  TreeParams p;
  p.max_depth = 3;
  p.min_samples_leaf = 10;
  auto t = train_decision_tree(data, p);
  EXPECT_LE(t.depth(), 3);
  for (const auto& n : t.nodes) EXPECT_GE(n.samples, 10u);
}

TEST(RandomForest, SingleTreeWithoutSamplingIsTheDecisionTree) {
  Rng rng(3);
  auto data = random_dataset(rng, 200, 5, 1.0);
  ForestParams fp;
  fp.n_trees = 1;
  fp.bootstrap = false;
  fp.subsample_features = false;
  fp.max_depth = 6;
  fp.min_samples_leaf = 1;
  TreeParams tp;
  tp.max_depth = 6;
  tp.min_samples_leaf = 1;
  auto forest = train_random_forest(data, fp);
  auto tree = train_decision_tree(data, tp);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> x;
    for (int k = 0; k < 5; ++k) x.push_back(uniform(rng, -3, 3));
    ASSERT_EQ(forest.predict_proba(x), tree.predict_proba(x));
  }
}

TEST(RandomForest, ProbabilityIsTheMeanOfTrees) {
  Rng rng(4);
  auto data = random_dataset(rng, 150, 4, 1.0);
  ForestParams fp;
  fp.n_trees = 7;
  fp.seed = 11;
  auto forest = train_random_forest(data, fp);
  auto reversed = forest;
  std::reverse(reversed.trees.begin(), reversed.trees.end());
  for (int i = 0; i < 50; ++i) {
    std::vector<double> x;
    for (int k = 0; k < 4; ++k) x.push_back(uniform(rng, -3, 3));
    double sum = 0;
    for (const auto& t : forest.trees) sum += t.predict_proba(x);
    EXPECT_DOUBLE_EQ(forest.predict_proba(x), sum / 7);
    EXPECT_NEAR(reversed.predict_proba(x), forest.predict_proba(x), 1e-15);
  }
  EXPECT_THROW(train_random_forest(data, ForestParams{0}), Error);
}

TEST(RandomForest, IndependentOfThreadCount) {
  Rng rng(5);
  auto data = random_dataset(rng, 200, 6, 1.0);
  ForestParams fp;
  fp.n_trees = 12;
  fp.seed = 3;
  fp.threads = 1;
  auto serial = train_random_forest(data, fp);
  fp.threads = 4;
  EXPECT_EQ(train_random_forest(data, fp), serial);
  fp.seed = 4;
  EXPECT_NE(train_random_forest(data, fp), serial);
}

// ---- logistic regression and neural net ----

double max_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1e-6, std::abs(a[i]) + std::abs(b[i])));
  }
  return worst;
}

template <typename Loss>
std::vector<double> central_differences(Loss loss, std::vector<double> params, double h = 1e-5) {
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double up = loss(params);
    params[i] = keep - h;
    const double down = loss(params);
    params[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

TEST(LogisticRegression, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + static_cast<int>(uniform_index(rng, 5));
    auto data = random_dataset(rng, 10, d, 3.0);
    std::vector<double> params;
    for (int k = 0; k <= d; ++k) params.push_back(uniform(rng, -1, 1));
    const double l2 = uniform(rng, 0, 0.1);
    std::vector<double> grad;
    logistic_loss(data, params, l2, &grad);
    auto numeric = central_differences([&](const std::vector<double>& p) { return logistic_loss(data, p, l2); }, params);
    EXPECT_LT(max_relative_error(grad, numeric), 1e-4) << "trial " << trial;
  }
}

TEST(LogisticRegression, LossDecreasesOnSeparableData) {
  Dataset data;
  for (int i = 0; i < 20; ++i) data.push_back({{i - 9.5}, i >= 10 ? 1 : 0});
  auto fit = train_logistic_regression(data, LogisticParams{0.5, 200, 0.0, 0});
  ASSERT_EQ(fit.loss_trace.size(), 201u);
  for (std::size_t i = 1; i < fit.loss_trace.size(); ++i) ASSERT_LT(fit.loss_trace[i], fit.loss_trace[i - 1]) << i;
  EXPECT_GT(fit.model.predict_proba({5.0}), 0.9);
  EXPECT_LT(fit.model.predict_proba({-5.0}), 0.1);
}

TEST(LogisticRegression, ZeroEpochsPredictsOneHalf) {
  Rng rng(7);
  auto data = random_dataset(rng, 30, 3);
  auto fit = train_logistic_regression(data, LogisticParams{0.5, 0, 0.0, 0});
  for (const auto& e : data) EXPECT_EQ(fit.model.predict_proba(e.x), 0.5);
}

TEST(NeuralNet, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + static_cast<int>(uniform_index(rng, 4));
    const int hidden = 1 + static_cast<int>(uniform_index(rng, 5));
    auto data = random_dataset(rng, 10, d, 3.0);
    auto params = neural_init(d, hidden, 100 + trial);
    for (auto& p : params) p += uniform(rng, -0.5, 0.5);  // biases off zero too
    const double l2 = uniform(rng, 0, 0.1);
    std::vector<double> grad;
    neural_loss(data, hidden, params, l2, &grad);
    auto numeric =
        central_differences([&](const std::vector<double>& p) { return neural_loss(data, hidden, p, l2); }, params);
    EXPECT_LT(max_relative_error(grad, numeric), 1e-4) << "trial " << trial;
  }
}

TEST(NeuralNet, RejectsZeroHiddenUnits) {
  Dataset data{{{1.0}, 1}, {{0.0}, 0}};
  NeuralParams p;
  p.hidden_units = 0;
  EXPECT_THROW(train_neural_net(data, p), Error);
}

TEST(NeuralNet, UntrainedOutputDependsOnlyOnSeed) {
  Rng rng(9);
  auto data = random_dataset(rng, 40, 3);
  NeuralParams p;
  p.epochs = 0;
  p.seed = 5;
  auto a = train_neural_net(data, p);
  auto b = train_neural_net(data, p);
  p.seed = 6;
  auto c = train_neural_net(data, p);
  bool differs = false;
  for (const auto& e : data) {
    EXPECT_EQ(a.predict_proba(e.x), b.predict_proba(e.x));
    differs = differs || a.predict_proba(e.x) != c.predict_proba(e.x);
  }
  EXPECT_TRUE(differs);
}

TEST(NeuralNet, LearnsXor) {
  Dataset data;
  Rng rng(10);
  for (int i = 0; i < 200; ++i) {
    double a = uniform(rng, -1, 1), b = uniform(rng, -1, 1);
    data.push_back({{a, b}, (a > 0) != (b > 0) ? 1 : 0});
  }
  NeuralParams p;
  p.hidden_units = 6;
  p.learning_rate = 2.0;
  p.epochs = 3000;
  p.seed = 1;
  auto net = train_neural_net(data, p);
  TrainedModel m{Family::NeuralNet, plain_schema(2), 1, net};
  EXPECT_GT(evaluate(m, data).accuracy, 0.9);
}

// ---- naive bayes ----

TEST(GaussianNB, SymmetricClassesGiveOneHalfAtCentre) {
  Dataset data{{{-2.0}, 0}, {{-1.0}, 0}, {{1.0}, 1}, {{2.0}, 1}};
  auto nb = train_gaussian_nb(data);
  EXPECT_NEAR(nb.predict_proba({0.0}), 0.5, 1e-15);
}

TEST(GaussianNB, MatchesHandComputedPosterior) {
  // Class 0: {0, 2} -> mean 1, variance 1. Class 1: {3, 5, 7} -> mean 5, variance 8/3.
  Dataset data{{{0.0}, 0}, {{2.0}, 0}, {{3.0}, 1}, {{5.0}, 1}, {{7.0}, 1}};
  auto nb = train_gaussian_nb(data);
  const double pi = std::numbers::pi;
  const double d0 = std::exp(-0.5) / std::sqrt(2 * pi);
  const double d1 = std::exp(-27.0 / 16.0) / std::sqrt(2 * pi * 8.0 / 3.0);
  const double expected = 0.6 * d1 / (0.4 * d0 + 0.6 * d1);
  EXPECT_NEAR(nb.predict_proba({2.0}), expected, 1e-9);
}

TEST(GaussianNB, ConstantColumnStaysFinite) {
  Dataset data{{{1.0, 3.0}, 0}, {{2.0, 3.0}, 0}, {{5.0, 3.0}, 1}, {{6.0, 3.0}, 1}};
  auto nb = train_gaussian_nb(data);
  for (double x : {0.0, 3.5, 10.0}) {
    double p = nb.predict_proba({x, 3.0});
    EXPECT_TRUE(std::isfinite(p));
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
  EXPECT_TRUE(std::isfinite(nb.predict_proba({3.5, 4.0})));
}

// ---- evaluation ----

TEST(Evaluate, ConfusionFixture) {
  auto m = metrics_from_confusion(Confusion{3, 1, 2, 4});
  EXPECT_NEAR(m.accuracy, 0.7, 1e-12);
  EXPECT_NEAR(m.precision, 0.75, 1e-12);
  EXPECT_NEAR(m.recall, 0.6, 1e-12);
  EXPECT_NEAR(m.f1, 2.0 / 3.0, 1e-12);
  // p_e = (4*5 + 6*5) / 100 = 0.5
  EXPECT_NEAR(m.kappa, 0.4, 1e-12);
}

TEST(Evaluate, PerfectAndTiedScores) {
  auto perfect = evaluate_scores({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0});
  EXPECT_EQ(perfect.accuracy, 1.0);
  EXPECT_EQ(perfect.kappa, 1.0);
  EXPECT_EQ(perfect.auc, 1.0);
  auto ties = evaluate_scores({0.3, 0.3, 0.3, 0.3}, {1, 0, 1, 0});
  EXPECT_EQ(ties.auc, 0.5);
  EXPECT_EQ(ties.kappa, 0.0);
  EXPECT_THROW(evaluate_scores({}, {}), Error);
}

struct Oracle {
  Confusion c;
  double auc;
};

Oracle brute_force(const std::vector<double>& s, const std::vector<int>& y, double threshold) {
  Oracle o{};
  double wins = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool pred = s[i] >= threshold;
    if (y[i] && pred) ++o.c.tp;
    if (!y[i] && pred) ++o.c.fp;
    if (y[i] && !pred) ++o.c.fn;
    if (!y[i] && !pred) ++o.c.tn;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] == 1 && y[j] == 0) {
        ++pairs;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
    }
  }
  o.auc = pairs ? wins / static_cast<double>(pairs) : 0.5;
  return o;
}

TEST(Evaluate, MatchesBruteForceOracle) {
  Rng rng(12);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 25);
    std::vector<double> s;
    std::vector<int> y;
    for (std::size_t i = 0; i < n; ++i) {
      s.push_back(static_cast<double>(uniform_index(rng, 8)) / 7.0);  // coarse grid forces ties
      y.push_back(static_cast<int>(uniform_index(rng, 2)));
    }
    auto m = evaluate_scores(s, y);
    auto o = brute_force(s, y, 0.5);
    ASSERT_EQ(m.confusion, o.c);
    ASSERT_EQ(m.auc, o.auc);
    const double tp = o.c.tp, fp = o.c.fp, fn = o.c.fn, tn = o.c.tn, N = n;
    const double acc = (tp + tn) / N;
    const double prec = tp + fp ? tp / (tp + fp) : 0;
    const double rec = tp + fn ? tp / (tp + fn) : 0;
    const double pe = ((tp + fp) / N) * ((tp + fn) / N) + ((fn + tn) / N) * ((fp + tn) / N);
    EXPECT_NEAR(m.accuracy, acc, 1e-12);
    EXPECT_NEAR(m.precision, prec, 1e-12);
    EXPECT_NEAR(m.recall, rec, 1e-12);
    EXPECT_NEAR(m.f1, prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0, 1e-12);
    EXPECT_NEAR(m.kappa, pe < 1 ? (acc - pe) / (1 - pe) : 0, 1e-12);

    std::vector<double> negated;
    for (double v : s) negated.push_back(-v);
    EXPECT_NEAR(evaluate_scores(negated, y).auc, 1.0 - m.auc, 1e-12);
    EXPECT_EQ(evaluate_scores(std::vector<double>(n, 0.9), y).kappa, 0.0);
    EXPECT_EQ(evaluate_scores(std::vector<double>(n, 0.1), y).kappa, 0.0);
  }
}

// ---- avoid windows ----

TEST(AvoidWindows, ConstantZeroModelGivesNothing) {
  EXPECT_TRUE(derive_avoid_windows([](Instant) { return 0.0; }, "P01", kMonday).empty());
}

TEST(AvoidWindows, MergesAdjacentSlots) {
  auto proba = [](Instant t) {
    const int m = minute_of_day(t);
    return m >= 9 * 60 && m < 11 * 60 ? (m < 10 * 60 ? 0.8 : 1.0) : 0.1;
  };
  auto w = derive_avoid_windows(proba, "P01", kMonday);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(format_clock(w[0].start), "09:00");
  EXPECT_EQ(format_clock(w[0].end), "11:00");
  EXPECT_DOUBLE_EQ(w[0].confidence, 0.9);
  EXPECT_EQ(w[0].source, plan::AvoidSource::Predicted);
  EXPECT_TRUE(derive_avoid_windows(proba, "P01", kMonday, AvoidOptions{30, 1.0 + 1e-9}).empty());
  EXPECT_TRUE(derive_avoid_windows([](Instant) { return 0.99; }, "P01", kMonday, AvoidOptions{30, 1.0}).empty());
}

TEST(AvoidWindows, MatchesSlotBySlotOracle) {
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> slot(48);
    for (auto& p : slot) p = bernoulli(rng, 0.4) ? uniform(rng, 0.6, 1.0) : uniform(rng, 0.0, 0.6);
    auto proba = [&](Instant t) { return slot[minute_of_day(t) / 30]; };
    auto windows = derive_avoid_windows(proba, "P01", kMonday);
    std::vector<bool> covered(48, false);
    for (const auto& w : windows) {
      ASSERT_LT(w.start, w.end);
      double sum = 0;
      for (int s = w.start.minute / 30; s < w.end.minute / 30; ++s) {
        covered[s] = true;
        sum += slot[s];
      }
      EXPECT_NEAR(w.confidence, sum / ((w.end.minute - w.start.minute) / 30), 1e-12);
    }
    for (int s = 0; s < 48; ++s) ASSERT_EQ(covered[s], slot[s] >= 0.6) << s;
    for (std::size_t i = 1; i < windows.size(); ++i) ASSERT_LT(windows[i - 1].end, windows[i].start);
  }
}

TEST(AvoidWindows, ModelReadsContextOneWeekEarlier) {
  FeatureSchema schema = FeatureSchema::time_only();
  schema.time = false;
  schema.location = true;
  const auto campus = context::GeoPoint::make(46.07, 11.15);
  const auto home = context::GeoPoint::make(46.05, 11.10);
  schema.centroids = {campus, home};
  Dataset data{{{1, 0, 0}, 1}, {{0, 1, 0}, 0}, {{0, 0, 1}, 0}};
  auto model = train(Family::DecisionTree, data, schema, TrainConfig{});

  HistoryIndex history;
  auto at = [](Date d, int minute) { return Instant{d} + Minutes{minute}; };
  for (int m = 8 * 60; m < 12 * 60; m += 15) {
    history.add_geo("P01", GeoRecord{at(kMonday, m), m >= 9 * 60 && m < 11 * 60 ? campus : home});
  }
  history.finalize();

  auto w = derive_avoid_windows(model, history, "P01", kMonday + std::chrono::days{7});
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(format_clock(w[0].start), "09:00");
  EXPECT_EQ(format_clock(w[0].end), "11:00");
  EXPECT_TRUE(derive_avoid_windows(model, history, "P01", kMonday + std::chrono::days{8}).empty());
  AvoidOptions same_instant;
  same_instant.history_lag = Minutes{0};
  EXPECT_EQ(derive_avoid_windows(model, history, "P01", kMonday, same_instant).size(), 1u);
}

// ---- models as a family ----

TEST(TrainedModel, EveryFamilyRoundTripsAndStaysInRange) {
  Rng rng(14);
  auto data = random_dataset(rng, 120, 3, 0.5);
  TrainConfig cfg;
  cfg.seed = 7;
  cfg.forest.n_trees = 10;
  for (Family f : kAllFamilies) {
    auto m = train(f, data, plain_schema(3), cfg);
    nlohmann::json j = m;
    auto back = nlohmann::json::parse(j.dump()).get<TrainedModel>();
    EXPECT_EQ(back, m) << to_string(f);
    for (int i = 0; i < 50; ++i) {
      std::vector<double> x{uniform(rng, -5, 5), uniform(rng, -5, 5), uniform(rng, -5, 5)};
      const double p = m.predict_proba(x);
      ASSERT_GE(p, 0.0);
      ASSERT_LE(p, 1.0);
      ASSERT_EQ(back.predict_proba(x), p);
    }
    EXPECT_GT(evaluate(m, data).auc, 0.8) << to_string(f);
    EXPECT_EQ(train(f, data, plain_schema(3), cfg), m) << to_string(f);
  }
  EXPECT_THROW(train(Family::GaussianNB, data, plain_schema(4), cfg), Error);
  EXPECT_THROW(nlohmann::json({{"format", "x"}}).get<TrainedModel>(), Error);
}

// ---- training rows and splits ----

TEST(TrainingRows, LabelsFromAnswersSnoozesAndExpiries) {
  auto vocab = context::Vocabulary::standard();
  store::StmState stm;
  plan::ScheduledAction expired;
  expired.id = "a1";
  expired.participant = "P01";
  const Instant t0 = parse_instant("2024-03-04T09:00:00Z");
  expired.due_time = t0;
  plan::transition(expired, plan::ActionState::Notified, t0);
  plan::transition(expired, plan::ActionState::Expired, t0 + Minutes{61});
  stm.schedules["P01"].insert(expired);
  plan::ScheduledAction snoozed = expired;
  snoozed.id = "a2";
  snoozed.history.clear();
  snoozed.state = plan::ActionState::Pending;
  stm.schedules["P01"].insert(snoozed);
  plan::ScheduledAction sensor = expired;  // sensor expiries carry no label
  sensor.id = "s1";
  sensor.kind = plan::TaskKind::Sensor;
  stm.schedules["P01"].insert(sensor);
  stm.replans.push_back(plan::ReplanEvent{
      plan::ReplanRequest{"a2", "P01", plan::Snooze{Minutes{30}}, t0 + Minutes{120}}, t0, plan::ActionState::Notified});
  stm.replans.push_back(
      plan::ReplanEvent{plan::ReplanRequest{"a3", "P01", plan::Skip{}, t0 + Minutes{130}}, t0, plan::ActionState::Pending});

  HistoryIndex h;
  context::DiaryAnswerSet a;
  a.what = "eating";
  a.notification_time = t0 + Minutes{300};
  h.add_answer("P01", AnswerRecord{t0 + Minutes{305}, a});
  a.what = "lecture";
  a.notification_time = t0 + Minutes{400};
  h.add_answer("P01", AnswerRecord{t0 + Minutes{402}, a});
  h.finalize();

  auto rows = build_training_rows(stm, h, vocab, FeatureSchema::time_only());
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].at, t0);
  EXPECT_EQ(rows[0].y, 1);
  EXPECT_EQ(rows[1].at, t0 + Minutes{120});
  EXPECT_EQ(rows[1].y, 1);
  EXPECT_EQ(rows[2].y, 0);
  EXPECT_EQ(rows[3].y, 1);

  LabelOptions only_answers{false, false, std::nullopt};
  EXPECT_EQ(build_training_rows(stm, h, vocab, FeatureSchema::time_only(), only_answers).size(), 2u);
  LabelOptions early{true, true, t0 + Minutes{350}};
  EXPECT_EQ(build_training_rows(stm, h, vocab, FeatureSchema::time_only(), early).size(), 3u);
}

TEST(ChronologicalSplit, NeverTrainsOnTheFuture) {
  Rng rng(15);
  std::vector<LabeledRow> rows;
  for (int i = 0; i < 300; ++i) {
    rows.push_back(LabeledRow{"P" + std::to_string(uniform_index(rng, 5)),
                              Instant{kMonday} + Minutes{uniform_index(rng, 10000)}, {0.0}, 0});
  }
  auto pooled = chronological_split(rows, 0.7, false);
  EXPECT_EQ(pooled.train.size(), 210u);
  EXPECT_EQ(pooled.test.size(), 90u);
  EXPECT_LE(pooled.train.back().at, pooled.test.front().at);

  auto per = chronological_split(rows, 0.7, true);
  EXPECT_EQ(per.train.size() + per.test.size(), rows.size());
  std::map<std::string, Instant> last_train;
  for (const auto& r : per.train) last_train[r.participant] = std::max(last_train[r.participant], r.at);
  for (const auto& r : per.test) EXPECT_GE(r.at, last_train[r.participant]);
  EXPECT_THROW(chronological_split(rows, 1.0, false), Error);
}

}  // namespace
}  // namespace bigthick::scheduler
