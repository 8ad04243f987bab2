#include "bigthick/scheduler/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <thread>

#include "bigthick/error.hpp"
#include "bigthick/json_util.hpp"
#include "bigthick/random.hpp"

namespace bigthick::scheduler {
namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

std::size_t check_dataset(const Dataset& data) {
  if (data.empty()) throw Error(ErrorCode::InvalidArgument, "training data is empty");
  const std::size_t d = data.front().x.size();
  for (const auto& e : data) {
    if (e.x.size() != d) throw Error(ErrorCode::InvalidArgument, "examples have different dimensions");
    if (e.y != 0 && e.y != 1) throw Error(ErrorCode::InvalidArgument, "labels must be 0 or 1");
    for (double v : e.x) {
      if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite feature value");
    }
  }
  return d;
}

using Wide = __int128;

// Split quality as the fraction num/den where larger means lower weighted Gini:
// (pl^2 + ql^2) / nl + (pr^2 + qr^2) / nr.
struct Score {
  Wide num = 0;
  Wide den = 1;
};

bool better(const Score& a, const Score& b) { return a.num * b.den > b.num * a.den; }

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, const TreeParams& params)
      : data_(data), params_(params), dims_(static_cast<int>(data.front().x.size())), rng_(params.seed) {}

  DecisionTree build(std::vector<std::size_t> rows) {
    grow(rows, 0);
    return std::move(tree_);
  }

 private:
  int grow(std::vector<std::size_t>& rows, int depth) {
    const int index = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    std::size_t positives = 0;
    for (auto r : rows) positives += static_cast<std::size_t>(data_[r].y);
    const std::size_t n = rows.size();
    {
      TreeNode& node = tree_.nodes[index];
      node.samples = static_cast<std::uint32_t>(n);
      node.proba = n ? static_cast<double>(positives) / static_cast<double>(n) : 0.0;
    }
    const std::size_t min_leaf = static_cast<std::size_t>(std::max(1, params_.min_samples_leaf));
    if (depth >= params_.max_depth || positives == 0 || positives == n || n < 2 * min_leaf) return index;

    std::vector<int> features(dims_);
    for (int f = 0; f < dims_; ++f) features[f] = f;
    if (params_.max_features > 0 && params_.max_features < dims_) {
      for (int i = 0; i < params_.max_features; ++i) {
        auto j = i + static_cast<int>(uniform_index(rng_, static_cast<std::uint64_t>(dims_ - i)));
        std::swap(features[i], features[j]);
      }
      features.resize(params_.max_features);
      std::sort(features.begin(), features.end());
    }

    const Wide p = static_cast<Wide>(positives), q = static_cast<Wide>(n - positives);
    Score best{(p * p + q * q), static_cast<Wide>(n)};  // parent: must be strictly improved on
    int best_feature = -1;
    double best_threshold = 0.0;

    std::vector<std::pair<double, int>> column(n);
    for (int f : features) {
      for (std::size_t i = 0; i < n; ++i) column[i] = {data_[rows[i]].x[f], data_[rows[i]].y};
      std::sort(column.begin(), column.end());
      Wide pl = 0, nl = 0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        pl += column[i].second;
        ++nl;
        if (!(column[i].first < column[i + 1].first)) continue;
        const Wide nr = static_cast<Wide>(n) - nl;
        if (nl < static_cast<Wide>(min_leaf) || nr < static_cast<Wide>(min_leaf)) continue;
        const Wide ql = nl - pl, pr = p - pl, qr = q - ql;
        Score s{(pl * pl + ql * ql) * nr + (pr * pr + qr * qr) * nl, nl * nr};
        if (better(s, best)) {
          best = s;
          best_feature = f;
          const double a = column[i].first, b = column[i + 1].first;
          double t = a + (b - a) / 2.0;
          if (!(t > a) || t > b) t = b;
          best_threshold = t;
        }
      }
    }
    if (best_feature < 0) return index;

    std::vector<std::size_t> left, right;
    for (auto r : rows) (data_[r].x[best_feature] < best_threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    TreeNode& node = tree_.nodes[index];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = r;
    return index;
  }

  const Dataset& data_;
  TreeParams params_;
  int dims_;
  Rng rng_;
  DecisionTree tree_;
};

}  // namespace

const char* to_string(Family f) {
  switch (f) {
    case Family::DecisionTree: return "decision_tree";
    case Family::RandomForest: return "random_forest";
    case Family::LogisticRegression: return "logistic_regression";
    case Family::GaussianNB: return "gaussian_nb";
    case Family::NeuralNet: return "neural_net";
  }
  return "?";
}

Family parse_family(const std::string& name) {
  for (Family f : kAllFamilies) {
    if (name == to_string(f)) return f;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown model family '" + name + "'");
}

double gini(std::size_t positives, std::size_t n) {
  if (n == 0) return 0.0;
  const double p1 = static_cast<double>(positives) / static_cast<double>(n);
  const double p0 = 1.0 - p1;
  return 1.0 - p0 * p0 - p1 * p1;
}

double DecisionTree::predict_proba(const std::vector<double>& x) const {
  int i = 0;
  while (nodes[i].feature >= 0) i = x[nodes[i].feature] < nodes[i].threshold ? nodes[i].left : nodes[i].right;
  return nodes[i].proba;
}

int DecisionTree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, d[i]);
    if (nodes[i].feature >= 0) d[nodes[i].left] = d[nodes[i].right] = d[i] + 1;
  }
  return deepest;
}

DecisionTree fit_tree(const Dataset& data, const std::vector<std::size_t>& rows, const TreeParams& params) {
  check_dataset(data);
  if (rows.empty()) throw Error(ErrorCode::InvalidArgument, "no rows to fit");
  return TreeBuilder(data, params).build(rows);
}

DecisionTree train_decision_tree(const Dataset& data, const TreeParams& params) {
  check_dataset(data);
  std::vector<std::size_t> rows(data.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return fit_tree(data, rows, params);
}

double RandomForest::predict_proba(const std::vector<double>& x) const {
  double sum = 0.0;
  for (const auto& t : trees) sum += t.predict_proba(x);
  return sum / static_cast<double>(trees.size());
}

RandomForest train_random_forest(const Dataset& data, const ForestParams& params) {
  const std::size_t d = check_dataset(data);
  if (params.n_trees < 1) throw Error(ErrorCode::InvalidArgument, "n_trees must be at least 1");
  const int max_features =
      params.subsample_features ? static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d)))) : 0;

  RandomForest forest;
  forest.trees.resize(static_cast<std::size_t>(params.n_trees));
  auto grow = [&](std::size_t i) {
    const std::uint64_t seed = params.seed + i;
    std::vector<std::size_t> rows(data.size());
    if (params.bootstrap) {
      Rng rng(seed);
      for (auto& r : rows) r = uniform_index(rng, data.size());
    } else {
      for (std::size_t k = 0; k < rows.size(); ++k) rows[k] = k;
    }
    TreeParams tp{params.max_depth, params.min_samples_leaf, max_features, mix_seed(seed, 0x7f4a7c15)};
    forest.trees[i] = TreeBuilder(data, tp).build(std::move(rows));
  };

  unsigned workers = params.threads ? params.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(params.n_trees));
  if (workers <= 1) {
    for (std::size_t i = 0; i < forest.trees.size(); ++i) grow(i);
    return forest;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < forest.trees.size(); i = next++) grow(i);
    });
  }
  for (auto& t : pool) t.join();
  return forest;
}

Standardizer Standardizer::fit(const Dataset& data) {
  const std::size_t d = check_dataset(data);
  Standardizer s;
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 0.0);
  for (const auto& e : data) {
    for (std::size_t k = 0; k < d; ++k) s.mean[k] += e.x[k];
  }
  for (auto& m : s.mean) m /= static_cast<double>(data.size());
  for (const auto& e : data) {
    for (std::size_t k = 0; k < d; ++k) s.scale[k] += (e.x[k] - s.mean[k]) * (e.x[k] - s.mean[k]);
  }
  for (auto& v : s.scale) {
    v = std::sqrt(v / static_cast<double>(data.size()));
    if (v < 1e-12) v = 1.0;
  }
  return s;
}

std::vector<double> Standardizer::apply(const std::vector<double>& x) const {
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = (x[k] - mean[k]) / scale[k];
  return out;
}

Dataset Standardizer::apply(const Dataset& data) const {
  Dataset out;
  out.reserve(data.size());
  for (const auto& e : data) out.push_back(Example{apply(e.x), e.y});
  return out;
}

double logistic_loss(const Dataset& data, const std::vector<double>& params, double l2, std::vector<double>* grad) {
  const std::size_t d = params.size() - 1;
  const double inv_n = 1.0 / static_cast<double>(data.size());
  if (grad) grad->assign(params.size(), 0.0);
  double loss = 0.0;
  for (const auto& e : data) {
    double z = params[d];
    for (std::size_t k = 0; k < d; ++k) z += params[k] * e.x[k];
    loss += softplus(z) - e.y * z;
    if (grad) {
      const double r = (sigmoid(z) - e.y) * inv_n;
      for (std::size_t k = 0; k < d; ++k) (*grad)[k] += r * e.x[k];
      (*grad)[d] += r;
    }
  }
  loss *= inv_n;
  for (std::size_t k = 0; k < d; ++k) {
    loss += 0.5 * l2 * params[k] * params[k];
    if (grad) (*grad)[k] += l2 * params[k];
  }
  return loss;
}

double LogisticModel::predict_proba(const std::vector<double>& x) const {
  auto s = standardizer.apply(x);
  double z = bias;
  for (std::size_t k = 0; k < weights.size(); ++k) z += weights[k] * s[k];
  return sigmoid(z);
}

LogisticFit train_logistic_regression(const Dataset& data, const LogisticParams& params) {
  const std::size_t d = check_dataset(data);
  LogisticFit fit;
  fit.model.standardizer = Standardizer::fit(data);
  const Dataset z = fit.model.standardizer.apply(data);
  std::vector<double> theta(d + 1, 0.0), grad;
  for (int epoch = 0;; ++epoch) {
    fit.loss_trace.push_back(logistic_loss(z, theta, params.l2, &grad));
    if (epoch == params.epochs) break;
    for (std::size_t k = 0; k <= d; ++k) theta[k] -= params.learning_rate * grad[k];
  }
  fit.model.weights.assign(theta.begin(), theta.end() - 1);
  fit.model.bias = theta.back();
  return fit;
}

double GaussianNB::predict_proba(const std::vector<double>& x) const {
  if (!has_class[0] || !has_class[1]) return has_class[1] ? 1.0 : 0.0;
  double ll[2];
  for (int c = 0; c < 2; ++c) {
    ll[c] = log_prior[c];
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double v = variance[c][k];
      const double diff = x[k] - mean[c][k];
      ll[c] += -0.5 * std::log(2.0 * std::numbers::pi * v) - diff * diff / (2.0 * v);
    }
  }
  const double m = std::max(ll[0], ll[1]);
  const double lse = m + std::log(std::exp(ll[0] - m) + std::exp(ll[1] - m));
  return std::exp(ll[1] - lse);
}

GaussianNB train_gaussian_nb(const Dataset& data, const NaiveBayesParams& params) {
  const std::size_t d = check_dataset(data);
  GaussianNB nb;
  std::size_t count[2] = {0, 0};
  for (int c = 0; c < 2; ++c) {
    nb.mean[c].assign(d, 0.0);
    nb.variance[c].assign(d, 0.0);
  }
  for (const auto& e : data) {
    ++count[e.y];
    for (std::size_t k = 0; k < d; ++k) nb.mean[e.y][k] += e.x[k];
  }
  for (int c = 0; c < 2; ++c) {
    if (count[c] == 0) continue;
    for (auto& m : nb.mean[c]) m /= static_cast<double>(count[c]);
  }
  for (const auto& e : data) {
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = e.x[k] - nb.mean[e.y][k];
      nb.variance[e.y][k] += diff * diff;
    }
  }
  for (int c = 0; c < 2; ++c) {
    nb.has_class[c] = count[c] > 0;
    for (auto& v : nb.variance[c]) {
      v = count[c] ? v / static_cast<double>(count[c]) : 0.0;
      v = std::max(v, params.variance_floor);
    }
    nb.log_prior[c] = count[c] ? std::log(static_cast<double>(count[c]) / static_cast<double>(data.size())) : 0.0;
  }
  return nb;
}

std::size_t neural_param_count(int inputs, int hidden) {
  return static_cast<std::size_t>(hidden) * static_cast<std::size_t>(inputs + 2) + 1;
}

std::vector<double> neural_init(int inputs, int hidden, std::uint64_t seed) {
  std::vector<double> p(neural_param_count(inputs, hidden), 0.0);
  Rng rng(seed);
  const double r1 = 1.0 / std::sqrt(static_cast<double>(std::max(inputs, 1)));
  const double r2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  const std::size_t w1 = static_cast<std::size_t>(hidden) * inputs;
  for (std::size_t i = 0; i < w1; ++i) p[i] = uniform(rng, -r1, r1);
  const std::size_t w2 = w1 + hidden;
  for (int j = 0; j < hidden; ++j) p[w2 + j] = uniform(rng, -r2, r2);
  return p;
}

namespace {

double neural_output(const std::vector<double>& p, int inputs, int hidden, const std::vector<double>& x,
                     std::vector<double>& h) {
  const std::size_t b1 = static_cast<std::size_t>(hidden) * inputs;
  const std::size_t w2 = b1 + hidden;
  double o = p[w2 + hidden];
  for (int j = 0; j < hidden; ++j) {
    double a = p[b1 + j];
    const double* row = &p[static_cast<std::size_t>(j) * inputs];
    for (int k = 0; k < inputs; ++k) a += row[k] * x[k];
    h[j] = sigmoid(a);
    o += p[w2 + j] * h[j];
  }
  return o;
}

}  // namespace

double neural_loss(const Dataset& data, int hidden, const std::vector<double>& params, double l2,
                   std::vector<double>* grad) {
  const int inputs = static_cast<int>(data.front().x.size());
  if (params.size() != neural_param_count(inputs, hidden)) {
    throw Error(ErrorCode::InvalidArgument, "parameter vector does not match the network shape");
  }
  const std::size_t b1 = static_cast<std::size_t>(hidden) * inputs;
  const std::size_t w2 = b1 + hidden;
  const std::size_t b2 = w2 + hidden;
  const double inv_n = 1.0 / static_cast<double>(data.size());
  if (grad) grad->assign(params.size(), 0.0);
  std::vector<double> h(hidden);
  double loss = 0.0;
  for (const auto& e : data) {
    const double o = neural_output(params, inputs, hidden, e.x, h);
    loss += softplus(o) - e.y * o;
    if (!grad) continue;
    const double delta = (sigmoid(o) - e.y) * inv_n;
    (*grad)[b2] += delta;
    for (int j = 0; j < hidden; ++j) {
      (*grad)[w2 + j] += delta * h[j];
      const double dh = delta * params[w2 + j] * h[j] * (1.0 - h[j]);
      (*grad)[b1 + j] += dh;
      double* row = &(*grad)[static_cast<std::size_t>(j) * inputs];
      for (int k = 0; k < inputs; ++k) row[k] += dh * e.x[k];
    }
  }
  loss *= inv_n;
  auto regularize = [&](std::size_t from, std::size_t to) {
    for (std::size_t i = from; i < to; ++i) {
      loss += 0.5 * l2 * params[i] * params[i];
      if (grad) (*grad)[i] += l2 * params[i];
    }
  };
  regularize(0, b1);
  regularize(w2, b2);
  return loss;
}

double NeuralNet::predict_proba(const std::vector<double>& x) const {
  std::vector<double> h(hidden);
  return sigmoid(neural_output(params, inputs, hidden, standardizer.apply(x), h));
}

NeuralNet train_neural_net(const Dataset& data, const NeuralParams& params) {
  const std::size_t d = check_dataset(data);
  if (params.hidden_units < 1) throw Error(ErrorCode::InvalidArgument, "hidden_units must be at least 1");
  NeuralNet net;
  net.standardizer = Standardizer::fit(data);
  net.inputs = static_cast<int>(d);
  net.hidden = params.hidden_units;
  net.params = neural_init(net.inputs, net.hidden, params.seed);
  const Dataset z = net.standardizer.apply(data);
  std::vector<double> grad;
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    neural_loss(z, net.hidden, net.params, params.l2, &grad);
    for (std::size_t i = 0; i < grad.size(); ++i) net.params[i] -= params.learning_rate * grad[i];
  }
  return net;
}

double TrainedModel::predict_proba(const std::vector<double>& x) const {
  return std::visit([&](const auto& m) { return m.predict_proba(x); }, params);
}

TrainedModel train(Family family, const Dataset& data, const FeatureSchema& schema, const TrainConfig& config) {
  const std::size_t d = check_dataset(data);
  if (d != schema.dimension()) {
    throw Error(ErrorCode::InvalidArgument, "examples have " + std::to_string(d) + " features, schema expects " +
                                                std::to_string(schema.dimension()));
  }
  TrainedModel m;
  m.family = family;
  m.schema = schema;
  m.seed = config.seed;
  switch (family) {
    case Family::DecisionTree: {
      auto p = config.tree;
      p.seed = config.seed;
      m.params = train_decision_tree(data, p);
      break;
    }
    case Family::RandomForest: {
      auto p = config.forest;
      p.seed = config.seed;
      m.params = train_random_forest(data, p);
      break;
    }
    case Family::LogisticRegression: {
      auto p = config.logistic;
      p.seed = config.seed;
      m.params = train_logistic_regression(data, p).model;
      break;
    }
    case Family::GaussianNB: m.params = train_gaussian_nb(data, config.naive_bayes); break;
    case Family::NeuralNet: {
      auto p = config.neural;
      p.seed = config.seed;
      m.params = train_neural_net(data, p);
      break;
    }
  }
  return m;
}

namespace {

Json tree_json(const DecisionTree& t) {
  Json nodes = Json::array();
  for (const auto& n : t.nodes) nodes.push_back(Json::array({n.feature, n.threshold, n.left, n.right, n.proba, n.samples}));
  return nodes;
}

DecisionTree tree_from(const Json& j) {
  DecisionTree t;
  for (const auto& n : j) {
    t.nodes.push_back(TreeNode{n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(), n.at(3).get<int>(),
                               n.at(4).get<double>(), n.at(5).get<std::uint32_t>()});
  }
  if (t.nodes.empty()) throw Error(ErrorCode::InvalidArgument, "tree has no nodes");
  for (const auto& n : t.nodes) {
    const int size = static_cast<int>(t.nodes.size());
    if (n.feature >= 0 && (n.left <= 0 || n.left >= size || n.right <= 0 || n.right >= size)) {
      throw Error(ErrorCode::InvalidArgument, "tree node refers outside the tree");
    }
  }
  return t;
}

Json standardizer_json(const Standardizer& s) { return Json{{"mean", s.mean}, {"scale", s.scale}}; }

Standardizer standardizer_from(const Json& j) {
  return Standardizer{j.at("mean").get<std::vector<double>>(), j.at("scale").get<std::vector<double>>()};
}

}  // namespace

void to_json(Json& j, const TrainedModel& m) {
  Json params = std::visit(
      [](const auto& p) -> Json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, DecisionTree>) {
          return Json{{"nodes", tree_json(p)}};
        } else if constexpr (std::is_same_v<T, RandomForest>) {
          Json trees = Json::array();
          for (const auto& t : p.trees) trees.push_back(tree_json(t));
          return Json{{"trees", trees}};
        } else if constexpr (std::is_same_v<T, LogisticModel>) {
          return Json{{"standardizer", standardizer_json(p.standardizer)}, {"weights", p.weights}, {"bias", p.bias}};
        } else if constexpr (std::is_same_v<T, GaussianNB>) {
          return Json{{"mean", {p.mean[0], p.mean[1]}},
                      {"variance", {p.variance[0], p.variance[1]}},
                      {"log_prior", {p.log_prior[0], p.log_prior[1]}},
                      {"has_class", {p.has_class[0], p.has_class[1]}}};
        } else {
          return Json{{"standardizer", standardizer_json(p.standardizer)},
                      {"inputs", p.inputs},
                      {"hidden", p.hidden},
                      {"params", p.params}};
        }
      },
      m.params);
  j = Json{{"format", "bigthick-model"},
           {"version", kModelFormatVersion},
           {"family", to_string(m.family)},
           {"schema", m.schema},
           {"seed", m.seed},
           {"params", params}};
}

void from_json(const Json& j, TrainedModel& m) {
  if (j.value("format", "") != "bigthick-model" || j.value("version", 0) != kModelFormatVersion) {
    throw Error(ErrorCode::InvalidArgument, "not a version " + std::to_string(kModelFormatVersion) + " model file");
  }
  m.family = parse_family(j.at("family").get<std::string>());
  m.schema = j.at("schema").get<FeatureSchema>();
  m.seed = j.at("seed").get<std::uint64_t>();
  const Json& p = j.at("params");
  switch (m.family) {
    case Family::DecisionTree: m.params = tree_from(p.at("nodes")); break;
    case Family::RandomForest: {
      RandomForest f;
      for (const auto& t : p.at("trees")) f.trees.push_back(tree_from(t));
      if (f.trees.empty()) throw Error(ErrorCode::InvalidArgument, "forest has no trees");
      m.params = std::move(f);
      break;
    }
    case Family::LogisticRegression:
      m.params = LogisticModel{standardizer_from(p.at("standardizer")), p.at("weights").get<std::vector<double>>(),
                               p.at("bias").get<double>()};
      break;
    case Family::GaussianNB: {
      GaussianNB nb;
      for (int c = 0; c < 2; ++c) {
        nb.mean[c] = p.at("mean").at(c).get<std::vector<double>>();
        nb.variance[c] = p.at("variance").at(c).get<std::vector<double>>();
        nb.log_prior[c] = p.at("log_prior").at(c).get<double>();
        nb.has_class[c] = p.at("has_class").at(c).get<bool>();
      }
      m.params = std::move(nb);
      break;
    }
    case Family::NeuralNet: {
      NeuralNet net{standardizer_from(p.at("standardizer")), p.at("inputs").get<int>(), p.at("hidden").get<int>(),
                    p.at("params").get<std::vector<double>>()};
      if (net.params.size() != neural_param_count(net.inputs, net.hidden)) {
        throw Error(ErrorCode::InvalidArgument, "network parameters do not match its shape");
      }
      m.params = std::move(net);
      break;
    }
  }
}

}  // namespace bigthick::scheduler
