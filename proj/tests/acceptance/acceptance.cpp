// Acceptance suite. One PASS/FAIL line per criterion; exits non-zero when any
// criterion fails. The synthetic cohort and plan come from configs/.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bigthick/context/snapshot.hpp"
#include "bigthick/error.hpp"
#include "bigthick/json_util.hpp"
#include "bigthick/plan/expand.hpp"
#include "bigthick/plan/schedule.hpp"
#include "bigthick/random.hpp"
#include "bigthick/scheduler/dataset.hpp"
#include "bigthick/scheduler/evaluate.hpp"
#include "bigthick/scheduler/model.hpp"
#include "bigthick/sim/experiment.hpp"
#include "bigthick/store/stm.hpp"
#include "support/generators.hpp"
#include "support/schedule_verifier.hpp"
#include "support/temp_dir.hpp"

namespace bigthick {
namespace {

namespace fs = std::filesystem;
using scheduler::Confusion;
using scheduler::Dataset;
using scheduler::Example;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int digits = 3) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << x;
  return os.str();
}

std::string sci(double x) {
  std::ostringstream os;
  os.setf(std::ios::scientific);
  os.precision(2);
  os << x;
  return os.str();
}

Json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + p.string());
  return Json::parse(in);
}

// ---- shared synthetic runs ----

struct Runs {
  std::vector<sim::BehaviorProfile> cohort;
  std::map<std::string, const sim::BehaviorProfile*> by_id;
  plan::ExperimentPlan plan;
  std::uint64_t seed = 0;
  int warmup_days = 14;
  int days = 28;
  testing::TempDir fixed_dir, adaptive_dir;
  sim::ExperimentResult fixed, adaptive;
  std::unique_ptr<service::Service> fixed_service, adaptive_service;
  double fixed_seconds = 0.0;

  Date held_out_start() const { return plan.start + std::chrono::days{warmup_days}; }
  bool held_out(Instant t) const { return date_of(t) >= held_out_start(); }
};

sim::ExperimentOptions options_for(const Runs& r, sim::Policy policy, const fs::path& dir) {
  sim::ExperimentOptions o;
  o.policy = policy;
  o.days = r.days;
  o.seed = r.seed;
  o.warmup_days = r.warmup_days;
  o.data_dir = dir / "data";
  return o;
}

void prune_events(sim::ExperimentResult& result) {
  std::erase_if(result.events, [](const sim::SimEvent& e) { return e.kind != sim::SimEventKind::Notified; });
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Runs& runs() {
  static Runs r;
  if (r.cohort.empty()) {
    const fs::path configs = fs::path(BIGTHICK_SOURCE_DIR) / "configs";
    const auto config = read_json(configs / "cohort.json").get<sim::CohortConfig>();
    r.cohort = sim::generate_cohort(config);
    r.plan = read_json(configs / "plan.json").get<plan::ExperimentPlan>();
    r.seed = config.seed;
  }
  return r;
}

void ensure_fixed(Runs& r) {
  if (r.fixed_service) return;
  const auto t0 = std::chrono::steady_clock::now();
  r.fixed = sim::run_experiment(r.cohort, r.plan, options_for(r, sim::Policy::Fixed, r.fixed_dir.path()),
                                &r.fixed_service);
  r.fixed_seconds = seconds_since(t0);
  prune_events(r.fixed);
  for (const auto& p : r.cohort) r.by_id[p.id] = &p;
}

void ensure_adaptive(Runs& r) {
  if (r.adaptive_service) return;
  r.adaptive = sim::run_experiment(r.cohort, r.plan, options_for(r, sim::Policy::Adaptive, r.adaptive_dir.path()),
                                   &r.adaptive_service);
  prune_events(r.adaptive);
  for (const auto& p : r.cohort) r.by_id[p.id] = &p;
}

// ---- criteria ----

Outcome classifier_quality() {
  auto& r = runs();
  const auto t0 = std::chrono::steady_clock::now();
  ensure_fixed(r);
  auto split = scheduler::chronological_split(r.fixed.dataset, 0.7, true);
  const auto train = scheduler::to_dataset(split.train);
  const auto test = scheduler::to_dataset(split.test);
  std::size_t positives = 0;
  for (const auto& e : test) positives += static_cast<std::size_t>(e.y);
  const double majority =
      static_cast<double>(std::max(positives, test.size() - positives)) / static_cast<double>(test.size());

  scheduler::TrainConfig tc;
  tc.seed = r.seed;
  bool pass = true;
  std::string detail = "rows=" + std::to_string(r.fixed.dataset.size()) + " test=" + std::to_string(test.size());
  for (auto family : scheduler::kAllFamilies) {
    auto model = scheduler::train(family, train, r.fixed.schema, tc);
    auto m = scheduler::evaluate(model, test);
    detail += std::string(" ") + scheduler::to_string(family) + ".auc=" + fmt(m.auc);
    if (m.auc < 0.70) pass = false;
    if (family == scheduler::Family::RandomForest) {
      detail += " rf.acc=" + fmt(m.accuracy) + " majority=" + fmt(majority);
      if (m.accuracy < majority + 0.10) pass = false;
    }
  }
  const double secs = seconds_since(t0);
  detail += " runtime=" + fmt(secs, 1) + "s";
  if (secs >= 120.0) pass = false;
  return {pass, detail};
}

Outcome metric_arithmetic() {
  Rng rng(20240304);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 30);
    std::vector<double> s;
    std::vector<int> y;
    for (std::size_t i = 0; i < n; ++i) {
      s.push_back(static_cast<double>(uniform_index(rng, 10)) / 9.0);
      y.push_back(static_cast<int>(uniform_index(rng, 2)));
    }
    Confusion c;
    double wins = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool pred = s[i] >= 0.5;
      (y[i] ? (pred ? c.tp : c.fn) : (pred ? c.fp : c.tn))++;
      for (std::size_t j = 0; j < n; ++j) {
        if (y[i] == 1 && y[j] == 0) {
          ++pairs;
          wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        }
      }
    }
    const double auc = pairs ? wins / static_cast<double>(pairs) : 0.5;
    const auto m = scheduler::evaluate_scores(s, y);
    const double tp = c.tp, fp = c.fp, fn = c.fn, tn = c.tn, N = static_cast<double>(n);
    const double acc = (tp + tn) / N;
    const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    const double pe = ((tp + fp) / N) * ((tp + fn) / N) + ((fn + tn) / N) * ((fp + tn) / N);
    const double kappa = pe < 1 ? (acc - pe) / (1 - pe) : 0.0;
    const bool same = m.confusion == c && m.auc == auc && std::abs(m.accuracy - acc) <= 1e-12 &&
                      std::abs(m.precision - prec) <= 1e-12 && std::abs(m.recall - rec) <= 1e-12 &&
                      std::abs(m.f1 - f1) <= 1e-12 && std::abs(m.kappa - kappa) <= 1e-12;
    if (!same) ++mismatches;
  }

  // TP=3 FP=1 FN=2 TN=4: accuracy 7/10, precision 3/4, recall 3/5, F1 2/3,
  // chance agreement (4*5 + 6*5)/100 = 1/2 so kappa (0.7-0.5)/(1-0.5) = 0.4.
  const auto f = scheduler::metrics_from_confusion(Confusion{3, 1, 2, 4});
  const bool fixture = std::abs(f.accuracy - 0.7) <= 1e-12 && std::abs(f.precision - 0.75) <= 1e-12 &&
                       std::abs(f.recall - 0.6) <= 1e-12 && std::abs(f.f1 - 2.0 / 3.0) <= 1e-12 &&
                       std::abs(f.kappa - 0.4) <= 1e-12;
  // Scores 0.9 0.8 0.3 0.1 for labels 1 0 1 0: 3 of 4 pairs ordered.
  const bool auc_fixture = scheduler::auc_score({0.9, 0.8, 0.3, 0.1}, {1, 0, 1, 0}) == 0.75;
  return {mismatches == 0 && fixture && auc_fixture,
          "oracle mismatches=" + std::to_string(mismatches) + "/1000 fixture=" + (fixture ? "ok" : "bad") +
              " auc_fixture=" + (auc_fixture ? "ok" : "bad")};
}

Dataset gradient_data(Rng& rng, std::size_t n, int d) {
  Dataset data;
  for (std::size_t i = 0; i < n; ++i) {
    Example e;
    for (int k = 0; k < d; ++k) e.x.push_back(uniform(rng, -2, 2));
    e.y = static_cast<int>(uniform_index(rng, 2));
    data.push_back(e);
  }
  return data;
}

template <typename Loss>
double gradient_error(Loss loss, std::vector<double> params, const std::vector<double>& analytic) {
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double up = loss(params);
    params[i] = keep - h;
    const double down = loss(params);
    params[i] = keep;
    const double numeric = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1e-6, std::abs(analytic[i]) + std::abs(numeric)));
  }
  return worst;
}

Outcome gradient_checks() {
  Rng rng(77);
  double lr_worst = 0.0, nn_worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + static_cast<int>(uniform_index(rng, 6));
    const auto data = gradient_data(rng, 12, d);
    const double l2 = uniform(rng, 0.0, 0.1);

    std::vector<double> w;
    for (int k = 0; k <= d; ++k) w.push_back(uniform(rng, -1, 1));
    std::vector<double> g;
    scheduler::logistic_loss(data, w, l2, &g);
    lr_worst = std::max(lr_worst, gradient_error([&](const auto& p) { return scheduler::logistic_loss(data, p, l2); }, w, g));

    const int hidden = 1 + static_cast<int>(uniform_index(rng, 6));
    auto params = scheduler::neural_init(d, hidden, static_cast<std::uint64_t>(trial));
    for (auto& p : params) p += uniform(rng, -0.5, 0.5);
    scheduler::neural_loss(data, hidden, params, l2, &g);
    nn_worst = std::max(
        nn_worst, gradient_error([&](const auto& p) { return scheduler::neural_loss(data, hidden, p, l2); }, params, g));
  }
  return {lr_worst < 1e-4 && nn_worst < 1e-4,
          "max relative error lr=" + sci(lr_worst) + " nn=" + sci(nn_worst)};
}

Outcome forest_tree_equivalence() {
  Rng rng(5);
  Dataset data;
  for (int i = 0; i < 300; ++i) {
    Example e;
    double score = 0;
    for (int k = 0; k < 6; ++k) {
      e.x.push_back(uniform(rng, -2, 2));
      score += (k % 2 ? -1.0 : 1.0) * e.x.back();
    }
    e.y = score + uniform(rng, -1.5, 1.5) > 0 ? 1 : 0;
    data.push_back(e);
  }
  scheduler::ForestParams fp;
  fp.n_trees = 1;
  fp.bootstrap = false;
  fp.subsample_features = false;
  fp.max_depth = 10;
  fp.min_samples_leaf = 2;
  fp.seed = 9;
  scheduler::TreeParams tp;
  tp.max_depth = 10;
  tp.min_samples_leaf = 2;
  tp.seed = 9;
  const auto forest = scheduler::train_random_forest(data, fp);
  const auto tree = scheduler::train_decision_tree(data, tp);
  int differing = 0;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> x;
    for (int k = 0; k < 6; ++k) x.push_back(uniform(rng, -3, 3));
    const double a = forest.predict_proba(x), b = tree.predict_proba(x);
    if (std::memcmp(&a, &b, sizeof a) != 0) ++differing;
  }
  return {differing == 0, "inputs differing bitwise=" + std::to_string(differing) + "/100"};
}

Outcome avoid_window_efficacy() {
  auto& r = runs();
  ensure_fixed(r);
  ensure_adaptive(r);

  std::size_t class_minutes = 0, covered = 0;
  r.adaptive_service->read([&](const store::StmState& stm, const store::LtmStore&) {
    for (const auto& p : r.cohort) {
      auto it = stm.avoid_windows.find(p.id);
      for (Date d = r.held_out_start(); d < r.plan.start + std::chrono::days{r.days}; d += std::chrono::days{1}) {
        const std::vector<plan::AvoidWindow>* windows = nullptr;
        if (it != stm.avoid_windows.end()) {
          auto w = it->second.find(d);
          if (w != it->second.end()) windows = &w->second;
        }
        for (int m = 0; m < kMinutesPerDay; ++m) {
          const Instant t = Instant{d} + Minutes{m};
          if (!sim::in_class(p, t)) continue;
          ++class_minutes;
          if (windows && std::any_of(windows->begin(), windows->end(), [&](const auto& w) { return w.contains(t); })) {
            ++covered;
          }
        }
      }
    }
  });
  const double coverage = class_minutes ? static_cast<double>(covered) / static_cast<double>(class_minutes) : 0.0;

  auto in_class_notifications = [&](const sim::ExperimentResult& result) {
    std::size_t n = 0;
    for (const auto& e : result.events) {
      if (e.kind == sim::SimEventKind::Notified && r.held_out(e.time) && sim::in_class(*r.by_id.at(e.participant), e.time)) {
        ++n;
      }
    }
    return n;
  };
  const auto fixed_n = in_class_notifications(r.fixed);
  const auto adaptive_n = in_class_notifications(r.adaptive);
  const double reduction =
      fixed_n ? 1.0 - static_cast<double>(adaptive_n) / static_cast<double>(fixed_n) : 0.0;
  return {coverage >= 0.70 && reduction >= 0.50,
          "class-minute coverage=" + fmt(coverage) + " (" + std::to_string(covered) + "/" +
              std::to_string(class_minutes) + ") in-class notifications fixed=" + std::to_string(fixed_n) +
              " adaptive=" + std::to_string(adaptive_n) + " reduction=" + fmt(reduction)};
}

double answered_rate(service::Service& service, Date from) {
  auto resp = service.handle(
      service::ApiRequest{"GET", "/dashboard/summary", {{"from", format_date(from)}}, "", sim::kSimResearcherToken});
  if (resp.status != 200) throw Error(ErrorCode::Io, "summary returned " + std::to_string(resp.status));
  double sent = 0, answered = 0;
  for (const auto& s : resp.body.at("summaries")) {
    sent += s.at("sent").get<double>();
    answered += s.at("answered").get<double>();
  }
  return sent > 0 ? answered / sent : 0.0;
}

Outcome adaptive_benefit() {
  auto& r = runs();
  ensure_fixed(r);
  ensure_adaptive(r);
  const double fixed = answered_rate(*r.fixed_service, r.held_out_start());
  const double adaptive = answered_rate(*r.adaptive_service, r.held_out_start());
  return {adaptive >= fixed + 0.05, "answered rate from " + format_date(r.held_out_start()) + " fixed=" + fmt(fixed) +
                                        " adaptive=" + fmt(adaptive) + " gain=" + fmt(adaptive - fixed)};
}

std::size_t illegal_histories_after_random_operations() {
  using namespace plan;
  Rng rng(4321);
  auto p = testing::make_plan({testing::question("q", {"09:00", "12:00", "15:00"}, 1, 45), testing::sensor("g", 240)}, 2);
  p.constraints.min_gap = Minutes{20};
  Schedule base;
  for (const auto& a : expand_plan(p, "P01", {}).actions) base.insert(a);
  std::vector<std::string> ids;
  for (const auto& [id, a] : base.actions()) ids.push_back(id);

  std::size_t bad = 0;
  for (int seq = 0; seq < 10000; ++seq) {
    Schedule s = base;
    Instant now = Instant{p.start} + Minutes{uniform_index(rng, 600)};
    for (int step = 0; step < 25; ++step) {
      now += Minutes{uniform_index(rng, 90)};
      const std::string& id = ids[uniform_index(rng, ids.size())];
      try {
        switch (uniform_index(rng, 7)) {
          case 0:
            for (const auto& c : clock_changes(s, now)) apply_change(s, c);
            break;
          case 1:
            for (const auto& a : due_actions(s, now)) {
              s.modify(a.id, [&](ScheduledAction& x) { transition(x, ActionState::Notified, now); });
            }
            break;
          case 2: apply_replan(s, p, ReplanRequest{id, "P01", Snooze{Minutes{1 + uniform_index(rng, 120)}}, now}); break;
          case 3: apply_replan(s, p, ReplanRequest{id, "P01", Move{now + Minutes{uniform_index(rng, 300)}}, now}); break;
          case 4: apply_replan(s, p, ReplanRequest{id, "P01", Skip{}, now}); break;
          case 5: record_outcome(s, id, OutcomeInput{OutcomeKind::Answered, now}); break;
          default: record_outcome(s, id, OutcomeInput{OutcomeKind::Expired, now}); break;
        }
      } catch (const Error&) {
        // Refused operations must leave the schedule untouched; the history check covers it.
      }
    }
    for (const auto& [id, a] : s.actions()) {
      if (testing::history_violation(a)) ++bad;
    }
  }
  return bad;
}

std::size_t plans_failing_verifier() {
  Rng rng(8080);
  std::size_t bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto p = testing::random_plan(rng);
    auto avoid = testing::random_windows(rng, p);
    auto out = plan::expand_plan(p, "P01", avoid);
    if (!testing::verify_schedule(p, "P01", avoid, out.actions).empty()) ++bad;
  }
  return bad;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Cuts the log at random byte offsets, as a crash mid-write would leave it,
/// and checks replay equals the fold of the complete records before the cut.
std::size_t torn_write_failures() {
  const auto events = testing::event_stream(400, 11);
  testing::TempDir dir;
  {
    store::StmStore stm(dir.path(), store::Durability::Os);
    for (const auto& e : events) stm.append(e.kind, e.payload, e.recorded_at);
  }
  const auto log = slurp(dir.path() / "stm.log");
  Rng rng(12);
  std::size_t bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t cut = uniform_index(rng, log.size() + 1);
    const auto complete = static_cast<std::size_t>(std::count(log.begin(), log.begin() + static_cast<long>(cut), '\n'));
    testing::TempDir copy;
    {
      std::ofstream out(copy.path() / "stm.log", std::ios::binary);
      out << log.substr(0, cut);
    }
    std::string recovered, appended_ok;
    {
      store::StmStore stm(copy.path(), store::Durability::Os);
      recovered = testing::canonical(stm.state());
      if (complete < events.size()) {
        const auto& next = events[complete];
        stm.append(next.kind, next.payload, next.recorded_at);
      }
    }
    const bool replay = recovered == testing::canonical(testing::fold(events, complete));
    // After a recovery the next append must land on a clean record boundary.
    store::StmStore reopened(copy.path(), store::Durability::Os);
    const bool resumed =
        testing::canonical(reopened.state()) == testing::canonical(testing::fold(events, std::min(complete + 1, events.size())));
    if (!replay || !resumed) ++bad;
  }
  return bad;
}

Outcome plan_engine_properties() {
  const auto illegal = illegal_histories_after_random_operations();
  const auto unverified = plans_failing_verifier();
  const auto torn = torn_write_failures();
  return {illegal == 0 && unverified == 0 && torn == 0,
          "illegal histories=" + std::to_string(illegal) + " (10000 sequences) verifier failures=" +
              std::to_string(unverified) + "/1000 torn-write replay failures=" + std::to_string(torn) + "/100"};
}

Outcome context_round_trip() {
  const auto vocab = context::Vocabulary::standard();
  const Instant around = parse_instant("2024-03-05T12:00:00Z");
  Rng rng(31337);
  std::size_t errors = 0, mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto answers = testing::random_answers(rng, vocab, around);
    try {
      context::check_answers(vocab, answers);
      const auto s = context::build_snapshot(vocab, "P" + std::to_string(i % 9), around, answers);
      errors += context::validate_snapshot(s, vocab).error_count();
      if (Json::parse(Json(s).dump()).get<context::ContextSnapshot>() != s) ++mismatches;
      if (Json::parse(Json(answers).dump()).get<context::DiaryAnswerSet>() != answers) ++mismatches;
    } catch (const Error&) {
      ++errors;
    }
  }
  return {errors == 0 && mismatches == 0,
          "validation errors=" + std::to_string(errors) + " round-trip mismatches=" + std::to_string(mismatches) + "/1000"};
}

}  // namespace
}  // namespace bigthick

int main() {
  using namespace bigthick;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"classifier-quality", classifier_quality},
      {"metric-arithmetic", metric_arithmetic},
      {"gradient-checks", gradient_checks},
      {"forest-tree-equivalence", forest_tree_equivalence},
      {"avoid-window-efficacy", avoid_window_efficacy},
      {"adaptive-benefit", adaptive_benefit},
      {"plan-engine-properties", plan_engine_properties},
      {"context-round-trip", context_round_trip},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  std::cout << criteria.size() - static_cast<std::size_t>(failed) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
