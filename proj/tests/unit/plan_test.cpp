#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "bigthick/error.hpp"
#include "bigthick/plan/expand.hpp"
#include "bigthick/plan/schedule.hpp"
#include "bigthick/random.hpp"
#include "support/generators.hpp"
#include "support/schedule_verifier.hpp"

namespace bigthick::plan {
namespace {

using testing::kMonday;
using testing::make_plan;
using testing::question;
using testing::random_plan;
using testing::random_windows;
using testing::sensor;

Instant at(Date d, const char* hhmm) { return at_clock(d, parse_clock(hhmm)); }

AvoidWindow window(Date d, const char* from, const char* to, double conf,
                   AvoidSource src = AvoidSource::Predicted) {
  return AvoidWindow{"P01", d, parse_clock(from), parse_clock(to), src, conf};
}

std::vector<ScheduledAction> questions_of(const std::vector<ScheduledAction>& actions) {
  std::vector<ScheduledAction> out;
  std::copy_if(actions.begin(), actions.end(), std::back_inserter(out),
               [](const auto& a) { return a.kind == TaskKind::Question; });
  return out;
}

Schedule schedule_of(const std::vector<ScheduledAction>& actions) {
  Schedule s;
  for (const auto& a : actions) s.insert(a);
  return s;
}

// ---- expansion ----

TEST(ExpandPlan, DailyQuestionEachDay) {
  auto out = expand_plan(make_plan({question("q", {"10:00"})}), "P01", {});
  ASSERT_EQ(out.actions.size(), 3u);
  for (int d = 0; d < 3; ++d) {
    EXPECT_EQ(out.actions[d].due_time, at(kMonday + std::chrono::days{d}, "10:00"));
    EXPECT_EQ(out.actions[d].state, ActionState::Pending);
  }
  EXPECT_TRUE(out.diagnostics.empty());
}

TEST(ExpandPlan, AvoidWindowDisplacesToEarliestFeasibleMinute) {
  auto plan = make_plan({question("q", {"10:00"})});
  plan.constraints.min_gap = Minutes{30};
  auto out = expand_plan(plan, "P01", {window(kMonday, "09:00", "11:00", 0.9)});
  ASSERT_EQ(out.actions.size(), 3u);
  EXPECT_EQ(out.actions[0].due_time, at(kMonday, "11:00"));
  EXPECT_EQ(out.actions[1].due_time, at(kMonday + std::chrono::days{1}, "10:00"));
}

TEST(ExpandPlan, LowConfidenceWindowIgnoredDeclaredAlwaysHonored) {
  auto plan = make_plan({question("q", {"10:00"})}, 1);
  EXPECT_EQ(expand_plan(plan, "P01", {window(kMonday, "09:00", "11:00", 0.59)}).actions[0].due_time,
            at(kMonday, "10:00"));
  EXPECT_EQ(expand_plan(plan, "P01", {window(kMonday, "09:00", "11:00", 0.0, AvoidSource::Declared)})
                .actions[0]
                .due_time,
            at(kMonday, "11:00"));
}

TEST(ExpandPlan, CapKeepsHighestPriority) {
  auto plan = make_plan({question("a", {"09:00"}, 1), question("b", {"12:00"}, 5), question("c", {"18:00"}, 3)});
  plan.constraints.max_daily_questions = 2;
  auto out = expand_plan(plan, "P01", {});
  ASSERT_EQ(out.actions.size(), 6u);
  for (const auto& a : out.actions) EXPECT_NE(a.template_id, "a");
  EXPECT_EQ(out.diagnostics.size(), 3u);
}

TEST(ExpandPlan, QuietHoursCoveringTheDayYieldNoQuestions) {
  auto plan = make_plan({question("q", {"10:00"}), sensor("g", 360)});
  plan.constraints.quiet_hours = QuietHours{ClockTime{0}, ClockTime{kMinutesPerDay}};
  auto out = expand_plan(plan, "P01", {});
  EXPECT_TRUE(questions_of(out.actions).empty());
  EXPECT_EQ(out.actions.size(), 12u);
  EXPECT_EQ(out.diagnostics.size(), 3u);
}

TEST(ExpandPlan, SensorsAreNeverDisplaced) {
  auto plan = make_plan({sensor("g", 15)}, 1);
  plan.constraints.quiet_hours = QuietHours{parse_clock("22:00"), parse_clock("07:00")};
  auto out = expand_plan(plan, "P01", {window(kMonday, "00:00", "23:59", 1.0, AvoidSource::Declared)});
  ASSERT_EQ(out.actions.size(), 96u);
  for (int i = 0; i < 96; ++i) EXPECT_EQ(out.actions[i].due_time, Instant{kMonday} + Minutes{15 * i});
}

TEST(ExpandPlan, RespectsQuietHoursWrappingMidnight) {
  auto plan = make_plan({question("q", {"06:00", "23:00"})}, 1);
  plan.constraints.quiet_hours = QuietHours{parse_clock("22:00"), parse_clock("07:00")};
  auto out = expand_plan(plan, "P01", {});
  ASSERT_EQ(out.actions.size(), 1u);
  EXPECT_EQ(out.actions[0].due_time, at(kMonday, "07:00"));
  EXPECT_EQ(out.diagnostics.size(), 1u);
}

TEST(ExpandPlan, Deterministic) {
  auto plan = make_plan({question("a", {"09:00", "09:10"}, 2), question("b", {"09:05"}, 2), sensor("g", 60)});
  plan.constraints.min_gap = Minutes{20};
  std::vector<AvoidWindow> avoid{window(kMonday, "08:00", "09:30", 0.7)};
  auto a = expand_plan(plan, "P01", avoid);
  auto b = expand_plan(plan, "P01", avoid);
  EXPECT_EQ(a.actions, b.actions);
  EXPECT_EQ(a.diagnostics, b.diagnostics);
}

TEST(ExpandPlan, PlanDocumentRoundTrip) {
  auto plan = make_plan({question("a", {"09:00"}, 2), sensor("g", 15)});
  plan.constraints.min_gap = Minutes{30};
  plan.constraints.quiet_hours = QuietHours{parse_clock("22:00"), parse_clock("07:00")};
  nlohmann::json j = plan;
  EXPECT_EQ(j.at("schema_version"), kPlanSchemaVersion);
  EXPECT_EQ(j.get<ExperimentPlan>(), plan);
}

TEST(ExpandPlan, RejectsInvalidPlans) {
  auto plan = make_plan({question("q", {"10:00"})});
  plan.end = plan.start;
  EXPECT_THROW(expand_plan(plan, "P01", {}), Error);
  auto zero = make_plan({sensor("g", 0)});
  EXPECT_THROW(expand_plan(zero, "P01", {}), Error);
  auto validity = make_plan({question("q", {"10:00"}, 0, 0)});
  EXPECT_THROW(expand_plan(validity, "P01", {}), Error);
}

// Oracle for one question per day: enumerate every minute of the day and keep
// the earliest feasible one at or after the nominal time.
TEST(ExpandPlanOracle, DisplacementMatchesEnumeration) {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const int nominal = static_cast<int>(uniform_index(rng, kMinutesPerDay));
    const int gap = static_cast<int>(uniform_index(rng, 4)) * 30;
    auto plan = make_plan({question("q", {format_clock(ClockTime{nominal}).c_str()})}, 3);
    plan.constraints.min_gap = Minutes{gap};
    std::optional<QuietHours> quiet;
    if (bernoulli(rng, 0.5)) {
      quiet = QuietHours{ClockTime{static_cast<int>(uniform_index(rng, kMinutesPerDay))},
                         ClockTime{static_cast<int>(uniform_index(rng, kMinutesPerDay))}};
      if (quiet->start == quiet->end) quiet.reset();
    }
    plan.constraints.quiet_hours = quiet;
    std::vector<AvoidWindow> avoid;
    for (int d = 0; d < 3; ++d) {
      for (int k = 0, n = static_cast<int>(uniform_index(rng, 3)); k < n; ++k) {
        int s = static_cast<int>(uniform_index(rng, kMinutesPerDay - 1));
        int e = s + 1 + static_cast<int>(uniform_index(rng, std::min(240, kMinutesPerDay - s)));
        avoid.push_back(AvoidWindow{"P01", kMonday + std::chrono::days{d}, ClockTime{s}, ClockTime{e},
                                    AvoidSource::Predicted, uniform01(rng)});
      }
    }
    auto out = expand_plan(plan, "P01", avoid);

    std::vector<long long> placed;
    std::vector<Instant> expected;
    for (int d = 0; d < 3; ++d) {
      const Date day = kMonday + std::chrono::days{d};
      for (int m = nominal; m < kMinutesPerDay; ++m) {
        bool ok = !(quiet && quiet->contains(m));
        for (const auto& w : avoid) {
          if (w.date == day && w.confidence >= 0.6 && m >= w.start.minute && m < w.end.minute) ok = false;
        }
        const long long abs = d * kMinutesPerDay + m;
        for (long long p : placed) {
          if (std::llabs(abs - p) < gap) ok = false;
        }
        if (ok) {
          placed.push_back(abs);
          expected.push_back(at_clock(day, ClockTime{m}));
          break;
        }
      }
    }
    std::vector<Instant> got;
    for (const auto& a : out.actions) got.push_back(a.due_time);
    ASSERT_EQ(got, expected) << "trial " << trial;
  }
}

// Oracle for the cap: over every subset of size cap, the kept set is the one
// whose (priority desc, time asc) sequence is lexicographically best.
TEST(ExpandPlanOracle, CapSelectionMatchesBruteForce) {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + static_cast<int>(uniform_index(rng, 4));
    const int cap = static_cast<int>(uniform_index(rng, n + 1));
    std::vector<TaskTemplate> templates;
    std::vector<std::pair<int, int>> occ;  // (priority, minute)
    std::set<int> used;
    for (int i = 0; i < n; ++i) {
      int m;
      do m = static_cast<int>(uniform_index(rng, 24)) * 60; while (!used.insert(m).second);
      int prio = static_cast<int>(uniform_index(rng, 4));
      templates.push_back(question("t" + std::to_string(i), {format_clock(ClockTime{m}).c_str()}, prio));
      occ.emplace_back(prio, m);
    }
    auto plan = make_plan(templates, 1);
    plan.constraints.max_daily_questions = cap;

    std::vector<int> best_subset;
    std::vector<std::pair<int, int>> best_key;
    for (int mask = 0; mask < (1 << n); ++mask) {
      if (__builtin_popcount(mask) != cap) continue;
      std::vector<std::pair<int, int>> key;
      for (int i = 0; i < n; ++i) {
        if (mask >> i & 1) key.emplace_back(-occ[i].first, occ[i].second);
      }
      std::sort(key.begin(), key.end());
      if (best_key.empty() || key < best_key) {
        best_key = key;
        best_subset.clear();
        for (int i = 0; i < n; ++i) {
          if (mask >> i & 1) best_subset.push_back(occ[i].second);
        }
      }
    }
    auto out = expand_plan(plan, "P01", {});
    std::vector<int> got;
    for (const auto& a : out.actions) got.push_back(minute_of_day(a.due_time));
    std::sort(best_subset.begin(), best_subset.end());
    ASSERT_EQ(got, best_subset) << "trial " << trial;
  }
}

TEST(ExpandPlanProperties, RandomPlansSatisfyPostConditions) {
  Rng rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    auto plan = random_plan(rng);
    auto avoid = random_windows(rng, plan);
    auto out = expand_plan(plan, "P01", avoid);
    auto violations = testing::verify_schedule(plan, "P01", avoid, out.actions);
    ASSERT_TRUE(violations.empty()) << "trial " << trial << ": " << violations.front();

    // Every question occurrence is either placed or reported.
    std::size_t occurrences = 0;
    for (const auto& t : plan.templates) {
      if (t.kind == TaskKind::Question) occurrences += t.occurrences().size();
    }
    std::size_t days = static_cast<std::size_t>((plan.end - plan.start).count());
    const bool all_quiet = plan.constraints.quiet_hours && plan.constraints.quiet_hours->covers_whole_day();
    if (!all_quiet) {
      ASSERT_EQ(questions_of(out.actions).size() + out.diagnostics.size(), occurrences * days);
    }
    std::set<std::string> ids;
    for (const auto& a : out.actions) ASSERT_TRUE(ids.insert(a.id).second);
    ASSERT_EQ(expand_plan(plan, "P01", avoid).actions, out.actions);
  }
}

// ---- state machine ----

TEST(StateMachine, TransitionGraphIsExactlyTheAllowedSet) {
  using S = ActionState;
  const std::vector<S> all{S::Pending, S::Notified, S::Answered, S::Expired, S::Skipped, S::Snoozed};
  const std::set<std::pair<S, S>> allowed{{S::Pending, S::Notified}, {S::Pending, S::Snoozed},
                                          {S::Pending, S::Skipped},  {S::Snoozed, S::Pending},
                                          {S::Notified, S::Answered}, {S::Notified, S::Expired},
                                          {S::Notified, S::Snoozed}};
  for (S from : all) {
    for (S to : all) {
      ScheduledAction a;
      a.id = "x";
      a.state = from;
      const bool legal = allowed.count({from, to}) > 0;
      EXPECT_EQ(is_legal_transition(from, to), legal) << to_string(from) << "->" << to_string(to);
      if (legal) {
        EXPECT_NO_THROW(transition(a, to, Instant{}));
      } else {
        EXPECT_THROW(transition(a, to, Instant{}), Error);
        EXPECT_EQ(a.state, from);
      }
    }
  }
  for (S s : all) {
    EXPECT_EQ(is_terminal(s), s == S::Answered || s == S::Expired || s == S::Skipped);
  }
}

TEST(StateMachine, HistoryTimeCannotGoBackwards) {
  ScheduledAction a;
  a.id = "x";
  transition(a, ActionState::Notified, at(kMonday, "10:00"));
  EXPECT_THROW(transition(a, ActionState::Answered, at(kMonday, "09:59")), Error);
  EXPECT_EQ(a.state, ActionState::Notified);
}

TEST(DueActions, OrderedByPriorityThenDueTime) {
  auto plan = make_plan({question("lo", {"08:00"}, 0), question("hi", {"09:00"}, 5), question("mid", {"07:00"}, 2),
                         question("late", {"12:00"}, 9)},
                        1);
  auto schedule = schedule_of(expand_plan(plan, "P01", {}).actions);
  auto due = due_actions(schedule, at(kMonday, "10:00"));
  std::vector<std::string> order;
  for (const auto& a : due) order.push_back(a.template_id);
  EXPECT_EQ(order, (std::vector<std::string>{"hi", "mid", "lo"}));
}

// ---- replan ----

struct ReplanFixture : ::testing::Test {
  ExperimentPlan plan = [] {
    auto p = make_plan({question("q", {"10:00", "11:00"})}, 2);
    p.constraints.min_gap = Minutes{30};
    return p;
  }();
  Schedule schedule = schedule_of(expand_plan(plan, "P01", {}).actions);
  std::string first = make_action_id("plan", "P01", "q", kMonday, 0);
  std::string second = make_action_id("plan", "P01", "q", kMonday, 1);

  ReplanRequest request(std::string id, ReplanOp op, const char* now = "10:00") {
    return ReplanRequest{std::move(id), "P01", op, at(kMonday, now)};
  }
};

TEST_F(ReplanFixture, SnoozeReturnsToPendingAtUntil) {
  auto event = apply_replan(schedule, plan, request(first, Snooze{Minutes{30}}));
  EXPECT_EQ(event.previous_due, at(kMonday, "10:00"));
  EXPECT_EQ(schedule.at(first).state, ActionState::Snoozed);
  EXPECT_EQ(schedule.at(first).state_time, at(kMonday, "10:30"));
  EXPECT_TRUE(due_actions(schedule, at(kMonday, "10:29")).empty());

  for (const auto& c : clock_changes(schedule, at(kMonday, "10:30"))) apply_change(schedule, c);
  EXPECT_EQ(schedule.at(first).state, ActionState::Pending);
  EXPECT_EQ(schedule.at(first).due_time, at(kMonday, "10:30"));
  ASSERT_EQ(due_actions(schedule, at(kMonday, "10:30")).size(), 1u);
}

TEST_F(ReplanFixture, SnoozeDurationBounds) {
  EXPECT_THROW(apply_replan(schedule, plan, request(first, Snooze{Minutes{0}})), Error);
  EXPECT_THROW(apply_replan(schedule, plan, request(first, Snooze{Minutes{24 * 60 + 1}})), Error);
  EXPECT_NO_THROW(apply_replan(schedule, plan, request(first, Snooze{Minutes{24 * 60}})));
}

TEST_F(ReplanFixture, SkipSettlesAndBlocksFurtherWork) {
  apply_replan(schedule, plan, request(first, Skip{}));
  EXPECT_EQ(schedule.at(first).state, ActionState::Skipped);
  EXPECT_TRUE(due_actions(schedule, at(kMonday, "10:30")).empty());
  try {
    apply_replan(schedule, plan, request(first, Snooze{Minutes{5}}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Conflict);
    EXPECT_NE(std::string(e.what()).find("already settled"), std::string::npos);
  }
}

TEST_F(ReplanFixture, MoveNearSiblingIsRejectedNamingIt) {
  try {
    apply_replan(schedule, plan, request(first, Move{at(kMonday, "11:10")}, "09:00"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Conflict);
    EXPECT_NE(std::string(e.what()).find(second), std::string::npos);
  }
  EXPECT_EQ(schedule.at(first).due_time, at(kMonday, "10:00"));
  apply_replan(schedule, plan, request(first, Move{at(kMonday, "12:00")}, "09:00"));
  EXPECT_EQ(schedule.at(first).due_time, at(kMonday, "12:00"));
}

TEST_F(ReplanFixture, MoveOutsidePlanDatesRejected) {
  EXPECT_THROW(apply_replan(schedule, plan, request(first, Move{Instant{plan.end} + Minutes{5}}, "09:00")), Error);
  EXPECT_THROW(apply_replan(schedule, plan, request("nope", Skip{})), Error);
  auto foreign = request(first, Skip{});
  foreign.participant = "P02";
  EXPECT_THROW(apply_replan(schedule, plan, foreign), Error);
}

// Pairwise-gap oracle for move acceptance.
TEST_F(ReplanFixture, MoveAcceptanceMatchesPairwiseCheck) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    Schedule s = schedule;
    Instant target = Instant{kMonday} + Minutes{uniform_index(rng, 2 * kMinutesPerDay)};
    bool ok = true;
    for (const auto& [id, a] : s.actions()) {
      if (id == first) continue;
      auto diff = target > a.due_time ? target - a.due_time : a.due_time - target;
      if (diff < Minutes{30}) ok = false;
    }
    bool accepted = true;
    try {
      apply_replan(s, plan, request(first, Move{target}, "00:00"));
    } catch (const Error&) {
      accepted = false;
    }
    EXPECT_EQ(accepted, ok) << format_instant(target);
  }
}

// ---- outcomes ----

struct OutcomeFixture : ::testing::Test {
  ExperimentPlan plan = make_plan({question("q", {"10:00"})}, 1);
  Schedule schedule = schedule_of(expand_plan(plan, "P01", {}).actions);
  std::string id = make_action_id("plan", "P01", "q", kMonday, 0);

  void notify() {
    schedule.modify(id, [&](ScheduledAction& a) { transition(a, ActionState::Notified, at(kMonday, "10:00")); });
  }
};

TEST_F(OutcomeFixture, AnswerDelay) {
  notify();
  auto r = record_outcome(schedule, id, OutcomeInput{OutcomeKind::Answered, at(kMonday, "10:07")});
  EXPECT_TRUE(r.changed);
  EXPECT_EQ(r.outcome.notification_time, at(kMonday, "10:00"));
  EXPECT_EQ(r.outcome.answer_time, at(kMonday, "10:07"));
  EXPECT_EQ(r.outcome.delay_minutes(), 7.0);
}

TEST_F(OutcomeFixture, ExpiresByClockStepping) {
  notify();
  for (Instant now = at(kMonday, "10:00"); now <= at(kMonday, "11:01"); now += Minutes{1}) {
    for (const auto& c : clock_changes(schedule, now)) apply_change(schedule, c);
    const bool past = now > at(kMonday, "11:00");
    EXPECT_EQ(schedule.at(id).state, past ? ActionState::Expired : ActionState::Notified) << format_instant(now);
  }
  EXPECT_EQ(outcome_of(schedule.at(id)).kind, OutcomeKind::Expired);
}

TEST_F(OutcomeFixture, SecondSettlementReturnsFirstOutcome) {
  notify();
  auto first = record_outcome(schedule, id, OutcomeInput{OutcomeKind::Answered, at(kMonday, "10:07")});
  auto again = record_outcome(schedule, id, OutcomeInput{OutcomeKind::Answered, at(kMonday, "10:20")});
  EXPECT_FALSE(again.changed);
  EXPECT_EQ(again.outcome, first.outcome);
  EXPECT_EQ(schedule.at(id).history.size(), 2u);
}

TEST_F(OutcomeFixture, RejectsUndeliveredAndLateAnswers) {
  EXPECT_THROW(record_outcome(schedule, id, OutcomeInput{OutcomeKind::Answered, at(kMonday, "10:07")}), Error);
  notify();
  EXPECT_THROW(record_outcome(schedule, id, OutcomeInput{OutcomeKind::Answered, at(kMonday, "11:01")}), Error);
  EXPECT_NO_THROW(record_outcome(schedule, id, OutcomeInput{OutcomeKind::Answered, at(kMonday, "11:00")}));
}

// ---- random operation sequences ----

TEST(StateMachineProperties, RandomOperationSequencesStayLegal) {
  Rng rng(1234);
  auto plan = make_plan({question("q", {"09:00", "12:00", "15:00"}, 1, 45), sensor("g", 240)}, 2);
  plan.constraints.min_gap = Minutes{20};
  const auto base = schedule_of(expand_plan(plan, "P01", {}).actions);
  std::vector<std::string> ids;
  for (const auto& [id, a] : base.actions()) ids.push_back(id);

  for (int seq = 0; seq < 10000; ++seq) {
    Schedule s = base;
    Instant now = Instant{plan.start} + Minutes{uniform_index(rng, 600)};
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
          case 2: apply_replan(s, plan, ReplanRequest{id, "P01", Snooze{Minutes{1 + uniform_index(rng, 120)}}, now}); break;
          case 3:
            apply_replan(s, plan, ReplanRequest{id, "P01", Move{now + Minutes{uniform_index(rng, 300)}}, now});
            break;
          case 4: apply_replan(s, plan, ReplanRequest{id, "P01", Skip{}, now}); break;
          case 5: record_outcome(s, id, OutcomeInput{OutcomeKind::Answered, now}); break;
          default: record_outcome(s, id, OutcomeInput{OutcomeKind::Expired, now}); break;
        }
      } catch (const Error& e) {
        ASSERT_NE(e.code(), ErrorCode::Io);
      }
    }
    for (const auto& [id, a] : s.actions()) {
      auto problem = testing::history_violation(a);
      ASSERT_FALSE(problem) << *problem;
    }
  }
}

}  // namespace
}  // namespace bigthick::plan
