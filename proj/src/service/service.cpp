#include "bigthick/service/service.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "bigthick/context/snapshot.hpp"
#include "bigthick/error.hpp"
#include "bigthick/hash.hpp"
#include "bigthick/json_util.hpp"
#include "bigthick/monitor/monitor.hpp"
#include "bigthick/plan/expand.hpp"
#include "bigthick/random.hpp"
#include "bigthick/scheduler/evaluate.hpp"
#include "bigthick/scheduler/features.hpp"

namespace bigthick::service {

using store::LtmKind;
using store::StmEventKind;

namespace {

int status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::Vocabulary: return 422;
    case ErrorCode::NotFound: return 404;
    case ErrorCode::Conflict: return 409;
    case ErrorCode::Unauthorized: return 401;
    case ErrorCode::Io: return 500;
  }
  return 500;
}

ApiResponse error_response(int status, const std::string& code, const std::string& message) {
  return ApiResponse{status, Json{{"schema_version", kApiSchemaVersion},
                                  {"error", Json{{"code", code}, {"message", message}}}}};
}

ApiResponse ok(Json body, int status = 200) {
  body["schema_version"] = kApiSchemaVersion;
  return ApiResponse{status, std::move(body)};
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> out;
  std::string part;
  std::istringstream in(path);
  while (std::getline(in, part, '/')) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string part;
  std::istringstream in(text);
  while (std::getline(in, part, ',')) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

bool valid_id(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
  });
}

Json action_json(const plan::ScheduledAction& a) { return Json(a); }

enum class Access { Public, Any, Researcher };

}  // namespace

void ServiceConfig::check() const {
  if (data_dir.empty()) throw Error(ErrorCode::InvalidArgument, "data directory is required");
  if (researcher_token.empty()) throw Error(ErrorCode::InvalidArgument, "researcher token is required");
  if (participant_secret.empty()) throw Error(ErrorCode::InvalidArgument, "participant secret is required");
  if (researcher_token == participant_secret) {
    throw Error(ErrorCode::InvalidArgument, "researcher token and participant secret must differ");
  }
  if (tick_interval < std::chrono::seconds{1}) throw Error(ErrorCode::InvalidArgument, "tick interval must be >= 1 s");
  if (!(confidence_threshold >= 0.0 && confidence_threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "confidence threshold must be in [0, 1]");
  }
}

std::string derive_participant_token(const std::string& secret, const std::string& participant) {
  return "p-" + hex64(fnv1a64(secret + '\x1f' + participant)) + hex64(mix64(fnv1a64(participant + '\x1f' + secret)));
}

// ---- state ----

struct PendingSnapshot {
  std::string record_id;
  std::string action_id;
  Instant at;
};

struct Context {
  const ApiRequest& request;
  std::vector<std::string> params;
  Caller caller;
  Instant now;
  Json body;

  std::optional<std::string> query(const std::string& key) const {
    auto it = request.query.find(key);
    if (it == request.query.end() || it->second.empty()) return std::nullopt;
    return it->second;
  }
  std::optional<Date> query_date(const std::string& key) const {
    auto v = query(key);
    return v ? std::optional<Date>(parse_date(*v)) : std::nullopt;
  }
  bool researcher() const { return caller.role == Role::Researcher; }
};

struct Service::Route {
  std::string method;
  std::string pattern;
  Access access;
  bool mutates;
  std::string summary;
  ApiResponse (Service::Impl::*handler)(Context&);
};

struct Service::Impl {
  const ServiceConfig& config;
  store::StmStore stm;
  store::LtmStore ltm;
  std::optional<scheduler::TrainedModel> model;
  std::map<std::string, std::string> tokens;  // token -> participant
  std::map<std::string, std::multimap<Instant, std::size_t>> geo_index;  // participant -> LTM record index
  std::map<std::string, std::vector<PendingSnapshot>> pending;

  explicit Impl(const ServiceConfig& cfg)
      : config(cfg),
        stm(cfg.data_dir, cfg.durability),
        ltm(cfg.data_dir, cfg.durability) {
    for (const auto& [id, p] : stm.state().participants) tokens[p.token] = id;
    std::set<std::string> superseded;
    for (std::size_t i = 0; i < ltm.records().size(); ++i) {
      const auto& r = ltm.records()[i];
      if (r.kind == LtmKind::Sensor && r.payload.at("kind") == "geo") {
        geo_index[r.participant].emplace(get_instant(r.payload, "ts"), i);
      }
      if (r.kind == LtmKind::Snapshot && r.payload.contains("supersedes") && !r.payload.at("supersedes").is_null()) {
        superseded.insert(r.payload.at("supersedes").get<std::string>());
      }
    }
    // Snapshots still open to annotation: the unsuperseded ones from the last day of data.
    std::optional<Instant> latest;
    for (const auto& r : ltm.records()) latest = latest ? std::max(*latest, r.recorded_at) : r.recorded_at;
    for (const auto& r : ltm.records()) {
      if (r.kind != LtmKind::Snapshot || superseded.count(r.id)) continue;
      if (*latest - r.recorded_at > std::chrono::hours{24}) continue;
      pending[r.participant].push_back(PendingSnapshot{r.id, r.payload.value("action_id", ""), r.recorded_at});
    }
    const auto model_path = cfg.data_dir / "model.json";
    if (std::filesystem::exists(model_path)) {
      std::ifstream in(model_path);
      model = Json::parse(in).get<scheduler::TrainedModel>();
    }
  }

  // ---- helpers ----

  const store::ParticipantRecord& participant(const std::string& id) const {
    auto it = stm.state().participants.find(id);
    if (it == stm.state().participants.end()) throw Error(ErrorCode::NotFound, "unknown participant '" + id + "'");
    return it->second;
  }

  void require_researcher(const Context& ctx) const {
    if (!ctx.researcher()) throw Error(ErrorCode::Unauthorized, "researcher role required");
  }

  void require_self(const Context& ctx, const std::string& id) const {
    if (!ctx.researcher() && ctx.caller.participant != id) {
      throw Error(ErrorCode::Unauthorized, "participants may only access their own data");
    }
    participant(id);
  }

  std::string body_participant(const Context& ctx) const {
    std::string id = ctx.body.value("participant", ctx.researcher() ? "" : ctx.caller.participant);
    if (id.empty()) throw Error(ErrorCode::InvalidArgument, "participant is required");
    require_self(ctx, id);
    return id;
  }

  void persist_model() const {
    const auto path = config.data_dir / "model.json";
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << Json(*model).dump();
      out.flush();
      if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
  }

  /// Snooze releases and expiries due at `now`, as one batch per step.
  int sweep(const std::string& id, Instant now) {
    const auto changes = plan::clock_changes(*stm.state().schedule(id), now);
    if (changes.empty()) return 0;
    stm.append(StmEventKind::StateTransition, store::transitions_payload(id, changes), now);
    return static_cast<int>(changes.size());
  }

  /// Question due times on [from, to) that a replacing expansion keeps.
  std::vector<Instant> kept_questions(const plan::Schedule& schedule, std::optional<Date> from,
                                      std::optional<Date> to, bool replacing) const {
    std::vector<Instant> out;
    for (const auto& [aid, a] : schedule.actions()) {
      if (a.kind != plan::TaskKind::Question || a.state == plan::ActionState::Skipped) continue;
      const Date d = date_of(a.due_time);
      if ((from && d < *from) || (to && d >= *to)) continue;
      if (replacing && a.state == plan::ActionState::Pending && a.history.empty()) continue;
      out.push_back(a.due_time);
    }
    return out;
  }

  /// Expands every plan the participant takes part in over [from, to). With
  /// `replace`, untouched pending actions on those days are swapped out.
  std::size_t expand(const std::string& id, const std::vector<const plan::ExperimentPlan*>& plans, Date from,
                     std::optional<Date> to, bool replace, Instant now) {
    const plan::Schedule& schedule = *stm.state().schedule(id);
    auto fixed = kept_questions(schedule, from, to, replace);
    std::vector<plan::ScheduledAction> actions;
    const auto windows = stm.state().windows_for(id);
    for (const auto* p : plans) {
      plan::ExpandOptions opts;
      opts.confidence_threshold = config.confidence_threshold;
      opts.from = std::max(from, p->start);
      opts.to = to ? std::min(*to, p->end) : p->end;
      if (*opts.from >= *opts.to) continue;
      opts.fixed_questions = fixed;
      auto expansion = plan::expand_plan(*p, id, windows, opts);
      for (auto& a : expansion.actions) {
        if (a.due_time < now) continue;
        if (a.kind == plan::TaskKind::Question) fixed.push_back(a.due_time);
        actions.push_back(std::move(a));
      }
    }
    if (actions.empty() && !replace) return 0;
    stm.append(StmEventKind::ActionsExpanded,
               replace ? store::expanded_payload(id, actions, from, to) : store::expanded_payload(id, actions), now);
    return actions.size();
  }

  std::vector<const plan::ExperimentPlan*> plans_of(const std::string& id) const {
    std::set<std::string> ids;
    for (const auto& [aid, a] : stm.state().schedule(id)->actions()) ids.insert(a.plan_id);
    std::vector<const plan::ExperimentPlan*> out;
    for (const auto& pid : ids) {
      auto it = stm.state().plans.find(pid);
      if (it != stm.state().plans.end()) out.push_back(&it->second);
    }
    return out;
  }

  std::vector<context::SensorReading> geo_near(const std::string& id, Instant at, Minutes window) const {
    std::vector<context::SensorReading> out;
    auto it = geo_index.find(id);
    if (it == geo_index.end()) return out;
    auto lo = it->second.lower_bound(at - window);
    auto hi = it->second.upper_bound(at + window);
    for (auto i = lo; i != hi; ++i) out.push_back(ltm.records()[i->second].payload.get<context::SensorReading>());
    return out;
  }

  monitor::GoalContext goal_context(const std::string& participant, Instant now) const {
    return monitor::GoalContext{date_of(now), monitor::expected_geo_per_day(participant, stm.state())};
  }

  Json goal_json(const monitor::Goal& g, Instant now) const {
    auto summary = monitor::summarize(g.participant, stm.state(), ltm);
    return Json{{"goal", g}, {"progress", monitor::goal_progress(g, summary, goal_context(g.participant, now))}};
  }

  const monitor::Goal& goal(const Context& ctx, const std::string& id) const {
    auto it = stm.state().goals.find(id);
    if (it == stm.state().goals.end()) throw Error(ErrorCode::NotFound, "unknown goal '" + id + "'");
    require_self(ctx, it->second.participant);
    return it->second;
  }

  // ---- handlers ----

  ApiResponse health(Context&) { return ok(Json{{"status", "ok"}}); }

  ApiResponse schema(Context&) { return ok(Service::api_schema()); }

  ApiResponse vocabulary(Context&) { return ok(Json{{"vocabulary", config.vocabulary}}); }

  ApiResponse create_plan(Context& ctx) {
    auto p = ctx.body.get<plan::ExperimentPlan>();
    p.check();
    if (!valid_id(p.id)) throw Error(ErrorCode::InvalidArgument, "plan id must match [A-Za-z0-9_-]{1,64}");
    stm.append(StmEventKind::PlanCreated, Json{{"plan", p}}, ctx.now);
    const auto& stored = stm.state().plans.at(p.id);
    Json expanded = Json::object();
    for (const auto& [id, record] : stm.state().participants) {
      expanded[id] = expand(id, {&stored}, date_of(ctx.now), std::nullopt, false, ctx.now);
    }
    return ok(Json{{"plan", p.id}, {"expanded", expanded}}, 201);
  }

  ApiResponse list_plans(Context&) {
    Json out = Json::array();
    for (const auto& [id, p] : stm.state().plans) out.push_back(p);
    return ok(Json{{"plans", out}});
  }

  ApiResponse enroll(Context& ctx) {
    store::ParticipantRecord r;
    r.id = ctx.body.at("id").get<std::string>();
    if (!valid_id(r.id)) throw Error(ErrorCode::InvalidArgument, "participant id must match [A-Za-z0-9_-]{1,64}");
    if (ctx.body.contains("gender") && !ctx.body.at("gender").is_null()) r.gender = ctx.body.at("gender").get<int>();
    if (ctx.body.contains("department") && !ctx.body.at("department").is_null()) {
      r.department = ctx.body.at("department").get<int>();
    }
    r.traits = ctx.body.value("traits", std::vector<double>{});
    r.token = derive_participant_token(config.participant_secret, r.id);
    r.enrolled_at = ctx.now;
    stm.append(StmEventKind::ParticipantEnrolled, Json{{"participant", r}}, ctx.now);
    tokens[r.token] = r.id;
    std::vector<const plan::ExperimentPlan*> plans;
    for (const auto& [id, p] : stm.state().plans) plans.push_back(&p);
    const auto n = expand(r.id, plans, date_of(ctx.now), std::nullopt, false, ctx.now);
    return ok(Json{{"participant", r.id}, {"token", r.token}, {"actions", n}}, 201);
  }

  ApiResponse list_participants(Context&) {
    Json out = Json::array();
    for (const auto& [id, p] : stm.state().participants) {
      out.push_back(Json{{"id", id},
                         {"enrolled_at", format_instant(p.enrolled_at)},
                         {"actions", stm.state().schedule(id)->size()}});
    }
    return ok(Json{{"participants", out}});
  }

  ApiResponse get_participant(Context& ctx) {
    const auto& id = ctx.params[0];
    require_self(ctx, id);
    Json record = participant(id);
    record.erase("token");
    return ok(Json{{"participant", record}});
  }

  ApiResponse tasks(Context& ctx) {
    const auto& id = ctx.params[0];
    require_self(ctx, id);
    sweep(id, ctx.now);
    const auto due = plan::due_actions(*stm.state().schedule(id), ctx.now);
    if (!due.empty()) {
      std::vector<plan::StateChange> changes;
      for (const auto& a : due) changes.push_back(plan::StateChange{a.id, plan::ActionState::Notified, ctx.now});
      stm.append(StmEventKind::StateTransition, store::transitions_payload(id, changes), ctx.now);
    }
    const plan::Schedule& schedule = *stm.state().schedule(id);
    Json out = Json::array();
    for (const auto& a : due) {
      const auto& current = schedule.at(a.id);
      Json t = action_json(current);
      if (const auto* p = stm.state().plans.count(a.plan_id) ? &stm.state().plans.at(a.plan_id) : nullptr) {
        if (const auto* tpl = p->find_template(a.template_id)) {
          const Json tj = *tpl;
          t["question"] = tj.value("question", Json(nullptr));
          t["sensor"] = tj.value("sensor", Json(nullptr));
        }
      }
      out.push_back(std::move(t));
    }
    return ok(Json{{"participant", id},
                   {"now", format_instant(ctx.now)},
                   {"tasks", out},
                   {"next_check", instant_json(schedule.next_wake())}});
  }

  ApiResponse answer(Context& ctx) {
    const auto id = body_participant(ctx);
    const auto action_id = ctx.body.at("action_id").get<std::string>();
    auto answers = ctx.body.at("answers").get<context::DiaryAnswerSet>();
    context::check_answers(config.vocabulary, answers);
    const auto& before = stm.state().schedule(id)->at(action_id);
    if (before.kind != plan::TaskKind::Question) {
      throw Error(ErrorCode::InvalidArgument, "action '" + action_id + "' is not a question");
    }
    sweep(id, ctx.now);
    const auto& action = stm.state().schedule(id)->at(action_id);
    if (action.state != plan::ActionState::Notified || ctx.now > action.expires_at()) {
      auto r = error_response(409, to_string(ErrorCode::Conflict),
                              "action '" + action_id + "' is " + plan::to_string(action.state));
      r.body["action_id"] = action_id;
      r.body["state"] = plan::to_string(action.state);
      return r;
    }
    const auto notified = action.last_notified();
    stm.append(StmEventKind::Outcome,
               store::outcome_payload(id, action_id, plan::OutcomeInput{plan::OutcomeKind::Answered, ctx.now}),
               ctx.now);

    answers.notification_time = notified;
    answers.answer_time = ctx.now;
    const auto answer = ltm.append(
        id, LtmKind::Answer, Json{{"action_id", action_id}, {"answers", answers}, {"at", format_instant(ctx.now)}},
        ctx.now);
    context::AnnotateOptions annotate;
    std::optional<context::SensorBatch> batch;
    auto nearby = geo_near(id, ctx.now, annotate.window);
    if (!nearby.empty()) batch = context::SensorBatch{id, std::move(nearby)};
    auto snapshot = context::build_snapshot(config.vocabulary, id, ctx.now, answers, batch, annotate);
    const auto snap = ltm.append(
        id, LtmKind::Snapshot, Json{{"action_id", action_id}, {"snapshot", snapshot}, {"supersedes", nullptr}},
        ctx.now);
    pending[id].push_back(PendingSnapshot{snap.id, action_id, ctx.now});
    return ok(Json{{"action_id", action_id},
                   {"state", "answered"},
                   {"answer_id", answer.id},
                   {"snapshot_id", snap.id}},
              201);
  }

  ApiResponse sensors(Context& ctx) {
    const auto id = body_participant(ctx);
    auto readings = ctx.body.at("readings").get<std::vector<context::SensorReading>>();
    for (const auto& r : readings) {
      if (r.timestamp > ctx.now) throw Error(ErrorCode::InvalidArgument, "reading at " + format_instant(r.timestamp) + " is after now");
    }
    int accepted = 0, duplicates = 0;
    for (const auto& r : readings) {
      auto res = ltm.append(id, LtmKind::Sensor, Json(r), ctx.now);
      if (!res.inserted) {
        ++duplicates;
        continue;
      }
      ++accepted;
      if (r.kind() == context::SensorKind::Geo) geo_index[id].emplace(r.timestamp, ltm.records().size() - 1);
    }

    // Delivered collection tasks covered by a reading of their kind are done.
    sweep(id, ctx.now);
    const plan::Schedule& schedule = *stm.state().schedule(id);
    std::vector<plan::StateChange> settled;
    for (const auto& aid : schedule.notified()) {
      const auto& a = schedule.at(aid);
      if (a.kind != plan::TaskKind::Sensor) continue;
      const auto* p = stm.state().plans.count(a.plan_id) ? &stm.state().plans.at(a.plan_id) : nullptr;
      const auto* tpl = p ? p->find_template(a.template_id) : nullptr;
      if (!tpl) continue;
      const Instant notified = a.last_notified().value_or(a.due_time);
      for (const auto& r : readings) {
        if (r.kind() == tpl->sensor_kind && r.timestamp >= a.due_time && r.timestamp <= a.expires_at()) {
          settled.push_back(plan::StateChange{aid, plan::ActionState::Answered, std::max(notified, std::min(r.timestamp, ctx.now))});
          break;
        }
      }
    }
    if (!settled.empty()) stm.append(StmEventKind::StateTransition, store::transitions_payload(id, settled), ctx.now);

    // Snapshots answered near these readings gain the sensor attributes.
    int annotated = 0;
    context::AnnotateOptions annotate;
    auto& open = pending[id];
    for (auto& ps : open) {
      std::vector<context::SensorReading> near;
      for (const auto& r : readings) {
        auto gap = r.timestamp > ps.at ? r.timestamp - ps.at : ps.at - r.timestamp;
        if (gap <= annotate.window) near.push_back(r);
      }
      if (near.empty()) continue;
      const auto* record = ltm.find(ps.record_id);
      if (!record) continue;
      auto snapshot = record->payload.at("snapshot").get<context::ContextSnapshot>();
      auto result = context::annotate_with_sensors(snapshot, context::SensorBatch{id, near}, annotate);
      if (result.snapshot == snapshot) continue;
      auto res = ltm.append(id, LtmKind::Snapshot,
                            Json{{"action_id", ps.action_id}, {"snapshot", result.snapshot}, {"supersedes", ps.record_id}},
                            ps.at);
      ps.record_id = res.id;
      ++annotated;
    }
    open.erase(std::remove_if(open.begin(), open.end(),
                              [&](const PendingSnapshot& ps) { return ctx.now - ps.at > std::chrono::hours{24}; }),
               open.end());
    return ok(Json{{"accepted", accepted},
                   {"duplicates", duplicates},
                   {"settled", settled.size()},
                   {"annotated", annotated}});
  }

  ApiResponse replan(Context& ctx) {
    const auto id = body_participant(ctx);
    Json req = ctx.body;
    req["participant"] = id;
    req["now"] = format_instant(ctx.now);
    auto request = req.get<plan::ReplanRequest>();
    stm.state().schedule(id)->at(request.action_id);
    sweep(id, ctx.now);
    stm.append(StmEventKind::Replan, store::replan_payload(id, request), ctx.now);
    return ok(Json{{"action", stm.state().schedule(id)->at(request.action_id)}});
  }

  ApiResponse schedule(Context& ctx) {
    const auto& id = ctx.params[0];
    require_self(ctx, id);
    const auto from = ctx.query_date("from");
    const auto to = ctx.query_date("to");
    std::vector<const plan::ScheduledAction*> list;
    for (const auto& [aid, a] : stm.state().schedule(id)->actions()) {
      const Date d = date_of(a.due_time);
      if ((from && d < *from) || (to && d >= *to)) continue;
      list.push_back(&a);
    }
    std::stable_sort(list.begin(), list.end(), [](const auto* a, const auto* b) {
      return a->due_time != b->due_time ? a->due_time < b->due_time : a->id < b->id;
    });
    Json out = Json::array();
    for (const auto* a : list) out.push_back(*a);
    return ok(Json{{"participant", id}, {"actions", out}});
  }

  ApiResponse avoid_windows(Context& ctx) {
    const auto& id = ctx.params[0];
    require_self(ctx, id);
    const Date date = ctx.query_date("date").value_or(date_of(ctx.now));
    Json windows = Json::array();
    bool published = false;
    auto it = stm.state().avoid_windows.find(id);
    if (it != stm.state().avoid_windows.end()) {
      if (auto d = it->second.find(date); d != it->second.end()) {
        published = true;
        windows = d->second;
      }
    }
    return ok(Json{{"participant", id}, {"date", format_date(date)}, {"published", published}, {"windows", windows}});
  }

  ApiResponse tick(Context& ctx) {
    int changed = 0;
    for (const auto& [id, record] : stm.state().participants) changed += sweep(id, ctx.now);
    Json published = Json::object();
    if (model && config.refresh_avoid_windows) {
      const Date today = date_of(ctx.now);
      std::optional<scheduler::HistoryIndex> history;
      for (const auto& [id, record] : stm.state().participants) {
        auto it = stm.state().avoid_windows.find(id);
        if (it != stm.state().avoid_windows.end() && it->second.count(today)) continue;
        auto plans = plans_of(id);
        const bool active = std::any_of(plans.begin(), plans.end(),
                                        [&](const auto* p) { return today >= p->start && today < p->end; });
        if (!active) continue;
        if (!history) history = scheduler::HistoryIndex::from_stores(stm.state(), ltm);
        auto windows = scheduler::derive_avoid_windows(*model, *history, id, today, config.avoid);
        stm.append(StmEventKind::AvoidWindowsPublished, store::avoid_payload(id, today, windows), ctx.now);
        expand(id, plans, today, today + std::chrono::days{1}, true, ctx.now);
        published[id] = windows.size();
      }
    }
    return ok(Json{{"now", format_instant(ctx.now)}, {"clock_changes", changed}, {"published", published}});
  }

  ApiResponse summary(Context& ctx) {
    monitor::DateRange range{ctx.query_date("from"), ctx.query_date("to")};
    std::vector<std::string> ids;
    if (auto p = ctx.query("participant")) {
      require_self(ctx, *p);
      ids.push_back(*p);
    } else if (ctx.researcher()) {
      for (const auto& [id, r] : stm.state().participants) ids.push_back(id);
    } else {
      ids.push_back(ctx.caller.participant);
    }
    Json out = Json::array();
    for (const auto& id : ids) out.push_back(monitor::summarize(id, stm.state(), ltm, range));
    return ok(Json{{"summaries", out}});
  }

  ApiResponse compare(Context& ctx) {
    std::vector<std::string> ids;
    if (auto q = ctx.query("ids")) {
      ids = split_list(*q);
    } else {
      for (const auto& [id, r] : stm.state().participants) ids.push_back(id);
    }
    for (const auto& id : ids) participant(id);
    const auto metric = monitor::parse_series_metric(ctx.query("metric").value_or("answered"));
    auto c = monitor::compare(ids, metric, stm.state(), ltm, monitor::DateRange{ctx.query_date("from"), ctx.query_date("to")});
    if (!ctx.researcher()) monitor::anonymize(c, ctx.caller.participant);
    return ok(Json(c));
  }

  ApiResponse rank(Context& ctx) {
    const auto order = ctx.query("order").value_or("most");
    if (order != "most" && order != "least") throw Error(ErrorCode::InvalidArgument, "order must be most or least");
    const auto limit = std::stoul(ctx.query("limit").value_or("10"));
    auto ranked = monitor::rank_participants(stm.state(), ltm, order == "most", limit,
                                             monitor::DateRange{ctx.query_date("from"), ctx.query_date("to")});
    return ok(Json{{"order", order}, {"participants", ranked}});
  }

  ApiResponse delays(Context& ctx) {
    std::optional<std::string> who = ctx.query("participant");
    if (!ctx.researcher()) who = ctx.caller.participant;
    if (who) require_self(ctx, *who);
    return ok(Json{{"rows", monitor::delay_series(stm.state(), ltm, who)}});
  }

  ApiResponse alerts(Context& ctx) {
    const auto status = ctx.query("status").value_or("all");
    if (status != "all" && status != "open" && status != "resolved") {
      throw Error(ErrorCode::InvalidArgument, "status must be all, open or resolved");
    }
    Json out = Json::array();
    for (const auto& a : monitor::evaluate_alert_rules(stm.state(), ltm, ctx.now)) {
      if (!ctx.researcher() && a.participant != ctx.caller.participant) continue;
      if ((status == "open" && !a.open()) || (status == "resolved" && a.open())) continue;
      out.push_back(a);
    }
    return ok(Json{{"now", format_instant(ctx.now)}, {"alerts", out}});
  }

  ApiResponse list_goals(Context& ctx) {
    std::optional<std::string> who = ctx.query("participant");
    if (!ctx.researcher()) who = ctx.caller.participant;
    Json out = Json::array();
    for (const auto& [id, g] : stm.state().goals) {
      if (who && g.participant != *who) continue;
      out.push_back(goal_json(g, ctx.now));
    }
    return ok(Json{{"goals", out}});
  }

  monitor::Goal parse_goal(Context& ctx, std::optional<std::string> id) {
    Json j = ctx.body;
    if (!j.contains("participant") && !ctx.researcher()) j["participant"] = ctx.caller.participant;
    if (id) {
      j["id"] = *id;
    } else if (!j.contains("id")) {
      j["id"] = "g-" + hex64(fnv1a64(j.value("participant", "") + '\x1f' + j.value("metric", "") + '\x1f' +
                                     format_instant(ctx.now)));
    }
    auto g = j.get<monitor::Goal>();
    if (!valid_id(g.id)) throw Error(ErrorCode::InvalidArgument, "goal id must match [A-Za-z0-9_-]{1,64}");
    require_self(ctx, g.participant);
    return g;
  }

  ApiResponse create_goal(Context& ctx) {
    auto g = parse_goal(ctx, std::nullopt);
    if (stm.state().goals.count(g.id)) throw Error(ErrorCode::Conflict, "goal '" + g.id + "' already exists");
    stm.append(StmEventKind::GoalSet, Json{{"goal", g}}, ctx.now);
    return ok(goal_json(g, ctx.now), 201);
  }

  ApiResponse get_goal(Context& ctx) { return ok(goal_json(goal(ctx, ctx.params[0]), ctx.now)); }

  ApiResponse update_goal(Context& ctx) {
    const auto& current = goal(ctx, ctx.params[0]);
    auto g = parse_goal(ctx, current.id);
    if (g.participant != current.participant) throw Error(ErrorCode::InvalidArgument, "a goal cannot change participant");
    stm.append(StmEventKind::GoalSet, Json{{"goal", g}}, ctx.now);
    return ok(goal_json(g, ctx.now));
  }

  ApiResponse delete_goal(Context& ctx) {
    const auto id = goal(ctx, ctx.params[0]).id;
    stm.append(StmEventKind::GoalRemoved, Json{{"id", id}}, ctx.now);
    return ok(Json{{"deleted", id}});
  }

  ApiResponse model_info(Context&) {
    if (!model) return ok(Json{{"model", nullptr}});
    return ok(Json{{"model", Json{{"family", scheduler::to_string(model->family)},
                                  {"seed", model->seed},
                                  {"features", model->schema.names()}}}});
  }
};

// ---- routing ----

namespace {

using Impl = Service::Impl;

}  // namespace

static const std::vector<Service::Route>& routes();

Service::Service(ServiceConfig config) : config_(std::move(config)) {
  config_.check();
  if (!config_.clock) {
    config_.clock = [] { return std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()); };
  }
  std::filesystem::create_directories(config_.data_dir);
  impl_ = std::make_unique<Impl>(config_);
}

Service::~Service() = default;

void Service::read(const std::function<void(const store::StmState&, const store::LtmStore&)>& fn) const {
  std::shared_lock lock(mutex_);
  fn(impl_->stm.state(), impl_->ltm);
}

std::optional<scheduler::TrainedModel> Service::model() const {
  std::shared_lock lock(mutex_);
  return impl_->model;
}

ApiResponse Service::handle(const ApiRequest& request) {
  try {
    return dispatch(request);
  } catch (const Error& e) {
    return error_response(status_of(e.code()), to_string(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return error_response(422, "invalid_document", e.what());
  } catch (const std::invalid_argument& e) {
    return error_response(422, "invalid_argument", e.what());
  } catch (const std::out_of_range& e) {
    return error_response(422, "invalid_argument", e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

ApiResponse Service::dispatch(const ApiRequest& request) {
  const auto parts = split_path(request.path);
  const Route* route = nullptr;
  std::vector<std::string> params;
  bool path_known = false;
  for (const auto& r : routes()) {
    const auto pattern = split_path(r.pattern);
    if (pattern.size() != parts.size()) continue;
    std::vector<std::string> captured;
    bool match = true;
    for (std::size_t i = 0; i < parts.size() && match; ++i) {
      if (pattern[i].front() == '{') {
        captured.push_back(parts[i]);
      } else {
        match = pattern[i] == parts[i];
      }
    }
    if (!match) continue;
    path_known = true;
    if (r.method == request.method) {
      route = &r;
      params = std::move(captured);
      break;
    }
  }
  if (!route) {
    return path_known ? error_response(405, "method_not_allowed", request.method + " not allowed on " + request.path)
                      : error_response(404, "not_found", "no endpoint " + request.path);
  }

  Json body = Json::object();
  if (!request.body.empty()) {
    body = Json::parse(request.body);
    if (!body.is_object()) throw Error(ErrorCode::InvalidArgument, "request body must be an object");
  }
  auto resolve_now = [&]() -> Instant {
    if (auto it = request.query.find("now"); it != request.query.end() && !it->second.empty()) {
      return parse_instant(it->second);
    }
    if (body.contains("now") && body.at("now").is_string()) return parse_instant(body.at("now").get<std::string>());
    return config_.clock();
  };

  auto run = [&]() {
    Context ctx{request, std::move(params), Caller{}, resolve_now(), std::move(body)};
    if (route->access != Access::Public) {
      if (!request.token.empty() && request.token == config_.researcher_token) {
        ctx.caller = Caller{Role::Researcher, ""};
      } else if (auto it = impl_->tokens.find(request.token); !request.token.empty() && it != impl_->tokens.end()) {
        ctx.caller = Caller{Role::Participant, it->second};
      } else {
        throw Error(ErrorCode::Unauthorized, "missing or unknown token");
      }
      if (route->access == Access::Researcher) impl_->require_researcher(ctx);
    }
    return ((*impl_).*(route->handler))(ctx);
  };

  if (route->pattern == "/scheduler/train") return train(request, body, resolve_now());
  if (route->mutates) {
    std::unique_lock lock(mutex_);
    auto response = run();
    const auto& s = impl_->stm;
    if (s.state().last_seq - s.checkpoint_seq() >= config_.compact_after) impl_->stm.compact(s.state().last_seq);
    return response;
  }
  std::shared_lock lock(mutex_);
  return run();
}

ApiResponse Service::train(const ApiRequest& request, const nlohmann::json& body, Instant now) {
  if (request.token != config_.researcher_token) throw Error(ErrorCode::Unauthorized, "researcher role required");
  const auto family = scheduler::parse_family(body.value("family", "random_forest"));
  const double train_fraction = body.value("train_fraction", 0.7);
  const bool per_participant = body.value("per_participant", true);
  const int clusters = body.value("clusters", 4);
  const auto seed = body.value("seed", std::uint64_t{1});
  const bool activate = body.value("activate", true);
  if (clusters < 1) throw Error(ErrorCode::InvalidArgument, "clusters must be positive");

  // Snapshot the training data under the read lock; fit without holding it.
  std::vector<scheduler::LabeledRow> rows;
  scheduler::FeatureSchema schema;
  {
    std::shared_lock lock(mutex_);
    auto history = scheduler::HistoryIndex::from_stores(impl_->stm.state(), impl_->ltm);
    schema = scheduler::fit_schema(history, config_.vocabulary, clusters, seed, body.value("demographics", false),
                                   body.value("traits", 0));
    auto labels = config_.labels;
    labels.before = now;
    rows = scheduler::build_training_rows(impl_->stm.state(), history, config_.vocabulary, schema, labels);
  }
  auto split = scheduler::chronological_split(std::move(rows), train_fraction, per_participant);
  if (split.train.empty() || split.test.empty()) {
    throw Error(ErrorCode::InvalidArgument, "not enough labelled data to train and evaluate");
  }
  scheduler::TrainConfig tc;
  tc.seed = seed;
  if (body.contains("n_trees")) tc.forest.n_trees = body.at("n_trees").get<int>();
  auto trained = scheduler::train(family, scheduler::to_dataset(split.train), schema, tc);
  auto metrics = scheduler::evaluate(trained, scheduler::to_dataset(split.test));
  std::size_t positives = 0;
  for (const auto& r : split.train) positives += r.y == 1;
  if (activate) {
    std::unique_lock lock(mutex_);
    impl_->model = trained;
    impl_->persist_model();
  }
  return ok(Json{{"family", scheduler::to_string(family)},
                 {"metrics", metrics},
                 {"train_rows", split.train.size()},
                 {"test_rows", split.test.size()},
                 {"train_positives", positives},
                 {"activated", activate}});
}

static const std::vector<Service::Route>& routes() {
  using R = Service::Route;
  static const std::vector<R> table{
      {"GET", "/health", Access::Public, false, "liveness", &Impl::health},
      {"GET", "/schema", Access::Public, false, "this endpoint table", &Impl::schema},
      {"GET", "/vocabulary", Access::Public, false, "closed answer vocabularies", &Impl::vocabulary},
      {"POST", "/plans", Access::Researcher, true, "create a plan and expand it for enrolled participants",
       &Impl::create_plan},
      {"GET", "/plans", Access::Researcher, false, "list plans", &Impl::list_plans},
      {"POST", "/participants", Access::Researcher, true, "enroll a participant; returns its token", &Impl::enroll},
      {"GET", "/participants", Access::Researcher, false, "list participants", &Impl::list_participants},
      {"GET", "/participants/{id}", Access::Any, false, "participant record", &Impl::get_participant},
      {"GET", "/participants/{id}/tasks", Access::Any, true, "deliver due actions (marks them notified)",
       &Impl::tasks},
      {"GET", "/participants/{id}/schedule", Access::Any, false, "scheduled actions", &Impl::schedule},
      {"GET", "/participants/{id}/avoid-windows", Access::Any, false, "published avoid windows for a date",
       &Impl::avoid_windows},
      {"POST", "/answers", Access::Any, true, "answer a delivered question", &Impl::answer},
      {"POST", "/sensors/batch", Access::Any, true, "upload sensor readings", &Impl::sensors},
      {"POST", "/replan", Access::Any, true, "snooze, move or skip an action", &Impl::replan},
      {"POST", "/scheduler/train", Access::Researcher, true, "train a classifier on stored data", nullptr},
      {"GET", "/scheduler/model", Access::Researcher, false, "active model", &Impl::model_info},
      {"POST", "/tick", Access::Researcher, true, "expiry sweep and daily avoid-window refresh", &Impl::tick},
      {"GET", "/dashboard/summary", Access::Any, false, "per-participant daily counts", &Impl::summary},
      {"GET", "/dashboard/compare", Access::Any, false, "aligned daily series", &Impl::compare},
      {"GET", "/dashboard/rank", Access::Researcher, false, "least or most contributing participants", &Impl::rank},
      {"GET", "/dashboard/delays", Access::Any, false, "response delay joined with context", &Impl::delays},
      {"GET", "/alerts", Access::Any, false, "alert rule evaluation at now", &Impl::alerts},
      {"GET", "/goals", Access::Any, false, "goals with progress", &Impl::list_goals},
      {"POST", "/goals", Access::Any, true, "create a goal", &Impl::create_goal},
      {"GET", "/goals/{id}", Access::Any, false, "one goal with progress", &Impl::get_goal},
      {"PUT", "/goals/{id}", Access::Any, true, "replace a goal", &Impl::update_goal},
      {"DELETE", "/goals/{id}", Access::Any, true, "remove a goal", &Impl::delete_goal},
  };
  return table;
}

nlohmann::json Service::api_schema() {
  Json endpoints = Json::array();
  for (const auto& r : routes()) {
    endpoints.push_back(Json{{"method", r.method},
                             {"path", r.pattern},
                             {"role", r.access == Access::Public       ? "public"
                                      : r.access == Access::Researcher ? "researcher"
                                                                       : "participant_or_researcher"},
                             {"mutates", r.mutates},
                             {"summary", r.summary}});
  }
  return Json{{"schema_version", kApiSchemaVersion}, {"endpoints", endpoints}};
}

}  // namespace bigthick::service
