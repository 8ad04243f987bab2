#include "bigthick/sim/experiment.hpp"

#include <algorithm>

#include "bigthick/error.hpp"
#include "bigthick/json_util.hpp"
#include "bigthick/scheduler/labels.hpp"
#include "bigthick/store/ltm.hpp"
#include "bigthick/store/stm.hpp"

namespace bigthick::sim {

using service::ApiRequest;
using service::ApiResponse;

const char* to_string(Policy policy) { return policy == Policy::Fixed ? "fixed" : "adaptive"; }

Policy parse_policy(const std::string& name) {
  if (name == "fixed") return Policy::Fixed;
  if (name == "adaptive") return Policy::Adaptive;
  throw Error(ErrorCode::InvalidArgument, "unknown policy '" + name + "' (expected fixed or adaptive)");
}

namespace {

class Client {
 public:
  explicit Client(service::Service& service) : service_(service) {}

  ApiResponse call(const std::string& method, const std::string& path, const Json& body, const std::string& token,
                   Instant now) {
    ++requests;
    return service_.handle(ApiRequest{method, path, {{"now", format_instant(now)}}, body.dump(), token});
  }

  /// Like call, but any status outside `accepted` is a simulator bug and throws.
  ApiResponse expect(const std::string& method, const std::string& path, const Json& body, const std::string& token,
                     Instant now, std::initializer_list<int> accepted = {200, 201}) {
    auto r = call(method, path, body, token, now);
    if (std::find(accepted.begin(), accepted.end(), r.status) == accepted.end()) {
      throw Error(ErrorCode::Io, method + " " + path + " returned " + std::to_string(r.status) + ": " + r.body.dump());
    }
    return r;
  }

  std::size_t requests = 0;

 private:
  service::Service& service_;
};

}  // namespace

ExperimentResult run_experiment(const std::vector<BehaviorProfile>& cohort, const plan::ExperimentPlan& plan,
                                const ExperimentOptions& options, std::unique_ptr<service::Service>* service_out) {
  if (options.days < 0) throw Error(ErrorCode::InvalidArgument, "days must not be negative");
  if (options.upload_every_minutes < 1) throw Error(ErrorCode::InvalidArgument, "upload interval must be positive");
  if (options.data_dir.empty()) throw Error(ErrorCode::InvalidArgument, "a data directory is required");
  if (std::filesystem::exists(options.data_dir) && !std::filesystem::is_empty(options.data_dir)) {
    throw Error(ErrorCode::Conflict, "data directory " + options.data_dir.string() + " is not empty");
  }
  plan.check();

  ExperimentResult result;
  result.start = Instant{plan.start};
  result.end = result.start + std::chrono::days{options.days};
  Instant now = result.start;

  service::ServiceConfig config;
  config.data_dir = options.data_dir;
  config.experiment_id = plan.id;
  config.researcher_token = kSimResearcherToken;
  config.participant_secret = kSimParticipantSecret;
  config.durability = options.durability;
  config.clock = [&now] { return now; };
  auto service = std::make_unique<service::Service>(config);
  Client client(*service);
  const std::string researcher = kSimResearcherToken;

  client.expect("POST", "/plans", Json(plan), researcher, now);
  Simulation sim(cohort, now, options.sim);
  std::vector<std::string> ids;
  std::map<std::string, std::string> tokens;
  for (const auto& p : sim.cohort()) {
    auto r = client.expect("POST", "/participants", Json{{"id", p.id}}, researcher, now);
    tokens[p.id] = r.body.at("token").get<std::string>();
    ids.push_back(p.id);
  }

  const Instant never = Instant::max();
  std::map<std::string, Instant> next_check;
  std::map<std::string, std::vector<context::SensorReading>> buffered;
  for (const auto& id : ids) next_check[id] = now;

  auto record = [&](SimEvent&& e) {
    if (options.on_event) options.on_event(e);
    if (options.keep_events) result.events.push_back(std::move(e));
  };
  auto upload = [&](const std::string& id) {
    auto& readings = buffered[id];
    if (readings.empty()) return;
    client.expect("POST", "/sensors/batch", Json{{"readings", readings}}, tokens.at(id), now);
    readings.clear();
  };

  for (; now < result.end; now += Minutes{1}) {
    if (minute_of_day(now) == 0) {
      const auto day = (now - result.start) / std::chrono::days{1};
      if (options.policy == Policy::Adaptive && day == options.warmup_days) {
        auto r = client.call("POST", "/scheduler/train",
                             Json{{"family", options.family}, {"clusters", options.clusters}, {"seed", options.seed}},
                             researcher, now);
        if (r.status != 200 && r.status != 422) {
          throw Error(ErrorCode::Io, "training returned " + std::to_string(r.status) + ": " + r.body.dump());
        }
        result.training = r.body;
      }
      client.expect("POST", "/tick", Json::object(), researcher, now);
      for (const auto& id : ids) next_check[id] = now;
    }

    for (const auto& id : ids) {
      if (now < next_check[id]) continue;
      auto r = client.expect("GET", "/participants/" + id + "/tasks", Json::object(), tokens.at(id), now);
      for (const auto& task : r.body.at("tasks")) {
        if (task.at("kind") != "question") continue;
        const Instant expires = get_instant(task, "due_time") + Minutes{task.at("validity_minutes").get<long>()};
        sim.deliver(id, task.at("id").get<std::string>(), expires);
      }
      auto next = get_optional_instant(r.body, "next_check");
      next_check[id] = next ? std::max(*next, now + Minutes{1}) : never;
    }

    for (auto& e : sim.step()) {
      const auto& token = tokens.at(e.participant);
      switch (e.kind) {
        case SimEventKind::Answered: {
          auto r = client.expect("POST", "/answers", Json{{"action_id", e.action_id}, {"answers", *e.answers}}, token,
                                 now, {201, 409});
          if (r.status == 409) ++result.rejected_answers;
          break;
        }
        case SimEventKind::Snoozed:
          client.expect("POST", "/replan",
                        Json{{"action_id", e.action_id}, {"op", {{"type", "snooze"}, {"minutes", e.snooze.count()}}}},
                        token, now);
          next_check[e.participant] = std::min(next_check[e.participant], now + Minutes{1});
          break;
        case SimEventKind::SensorEmitted:
          for (const auto& reading : e.batch->readings) buffered[e.participant].push_back(reading);
          break;
        default: break;
      }
      record(std::move(e));
    }

    if (minute_of_day(now) % options.upload_every_minutes == 0) {
      for (const auto& id : ids) upload(id);
    }
  }
  for (const auto& id : ids) upload(id);
  result.requests = client.requests;

  service->read([&](const store::StmState& stm, const store::LtmStore& ltm) {
    auto history = scheduler::HistoryIndex::from_stores(stm, ltm);
    result.schema = scheduler::fit_schema(history, config.vocabulary, options.clusters, options.seed);
    result.dataset = export_dataset(cohort, stm, history, result.schema);
  });
  if (service_out) *service_out = std::move(service);
  return result;
}

std::vector<scheduler::LabeledRow> export_dataset(const std::vector<BehaviorProfile>& cohort,
                                                  const store::StmState& stm, const scheduler::HistoryIndex& history,
                                                  const scheduler::FeatureSchema& schema) {
  const auto vocabulary = context::Vocabulary::standard();
  std::vector<scheduler::LabeledRow> rows;
  for (const auto& profile : cohort) {
    const auto* schedule = stm.schedule(profile.id);
    if (!schedule) continue;
    for (const auto& [id, action] : schedule->actions()) {
      if (action.kind != plan::TaskKind::Question) continue;
      for (const auto& t : action.history) {
        if (t.to != plan::ActionState::Notified) continue;
        rows.push_back(scheduler::LabeledRow{profile.id, t.at, scheduler::extract_features(history, profile.id, t.at, schema),
                                             scheduler::encode_label(vocabulary, whereabouts(profile, t.at).activity)});
      }
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return a.at != b.at ? a.at < b.at : a.participant < b.participant;
  });
  return rows;
}

}  // namespace bigthick::sim
