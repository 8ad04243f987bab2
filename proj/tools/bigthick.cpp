#include <atomic>
#include <condition_variable>
#include <csignal>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "CLI11.hpp"
#include "httplib.h"

#include "bigthick/error.hpp"
#include "bigthick/json_util.hpp"
#include "bigthick/monitor/monitor.hpp"
#include "bigthick/scheduler/dataset.hpp"
#include "bigthick/scheduler/evaluate.hpp"
#include "bigthick/service/http.hpp"
#include "bigthick/service/service.hpp"
#include "bigthick/sim/experiment.hpp"
#include "bigthick/store/ltm.hpp"
#include "bigthick/store/stm.hpp"

namespace fs = std::filesystem;
using namespace bigthick;

namespace {

Json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + p.string());
  return Json::parse(in);
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + p.string());
  out << text;
}

store::Durability parse_durability(const std::string& name) {
  if (name == "fsync") return store::Durability::Fsync;
  if (name == "os") return store::Durability::Os;
  throw Error(ErrorCode::InvalidArgument, "durability must be fsync or os");
}

// ---- serve ----

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  fs::path data_dir;
  std::string experiment = "default";
  std::string researcher_token;
  std::string participant_secret;
  int tick_seconds = 60;
  std::string durability = "fsync";
};

httplib::Server* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

int serve(const ServeArgs& a) {
  service::ServiceConfig config;
  config.data_dir = a.data_dir;
  config.experiment_id = a.experiment;
  config.researcher_token = a.researcher_token;
  config.participant_secret = a.participant_secret;
  config.tick_interval = std::chrono::seconds{a.tick_seconds};
  config.durability = parse_durability(a.durability);
  service::Service svc(config);

  httplib::Server server;
  service::mount(server, svc);

  std::mutex m;
  std::condition_variable cv;
  bool stopping = false;
  std::thread ticker([&] {
    std::unique_lock lock(m);
    while (!cv.wait_for(lock, config.tick_interval, [&] { return stopping; })) {
      auto r = svc.handle(service::ApiRequest{"POST", "/tick", {}, "{}", config.researcher_token});
      if (r.status != 200) std::cerr << "tick failed: " << r.body.dump() << "\n";
    }
  });

  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "listening on " << a.host << ":" << a.port << " (data " << a.data_dir.string() << ")\n";
  const bool ok = server.listen(a.host, a.port);
  g_server = nullptr;
  {
    std::lock_guard lock(m);
    stopping = true;
  }
  cv.notify_all();
  ticker.join();
  if (!ok) {
    std::cerr << "cannot listen on " << a.host << ":" << a.port << "\n";
    return 1;
  }
  return 0;
}

// ---- simulate / demo ----

struct SimulateArgs {
  fs::path cohort;
  fs::path plan;
  std::string policy = "fixed";
  int days = 28;
  std::uint64_t seed = 1;
  fs::path out;
  int warmup_days = 14;
  std::string family = "random_forest";
  int clusters = 4;
};

void write_dataset(const fs::path& path, const std::vector<scheduler::LabeledRow>& rows,
                   const scheduler::FeatureSchema& schema) {
  std::ofstream out(path);
  out << "participant,at";
  for (const auto& name : schema.names()) out << "," << name;
  out << ",y\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << r.participant << "," << format_instant(r.at);
    for (double x : r.x) out << "," << x;
    out << "," << r.y << "\n";
  }
}

double answered_rate(service::Service& svc, std::optional<Date> from) {
  service::ApiRequest req{"GET", "/dashboard/summary", {}, "", sim::kSimResearcherToken};
  if (from) req.query["from"] = format_date(*from);
  auto r = svc.handle(req);
  double sent = 0, answered = 0;
  for (const auto& s : r.body.at("summaries")) {
    sent += s.at("sent").get<double>();
    answered += s.at("answered").get<double>();
  }
  return sent > 0 ? answered / sent : 0.0;
}

int simulate(const SimulateArgs& a) {
  auto config = read_json(a.cohort).get<sim::CohortConfig>();
  auto plan = read_json(a.plan).get<plan::ExperimentPlan>();
  auto cohort = sim::generate_cohort(config);

  fs::create_directories(a.out);
  std::ofstream events(a.out / "events.jsonl");
  sim::ExperimentOptions o;
  o.policy = sim::parse_policy(a.policy);
  o.days = a.days;
  o.seed = a.seed;
  o.warmup_days = a.warmup_days;
  o.family = a.family;
  o.clusters = a.clusters;
  o.data_dir = a.out / "data";
  o.keep_events = false;
  o.on_event = [&](const sim::SimEvent& e) { events << Json(e).dump() << "\n"; };

  std::unique_ptr<service::Service> svc;
  auto result = sim::run_experiment(cohort, plan, o, &svc);
  events.close();
  write_dataset(a.out / "dataset.csv", result.dataset, result.schema);

  const Date held_out = plan.start + std::chrono::days{a.warmup_days};
  Json summary{{"policy", a.policy},
               {"days", a.days},
               {"seed", a.seed},
               {"participants", cohort.size()},
               {"requests", result.requests},
               {"rejected_answers", result.rejected_answers},
               {"dataset_rows", result.dataset.size()},
               {"answered_rate", answered_rate(*svc, std::nullopt)},
               {"answered_rate_after_warmup", answered_rate(*svc, held_out)},
               {"researcher_token", sim::kSimResearcherToken},
               {"participant_secret", sim::kSimParticipantSecret}};
  if (result.training) summary["training"] = *result.training;
  write_text(a.out / "summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return 0;
}

struct DemoArgs {
  fs::path out;
  std::uint64_t seed = 7;
  std::size_t participants = 4;
  int days = 14;
};

int demo(const DemoArgs& a) {
  sim::CohortConfig config;
  config.size = a.participants;
  config.seed = a.seed;
  config.term_start = parse_date("2024-03-04");
  config.term_end = config.term_start + std::chrono::days{a.days};

  plan::ExperimentPlan p;
  p.id = "demo";
  p.researcher = "R1";
  p.start = config.term_start;
  p.end = config.term_end;
  plan::TaskTemplate q;
  q.id = "diary";
  plan::DailyAt daily;
  for (int h = 8; h <= 21; ++h) daily.times.push_back(ClockTime{h * 60 + 30});
  q.recurrence = daily;
  q.validity_window = Minutes{60};
  plan::TaskTemplate geo;
  geo.id = "geo";
  geo.kind = plan::TaskKind::Sensor;
  geo.sensor_kind = plan::SensorKind::Geo;
  geo.recurrence = plan::EveryMinutes{60};
  p.templates = {q, geo};
  p.constraints.min_gap = Minutes{30};
  p.constraints.quiet_hours = plan::QuietHours{parse_clock("23:00"), parse_clock("07:00")};

  fs::create_directories(a.out);
  write_text(a.out / "cohort.json", Json(config).dump(2) + "\n");
  write_text(a.out / "plan.json", Json(p).dump(2) + "\n");

  sim::ExperimentOptions o;
  o.policy = sim::Policy::Adaptive;
  o.days = a.days;
  o.seed = a.seed;
  // Training on day 10 of 14 leaves weekdays in the chronological test split.
  o.warmup_days = std::max(1, a.days - 4);
  o.clusters = 3;
  o.data_dir = a.out / "data";
  o.keep_events = false;
  auto result = sim::run_experiment(sim::generate_cohort(config), p, o);
  std::cout << "demo data directory: " << o.data_dir.string() << "\n"
            << "serve it with: bigthick serve --data " << o.data_dir.string() << " --experiment demo"
            << " --researcher-token " << sim::kSimResearcherToken << " --participant-secret "
            << sim::kSimParticipantSecret << "\n"
            << "requests: " << result.requests << "\n";
  if (result.training) std::cout << "training: " << result.training->dump() << "\n";
  return 0;
}

// ---- train ----

struct TrainArgs {
  fs::path data_dir;
  std::string family = "all";
  int clusters = 4;
  std::uint64_t seed = 1;
  double train_fraction = 0.7;
  fs::path out;
  bool activate = false;
};

int train(const TrainArgs& a) {
  std::vector<scheduler::Family> families;
  if (a.family == "all") {
    families.assign(std::begin(scheduler::kAllFamilies), std::end(scheduler::kAllFamilies));
  } else {
    families.push_back(scheduler::parse_family(a.family));
  }
  if (a.activate && families.size() != 1) throw Error(ErrorCode::InvalidArgument, "--activate needs one --family");

  std::vector<scheduler::LabeledRow> rows;
  scheduler::FeatureSchema schema;
  const auto vocabulary = context::Vocabulary::standard();
  {
    store::StmStore stm(a.data_dir, store::Durability::Os);
    store::LtmStore ltm(a.data_dir, store::Durability::Os);
    auto history = scheduler::HistoryIndex::from_stores(stm.state(), ltm);
    schema = scheduler::fit_schema(history, vocabulary, a.clusters, a.seed);
    rows = scheduler::build_training_rows(stm.state(), history, vocabulary, schema, scheduler::LabelOptions{true, false, {}});
  }
  auto split = scheduler::chronological_split(std::move(rows), a.train_fraction, true);
  if (split.train.empty() || split.test.empty()) {
    throw Error(ErrorCode::InvalidArgument, "not enough labelled data to train and evaluate");
  }
  const auto train_set = scheduler::to_dataset(split.train);
  const auto test_set = scheduler::to_dataset(split.test);

  const fs::path out = a.out.empty() ? a.data_dir / "models" : a.out;
  fs::create_directories(out);
  std::ostringstream table;
  table << "family\taccuracy\tkappa\tprecision\trecall\tf1\tauc\n";
  table.setf(std::ios::fixed);
  table.precision(4);
  scheduler::TrainConfig tc;
  tc.seed = a.seed;
  for (auto family : families) {
    auto model = scheduler::train(family, train_set, schema, tc);
    auto m = scheduler::evaluate(model, test_set);
    table << scheduler::to_string(family) << "\t" << m.accuracy << "\t" << m.kappa << "\t" << m.precision << "\t"
          << m.recall << "\t" << m.f1 << "\t" << m.auc << "\n";
    write_text(out / (std::string("model-") + scheduler::to_string(family) + ".json"), Json(model).dump() + "\n");
    if (a.activate) write_text(a.data_dir / "model.json", Json(model).dump() + "\n");
  }
  write_text(out / "metrics.tsv", table.str());
  std::cout << "train rows " << split.train.size() << ", test rows " << split.test.size() << "\n" << table.str();
  return 0;
}

// ---- report ----

struct ReportArgs {
  fs::path data_dir;
  fs::path out;
  std::string from;
  std::string to;
};

int report(const ReportArgs& a) {
  monitor::DateRange range;
  if (!a.from.empty()) range.from = parse_date(a.from);
  if (!a.to.empty()) range.to = parse_date(a.to);
  fs::create_directories(a.out);

  store::StmStore stm(a.data_dir, store::Durability::Os);
  store::LtmStore ltm(a.data_dir, store::Durability::Os);
  std::vector<std::string> ids;
  for (const auto& [id, r] : stm.state().participants) ids.push_back(id);

  std::ofstream summary(a.out / "summary.tsv");
  summary << "participant\tsent\tanswered\texpired\tskipped\tsensor_records\tcompletion_rate\tmean_delay_minutes\n";
  for (const auto& id : ids) {
    auto s = monitor::summarize(id, stm.state(), ltm, range);
    summary << id << "\t" << s.total_sent() << "\t" << s.total_answered() << "\t" << s.total_expired() << "\t"
            << s.total_skipped() << "\t" << s.total_sensor_records() << "\t" << s.completion_rate << "\t"
            << s.mean_response_delay_minutes << "\n";
  }

  for (auto metric : {monitor::SeriesMetric::Answered, monitor::SeriesMetric::Sent, monitor::SeriesMetric::Expired,
                      monitor::SeriesMetric::Skipped, monitor::SeriesMetric::SensorRecords}) {
    auto c = monitor::compare(ids, metric, stm.state(), ltm, range);
    std::ofstream out(a.out / (std::string("compare-") + monitor::to_string(metric) + ".tsv"));
    out << "date";
    for (const auto& s : c.series) out << "\t" << s.label;
    out << "\n";
    const std::size_t days = c.series.empty() ? 0 : c.series.front().values.size();
    for (std::size_t d = 0; d < days; ++d) {
      out << format_date(c.first_day + std::chrono::days{static_cast<int>(d)});
      for (const auto& s : c.series) out << "\t" << s.values[d];
      out << "\n";
    }
  }
  std::cout << "wrote reports for " << ids.size() << " participants to " << a.out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Experience-sampling experiment service and tools"};
  app.require_subcommand(1);

  ServeArgs serve_args;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  serve_cmd->add_option("--host", serve_args.host, "Listen address")->capture_default_str();
  serve_cmd->add_option("--port", serve_args.port, "Listen port")->capture_default_str();
  serve_cmd->add_option("--data", serve_args.data_dir, "Data directory")->required();
  serve_cmd->add_option("--experiment", serve_args.experiment, "Experiment id")->capture_default_str();
  serve_cmd->add_option("--researcher-token", serve_args.researcher_token, "Researcher bearer token")
      ->envname("BIGTHICK_RESEARCHER_TOKEN")
      ->required();
  serve_cmd->add_option("--participant-secret", serve_args.participant_secret, "Secret participant tokens derive from")
      ->envname("BIGTHICK_PARTICIPANT_SECRET")
      ->required();
  serve_cmd->add_option("--tick-seconds", serve_args.tick_seconds, "Expiry sweep and avoid-window refresh interval")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  serve_cmd->add_option("--durability", serve_args.durability, "fsync or os")->capture_default_str();

  SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "Run a synthetic cohort against an in-process service");
  sim_cmd->add_option("--cohort", sim_args.cohort, "Cohort config JSON")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--plan", sim_args.plan, "Experiment plan JSON")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--policy", sim_args.policy, "fixed or adaptive")
      ->capture_default_str()
      ->check(CLI::IsMember({"fixed", "adaptive"}));
  sim_cmd->add_option("--days", sim_args.days, "Simulated days")->capture_default_str();
  sim_cmd->add_option("--seed", sim_args.seed, "Simulation and training seed")->capture_default_str();
  sim_cmd->add_option("--out", sim_args.out, "Output directory (must not hold a previous run)")->required();
  sim_cmd->add_option("--warmup-days", sim_args.warmup_days, "Adaptive: days before the first training")
      ->capture_default_str();
  sim_cmd->add_option("--family", sim_args.family, "Adaptive: classifier family")->capture_default_str();
  sim_cmd->add_option("--clusters", sim_args.clusters, "Location clusters")->capture_default_str();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train and evaluate classifiers on a data directory");
  train_cmd->add_option("--data", train_args.data_dir, "Data directory")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--family", train_args.family,
                        "all, decision_tree, random_forest, logistic_regression, gaussian_nb or neural_net")
      ->capture_default_str();
  train_cmd->add_option("--clusters", train_args.clusters, "Location clusters")->capture_default_str();
  train_cmd->add_option("--seed", train_args.seed, "Training seed")->capture_default_str();
  train_cmd->add_option("--train-fraction", train_args.train_fraction, "Chronological train share per participant")
      ->capture_default_str();
  train_cmd->add_option("--out", train_args.out, "Where models and metrics.tsv go (default <data>/models)");
  train_cmd->add_flag("--activate", train_args.activate, "Also install the model as the service's active model");

  ReportArgs report_args;
  auto* report_cmd = app.add_subcommand("report", "Write summary and comparison tables as TSV");
  report_cmd->add_option("--data", report_args.data_dir, "Data directory")->required()->check(CLI::ExistingDirectory);
  report_cmd->add_option("--out", report_args.out, "Output directory")->required();
  report_cmd->add_option("--from", report_args.from, "First date, YYYY-MM-DD");
  report_cmd->add_option("--to", report_args.to, "End date (exclusive), YYYY-MM-DD");

  DemoArgs demo_args;
  auto* demo_cmd = app.add_subcommand("demo", "Build a seeded adaptive-plan data directory for the dashboard");
  demo_cmd->add_option("--out", demo_args.out, "Output directory")->required();
  demo_cmd->add_option("--seed", demo_args.seed, "Seed")->capture_default_str();
  demo_cmd->add_option("--participants", demo_args.participants, "Cohort size")->capture_default_str();
  demo_cmd->add_option("--days", demo_args.days, "Simulated days")->capture_default_str()->check(CLI::PositiveNumber);

  app.add_subcommand("schema", "Print the endpoint schema");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*serve_cmd) return serve(serve_args);
    if (*sim_cmd) return simulate(sim_args);
    if (*train_cmd) return train(train_args);
    if (*report_cmd) return report(report_args);
    if (*demo_cmd) return demo(demo_args);
    std::cout << service::Service::api_schema().dump(2) << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
