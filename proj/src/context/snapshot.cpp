#include "bigthick/context/snapshot.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "bigthick/error.hpp"
#include "bigthick/json_util.hpp"

namespace bigthick::context {
namespace {

Entity named_entity(const std::string& entity_class, const std::string& name) {
  return Entity{entity_id(entity_class, name), entity_class, {{"Name", Text{name}}}};
}

void push_unique(std::vector<std::string>& ids, const std::string& id) {
  if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
}

[[noreturn]] void reject_term(const char* field, const std::string& term) {
  throw Error(ErrorCode::Vocabulary, std::string("field '") + field + "': unknown term '" + term + "'");
}

}  // namespace

const char* to_string(SensorKind kind) {
  switch (kind) {
    case SensorKind::Geo: return "geo";
    case SensorKind::Accelerometer: return "accelerometer";
    case SensorKind::AppUsage: return "app_usage";
  }
  return "?";
}

SensorKind parse_sensor_kind(const std::string& name) {
  if (name == "geo") return SensorKind::Geo;
  if (name == "accelerometer") return SensorKind::Accelerometer;
  if (name == "app_usage") return SensorKind::AppUsage;
  throw Error(ErrorCode::InvalidArgument, "unknown sensor kind: " + name);
}

Dimension parse_dimension(const std::string& name) {
  if (name == "WA") return Dimension::WA;
  if (name == "WE") return Dimension::WE;
  if (name == "WI") return Dimension::WI;
  if (name == "WO") return Dimension::WO;
  if (name == "WU") return Dimension::WU;
  throw Error(ErrorCode::InvalidArgument, "unknown context dimension: " + name);
}

void check_answers(const Vocabulary& vocabulary, const DiaryAnswerSet& answers) {
  if (answers.what && !vocabulary.has_activity(*answers.what)) reject_term("what", *answers.what);
  if (answers.where && !vocabulary.has_location(*answers.where)) reject_term("where", *answers.where);
  if (answers.mood && vocabulary.mood_index(*answers.mood) < 0) reject_term("mood", *answers.mood);
  for (const auto& o : answers.objects) {
    if (!vocabulary.has_object(o)) reject_term("objects", o);
  }
  for (const auto& p : answers.who) {
    if (!vocabulary.has_person(p)) reject_term("who", p);
  }
}

ContextSnapshot build_snapshot(const Vocabulary& vocabulary, const std::string& participant,
                               Instant timestamp, const DiaryAnswerSet& answers,
                               const std::optional<SensorBatch>& sensors,
                               const AnnotateOptions& options) {
  if (participant.empty()) {
    throw Error(ErrorCode::InvalidArgument, "missing participant id");
  }
  check_answers(vocabulary, answers);

  ContextSnapshot s;
  s.participant = participant;
  s.timestamp = timestamp;

  Entity me{entity_id("Me", participant), "Person",
            {{"Class", Text{"Person"}}, {"Name", Text{participant}}}};
  if (answers.mood) {
    me.attributes["Mood"] = Text{*answers.mood};
    s.wi = answers.mood;
  }
  if (answers.notification_time) me.attributes["NotificationTime"] = Timestamp{*answers.notification_time};
  if (answers.answer_time) me.attributes["AnswerTime"] = Timestamp{*answers.answer_time};
  s.me = me.id;
  s.graph.add(std::move(me));

  if (answers.what) {
    s.wa = s.graph.add(named_entity("Activity", *answers.what)).id;
  }
  if (answers.where) {
    const LocationTerm* term = &vocabulary.locations.at(*answers.where);
    std::string child = s.graph.add(named_entity(term->entity_class, *answers.where)).id;
    s.we = child;
    while (term->part_of) {
      const std::string& parent_name = *term->part_of;
      term = &vocabulary.locations.at(parent_name);
      std::string parent = s.graph.add(named_entity(term->entity_class, parent_name)).id;
      s.graph.relate(child, Predicate::PartOf, parent);
      child = parent;
    }
  }
  for (const auto& o : answers.objects) {
    push_unique(s.wo, s.graph.add(named_entity(vocabulary.objects.at(o), o)).id);
  }
  for (const auto& p : answers.who) {
    push_unique(s.wu, s.graph.add(named_entity("Person", p)).id);
  }

  if (s.we) {
    if (s.wa) s.graph.relate(*s.we, Predicate::HasActivity, *s.wa);
    s.graph.relate(s.me, Predicate::In, *s.we);
    for (const auto& o : s.wo) s.graph.relate(o, Predicate::In, *s.we);
    for (const auto& u : s.wu) s.graph.relate(u, Predicate::In, *s.we);
  }
  for (const auto& u : s.wu) s.graph.relate(s.me, Predicate::With, u);

  if (sensors) return annotate_with_sensors(s, *sensors, options).snapshot;
  return s;
}

Annotated annotate_with_sensors(const ContextSnapshot& snapshot, const SensorBatch& batch,
                                const AnnotateOptions& options) {
  Annotated out{snapshot, 0};
  const auto window = std::chrono::duration_cast<std::chrono::seconds>(options.window);

  const SensorReading* nearest_geo = nullptr;
  std::chrono::seconds nearest_gap{};
  double accel_sum = 0.0;
  int accel_count = 0;
  std::map<std::string, double> app_seconds;

  for (const auto& r : batch.readings) {
    auto gap = r.timestamp > snapshot.timestamp ? r.timestamp - snapshot.timestamp
                                                : snapshot.timestamp - r.timestamp;
    if (gap > window) {
      ++out.out_of_window;
      continue;
    }
    switch (r.kind()) {
      case SensorKind::Geo:
        // Ties keep the earlier reading.
        if (!nearest_geo || gap < nearest_gap ||
            (gap == nearest_gap && r.timestamp < nearest_geo->timestamp)) {
          nearest_geo = &r;
          nearest_gap = gap;
        }
        break;
      case SensorKind::Accelerometer:
        accel_sum += std::get<Acceleration>(r.value).magnitude;
        ++accel_count;
        break;
      case SensorKind::AppUsage: {
        const auto& u = std::get<AppUsage>(r.value);
        app_seconds[u.app] += u.seconds;
        break;
      }
    }
  }

  Graph& g = out.snapshot.graph;
  if (nearest_geo && out.snapshot.we) {
    const auto& geo = std::get<GeoPoint>(nearest_geo->value);
    Entity* root = g.find(partof_root(g, *out.snapshot.we));
    if (root) {
      root->attributes["Latitude"] = Number{geo.latitude, "deg"};
      root->attributes["Longitude"] = Number{geo.longitude, "deg"};
    }
  }
  Entity* me = g.find(out.snapshot.me);
  if (me && accel_count > 0) {
    me->attributes["Acceleration"] = Number{accel_sum / accel_count, "m/s2"};
  }
  if (me && !app_seconds.empty()) {
    double total = 0.0;
    const std::pair<const std::string, double>* top = nullptr;
    for (const auto& entry : app_seconds) {
      total += entry.second;
      if (!top || entry.second > top->second) top = &entry;
    }
    me->attributes["AppUsageSeconds"] = Number{total, "s"};
    me->attributes["TopApp"] = Text{top->first};
  }
  return out;
}

DimensionValue query_dimension(const ContextSnapshot& snapshot, Dimension dim) {
  DimensionValue out;
  auto resolve = [&](const std::string& id) {
    if (const Entity* e = snapshot.graph.find(id)) out.entities.push_back(*e);
  };
  switch (dim) {
    case Dimension::WA:
      if (snapshot.wa) resolve(*snapshot.wa);
      break;
    case Dimension::WE:
      if (snapshot.we) resolve(*snapshot.we);
      break;
    case Dimension::WI:
      out.mood = snapshot.wi;
      break;
    case Dimension::WO:
      for (const auto& id : snapshot.wo) resolve(id);
      break;
    case Dimension::WU:
      for (const auto& id : snapshot.wu) resolve(id);
      break;
  }
  return out;
}

ValidationReport validate_snapshot(const ContextSnapshot& snapshot, const Vocabulary& vocabulary) {
  ValidationReport report = validate_graph(snapshot.graph);
  auto require = [&](const std::string& id, const char* what) {
    if (!snapshot.graph.contains(id)) {
      report.dangling_refs.push_back(std::string(what) + " '" + id + "' not found");
    }
  };
  require(snapshot.me, "me");
  if (snapshot.wa) require(*snapshot.wa, "wa");
  if (snapshot.we) require(*snapshot.we, "we");
  for (const auto& id : snapshot.wo) require(id, "wo");
  for (const auto& id : snapshot.wu) require(id, "wu");
  if (snapshot.wi && vocabulary.mood_index(*snapshot.wi) < 0) {
    report.dangling_refs.push_back("wi '" + *snapshot.wi + "' not in mood vocabulary");
  }
  return report;
}

// --- serialization ---------------------------------------------------------

void to_json(nlohmann::json& j, const AttributeValue& v) {
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Text>) {
          j = nlohmann::json{{"text", x.value}};
        } else if constexpr (std::is_same_v<T, Number>) {
          j = nlohmann::json{{"number", x.value}};
          if (x.unit) j["unit"] = *x.unit;
        } else if constexpr (std::is_same_v<T, Timestamp>) {
          j = nlohmann::json{{"timestamp", format_instant(x.value)}};
        } else {
          j = nlohmann::json{{"geo", {x.latitude, x.longitude}}};
        }
      },
      v);
}

void from_json(const nlohmann::json& j, AttributeValue& v) {
  if (j.contains("text")) {
    v = Text{j.at("text").get<std::string>()};
  } else if (j.contains("number")) {
    Number n{j.at("number").get<double>(), std::nullopt};
    if (j.contains("unit")) n.unit = j.at("unit").get<std::string>();
    v = n;
  } else if (j.contains("timestamp")) {
    v = Timestamp{parse_instant(j.at("timestamp").get<std::string>())};
  } else if (j.contains("geo")) {
    v = GeoPoint::make(j.at("geo").at(0).get<double>(), j.at("geo").at(1).get<double>());
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown attribute value: " + j.dump());
  }
}

void to_json(nlohmann::json& j, const ContextSnapshot& s) {
  nlohmann::json entities = nlohmann::json::array();
  for (const auto& e : s.graph.entities) {
    nlohmann::json attrs = nlohmann::json::object();
    for (const auto& [name, value] : e.attributes) attrs[name] = value;
    entities.push_back({{"id", e.id}, {"class", e.entity_class}, {"attributes", std::move(attrs)}});
  }
  nlohmann::json relations = nlohmann::json::array();
  for (const auto& r : s.graph.relations) {
    relations.push_back({{"subject", r.subject}, {"predicate", to_string(r.predicate)}, {"object", r.object}});
  }
  j = nlohmann::json{{"participant", s.participant},
                     {"timestamp", format_instant(s.timestamp)},
                     {"me", s.me},
                     {"wo", s.wo},
                     {"wu", s.wu},
                     {"entities", std::move(entities)},
                     {"relations", std::move(relations)}};
  j["wa"] = optional_json(s.wa);
  j["we"] = optional_json(s.we);
  j["wi"] = optional_json(s.wi);
}

void from_json(const nlohmann::json& j, ContextSnapshot& s) {
  s = ContextSnapshot{};
  s.participant = j.at("participant").get<std::string>();
  s.timestamp = parse_instant(j.at("timestamp").get<std::string>());
  s.me = j.at("me").get<std::string>();
  s.wa = get_optional_string(j, "wa");
  s.we = get_optional_string(j, "we");
  s.wi = get_optional_string(j, "wi");
  j.at("wo").get_to(s.wo);
  j.at("wu").get_to(s.wu);
  for (const auto& e : j.at("entities")) {
    Entity entity{e.at("id").get<std::string>(), e.at("class").get<std::string>(), {}};
    for (const auto& [name, value] : e.at("attributes").items()) {
      entity.attributes.emplace(name, value.get<AttributeValue>());
    }
    s.graph.entities.push_back(std::move(entity));
  }
  for (const auto& r : j.at("relations")) {
    s.graph.relations.push_back(Relation{r.at("subject").get<std::string>(),
                                         parse_predicate(r.at("predicate").get<std::string>()),
                                         r.at("object").get<std::string>()});
  }
}

void to_json(nlohmann::json& j, const DiaryAnswerSet& a) {
  j = nlohmann::json{{"objects", a.objects}, {"who", a.who}};
  j["what"] = optional_json(a.what);
  j["where"] = optional_json(a.where);
  j["mood"] = optional_json(a.mood);
  j["notification_time"] = instant_json(a.notification_time);
  j["answer_time"] = instant_json(a.answer_time);
}

void from_json(const nlohmann::json& j, DiaryAnswerSet& a) {
  a = DiaryAnswerSet{};
  a.what = get_optional_string(j, "what");
  a.where = get_optional_string(j, "where");
  a.mood = get_optional_string(j, "mood");
  if (j.contains("objects")) j.at("objects").get_to(a.objects);
  if (j.contains("who")) j.at("who").get_to(a.who);
  a.notification_time = get_optional_instant(j, "notification_time");
  a.answer_time = get_optional_instant(j, "answer_time");
}

void to_json(nlohmann::json& j, const SensorReading& r) {
  j = nlohmann::json{{"ts", format_instant(r.timestamp)}, {"kind", to_string(r.kind())}};
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, GeoPoint>) {
          j["lat"] = x.latitude;
          j["lon"] = x.longitude;
        } else if constexpr (std::is_same_v<T, Acceleration>) {
          j["magnitude"] = x.magnitude;
        } else {
          j["app"] = x.app;
          j["seconds"] = x.seconds;
        }
      },
      r.value);
}

void from_json(const nlohmann::json& j, SensorReading& r) {
  r.timestamp = parse_instant(j.at("ts").get<std::string>());
  switch (parse_sensor_kind(j.at("kind").get<std::string>())) {
    case SensorKind::Geo:
      r.value = GeoPoint::make(j.at("lat").get<double>(), j.at("lon").get<double>());
      break;
    case SensorKind::Accelerometer:
      r.value = Acceleration{j.at("magnitude").get<double>()};
      break;
    case SensorKind::AppUsage:
      r.value = AppUsage{j.at("app").get<std::string>(), j.at("seconds").get<double>()};
      break;
  }
}

}  // namespace bigthick::context
