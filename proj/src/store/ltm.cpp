#include "bigthick/store/ltm.hpp"

#include "bigthick/error.hpp"
#include "bigthick/hash.hpp"
#include "bigthick/json_util.hpp"

namespace bigthick::store {

const char* to_string(LtmKind kind) {
  switch (kind) {
    case LtmKind::Answer: return "Answer";
    case LtmKind::Sensor: return "Sensor";
    case LtmKind::Snapshot: return "Snapshot";
  }
  return "?";
}

LtmKind parse_ltm_kind(const std::string& name) {
  if (name == "Answer") return LtmKind::Answer;
  if (name == "Sensor") return LtmKind::Sensor;
  if (name == "Snapshot") return LtmKind::Snapshot;
  throw Error(ErrorCode::InvalidArgument, "unknown LTM kind: " + name);
}

void to_json(Json& j, const LtmRecord& r) {
  j = Json{{"id", r.id},
           {"participant", r.participant},
           {"kind", to_string(r.kind)},
           {"payload", r.payload},
           {"recorded_at", format_instant(r.recorded_at)}};
}

void from_json(const Json& j, LtmRecord& r) {
  r.id = j.at("id").get<std::string>();
  r.participant = j.at("participant").get<std::string>();
  r.kind = parse_ltm_kind(j.at("kind").get<std::string>());
  r.payload = j.at("payload");
  r.recorded_at = get_instant(j, "recorded_at");
}

std::string ltm_record_id(const std::string& participant, LtmKind kind, const Json& payload) {
  std::string key = participant;
  key.push_back('\x1f');
  key += to_string(kind);
  key.push_back('\x1f');
  key += payload.dump();
  return hex64(fnv1a64(key));
}

LtmStore::LtmStore(const std::filesystem::path& dir, Durability durability, const std::string& name)
    : log_((std::filesystem::create_directories(dir), dir / (name + ".log")), durability) {
  for (const auto& doc : log_.initial_records()) index(doc.get<LtmRecord>());
  log_.release_initial_records();
}

void LtmStore::index(LtmRecord record) {
  if (by_id_.count(record.id)) return;
  const std::size_t pos = records_.size();
  by_id_.emplace(record.id, pos);
  by_participant_[record.participant].push_back(pos);
  records_.push_back(std::move(record));
}

LtmAppend LtmStore::append(const std::string& participant, LtmKind kind, Json payload, Instant recorded_at) {
  if (participant.empty()) throw Error(ErrorCode::InvalidArgument, "LTM record without participant");
  LtmRecord record{ltm_record_id(participant, kind, payload), participant, kind, std::move(payload), recorded_at};
  if (by_id_.count(record.id)) return LtmAppend{record.id, false};
  log_.append(record);
  std::string id = record.id;
  index(std::move(record));
  return LtmAppend{std::move(id), true};
}

std::vector<const LtmRecord*> LtmStore::scan(const LtmFilter& filter) const {
  std::vector<const LtmRecord*> out;
  auto consider = [&](const LtmRecord& r) {
    if (filter.kind && r.kind != *filter.kind) return;
    if (filter.from && r.recorded_at < *filter.from) return;
    if (filter.to && !(r.recorded_at < *filter.to)) return;
    out.push_back(&r);
  };
  if (filter.participant) {
    auto it = by_participant_.find(*filter.participant);
    if (it != by_participant_.end()) {
      for (std::size_t pos : it->second) consider(records_[pos]);
    }
  } else {
    for (const auto& r : records_) consider(r);
  }
  return out;
}

}  // namespace bigthick::store
