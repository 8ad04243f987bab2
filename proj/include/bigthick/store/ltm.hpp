#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bigthick/store/event_log.hpp"
#include "bigthick/time.hpp"

namespace bigthick::store {

enum class LtmKind { Answer, Sensor, Snapshot };

const char* to_string(LtmKind kind);
LtmKind parse_ltm_kind(const std::string& name);

struct LtmRecord {
  std::string id;  // content hash of (participant, kind, payload)
  std::string participant;
  LtmKind kind = LtmKind::Answer;
  nlohmann::json payload;
  Instant recorded_at;
};

void to_json(nlohmann::json& j, const LtmRecord& r);
void from_json(const nlohmann::json& j, LtmRecord& r);

std::string ltm_record_id(const std::string& participant, LtmKind kind, const nlohmann::json& payload);

struct LtmFilter {
  std::optional<std::string> participant;
  std::optional<Instant> from;  // inclusive, on recorded_at
  std::optional<Instant> to;    // exclusive
  std::optional<LtmKind> kind;
};

struct LtmAppend {
  std::string id;
  bool inserted = false;  // false: content-equal record already stored
};

/// Long-term memory: content-addressed, append-only archive of answers,
/// sensor readings and context snapshots.
class LtmStore {
 public:
  LtmStore(const std::filesystem::path& dir, Durability durability = Durability::Fsync,
           const std::string& name = "ltm");

  LtmAppend append(const std::string& participant, LtmKind kind, nlohmann::json payload, Instant recorded_at);

  /// Matching records in append order.
  std::vector<const LtmRecord*> scan(const LtmFilter& filter = {}) const;
  const std::vector<LtmRecord>& records() const { return records_; }
  bool contains(const std::string& id) const { return by_id_.count(id) > 0; }
  const LtmRecord* find(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &records_[it->second];
  }
  const RecoveryReport& recovery() const { return log_.recovery(); }

 private:
  void index(LtmRecord record);

  EventLog log_;
  std::vector<LtmRecord> records_;
  std::map<std::string, std::size_t> by_id_;
  std::map<std::string, std::vector<std::size_t>> by_participant_;
};

}  // namespace bigthick::store
