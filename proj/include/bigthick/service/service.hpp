#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bigthick/context/vocabulary.hpp"
#include "bigthick/scheduler/avoid.hpp"
#include "bigthick/scheduler/dataset.hpp"
#include "bigthick/scheduler/model.hpp"
#include "bigthick/store/ltm.hpp"
#include "bigthick/store/stm.hpp"

namespace bigthick::service {

inline constexpr int kApiSchemaVersion = 1;

struct ServiceConfig {
  std::filesystem::path data_dir;
  std::string experiment_id = "default";
  std::string researcher_token;
  /// Participant tokens are derived from this secret and the participant id.
  std::string participant_secret;
  std::chrono::seconds tick_interval{60};
  store::Durability durability = store::Durability::Fsync;
  context::Vocabulary vocabulary = context::Vocabulary::standard();

  double confidence_threshold = 0.6;  // predicted windows below this are ignored
  scheduler::AvoidOptions avoid;
  scheduler::LabelOptions labels{true, false, std::nullopt};
  /// On tick, publish the day's avoid windows and re-expand it once a model exists.
  bool refresh_avoid_windows = true;
  /// Compact the STM log once this many events follow the last checkpoint.
  std::size_t compact_after = 50000;
  /// Used when a request carries no `now`. Defaults to the system clock.
  std::function<Instant()> clock;

  /// Throws Error(InvalidArgument): empty tokens, shared role secrets, tick < 1 s.
  void check() const;
};

struct ApiRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
  std::string token;
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

enum class Role { Researcher, Participant };

struct Caller {
  Role role = Role::Participant;
  std::string participant;  // set for participants
};

std::string derive_participant_token(const std::string& secret, const std::string& participant);

/// Request handling over the two stores. Every mutation is appended to STM or
/// LTM before the response is produced; a restarted service rebuilds all
/// state from the data directory. Handlers read time only from the request's
/// `now` (query or body) or, failing that, from the configured clock.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Never throws; errors become 4xx responses with an "error" object.
  ApiResponse handle(const ApiRequest& request);

  const ServiceConfig& config() const { return config_; }
  /// Runs `fn` under the shared lock with read access to both stores.
  void read(const std::function<void(const store::StmState&, const store::LtmStore&)>& fn) const;
  std::optional<scheduler::TrainedModel> model() const;

  /// Machine-readable endpoint table served at GET /schema.
  static nlohmann::json api_schema();

  struct Route;
  struct Impl;

 private:
  ApiResponse dispatch(const ApiRequest& request);
  ApiResponse train(const ApiRequest& request, const nlohmann::json& body, Instant now);

  ServiceConfig config_;
  mutable std::shared_mutex mutex_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace bigthick::service
