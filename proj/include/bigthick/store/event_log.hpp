#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace bigthick::store {

enum class Durability {
  Os,     // write(2) before returning; survives process death
  Fsync,  // additionally fsync(2); survives power loss
};

struct RecoveryReport {
  std::size_t valid_records = 0;
  std::size_t discarded_bytes = 0;
  std::size_t discarded_fragments = 0;  // partial or corrupt lines dropped from the tail

  bool clean() const { return discarded_bytes == 0; }
};

/// Encodes one log line: "<byte-length> <crc32-hex> <document>\n".
std::string encode_line(const std::string& document);

struct ParsedLog {
  std::vector<nlohmann::json> records;
  std::size_t valid_bytes = 0;  // length of the prefix made of complete, valid lines
  RecoveryReport report;
};

/// Parses the longest valid prefix of `contents`. Never throws on bad data.
ParsedLog parse_log(const std::string& contents);

/// Read-only view for concurrent readers: only fully committed lines.
ParsedLog read_log(const std::filesystem::path& path);

/// Exclusive lock on "<path>.lock" held for the lifetime of the object.
class FileLock {
 public:
  explicit FileLock(const std::filesystem::path& path);
  ~FileLock();
  FileLock(FileLock&& other) noexcept;
  FileLock& operator=(FileLock&& other) noexcept;
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

/// Append-only writer. Opening truncates a corrupt or torn tail back to the
/// last valid record and reports what was dropped.
class EventLog {
 public:
  EventLog(const std::filesystem::path& path, Durability durability);
  ~EventLog();
  EventLog(EventLog&& other) noexcept;
  EventLog& operator=(EventLog&&) = delete;
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  /// Records present when the log was opened.
  const std::vector<nlohmann::json>& initial_records() const { return initial_; }
  void release_initial_records() { initial_.clear(); initial_.shrink_to_fit(); }
  const RecoveryReport& recovery() const { return recovery_; }
  const std::filesystem::path& path() const { return path_; }

  void append(const nlohmann::json& document);
  /// Atomically replaces the log contents with `documents`.
  void rewrite(const std::vector<nlohmann::json>& documents);

 private:
  void open_for_append();

  std::filesystem::path path_;
  Durability durability_;
  FileLock lock_;
  int fd_ = -1;
  std::vector<nlohmann::json> initial_;
  RecoveryReport recovery_;
};

}  // namespace bigthick::store
