#include "bigthick/store/event_log.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "bigthick/error.hpp"
#include "bigthick/hash.hpp"

namespace bigthick::store {
namespace {

[[noreturn]] void io_error(const std::string& what, const std::filesystem::path& path) {
  throw Error(ErrorCode::Io, what + " '" + path.string() + "': " + std::strerror(errno));
}

void write_all(int fd, const std::string& data, const std::filesystem::path& path) {
  const char* p = data.data();
  std::size_t left = data.size();
  while (left > 0) {
    ssize_t n = ::write(fd, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      io_error("write failed", path);
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
}

bool is_hex(char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'); }

}  // namespace

std::string encode_line(const std::string& document) {
  std::string line = std::to_string(document.size());
  line.push_back(' ');
  line += hex32(crc32(document));
  line.push_back(' ');
  line += document;
  line.push_back('\n');
  return line;
}

ParsedLog parse_log(const std::string& contents) {
  ParsedLog out;
  std::size_t pos = 0;
  const std::size_t n = contents.size();
  while (pos < n) {
    std::size_t p = pos;
    std::size_t length = 0;
    std::size_t digits = 0;
    while (p < n && contents[p] >= '0' && contents[p] <= '9' && digits < 12) {
      length = length * 10 + static_cast<std::size_t>(contents[p] - '0');
      ++p;
      ++digits;
    }
    bool ok = digits > 0 && p < n && contents[p] == ' ';
    ++p;
    ok = ok && p + 9 <= n;
    if (ok) {
      for (std::size_t i = 0; i < 8; ++i) ok = ok && is_hex(contents[p + i]);
      ok = ok && contents[p + 8] == ' ';
    }
    std::string crc_text = ok ? contents.substr(p, 8) : std::string{};
    p += 9;
    ok = ok && p + length + 1 <= n && contents[p + length] == '\n';
    if (ok) {
      std::string_view doc(contents.data() + p, length);
      ok = hex32(crc32(doc)) == crc_text;
      if (ok) {
        auto parsed = nlohmann::json::parse(doc, nullptr, /*allow_exceptions=*/false);
        ok = !parsed.is_discarded();
        if (ok) out.records.push_back(std::move(parsed));
      }
    }
    if (!ok) break;
    pos = p + length + 1;
  }
  out.valid_bytes = pos;
  out.report.valid_records = out.records.size();
  out.report.discarded_bytes = n - pos;
  if (pos < n) {
    std::size_t fragments = 0;
    for (std::size_t i = pos; i < n; ++i) fragments += contents[i] == '\n';
    if (contents.back() != '\n') ++fragments;
    out.report.discarded_fragments = fragments;
  }
  return out;
}

ParsedLog read_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return ParsedLog{};
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_log(ss.str());
}

FileLock::FileLock(const std::filesystem::path& path) {
  auto lock_path = path;
  lock_path += ".lock";
  fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) io_error("cannot open lock file", lock_path);
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw Error(ErrorCode::Io, "store '" + path.string() + "' is locked by another writer");
  }
}

FileLock::~FileLock() {
  if (fd_ >= 0) ::close(fd_);  // releases the flock
}

FileLock::FileLock(FileLock&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }

FileLock& FileLock::operator=(FileLock&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = other.fd_;
    other.fd_ = -1;
  }
  return *this;
}

EventLog::EventLog(const std::filesystem::path& path, Durability durability)
    : path_(path), durability_(durability), lock_(path) {
  ParsedLog parsed = read_log(path_);
  recovery_ = parsed.report;
  initial_ = std::move(parsed.records);
  if (!recovery_.clean()) {
    if (::truncate(path_.c_str(), static_cast<off_t>(parsed.valid_bytes)) != 0) {
      io_error("cannot truncate torn tail of", path_);
    }
  }
  open_for_append();
}

EventLog::~EventLog() {
  if (fd_ >= 0) ::close(fd_);
}

EventLog::EventLog(EventLog&& other) noexcept
    : path_(std::move(other.path_)),
      durability_(other.durability_),
      lock_(std::move(other.lock_)),
      fd_(other.fd_),
      initial_(std::move(other.initial_)),
      recovery_(other.recovery_) {
  other.fd_ = -1;
}

void EventLog::open_for_append() {
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) io_error("cannot open log", path_);
}

void EventLog::append(const nlohmann::json& document) {
  write_all(fd_, encode_line(document.dump()), path_);
  if (durability_ == Durability::Fsync && ::fsync(fd_) != 0) io_error("fsync failed", path_);
}

void EventLog::rewrite(const std::vector<nlohmann::json>& documents) {
  auto tmp = path_;
  tmp += ".tmp";
  int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) io_error("cannot create", tmp);
  std::string buffer;
  for (const auto& d : documents) buffer += encode_line(d.dump());
  write_all(fd, buffer, tmp);
  if (::fsync(fd) != 0) io_error("fsync failed", tmp);
  ::close(fd);
  std::filesystem::rename(tmp, path_);
  ::close(fd_);
  open_for_append();
}

}  // namespace bigthick::store
