#include "tableqa/executor.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <mutex>
#include <thread>

#include "tableqa/codegen.hpp"
#include "tableqa/errors.hpp"
#include "tableqa/text.hpp"

namespace tableqa {

using nlohmann::json;

std::string_view to_string(ExecStatus s) {
  switch (s) {
    case ExecStatus::success: return "success";
    case ExecStatus::script_error: return "script_error";
    case ExecStatus::timeout: return "timeout";
    case ExecStatus::protocol_error: return "protocol_error";
  }
  return "protocol_error";
}

std::string_view to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::syntax: return "syntax";
    case ErrorCategory::runtime: return "runtime";
    case ErrorCategory::timeout: return "timeout";
    case ErrorCategory::protocol: return "protocol";
  }
  return "protocol";
}

std::optional<ExecStatus> exec_status_from_string(std::string_view s) {
  for (auto v : {ExecStatus::success, ExecStatus::script_error, ExecStatus::timeout, ExecStatus::protocol_error}) {
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

std::optional<ErrorCategory> error_category_from_string(std::string_view s) {
  for (auto v : {ErrorCategory::syntax, ErrorCategory::runtime, ErrorCategory::timeout, ErrorCategory::protocol}) {
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

ExecutionOutcome ExecutionOutcome::success(std::string result, std::int64_t duration_ms) {
  ExecutionOutcome o;
  o.status = ExecStatus::success;
  o.result = std::move(result);
  o.duration_ms = duration_ms;
  return o;
}

ExecutionOutcome ExecutionOutcome::failure(ExecStatus status, ErrorCategory category, std::string message,
                                           std::string trace, std::int64_t duration_ms) {
  ExecutionOutcome o;
  o.status = status;
  o.error = ExecError{category, std::move(message), tail_excerpt(trace, kMaxTraceExcerpt)};
  o.duration_ms = duration_ms;
  return o;
}

json to_json(const ExecRequest& r) {
  return {{"id", r.id},
          {"code", r.code},
          {"table_csv", r.table_csv},
          {"entry_point", r.entry_point},
          {"timeout_ms", r.timeout_ms},
          {"helpers_version", r.helpers_version}};
}

ExecRequest exec_request_from_json(const json& j) {
  ExecRequest r;
  r.id = j.at("id").get<std::string>();
  r.code = j.at("code").get<std::string>();
  r.table_csv = j.at("table_csv").get<std::string>();
  r.entry_point = j.at("entry_point").get<std::string>();
  r.timeout_ms = j.at("timeout_ms").get<std::int64_t>();
  r.helpers_version = j.at("helpers_version").get<std::string>();
  return r;
}

json to_json(const ExecutionOutcome& o) {
  json j;
  j["status"] = std::string(to_string(o.status));
  j["result"] = o.result ? json(*o.result) : json(nullptr);
  if (o.error) {
    j["error"] = {{"category", std::string(to_string(o.error->category))},
                  {"message", o.error->message},
                  {"trace_excerpt", o.error->trace_excerpt}};
  } else {
    j["error"] = nullptr;
  }
  j["duration_ms"] = o.duration_ms;
  return j;
}

ExecutionOutcome execution_outcome_from_json(const json& j) {
  ExecutionOutcome o;
  auto status = exec_status_from_string(j.at("status").get<std::string>());
  if (!status) throw std::invalid_argument("unknown status " + j.at("status").get<std::string>());
  o.status = *status;
  if (j.contains("result") && !j["result"].is_null()) o.result = j["result"].get<std::string>();
  if (j.contains("error") && !j["error"].is_null()) {
    const auto& e = j["error"];
    auto cat = error_category_from_string(e.at("category").get<std::string>());
    if (!cat) throw std::invalid_argument("unknown error category " + e.at("category").get<std::string>());
    o.error = ExecError{*cat, e.value("message", ""), tail_excerpt(e.value("trace_excerpt", ""), kMaxTraceExcerpt)};
  }
  o.duration_ms = j.value("duration_ms", std::int64_t{0});
  if (o.result.has_value() == o.error.has_value()) {
    throw std::invalid_argument("outcome must carry exactly one of result and error");
  }
  if ((o.status == ExecStatus::success) != o.result.has_value()) {
    throw std::invalid_argument("result is present iff status is success");
  }
  return o;
}

json exec_response_to_json(const std::string& id, const ExecutionOutcome& o) {
  json j = to_json(o);
  j["id"] = id;
  return j;
}

std::pair<std::string, ExecutionOutcome> exec_response_from_json(const json& j) {
  return {j.at("id").get<std::string>(), execution_outcome_from_json(j)};
}

// ---------------------------------------------------------------------------

FakeExecutor::FakeExecutor(Responder responder) : responder_(std::move(responder)) {}

std::unique_ptr<FakeExecutor> FakeExecutor::from_outcomes(std::map<std::string, ExecutionOutcome> by_code_hash) {
  return std::make_unique<FakeExecutor>([table = std::move(by_code_hash)](const ExecRequest& req) {
    auto it = table.find(sha256_hex(req.code));
    if (it == table.end()) {
      return ExecutionOutcome::failure(ExecStatus::protocol_error, ErrorCategory::protocol,
                                       "no scripted outcome for this code");
    }
    return it->second;
  });
}

std::unique_ptr<FakeExecutor> FakeExecutor::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open executor script " + path.string());
  std::map<std::string, ExecutionOutcome> table;
  try {
    json j;
    in >> j;
    for (const auto& [hash, outcome] : j.items()) table.emplace(hash, execution_outcome_from_json(outcome));
  } catch (const std::exception& e) {
    throw ConfigError("executor script " + path.string() + " is malformed: " + e.what());
  }
  return from_outcomes(std::move(table));
}

ExecutionOutcome FakeExecutor::execute(const std::string& code, const std::string& table_csv, std::int64_t timeout_ms,
                                       const std::string& helpers_version) {
  ++calls_;
  ExecRequest req{"fake-" + std::to_string(next_id_++), code, table_csv, std::string(kEntryPoint), timeout_ms,
                  helpers_version};
  if (helpers_version != helper_library().version) {
    return ExecutionOutcome::failure(ExecStatus::protocol_error, ErrorCategory::protocol,
                                     "helpers_version mismatch: got " + helpers_version);
  }
  return responder_(req);
}

// ---------------------------------------------------------------------------

namespace {

void ignore_sigpipe_once() {
  static std::once_flag flag;
  std::call_once(flag, [] { ::signal(SIGPIPE, SIG_IGN); });
}

bool write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

}  // namespace

ProcessExecutor::ProcessExecutor(std::string command, std::chrono::milliseconds grace)
    : command_(std::move(command)), grace_(grace) {}

ProcessExecutor::~ProcessExecutor() { stop(); }

void ProcessExecutor::start() {
  ignore_sigpipe_once();
  int in_pipe[2], out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw ExecutorUnavailable(std::string("pipe: ") + std::strerror(errno));
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw ExecutorUnavailable(std::string("pipe: ") + std::strerror(errno));
  }
  pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
    throw ExecutorUnavailable(std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    // Own process group, so a kill reaches whatever the shell started.
    ::setpgid(0, 0);
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  buffer_.clear();
}

void ProcessExecutor::stop() noexcept {
  if (to_child_ >= 0) ::close(to_child_);
  to_child_ = -1;
  if (pid_ > 0) {
    // Closing stdin asks the worker to exit; give it a moment, then kill.
    int status = 0;
    bool reaped = false;
    for (int i = 0; i < 50 && !reaped; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) {
        reaped = true;
      } else {
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
      }
    }
    if (!reaped) {
      ::kill(-pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
    } else {
      ::kill(-pid_, SIGKILL);
    }
  }
  pid_ = -1;
  if (from_child_ >= 0) ::close(from_child_);
  from_child_ = -1;
  buffer_.clear();
}

std::optional<std::string> ProcessExecutor::read_line(std::chrono::steady_clock::time_point deadline) {
  for (;;) {
    auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (remaining.count() <= 0) return std::nullopt;
    pollfd pfd{from_child_, POLLIN, 0};
    int rc = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw ExecutorUnavailable(std::string("poll: ") + std::strerror(errno));
    }
    if (rc == 0) return std::nullopt;
    char chunk[65536];
    ssize_t n = ::read(from_child_, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ExecutorUnavailable(std::string("read: ") + std::strerror(errno));
    }
    if (n == 0) throw ExecutorUnavailable("executor worker closed its output (command: " + command_ + ")");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

ExecutionOutcome ProcessExecutor::execute(const std::string& code, const std::string& table_csv,
                                          std::int64_t timeout_ms, const std::string& helpers_version) {
  if (pid_ <= 0) start();
  ExecRequest req{"req-" + std::to_string(next_id_++), code, table_csv, std::string(kEntryPoint), timeout_ms,
                  helpers_version};
  try {
    if (!write_all(to_child_, to_json(req).dump() + "\n")) {
      throw ExecutorUnavailable("cannot write to executor worker (command: " + command_ + ")");
    }
    auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms) + grace_;
    auto line = read_line(deadline);
    if (!line) throw ExecutorUnavailable("executor worker did not answer within the timeout plus grace");
    json j;
    try {
      j = json::parse(*line);
    } catch (const json::exception& e) {
      throw ExecutorUnavailable("executor worker wrote a malformed line: " + std::string(e.what()));
    }
    std::pair<std::string, ExecutionOutcome> parsed;
    try {
      parsed = exec_response_from_json(j);
    } catch (const std::exception& e) {
      throw ExecutorUnavailable("executor response violates the protocol: " + std::string(e.what()));
    }
    if (parsed.first != req.id) {
      throw ExecutorUnavailable("executor response id " + parsed.first + " does not match request " + req.id);
    }
    return parsed.second;
  } catch (const ExecutorUnavailable&) {
    stop();
    throw;
  }
}

}  // namespace tableqa
