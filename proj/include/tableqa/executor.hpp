#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "json.hpp"

namespace tableqa {

inline constexpr std::string_view kEntryPoint = "parse_dataframe";
inline constexpr std::size_t kMaxTraceExcerpt = 2000;

enum class ExecStatus { success, script_error, timeout, protocol_error };
enum class ErrorCategory { syntax, runtime, timeout, protocol };

std::string_view to_string(ExecStatus s);
std::string_view to_string(ErrorCategory c);
std::optional<ExecStatus> exec_status_from_string(std::string_view s);
std::optional<ErrorCategory> error_category_from_string(std::string_view s);

struct ExecError {
  ErrorCategory category = ErrorCategory::runtime;
  std::string message;
  std::string trace_excerpt;  // at most kMaxTraceExcerpt bytes
  friend bool operator==(const ExecError&, const ExecError&) = default;
};

/// Result of one script run. Exactly one of result / error is set.
struct ExecutionOutcome {
  ExecStatus status = ExecStatus::protocol_error;
  std::optional<std::string> result;
  std::optional<ExecError> error;
  std::int64_t duration_ms = 0;

  bool ok() const noexcept { return status == ExecStatus::success; }
  static ExecutionOutcome success(std::string result, std::int64_t duration_ms = 0);
  static ExecutionOutcome failure(ExecStatus status, ErrorCategory category, std::string message,
                                  std::string trace = {}, std::int64_t duration_ms = 0);
};

/// Wire request: one JSON object per line on the worker's stdin.
struct ExecRequest {
  std::string id;
  std::string code;
  std::string table_csv;
  std::string entry_point{kEntryPoint};
  std::int64_t timeout_ms = 10000;
  std::string helpers_version;
};

nlohmann::json to_json(const ExecRequest& r);
ExecRequest exec_request_from_json(const nlohmann::json& j);

/// Wire form of an outcome, with the echoed request id.
nlohmann::json exec_response_to_json(const std::string& id, const ExecutionOutcome& o);
/// Throws nlohmann::json::exception or std::invalid_argument on schema violations.
std::pair<std::string, ExecutionOutcome> exec_response_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ExecutionOutcome& o);
ExecutionOutcome execution_outcome_from_json(const nlohmann::json& j);

/// One executor session: a single in-flight request at a time.
class Executor {
 public:
  virtual ~Executor() = default;
  /// Throws ExecutorUnavailable when the worker cannot be started or reached.
  virtual ExecutionOutcome execute(const std::string& code, const std::string& table_csv, std::int64_t timeout_ms,
                                   const std::string& helpers_version) = 0;
};

using ExecutorFactory = std::function<std::unique_ptr<Executor>()>;

/// In-process stand-in with scripted outcomes.
class FakeExecutor final : public Executor {
 public:
  using Responder = std::function<ExecutionOutcome(const ExecRequest&)>;

  explicit FakeExecutor(Responder responder);

  /// JSON object mapping sha256(code) to an outcome object
  /// ({"status": ..., "result": ... | "error": {...}}). Unknown code yields a
  /// protocol_error outcome; a helpers_version other than the built-in stock
  /// yields protocol_error as the real worker would.
  static std::unique_ptr<FakeExecutor> from_file(const std::filesystem::path& path);
  static std::unique_ptr<FakeExecutor> from_outcomes(std::map<std::string, ExecutionOutcome> by_code_hash);

  ExecutionOutcome execute(const std::string& code, const std::string& table_csv, std::int64_t timeout_ms,
                           const std::string& helpers_version) override;

  std::size_t calls() const noexcept { return calls_; }

 private:
  Responder responder_;
  std::size_t calls_ = 0;
  std::uint64_t next_id_ = 1;
};

/// Child process speaking line-delimited JSON on stdin/stdout, started with
/// /bin/sh -c <command> on first use.
class ProcessExecutor final : public Executor {
 public:
  /// grace: extra wait beyond the request timeout before the worker is
  /// declared hung and killed.
  explicit ProcessExecutor(std::string command, std::chrono::milliseconds grace = std::chrono::milliseconds(5000));
  ~ProcessExecutor() override;
  ProcessExecutor(const ProcessExecutor&) = delete;
  ProcessExecutor& operator=(const ProcessExecutor&) = delete;

  ExecutionOutcome execute(const std::string& code, const std::string& table_csv, std::int64_t timeout_ms,
                           const std::string& helpers_version) override;

 private:
  void start();
  void stop() noexcept;
  std::optional<std::string> read_line(std::chrono::steady_clock::time_point deadline);

  std::string command_;
  std::chrono::milliseconds grace_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  std::uint64_t next_id_ = 1;
};

}  // namespace tableqa
