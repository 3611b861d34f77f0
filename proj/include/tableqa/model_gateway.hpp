#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace tableqa {

enum class Role { system, user };

struct ImageRef {
  std::vector<std::uint8_t> bytes;
  std::string media_type;  // "image/png" or "image/jpeg"
};

using MessagePart = std::variant<std::string, ImageRef>;

struct ChatMessage {
  Role role = Role::user;
  std::vector<MessagePart> parts;
};

struct ChatRequest {
  std::string model_id;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_output_tokens = 2048;
  /// Which prompt template produced the request. Audit-only, not fingerprinted.
  std::string tag;

  bool has_images() const;
};

enum class FinishReason { stop, length, error };
std::string_view to_string(FinishReason r);
FinishReason finish_reason_from_string(std::string_view s);

struct Usage {
  int input_tokens = 0;
  int output_tokens = 0;
};

struct ChatResponse {
  std::string text;
  FinishReason finish_reason = FinishReason::stop;
  Usage usage;
  std::chrono::milliseconds latency{0};
};

/// Stable content hash over the model id and whitespace-normalized messages.
/// Temperature, token limits and the tag are deliberately left out.
std::string fingerprint(const ChatRequest& request);

/// JSON view of the messages with images replaced by their hash and size.
nlohmann::json messages_to_json(const std::vector<ChatMessage>& messages);

// ---------------------------------------------------------------------------
// Templates

enum class TemplateId { extraction_plan, extract_csv, reasoning, codegen, codegen_retry, explanation };
std::string_view to_string(TemplateId id);

struct PromptTemplate {
  TemplateId template_id;
  std::string body;  // placeholders are written {{name}}
};

const PromptTemplate& builtin_template(TemplateId id);

/// Placeholder names in order of first appearance.
std::vector<std::string> placeholders(const PromptTemplate& tmpl);

/// Single-pass substitution; bound values are never rescanned. Throws
/// UnboundPlaceholder for the first placeholder missing from bindings.
std::string render(const PromptTemplate& tmpl, const std::map<std::string, std::string>& bindings);

// ---------------------------------------------------------------------------
// Backends

class Backend {
 public:
  virtual ~Backend() = default;
  virtual ChatResponse send(const ChatRequest& request) = 0;
  virtual bool supports_images() const = 0;
};

/// Canned responses keyed by request fingerprint. Read-only after construction.
class ScriptedBackend final : public Backend {
 public:
  ScriptedBackend(std::map<std::string, std::string> responses, bool strict = true,
                  std::string fallback = {}, bool vision = true);

  /// Loads a JSON object mapping fingerprint to response text.
  static std::shared_ptr<ScriptedBackend> from_file(const std::filesystem::path& path, bool strict = true);

  ChatResponse send(const ChatRequest& request) override;
  bool supports_images() const override { return vision_; }
  std::size_t size() const noexcept { return responses_.size(); }

 private:
  std::map<std::string, std::string> responses_;
  bool strict_;
  std::string fallback_;
  bool vision_;
};

/// Adapter for tests and fixture generation: responses come from a callable.
class FunctionBackend final : public Backend {
 public:
  using Responder = std::function<ChatResponse(const ChatRequest&)>;
  explicit FunctionBackend(Responder fn, bool vision = true) : fn_(std::move(fn)), vision_(vision) {}
  ChatResponse send(const ChatRequest& request) override { return fn_(request); }
  bool supports_images() const override { return vision_; }

 private:
  Responder fn_;
  bool vision_;
};

struct HttpResult {
  int status = 0;
  std::string body;
};

/// One HTTP POST. Throws TransportError when no HTTP response arrives.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResult post(const std::string& url, const std::map<std::string, std::string>& headers,
                          const std::string& body) = 0;
};

std::shared_ptr<HttpTransport> make_http_transport(std::chrono::seconds timeout);

/// OpenAI-compatible chat-completions client.
class OpenAiBackend final : public Backend {
 public:
  struct Options {
    std::string base_url;  // e.g. http://localhost:8000/v1
    std::string api_key;   // empty: no Authorization header
    bool vision = false;
  };

  OpenAiBackend(Options options, std::shared_ptr<HttpTransport> transport);

  ChatResponse send(const ChatRequest& request) override;
  bool supports_images() const override { return options_.vision; }

  static nlohmann::json request_body(const ChatRequest& request);

 private:
  Options options_;
  std::shared_ptr<HttpTransport> transport_;
};

// ---------------------------------------------------------------------------
// Recording and retry

struct GatewayRecord {
  std::string fingerprint;
  std::string tag;
  std::string model_id;
  nlohmann::json prompt;  // messages_to_json of the request
  std::optional<std::string> response;
  std::string finish_reason;
  Usage usage;
  std::int64_t latency_ms = 0;
  int transport_attempts = 0;
  std::optional<std::string> error;
};

nlohmann::json to_json(const GatewayRecord& r);
GatewayRecord gateway_record_from_json(const nlohmann::json& j);

/// Append-only, thread-safe log of gateway calls.
class AuditRecorder {
 public:
  void append(GatewayRecord record);
  std::vector<GatewayRecord> records() const;
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::vector<GatewayRecord> records_;
};

struct RetryPolicy {
  /// Backoff before retry k (0-based). Its size is the number of retries.
  std::vector<std::chrono::milliseconds> backoff{std::chrono::milliseconds(500), std::chrono::milliseconds(2000)};
};

/// Routes requests to one backend, retrying transport failures and recording
/// every call (successful or not) exactly once.
class Gateway {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  Gateway(std::shared_ptr<Backend> backend, std::shared_ptr<AuditRecorder> recorder, RetryPolicy policy = {},
          Sleeper sleeper = {});

  ChatResponse complete(const ChatRequest& request);

  std::size_t calls() const noexcept { return calls_.load(); }
  const std::shared_ptr<AuditRecorder>& recorder() const noexcept { return recorder_; }

 private:
  std::shared_ptr<Backend> backend_;
  std::shared_ptr<AuditRecorder> recorder_;
  RetryPolicy policy_;
  Sleeper sleeper_;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace tableqa
