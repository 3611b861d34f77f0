#include "tableqa/model_gateway.hpp"

#include <fstream>
#include <thread>

#include "httplib.h"
#include "tableqa/errors.hpp"
#include "tableqa/text.hpp"

namespace tableqa {

using nlohmann::json;

bool ChatRequest::has_images() const {
  for (const auto& m : messages) {
    for (const auto& p : m.parts) {
      if (std::holds_alternative<ImageRef>(p)) return true;
    }
  }
  return false;
}

std::string_view to_string(FinishReason r) {
  switch (r) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "error";
}

FinishReason finish_reason_from_string(std::string_view s) {
  if (s == "stop") return FinishReason::stop;
  if (s == "length") return FinishReason::length;
  return FinishReason::error;
}

namespace {

std::string_view role_name(Role r) { return r == Role::system ? "system" : "user"; }

std::string normalize_whitespace(std::string_view s) {
  std::string out;
  bool space = false;
  for (char c : trim(s)) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      space = true;
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    out.push_back(c);
  }
  return out;
}

}  // namespace

std::string fingerprint(const ChatRequest& request) {
  json canon;
  canon["model_id"] = request.model_id;
  canon["messages"] = json::array();
  for (const auto& m : request.messages) {
    json parts = json::array();
    for (const auto& p : m.parts) {
      if (const auto* text = std::get_if<std::string>(&p)) {
        parts.push_back({{"text", normalize_whitespace(*text)}});
      } else {
        const auto& img = std::get<ImageRef>(p);
        parts.push_back({{"image_sha256", sha256_hex(std::span(img.bytes))}, {"media_type", img.media_type}});
      }
    }
    canon["messages"].push_back({{"role", role_name(m.role)}, {"parts", std::move(parts)}});
  }
  return sha256_hex(canon.dump());
}

json messages_to_json(const std::vector<ChatMessage>& messages) {
  json out = json::array();
  for (const auto& m : messages) {
    json parts = json::array();
    for (const auto& p : m.parts) {
      if (const auto* text = std::get_if<std::string>(&p)) {
        parts.push_back({{"type", "text"}, {"text", *text}});
      } else {
        const auto& img = std::get<ImageRef>(p);
        parts.push_back({{"type", "image"},
                         {"media_type", img.media_type},
                         {"sha256", sha256_hex(std::span(img.bytes))},
                         {"bytes", img.bytes.size()}});
      }
    }
    out.push_back({{"role", role_name(m.role)}, {"parts", std::move(parts)}});
  }
  return out;
}

// ---------------------------------------------------------------------------

ScriptedBackend::ScriptedBackend(std::map<std::string, std::string> responses, bool strict, std::string fallback,
                                 bool vision)
    : responses_(std::move(responses)), strict_(strict), fallback_(std::move(fallback)), vision_(vision) {}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path, bool strict) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scripted mapping " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("scripted mapping " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("scripted mapping " + path.string() + " must be a JSON object");
  std::map<std::string, std::string> responses;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_string()) throw ConfigError("scripted mapping entry " + key + " is not a string");
    responses.emplace(key, value.get<std::string>());
  }
  return std::make_shared<ScriptedBackend>(std::move(responses), strict);
}

ChatResponse ScriptedBackend::send(const ChatRequest& request) {
  const std::string fp = fingerprint(request);
  auto it = responses_.find(fp);
  ChatResponse response;
  if (it != responses_.end()) {
    response.text = it->second;
  } else if (strict_) {
    throw UnmappedPrompt(fp);
  } else {
    response.text = fallback_;
  }
  response.finish_reason = FinishReason::stop;
  return response;
}

// ---------------------------------------------------------------------------

namespace {

class HttplibTransport final : public HttpTransport {
 public:
  explicit HttplibTransport(std::chrono::seconds timeout) : timeout_(timeout) {}

  HttpResult post(const std::string& url, const std::map<std::string, std::string>& headers,
                  const std::string& body) override {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw TransportError("endpoint URL lacks a scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    std::string origin = url.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(origin);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = client.Post(path, h, body, "application/json");
    if (!res) throw TransportError("POST " + url + " failed: " + httplib::to_string(res.error()));
    return {res->status, res->body};
  }

 private:
  std::chrono::seconds timeout_;
};

}  // namespace

std::shared_ptr<HttpTransport> make_http_transport(std::chrono::seconds timeout) {
  return std::make_shared<HttplibTransport>(timeout);
}

OpenAiBackend::OpenAiBackend(Options options, std::shared_ptr<HttpTransport> transport)
    : options_(std::move(options)), transport_(std::move(transport)) {
  while (!options_.base_url.empty() && options_.base_url.back() == '/') options_.base_url.pop_back();
}

json OpenAiBackend::request_body(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    bool text_only = std::all_of(m.parts.begin(), m.parts.end(),
                                 [](const MessagePart& p) { return std::holds_alternative<std::string>(p); });
    json msg{{"role", role_name(m.role)}};
    if (text_only) {
      std::string content;
      for (const auto& p : m.parts) content += std::get<std::string>(p);
      msg["content"] = content;
    } else {
      json content = json::array();
      for (const auto& p : m.parts) {
        if (const auto* text = std::get_if<std::string>(&p)) {
          content.push_back({{"type", "text"}, {"text", *text}});
        } else {
          const auto& img = std::get<ImageRef>(p);
          content.push_back(
              {{"type", "image_url"},
               {"image_url", {{"url", "data:" + img.media_type + ";base64," + base64_encode(std::span(img.bytes))}}}});
        }
      }
      msg["content"] = std::move(content);
    }
    messages.push_back(std::move(msg));
  }
  return {{"model", request.model_id},
          {"messages", std::move(messages)},
          {"temperature", request.temperature},
          {"max_tokens", request.max_output_tokens},
          {"stream", false}};
}

ChatResponse OpenAiBackend::send(const ChatRequest& request) {
  std::map<std::string, std::string> headers;
  if (!options_.api_key.empty()) headers["Authorization"] = "Bearer " + options_.api_key;
  HttpResult result = transport_->post(options_.base_url + "/chat/completions", headers, request_body(request).dump());

  // Rate limiting and server faults are transient; other non-2xx codes are refusals.
  if (result.status == 429 || result.status >= 500) {
    throw TransportError("HTTP " + std::to_string(result.status) + ": " + tail_excerpt(result.body, 500));
  }
  if (result.status < 200 || result.status >= 300) throw BackendRefusal(result.status, tail_excerpt(result.body, 500));

  ChatResponse response;
  try {
    json j = json::parse(result.body);
    const auto& choice = j.at("choices").at(0);
    const auto& content = choice.at("message").at("content");
    response.text = content.is_null() ? "" : content.get<std::string>();
    auto reason = choice.value("finish_reason", json("stop"));
    response.finish_reason = reason.is_string() ? finish_reason_from_string(reason.get<std::string>()) : FinishReason::stop;
    if (j.contains("usage") && j["usage"].is_object()) {
      response.usage.input_tokens = j["usage"].value("prompt_tokens", 0);
      response.usage.output_tokens = j["usage"].value("completion_tokens", 0);
    }
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed chat-completions response: ") + e.what());
  }
  return response;
}

// ---------------------------------------------------------------------------

json to_json(const GatewayRecord& r) {
  return {{"fingerprint", r.fingerprint},
          {"tag", r.tag},
          {"model_id", r.model_id},
          {"prompt", r.prompt},
          {"response", r.response ? json(*r.response) : json(nullptr)},
          {"finish_reason", r.finish_reason},
          {"usage", {{"input_tokens", r.usage.input_tokens}, {"output_tokens", r.usage.output_tokens}}},
          {"latency_ms", r.latency_ms},
          {"transport_attempts", r.transport_attempts},
          {"error", r.error ? json(*r.error) : json(nullptr)}};
}

GatewayRecord gateway_record_from_json(const json& j) {
  GatewayRecord r;
  r.fingerprint = j.at("fingerprint").get<std::string>();
  r.tag = j.at("tag").get<std::string>();
  r.model_id = j.at("model_id").get<std::string>();
  r.prompt = j.at("prompt");
  if (!j.at("response").is_null()) r.response = j.at("response").get<std::string>();
  r.finish_reason = j.at("finish_reason").get<std::string>();
  r.usage.input_tokens = j.at("usage").at("input_tokens").get<int>();
  r.usage.output_tokens = j.at("usage").at("output_tokens").get<int>();
  r.latency_ms = j.at("latency_ms").get<std::int64_t>();
  r.transport_attempts = j.at("transport_attempts").get<int>();
  if (!j.at("error").is_null()) r.error = j.at("error").get<std::string>();
  return r;
}

void AuditRecorder::append(GatewayRecord record) {
  std::lock_guard lock(mutex_);
  records_.push_back(std::move(record));
}

std::vector<GatewayRecord> AuditRecorder::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::size_t AuditRecorder::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

Gateway::Gateway(std::shared_ptr<Backend> backend, std::shared_ptr<AuditRecorder> recorder, RetryPolicy policy,
                 Sleeper sleeper)
    : backend_(std::move(backend)),
      recorder_(recorder ? std::move(recorder) : std::make_shared<AuditRecorder>()),
      policy_(std::move(policy)),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })) {}

ChatResponse Gateway::complete(const ChatRequest& request) {
  ++calls_;
  GatewayRecord record;
  record.fingerprint = fingerprint(request);
  record.tag = request.tag;
  record.model_id = request.model_id;
  record.prompt = messages_to_json(request.messages);
  const auto started = std::chrono::steady_clock::now();
  auto finish = [&](std::optional<std::string> error) {
    record.latency_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count();
    record.error = std::move(error);
    recorder_->append(record);
  };

  try {
    if (request.messages.empty()) throw InvalidRequest("chat request has no messages");
    if (request.has_images() && !backend_->supports_images()) {
      throw InvalidRequest("model " + request.model_id + " is not vision-capable but the request carries an image");
    }
    ChatResponse response;
    for (std::size_t attempt = 0;; ++attempt) {
      record.transport_attempts = static_cast<int>(attempt) + 1;
      try {
        response = backend_->send(request);
        break;
      } catch (const TransportError&) {
        if (attempt >= policy_.backoff.size()) throw;
        sleeper_(policy_.backoff[attempt]);
      }
    }
    response.latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
    record.response = response.text;
    record.finish_reason = std::string(to_string(response.finish_reason));
    record.usage = response.usage;
    if (response.finish_reason == FinishReason::stop && trim(response.text).empty()) {
      throw EmptyCompletion("model " + request.model_id + " stopped with an empty completion");
    }
    finish(std::nullopt);
    return response;
  } catch (const std::exception& e) {
    if (record.finish_reason.empty()) record.finish_reason = "error";
    finish(std::string(e.what()));
    throw;
  }
}

}  // namespace tableqa
