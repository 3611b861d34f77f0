#include <algorithm>
#include <fstream>
#include <set>

#include "tableqa/errors.hpp"
#include "tableqa/pipeline.hpp"
#include "tableqa/text.hpp"

namespace tableqa {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

BackendConfig backend_from_json(const json& j, const fs::path& base, const std::string& stage) {
  BackendConfig b;
  try {
    b.kind = j.value("kind", b.kind);
    b.endpoint = j.value("endpoint", b.endpoint);
    b.model_id = j.value("model_id", b.model_id);
    b.temperature = j.value("temperature", b.temperature);
    b.max_output_tokens = j.value("max_output_tokens", b.max_output_tokens);
    b.api_key_env = j.value("api_key_env", b.api_key_env);
    b.vision = j.value("vision", b.vision);
    b.timeout_s = j.value("timeout_s", b.timeout_s);
    b.mapping = resolve(base, j.value("mapping", std::string{}));
    b.strict = j.value("strict", b.strict);
  } catch (const json::exception& e) {
    throw ConfigError("backend '" + stage + "': " + e.what());
  }
  return b;
}

json backend_to_json(const BackendConfig& b) {
  json j{{"kind", b.kind},
         {"model_id", b.model_id},
         {"temperature", b.temperature},
         {"max_output_tokens", b.max_output_tokens},
         {"vision", b.vision}};
  if (b.kind == "scripted") {
    j["mapping"] = b.mapping.string();
    j["strict"] = b.strict;
  } else {
    j["endpoint"] = b.endpoint;
    j["api_key_env"] = b.api_key_env;
    j["timeout_s"] = b.timeout_s;
  }
  return j;
}

void validate_backend(const BackendConfig& b, const std::string& stage) {
  if (b.kind != "openai" && b.kind != "scripted") throw ConfigError("backend '" + stage + "': unknown kind " + b.kind);
  if (b.model_id.empty()) throw ConfigError("backend '" + stage + "': model_id is required");
  if (b.temperature < 0.0 || b.temperature > 1.0) throw ConfigError("backend '" + stage + "': temperature outside [0,1]");
  if (b.max_output_tokens < 1) throw ConfigError("backend '" + stage + "': max_output_tokens must be positive");
  if (b.kind == "openai" && b.endpoint.empty()) throw ConfigError("backend '" + stage + "': endpoint is required");
  if (b.kind == "scripted" && b.mapping.empty()) throw ConfigError("backend '" + stage + "': mapping is required");
}

}  // namespace

void RunConfig::validate() const {
  validate_backend(understanding, "understanding");
  validate_backend(reasoning, "reasoning");
  validate_backend(codegen, "codegen");
  validate_backend(explanation, "explanation");
  if (max_tries < 1) throw ConfigError("max_tries must be at least 1");
  if (extraction_max_tries < 1 || extraction_max_tries > 2) throw ConfigError("extraction_max_tries must be 1 or 2");
  if (!(fuzzy_threshold > 0.0 && fuzzy_threshold <= 1.0)) throw ConfigError("fuzzy_threshold must be in (0,1]");
  if (!(anls_threshold > 0.0 && anls_threshold <= 1.0)) throw ConfigError("anls_threshold must be in (0,1]");
  if (exec_timeout_ms < 100) throw ConfigError("exec_timeout_ms must be at least 100");
  if (parallelism < 1) throw ConfigError("parallelism must be at least 1");
  if (executor_command.empty() && executor_script.empty()) {
    throw ConfigError("either executor_command or executor_script must be set");
  }
  if (output_dir.empty()) throw ConfigError("output_dir must be set");
}

RunConfig config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  const json backends = j.value("backends", json::object());
  if (!backends.is_object()) throw ConfigError("'backends' must be an object");
  const json defaults = backends.value("default", json::object());
  auto stage = [&](const char* name) {
    json merged = defaults;
    if (backends.contains(name)) merged.update(backends.at(name));
    return backend_from_json(merged, base_dir, name);
  };
  c.understanding = stage("understanding");
  c.reasoning = stage("reasoning");
  c.codegen = stage("codegen");
  c.explanation = stage("explanation");
  try {
    c.max_tries = j.value("max_tries", c.max_tries);
    c.extraction_max_tries = j.value("extraction_max_tries", c.extraction_max_tries);
    c.fuzzy_threshold = j.value("fuzzy_threshold", c.fuzzy_threshold);
    c.anls_threshold = j.value("anls_threshold", c.anls_threshold);
    c.exec_timeout_ms = j.value("exec_timeout_ms", c.exec_timeout_ms);
    c.parallelism = j.value("parallelism", c.parallelism);
    c.executor_command = j.value("executor_command", c.executor_command);
    c.executor_script = resolve(base_dir, j.value("executor_script", std::string{}));
    c.output_dir = resolve(base_dir, j.value("output_dir", c.output_dir.string()));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j, fs::absolute(path).parent_path());
}

json result_snapshot(const RunConfig& c) {
  json j;
  j["backends"] = {{"understanding", backend_to_json(c.understanding)},
                   {"reasoning", backend_to_json(c.reasoning)},
                   {"codegen", backend_to_json(c.codegen)},
                   {"explanation", backend_to_json(c.explanation)}};
  j["max_tries"] = c.max_tries;
  j["extraction_max_tries"] = c.extraction_max_tries;
  j["fuzzy_threshold"] = c.fuzzy_threshold;
  j["anls_threshold"] = c.anls_threshold;
  j["exec_timeout_ms"] = c.exec_timeout_ms;
  j["executor_command"] = c.executor_command;
  j["executor_script"] = c.executor_script.string();
  j["helpers_version"] = helper_library().version;
  j["normalization"] = std::string(kNormalizationVersion);
  return j;
}

json to_json(const RunConfig& c) {
  json j = result_snapshot(c);
  j["parallelism"] = c.parallelism;
  j["output_dir"] = c.output_dir.string();
  return j;
}

// ---------------------------------------------------------------------------

json to_json(const QAInstance& q) {
  return {{"id", q.id},
          {"subset", q.subset},
          {"image_path", q.image_path.string()},
          {"question", q.question},
          {"answers", q.answers}};
}

QAInstance qa_instance_from_json(const json& j) {
  QAInstance q;
  q.id = j.at("id").get<std::string>();
  q.subset = j.value("subset", std::string("custom"));
  q.image_path = j.at("image_path").get<std::string>();
  q.question = j.at("question").get<std::string>();
  const auto& answers = j.at("answers");
  if (answers.is_string()) {
    q.answers = {answers.get<std::string>()};
  } else {
    q.answers = answers.get<std::vector<std::string>>();
  }
  return q;
}

std::vector<QAInstance> load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError(0, "cannot open " + path.string());
  const fs::path base = fs::absolute(path).parent_path();
  std::vector<QAInstance> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    QAInstance q;
    try {
      q = qa_instance_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw ManifestError(line_no, e.what());
    }
    if (q.id.empty()) throw ManifestError(line_no, "empty id");
    if (!ids.insert(q.id).second) throw ManifestError(line_no, "duplicate id " + q.id);
    if (std::find(kSubsets.begin(), kSubsets.end(), q.subset) == kSubsets.end()) {
      throw ManifestError(line_no, "unknown subset " + q.subset);
    }
    if (trim(q.question).empty()) throw ManifestError(line_no, "empty question");
    if (q.answers.empty()) throw ManifestError(line_no, "answers must be non-empty");
    if (q.image_path.is_relative()) q.image_path = (base / q.image_path).lexically_normal();
    if (!fs::exists(q.image_path)) throw ManifestError(line_no, "image not found: " + q.image_path.string());
    out.push_back(std::move(q));
  }
  if (out.empty()) throw ManifestError(line_no, "manifest has no instances");
  return out;
}

}  // namespace tableqa
