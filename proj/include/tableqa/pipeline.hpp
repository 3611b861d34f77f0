#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tableqa/codegen.hpp"
#include "tableqa/executor.hpp"
#include "tableqa/explanation.hpp"
#include "tableqa/metrics.hpp"
#include "tableqa/model_gateway.hpp"
#include "tableqa/reasoning.hpp"
#include "tableqa/understanding.hpp"

namespace tableqa {

// ---------------------------------------------------------------------------
// Configuration

struct BackendConfig {
  std::string kind = "openai";  // "openai" or "scripted"
  std::string endpoint;         // base URL, e.g. http://localhost:8000/v1
  std::string model_id;
  double temperature = 0.0;
  int max_output_tokens = 2048;
  std::string api_key_env = "TABLEQA_API_KEY";
  bool vision = false;
  int timeout_s = 120;
  std::filesystem::path mapping;  // scripted: fingerprint -> response JSON
  bool strict = true;             // scripted: unknown fingerprints are errors

  StageModel stage_model() const { return {model_id, temperature, max_output_tokens}; }
};

struct RunConfig {
  BackendConfig understanding;
  BackendConfig reasoning;
  BackendConfig codegen;
  BackendConfig explanation;
  int max_tries = 3;
  int extraction_max_tries = 2;
  double fuzzy_threshold = 0.75;
  double anls_threshold = 0.5;
  std::int64_t exec_timeout_ms = 10000;
  int parallelism = 4;
  std::string executor_command;
  std::filesystem::path executor_script;  // scripted outcomes instead of a worker process
  std::filesystem::path output_dir = "tableqa-out";

  /// Throws ConfigError.
  void validate() const;
};

/// Reads a JSON config. "backends" may hold a "default" entry whose fields
/// every stage inherits. Relative paths resolve against base_dir.
RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const RunConfig& config);
/// Everything that can influence answers or scores; omits parallelism and
/// output_dir so runs differing only in those produce identical records.
nlohmann::json result_snapshot(const RunConfig& config);

// ---------------------------------------------------------------------------
// Dataset

inline const std::vector<std::string> kSubsets = {"VWTQ", "VWTQ-Syn", "VTabFact", "FinTabNetQA", "custom"};

struct QAInstance {
  std::string id;
  std::string subset = "custom";
  std::filesystem::path image_path;
  std::string question;
  std::vector<std::string> answers;
};

nlohmann::json to_json(const QAInstance& q);
QAInstance qa_instance_from_json(const nlohmann::json& j);

/// JSON Lines, one instance per line; blank lines are ignored. Relative image
/// paths resolve against the manifest's directory. Throws ManifestError.
std::vector<QAInstance> load_manifest(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Audit bundle

enum class StageStatus { ok, failed, skipped };
std::string_view to_string(StageStatus s);

struct UnderstandingRecord {
  StageStatus status = StageStatus::skipped;
  std::optional<std::string> error;
  std::optional<ExtractionPlan> plan;
  std::optional<std::string> csv_text;
  std::optional<TableDocument> table;
  int attempts = 0;
  std::vector<std::string> raw_responses;
  std::vector<std::string> parse_errors;
};

struct ReasoningRecord {
  StageStatus status = StageStatus::skipped;
  std::optional<std::string> error;
  std::optional<ReasoningTrace> trace;
};

struct CodegenRecord {
  StageStatus status = StageStatus::skipped;
  std::optional<std::string> error;
  std::optional<LoopResult> loop;
};

struct ExplanationRecord {
  StageStatus status = StageStatus::skipped;
  std::optional<std::string> error;
  std::optional<Explanation> explanation;
};

struct AuditBundle {
  QAInstance instance;
  nlohmann::json config_snapshot = nlohmann::json::object();
  UnderstandingRecord understanding;
  ReasoningRecord reasoning;
  CodegenRecord codegen;
  ExplanationRecord explanation;
  std::optional<std::string> answer;
  ScoredInstance scores;
  std::vector<GatewayRecord> gateway_log;
  std::string started_at;
  std::string finished_at;
};

inline constexpr std::string_view kBundleSchema = "tableqa.audit-bundle/1";

nlohmann::json to_json(const AuditBundle& b);
/// Throws BundleCorrupt.
AuditBundle bundle_from_json(const nlohmann::json& j);
AuditBundle load_bundle(const std::filesystem::path& path);
std::string dump_bundle(const AuditBundle& b);

/// File name used for an instance's bundle.
std::string bundle_file_name(const std::string& instance_id);

// ---------------------------------------------------------------------------
// Execution

struct Backends {
  std::shared_ptr<Backend> understanding;
  std::shared_ptr<Backend> reasoning;
  std::shared_ptr<Backend> codegen;
  std::shared_ptr<Backend> explanation;
};

/// Builds backends from config; credentials come from each api_key_env.
Backends make_backends(const RunConfig& config);
/// Scripted executor when executor_script is set, otherwise a worker process.
ExecutorFactory make_executor_factory(const RunConfig& config);

class Pipeline {
 public:
  Pipeline(RunConfig config, Backends backends, ExecutorFactory executors, RetryPolicy retry = {},
           Gateway::Sleeper sleeper = {});

  /// Runs the five stages on one instance and writes output_dir/<id>.json.
  /// Stage failures are recorded in the bundle, never thrown.
  AuditBundle run_one(const QAInstance& instance, Executor& executor) const;
  AuditBundle run_one(const QAInstance& instance) const;

  /// Runs every instance on a pool of `parallelism` workers, each with its own
  /// executor session; writes all bundles, report.json and report.txt.
  EvalReport run_eval(const std::vector<QAInstance>& instances) const;

  const RunConfig& config() const noexcept { return config_; }

 private:
  RunConfig config_;
  Backends backends_;
  ExecutorFactory executors_;
  RetryPolicy retry_;
  Gateway::Sleeper sleeper_;
};

// ---------------------------------------------------------------------------
// Replay and inspection

struct ReplayCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Re-derives the table, re-runs the successful code and re-scores the answer.
std::vector<ReplayCheck> replay(const AuditBundle& bundle, Executor& executor);

/// Sections: instance, config, understanding, table, reasoning, codegen, code,
/// explanation, answer, scores, gateway_log. Throws Error for unknown names.
std::string inspect(const AuditBundle& bundle, const std::string& section);

}  // namespace tableqa
