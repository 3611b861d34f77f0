#include "tableqa/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "tableqa/errors.hpp"
#include "tableqa/text.hpp"

namespace tableqa {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::shared_ptr<Backend> make_backend(const BackendConfig& b) {
  if (b.kind == "scripted") {
    auto backend = ScriptedBackend::from_file(b.mapping, b.strict);
    return backend;
  }
  OpenAiBackend::Options options;
  options.base_url = b.endpoint;
  options.vision = b.vision;
  if (!b.api_key_env.empty()) {
    if (const char* key = std::getenv(b.api_key_env.c_str())) options.api_key = key;
  }
  return std::make_shared<OpenAiBackend>(options, make_http_transport(std::chrono::seconds(b.timeout_s)));
}

std::string utc_now() {
  auto now = std::chrono::system_clock::now();
  auto secs = std::chrono::system_clock::to_time_t(now);
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms << 'Z';
  return os.str();
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    if (!out) throw Error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

Backends make_backends(const RunConfig& config) {
  return {make_backend(config.understanding), make_backend(config.reasoning), make_backend(config.codegen),
          make_backend(config.explanation)};
}

ExecutorFactory make_executor_factory(const RunConfig& config) {
  if (!config.executor_script.empty()) {
    // Validate eagerly so a bad path is a configuration error, not a stage failure.
    FakeExecutor::from_file(config.executor_script);
    return [path = config.executor_script]() -> std::unique_ptr<Executor> { return FakeExecutor::from_file(path); };
  }
  return [cmd = config.executor_command]() -> std::unique_ptr<Executor> { return std::make_unique<ProcessExecutor>(cmd); };
}

Pipeline::Pipeline(RunConfig config, Backends backends, ExecutorFactory executors, RetryPolicy retry,
                   Gateway::Sleeper sleeper)
    : config_(std::move(config)),
      backends_(std::move(backends)),
      executors_(std::move(executors)),
      retry_(std::move(retry)),
      sleeper_(std::move(sleeper)) {}

AuditBundle Pipeline::run_one(const QAInstance& instance) const {
  auto executor = executors_();
  return run_one(instance, *executor);
}

AuditBundle Pipeline::run_one(const QAInstance& instance, Executor& executor) const {
  AuditBundle bundle;
  bundle.instance = instance;
  bundle.config_snapshot = result_snapshot(config_);
  bundle.started_at = utc_now();

  auto recorder = std::make_shared<AuditRecorder>();
  Gateway understanding_gw(backends_.understanding, recorder, retry_, sleeper_);
  Gateway reasoning_gw(backends_.reasoning, recorder, retry_, sleeper_);
  Gateway codegen_gw(backends_.codegen, recorder, retry_, sleeper_);
  Gateway explanation_gw(backends_.explanation, recorder, retry_, sleeper_);

  // 1. table understanding
  try {
    ImageRef image = load_image(instance.image_path);
    TableUnderstanding stage(understanding_gw, config_.understanding.stage_model(), config_.extraction_max_tries);
    ExtractionPlan plan = stage.plan_extraction(image);
    bundle.understanding.plan = plan;
    try {
      UnderstandingResult result = stage.extract_table(image, plan);
      bundle.understanding.csv_text = result.csv_text;
      bundle.understanding.table = result.table;
      bundle.understanding.attempts = result.attempts;
      bundle.understanding.raw_responses = result.raw_responses;
      bundle.understanding.parse_errors = result.parse_errors;
      bundle.understanding.status = StageStatus::ok;
    } catch (const ExtractionFailed& e) {
      bundle.understanding.attempts = static_cast<int>(e.raw_responses().size());
      bundle.understanding.raw_responses = e.raw_responses();
      bundle.understanding.parse_errors = e.parse_errors();
      throw;
    }
  } catch (const std::exception& e) {
    bundle.understanding.status = StageStatus::failed;
    bundle.understanding.error = e.what();
  }

  // 2. reasoning
  if (bundle.understanding.status == StageStatus::ok) {
    try {
      ReasoningStage stage(reasoning_gw, config_.reasoning.stage_model());
      auto trace = stage.derive_reasoning(*bundle.understanding.table, instance.question);
      bundle.reasoning.trace = reconcile(std::move(trace), *bundle.understanding.table, config_.fuzzy_threshold);
      bundle.reasoning.status = StageStatus::ok;
    } catch (const std::exception& e) {
      bundle.reasoning.status = StageStatus::failed;
      bundle.reasoning.error = e.what();
    }
  }

  // 3 + 4. code generation and execution
  if (bundle.reasoning.status == StageStatus::ok) {
    try {
      CodeGenLoop loop(codegen_gw, config_.codegen.stage_model());
      bundle.codegen.loop = loop.run_loop(*bundle.understanding.table, instance.question, *bundle.reasoning.trace,
                                          executor, config_.max_tries, config_.exec_timeout_ms);
      if (bundle.codegen.loop->answer) {
        bundle.codegen.status = StageStatus::ok;
        bundle.answer = bundle.codegen.loop->answer;
      } else {
        bundle.codegen.status = StageStatus::failed;
        bundle.codegen.error = "no successful attempt in " + std::to_string(bundle.codegen.loop->attempts.size()) +
                               " tries";
      }
    } catch (const std::exception& e) {
      bundle.codegen.status = StageStatus::failed;
      bundle.codegen.error = e.what();
    }
  }

  // 5. explanation; its failure never affects the answer
  if (bundle.answer) {
    try {
      ExplanationStage stage(explanation_gw, config_.explanation.stage_model());
      bundle.explanation.explanation =
          stage.explain(bundle.codegen.loop->success()->artifact, *bundle.answer, instance.question);
      bundle.explanation.status = StageStatus::ok;
    } catch (const std::exception& e) {
      bundle.explanation.status = StageStatus::failed;
      bundle.explanation.error = e.what();
    }
  }

  bundle.scores = score(instance.id, bundle.answer, instance.answers, config_.anls_threshold);
  bundle.gateway_log = recorder->records();
  bundle.finished_at = utc_now();
  write_file(config_.output_dir / bundle_file_name(instance.id), dump_bundle(bundle));
  return bundle;
}

EvalReport Pipeline::run_eval(const std::vector<QAInstance>& instances) const {
  std::vector<ScoredInstance> scored(instances.size());
  std::atomic<std::size_t> next{0};
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(config_.parallelism),
                                                    std::max<std::size_t>(instances.size(), 1));
  std::mutex error_mutex;
  std::exception_ptr failure;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        try {
          auto executor = executors_();
          for (std::size_t i = next++; i < instances.size(); i = next++) {
            scored[i] = run_one(instances[i], *executor).scores;
          }
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);

  std::map<std::string, std::string> subset_of;
  for (const auto& q : instances) subset_of[q.id] = q.subset;
  EvalReport report = aggregate(scored, [&](const ScoredInstance& s) { return subset_of.at(s.instance_id); });
  report.config_snapshot = result_snapshot(config_);
  write_file(config_.output_dir / "report.json", to_json(report).dump(2) + "\n");
  write_file(config_.output_dir / "report.txt", format_report_table(report));
  return report;
}

// ---------------------------------------------------------------------------

std::vector<ReplayCheck> replay(const AuditBundle& bundle, Executor& executor) {
  std::vector<ReplayCheck> checks;

  std::optional<TableDocument> table;
  if (bundle.understanding.csv_text && bundle.understanding.table) {
    try {
      table = parse_csv(*bundle.understanding.csv_text);
      bool same = serialize_csv(*table) == serialize_csv(*bundle.understanding.table);
      checks.push_back({"table", same, same ? "csv_text reproduces the recorded table" : "csv_text parses to a different table"});
    } catch (const std::exception& e) {
      checks.push_back({"table", false, std::string("recorded csv_text does not parse: ") + e.what()});
      table.reset();
    }
  } else {
    checks.push_back({"table", !bundle.answer, "no table recorded"});
  }

  const AttemptRecord* success = bundle.codegen.loop ? bundle.codegen.loop->success() : nullptr;
  if (!success) {
    checks.push_back({"answer", !bundle.answer,
                      bundle.answer ? "answer recorded without a successful attempt" : "no successful attempt; answer absent"});
  } else {
    const auto& artifact = success->artifact;
    bool helpers_ok = artifact.helpers_version == helper_library().version;
    checks.push_back({"helpers_version", helpers_ok,
                      helpers_ok ? "matches " + artifact.helpers_version
                                 : "recorded " + artifact.helpers_version + ", current " + helper_library().version});
    if (table) {
      std::int64_t timeout = 10000;
      if (bundle.config_snapshot.contains("exec_timeout_ms")) timeout = bundle.config_snapshot["exec_timeout_ms"].get<std::int64_t>();
      auto outcome = executor.execute(artifact.source, serialize_csv(*table), timeout, artifact.helpers_version);
      if (!outcome.ok()) {
        checks.push_back({"answer", false,
                          "re-execution failed: " + (outcome.error ? outcome.error->message : std::string("no result"))});
      } else {
        bool same = bundle.answer && *outcome.result == *bundle.answer && success->outcome.result == bundle.answer;
        checks.push_back({"answer", same,
                          "re-executed result '" + *outcome.result + "', recorded '" + bundle.answer.value_or("<absent>") + "'"});
      }
    } else {
      checks.push_back({"answer", false, "cannot re-execute without a table"});
    }
  }

  double threshold = 0.5;
  if (bundle.config_snapshot.contains("anls_threshold")) threshold = bundle.config_snapshot["anls_threshold"].get<double>();
  ScoredInstance rescored = score(bundle.instance.id, bundle.answer, bundle.instance.answers, threshold);
  bool scores_ok = rescored == bundle.scores;
  checks.push_back({"scores", scores_ok,
                    scores_ok ? "recorded scores reproduce" : "recorded scores differ from a fresh scoring of the answer"});
  return checks;
}

std::string inspect(const AuditBundle& bundle, const std::string& section) {
  const json j = to_json(bundle);
  const auto& stages = j.at("stages");
  if (section == "instance") return j.at("instance").dump(2) + "\n";
  if (section == "config") return j.at("config").dump(2) + "\n";
  if (section == "understanding" || section == "reasoning" || section == "codegen" || section == "explanation") {
    return stages.at(section).dump(2) + "\n";
  }
  if (section == "table") {
    if (!bundle.understanding.table) return "(no table)\n";
    return serialize_csv(*bundle.understanding.table);
  }
  if (section == "code") {
    const AttemptRecord* s = bundle.codegen.loop ? bundle.codegen.loop->success() : nullptr;
    if (s) return s->artifact.source + "\n";
    if (bundle.codegen.loop && !bundle.codegen.loop->attempts.empty()) {
      return bundle.codegen.loop->attempts.back().artifact.source + "\n";
    }
    return "(no code)\n";
  }
  if (section == "answer") return bundle.answer.value_or("(no answer)") + "\n";
  if (section == "scores") return j.at("scores").dump(2) + "\n";
  if (section == "gateway_log") return j.at("gateway_log").dump(2) + "\n";
  throw Error("unknown section '" + section +
              "' (expected instance, config, understanding, table, reasoning, codegen, code, explanation, answer, "
              "scores or gateway_log)");
}

}  // namespace tableqa
