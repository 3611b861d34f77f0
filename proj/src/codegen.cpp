#include "tableqa/codegen.hpp"

#include <chrono>
#include <regex>

#include "tableqa/errors.hpp"
#include "tableqa/text.hpp"

namespace tableqa {

const AttemptRecord* LoopResult::success() const {
  for (const auto& a : attempts) {
    if (a.outcome.ok()) return &a;
  }
  return nullptr;
}

bool defines_entry_point(std::string_view source) {
  static const std::regex kDef(R"((^|\n)[ \t]*def[ \t]+parse_dataframe[ \t]*\()");
  return std::regex_search(source.begin(), source.end(), kDef);
}

namespace {

std::string column_listing(const TableDocument& table) {
  std::string out;
  for (std::size_t i = 0; i < table.columns.size(); ++i) {
    out += "- " + table.columns[i] + " (" + std::string(to_string(column_kind(table, i))) + ")\n";
  }
  return out;
}

std::string steps_listing(const ReasoningTrace& trace) {
  std::string out;
  for (std::size_t i = 0; i < trace.steps.size(); ++i) out += std::to_string(i + 1) + ". " + trace.steps[i] + "\n";
  if (!trace.columns_used.empty()) {
    out += "Columns to use:";
    for (std::size_t i = 0; i < trace.columns_used.size(); ++i) out += (i ? ", " : " ") + trace.columns_used[i];
    out += "\n";
  }
  if (!trace.filters.empty()) {
    out += "Filters:";
    for (std::size_t i = 0; i < trace.filters.size(); ++i) {
      out += (i ? "; " : " ") + trace.filters[i].column + " = " + trace.filters[i].value;
    }
    out += "\n";
  }
  return out;
}

}  // namespace

std::string CodeGenLoop::prompt(const TableDocument& table, const std::string& question, const ReasoningTrace& trace,
                                const AttemptRecord* prior) {
  std::map<std::string, std::string> bindings{
      {"table_preview", preview(table, 5)},
      {"columns", column_listing(table)},
      {"question", question},
      {"steps", steps_listing(trace)},
      {"helpers", helper_library().prompt_listing()},
  };
  if (!prior) return render(builtin_template(TemplateId::codegen), bindings);

  const auto& err = prior->outcome.error;
  bindings["previous_code"] = prior->artifact.source;
  bindings["error_message"] =
      err ? std::string(to_string(err->category)) + ": " + err->message : std::string("the code returned no result");
  bindings["error_trace"] = err ? tail_excerpt(err->trace_excerpt, kMaxTraceExcerpt) : std::string();
  return render(builtin_template(TemplateId::codegen_retry), bindings);
}

CodeArtifact CodeGenLoop::draft(const TableDocument& table, const std::string& question, const ReasoningTrace& trace,
                                const AttemptRecord* prior) const {
  ChatRequest req;
  req.model_id = model_.model_id;
  req.temperature = model_.temperature;
  req.max_output_tokens = model_.max_output_tokens;
  req.tag = std::string(to_string(prior ? TemplateId::codegen_retry : TemplateId::codegen));
  req.messages.push_back({Role::user, {prompt(table, question, trace, prior)}});

  CodeArtifact artifact;
  artifact.attempt = prior ? prior->artifact.attempt + 1 : 1;
  artifact.prompt_fingerprint = fingerprint(req);
  artifact.helpers_version = helper_library().version;
  artifact.source = strip_code_fences(gateway_.complete(req).text);
  return artifact;
}

CodeArtifact CodeGenLoop::generate_code(const TableDocument& table, const std::string& question,
                                        const ReasoningTrace& trace, const AttemptRecord* prior) const {
  CodeArtifact artifact = draft(table, question, trace, prior);
  if (!defines_entry_point(artifact.source)) {
    throw MissingEntryPoint("generated code does not define " + std::string(kEntryPoint) + "(df)");
  }
  return artifact;
}

LoopResult CodeGenLoop::run_loop(const TableDocument& table, const std::string& question, const ReasoningTrace& trace,
                                 Executor& executor, int max_tries, std::int64_t timeout_ms) const {
  if (max_tries < 1) throw Error("max_tries must be at least 1");
  const std::string table_csv = serialize_csv(table);
  LoopResult result;
  for (int attempt = 1; attempt <= max_tries; ++attempt) {
    const AttemptRecord* prior = result.attempts.empty() ? nullptr : &result.attempts.back();
    AttemptRecord record;
    record.artifact = draft(table, question, trace, prior);
    if (!defines_entry_point(record.artifact.source)) {
      // Not executed, but fed back to the model like any other script error.
      record.outcome = ExecutionOutcome::failure(ExecStatus::script_error, ErrorCategory::syntax,
                                                 "generated code does not define " + std::string(kEntryPoint) + "(df)");
      result.attempts.push_back(std::move(record));
      continue;
    }
    record.outcome = executor.execute(record.artifact.source, table_csv, timeout_ms, record.artifact.helpers_version);
    const bool ok = record.outcome.ok();
    result.attempts.push_back(std::move(record));
    if (ok) {
      result.answer = result.attempts.back().outcome.result;
      return result;
    }
  }
  result.exhausted = true;
  return result;
}

}  // namespace tableqa
