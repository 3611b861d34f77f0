#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tableqa/executor.hpp"
#include "tableqa/model_gateway.hpp"
#include "tableqa/reasoning.hpp"
#include "tableqa/table_model.hpp"
#include "tableqa/understanding.hpp"

namespace tableqa {

inline constexpr int kDefaultMaxTries = 3;

struct HelperDefinition {
  std::string name;
  std::string signature;
  std::string doc;
  std::string source;  // Python
};

struct HelperLibrary {
  std::string version;  // sha256 over every definition
  std::vector<HelperDefinition> definitions;

  /// Signatures and docs as they appear in the code-generation prompt.
  std::string prompt_listing() const;
  /// Complete Python module the executor preloads.
  std::string python_module() const;
};

/// The fixed helper stock shared by prompts and the executor.
const HelperLibrary& helper_library();

struct CodeArtifact {
  int attempt = 1;
  std::string source;
  std::string prompt_fingerprint;
  std::string helpers_version;
};

struct AttemptRecord {
  CodeArtifact artifact;
  ExecutionOutcome outcome;
};

struct LoopResult {
  std::optional<std::string> answer;
  std::vector<AttemptRecord> attempts;
  bool exhausted = false;

  /// The successful attempt, if any.
  const AttemptRecord* success() const;
};

/// True when the source defines `def parse_dataframe(` at some line start.
bool defines_entry_point(std::string_view source);

class CodeGenLoop {
 public:
  CodeGenLoop(Gateway& gateway, StageModel model) : gateway_(gateway), model_(std::move(model)) {}

  /// Prompt for a first attempt, or a retry when prior is given.
  static std::string prompt(const TableDocument& table, const std::string& question, const ReasoningTrace& trace,
                            const AttemptRecord* prior);

  /// Throws MissingEntryPoint when the response does not define parse_dataframe.
  CodeArtifact generate_code(const TableDocument& table, const std::string& question, const ReasoningTrace& trace,
                             const AttemptRecord* prior) const;

  /// Generate/execute until success or max_tries attempts. ExecutorUnavailable
  /// propagates without consuming further attempts.
  LoopResult run_loop(const TableDocument& table, const std::string& question, const ReasoningTrace& trace,
                      Executor& executor, int max_tries = kDefaultMaxTries, std::int64_t timeout_ms = 10000) const;

 private:
  CodeArtifact draft(const TableDocument& table, const std::string& question, const ReasoningTrace& trace,
                     const AttemptRecord* prior) const;

  Gateway& gateway_;
  StageModel model_;
};

}  // namespace tableqa
