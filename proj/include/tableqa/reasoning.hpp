#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tableqa/model_gateway.hpp"
#include "tableqa/table_model.hpp"
#include "tableqa/understanding.hpp"

namespace tableqa {

inline constexpr double kDefaultFuzzyThreshold = 0.75;

struct Filter {
  std::string column;
  std::string value;
  friend bool operator==(const Filter&, const Filter&) = default;
};

struct Reconciliation {
  std::string field;  // "column", "filter_column" or "filter_value"
  std::string original;
  std::string replacement;
  double similarity = 0.0;
  friend bool operator==(const Reconciliation&, const Reconciliation&) = default;
};

struct ReasoningTrace {
  std::vector<std::string> steps;
  std::vector<std::string> columns_used;
  std::vector<Filter> filters;
  std::string raw_response;
  std::vector<Reconciliation> reconciliations;
  /// Names that matched nothing in the table; left verbatim.
  std::vector<std::string> unresolved;

  friend bool operator==(const ReasoningTrace&, const ReasoningTrace&) = default;
};

/// Reads the STEPS / COLUMNS / FILTERS sections. Sections may be fenced
/// (```STEPS ... ```) or introduced by a heading line ("STEPS:" or "## STEPS").
/// Throws NoSteps when no step is found.
ReasoningTrace parse_reasoning(const std::string& response);

struct FuzzyMatch {
  std::string candidate;
  double similarity = 0.0;
  std::size_t index = 0;
};

/// Best candidate by similarity(), earliest wins ties; nullopt below threshold.
std::optional<FuzzyMatch> fuzzy_match(std::string_view query, const std::vector<std::string>& candidates,
                                      double threshold = kDefaultFuzzyThreshold);

/// Rewrites column names and text filter values to their closest real
/// spelling in the table. Numeric filter values are never touched. New
/// reconciliation records are appended, so the operation is idempotent.
ReasoningTrace reconcile(ReasoningTrace trace, const TableDocument& table, double threshold = kDefaultFuzzyThreshold);

class ReasoningStage {
 public:
  ReasoningStage(Gateway& gateway, StageModel model) : gateway_(gateway), model_(std::move(model)) {}

  /// Prompt text for the question; exposed for audit tests.
  static std::string prompt(const TableDocument& table, const std::string& question);

  ReasoningTrace derive_reasoning(const TableDocument& table, const std::string& question) const;

 private:
  Gateway& gateway_;
  StageModel model_;
};

}  // namespace tableqa
