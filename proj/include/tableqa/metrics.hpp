#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace tableqa {

/// Unit-cost edit distance over Unicode code points.
std::size_t levenshtein(std::string_view a, std::string_view b);

/// 1 - levenshtein / max(len) on lowercased, trimmed inputs; 1.0 when both are empty.
double similarity(std::string_view a, std::string_view b);

/// ICDAR-2019 ANLS for a single prediction, maximised over ground truths.
double anls(std::string_view prediction, const std::vector<std::string>& ground_truths, double threshold = 0.5);

/// Version tag of the normalization chain below; stored in every report.
inline constexpr std::string_view kNormalizationVersion = "relieved-v1";

/// Relieved-accuracy normalization. Applies, in order: trim, strip matched
/// surrounding quotes, lowercase, drop currency symbols, drop thousands
/// commas, drop one trailing %, collapse whitespace, canonicalize plain
/// numbers, map yes/true and no/false. The chain is repeated until the
/// string stops changing.
std::string normalize_relieved(std::string_view s);

struct ScoredInstance {
  std::string instance_id;
  std::optional<std::string> prediction;
  std::vector<std::string> ground_truths;
  int exact = 0;
  int relieved = 0;
  double anls = 0.0;

  friend bool operator==(const ScoredInstance&, const ScoredInstance&) = default;
};

ScoredInstance score(std::string instance_id, const std::optional<std::string>& prediction,
                     std::vector<std::string> ground_truths, double anls_threshold = 0.5);

struct SubsetScores {
  std::size_t count = 0;
  double exact_pct = 0.0;
  double relieved_pct = 0.0;
  double anls_mean = 0.0;

  friend bool operator==(const SubsetScores&, const SubsetScores&) = default;
};

struct EvalReport {
  std::map<std::string, SubsetScores> per_subset;
  SubsetScores overall;
  nlohmann::json config_snapshot = nlohmann::json::object();
};

/// Per-subset and micro-averaged overall scores. Summation follows the input
/// order, so callers wanting bit-stable output pass instances in a fixed order.
EvalReport aggregate(const std::vector<ScoredInstance>& instances,
                     const std::function<std::string(const ScoredInstance&)>& subset_of);

nlohmann::json to_json(const ScoredInstance& s);
ScoredInstance scored_instance_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EvalReport& report);

/// Aligned text table: one column per subset plus "Avg.", one row per metric.
std::string format_report_table(const EvalReport& report);

}  // namespace tableqa
