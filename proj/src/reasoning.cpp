#include "tableqa/reasoning.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include "tableqa/errors.hpp"
#include "tableqa/metrics.hpp"
#include "tableqa/text.hpp"

namespace tableqa {

namespace {

enum class Section { none, steps, columns, filters };

Section section_named(std::string name) {
  name = to_lower_ascii(name);
  if (name == "steps") return Section::steps;
  if (name == "columns") return Section::columns;
  if (name == "filters") return Section::filters;
  return Section::none;
}

std::string strip_marker(std::string_view line) {
  static const std::regex kMarker(R"(^\s*(?:\d+[.)]|[-*]|•)\s+)");
  std::string s(line);
  s = std::regex_replace(s, kMarker, "", std::regex_constants::format_first_only);
  return std::string(trim(s));
}

std::string unquote(std::string_view s) {
  s = trim(s);
  while (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\'') ||
                           (s.front() == '`' && s.back() == '`'))) {
    s = trim(s.substr(1, s.size() - 2));
  }
  return std::string(s);
}

}  // namespace

ReasoningTrace parse_reasoning(const std::string& response) {
  static const std::regex kFenceOpen(R"(^\s*```\s*([A-Za-z]+)\s*$)");
  static const std::regex kHeading(R"(^\s*(?:#+\s*)?\**([A-Za-z]+)\s*:?\s*\**\s*:?\s*$)");
  static const std::regex kFenceClose(R"(^\s*```\s*$)");

  ReasoningTrace trace;
  trace.raw_response = response;
  bool saw_steps = false;
  Section current = Section::none;
  for (const auto& line : split_lines(response)) {
    std::smatch m;
    if (std::regex_match(line, m, kFenceOpen)) {
      // Unknown fenced blocks (```python and the like) are skipped.
      current = section_named(m[1].str());
      if (current == Section::steps) saw_steps = true;
      continue;
    }
    if (std::regex_match(line, m, kHeading)) {
      Section s = section_named(m[1].str());
      if (s != Section::none) {
        current = s;
        if (s == Section::steps) saw_steps = true;
        continue;
      }
    }
    if (std::regex_match(line, kFenceClose)) {
      current = Section::none;
      continue;
    }
    std::string item = strip_marker(line);
    if (item.empty()) continue;
    switch (current) {
      case Section::none: break;
      case Section::steps: trace.steps.push_back(item); break;
      case Section::columns: trace.columns_used.push_back(unquote(item)); break;
      case Section::filters: {
        auto eq = item.find('=');
        if (eq == std::string::npos) break;
        std::string column = unquote(std::string_view(item).substr(0, eq));
        std::size_t value_start = eq + 1;
        while (value_start < item.size() && item[value_start] == '=') ++value_start;
        trace.filters.push_back({column, unquote(std::string_view(item).substr(value_start))});
        break;
      }
    }
  }
  if (!saw_steps || trace.steps.empty()) throw NoSteps("reasoning response has no STEPS section");
  return trace;
}

std::optional<FuzzyMatch> fuzzy_match(std::string_view query, const std::vector<std::string>& candidates,
                                      double threshold) {
  std::optional<FuzzyMatch> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double s = similarity(query, candidates[i]);
    if (!best || s > best->similarity) best = FuzzyMatch{candidates[i], s, i};
  }
  if (!best || best->similarity < threshold) return std::nullopt;
  return best;
}

namespace {

std::vector<std::string> distinct_text_values(const TableDocument& table, std::size_t column) {
  std::vector<std::string> values;
  std::set<std::string> seen;
  for (const auto& row : table.rows) {
    const auto& cell = row[column];
    if (cell.is_numeric() || trim(cell.raw).empty()) continue;
    if (seen.insert(cell.raw).second) values.push_back(cell.raw);
  }
  return values;
}

bool has_record(const std::vector<Reconciliation>& records, const Reconciliation& r) {
  return std::find(records.begin(), records.end(), r) != records.end();
}

}  // namespace

ReasoningTrace reconcile(ReasoningTrace trace, const TableDocument& table, double threshold) {
  auto note_unresolved = [&](const std::string& what) {
    if (std::find(trace.unresolved.begin(), trace.unresolved.end(), what) == trace.unresolved.end()) {
      trace.unresolved.push_back(what);
    }
  };
  auto resolve = [&](std::string& name, const std::vector<std::string>& candidates, const char* field,
                     const std::string& label) {
    if (std::find(candidates.begin(), candidates.end(), name) != candidates.end()) return true;
    auto match = fuzzy_match(name, candidates, threshold);
    if (!match) {
      note_unresolved(label + name);
      return false;
    }
    Reconciliation r{field, name, match->candidate, match->similarity};
    if (!has_record(trace.reconciliations, r)) trace.reconciliations.push_back(r);
    name = match->candidate;
    return true;
  };

  for (auto& column : trace.columns_used) resolve(column, table.columns, "column", "column: ");
  for (auto& filter : trace.filters) {
    if (!resolve(filter.column, table.columns, "filter_column", "filter column: ")) continue;
    if (coerce_cell(filter.value).is_numeric()) continue;
    const std::size_t col = table.column_index(filter.column);
    auto values = distinct_text_values(table, col);
    if (values.empty()) continue;
    resolve(filter.value, values, "filter_value", "filter value: ");
  }
  return trace;
}

std::string ReasoningStage::prompt(const TableDocument& table, const std::string& question) {
  std::string columns;
  for (std::size_t i = 0; i < table.columns.size(); ++i) {
    if (i) columns += ", ";
    columns += table.columns[i];
  }
  return render(builtin_template(TemplateId::reasoning),
                {{"table_preview", preview(table, 5)}, {"columns", columns}, {"question", question}});
}

ReasoningTrace ReasoningStage::derive_reasoning(const TableDocument& table, const std::string& question) const {
  if (trim(question).empty()) throw Error("question is empty");
  ChatRequest req;
  req.model_id = model_.model_id;
  req.temperature = model_.temperature;
  req.max_output_tokens = model_.max_output_tokens;
  req.tag = std::string(to_string(TemplateId::reasoning));
  req.messages.push_back({Role::user, {prompt(table, question)}});
  return parse_reasoning(gateway_.complete(req).text);
}

}  // namespace tableqa
