#include <algorithm>

#include "tableqa/errors.hpp"
#include "tableqa/model_gateway.hpp"

namespace tableqa {

std::string_view to_string(TemplateId id) {
  switch (id) {
    case TemplateId::extraction_plan: return "extraction_plan";
    case TemplateId::extract_csv: return "extract_csv";
    case TemplateId::reasoning: return "reasoning";
    case TemplateId::codegen: return "codegen";
    case TemplateId::codegen_retry: return "codegen_retry";
    case TemplateId::explanation: return "explanation";
  }
  return "unknown";
}

namespace {

constexpr const char* kExtractionPlan = R"(You are given an image of a table that may have a complex layout: multi-row headers, merged cells, or several sub-tables joined together.

Do not extract any values yet. Write a numbered to-do list of the steps needed to turn this layout into one flat, two-dimensional CSV table with a single header row. Mention which header levels must be combined, which merged or grouped values must be repeated on every row they apply to, and which rows or notes should be dropped.)";

constexpr const char* kExtractCsv = R"(You are given an image of a table and a plan for flattening it.

Plan:
{{plan}}

Follow the plan and output the table as CSV:
- the first line is the header, one name per column;
- every row has exactly as many cells as the header;
- repeat grouped or merged values on every row they apply to;
- copy cell text exactly as printed, including currency symbols, separators and percent signs;
- quote any cell containing a comma.

Output only the CSV inside a single ```csv code block.)";

constexpr const char* kReasoning = R"(You answer questions about a table by planning the computation step by step.

Table sample:
{{table_preview}}
Columns: {{columns}}

Question: {{question}}

Write the plan as three fenced sections and nothing else:

```STEPS
1. <first step, naming the exact columns and values it uses>
2. ...
```
```COLUMNS
<one column name per line>
```
```FILTERS
<one filter per line as: column = value>
```

Use column names exactly as listed. Do not compute the answer yourself.)";

constexpr const char* kCodegenBody = R"(Write Python code using pandas that answers the question over the table.

Table sample:
{{table_preview}}
Columns and inferred kinds:
{{columns}}

Question: {{question}}

Follow these steps:
{{steps}}

These helper functions are already defined and may be called directly:
{{helpers}}

Numeric columns (integer, decimal, percentage, currency) are loaded as numbers; percentages keep their face value (28% is 28). Text columns are strings.

Define exactly this entry point and return the answer as a string:

def parse_dataframe(df: pd.DataFrame) -> str:
    ...

Output only the code inside a single ```python code block.)";

constexpr const char* kCodegenRetryTail = R"(

Your previous attempt failed.

Previous code:
```python
{{previous_code}}
```

Error: {{error_message}}
Trace:
{{error_trace}}

Fix the problem and output the complete corrected code inside a single ```python code block.)";

constexpr const char* kExplanation = R"(Explain in plain language how the following Python code computed its answer. Describe only the operations the code actually performs, in order, and tie them to the question. Answer in two or three sentences.

Question: {{question}}

Code:
```python
{{code}}
```

Answer produced by the code: {{answer}})";

}  // namespace

const PromptTemplate& builtin_template(TemplateId id) {
  static const PromptTemplate kTemplates[] = {
      {TemplateId::extraction_plan, kExtractionPlan},
      {TemplateId::extract_csv, kExtractCsv},
      {TemplateId::reasoning, kReasoning},
      {TemplateId::codegen, kCodegenBody},
      {TemplateId::codegen_retry, std::string(kCodegenBody) + kCodegenRetryTail},
      {TemplateId::explanation, kExplanation},
  };
  return kTemplates[static_cast<int>(id)];
}

namespace {

bool is_name_char(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_'; }

// Calls on_text for literal spans and on_name for each {{name}} marker.
template <typename Text, typename Name>
void scan(const std::string& body, Text on_text, Name on_name) {
  std::size_t pos = 0;
  while (pos < body.size()) {
    auto open = body.find("{{", pos);
    if (open == std::string::npos) break;
    auto close = body.find("}}", open + 2);
    if (close == std::string::npos) break;
    std::string_view name(body.data() + open + 2, close - open - 2);
    if (name.empty() || !std::all_of(name.begin(), name.end(), is_name_char)) {
      on_text(std::string_view(body).substr(pos, open + 2 - pos));
      pos = open + 2;
      continue;
    }
    on_text(std::string_view(body).substr(pos, open - pos));
    on_name(std::string(name));
    pos = close + 2;
  }
  on_text(std::string_view(body).substr(std::min(pos, body.size())));
}

}  // namespace

std::vector<std::string> placeholders(const PromptTemplate& tmpl) {
  std::vector<std::string> names;
  scan(tmpl.body, [](std::string_view) {}, [&](std::string name) {
    if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(std::move(name));
  });
  return names;
}

std::string render(const PromptTemplate& tmpl, const std::map<std::string, std::string>& bindings) {
  for (const auto& name : placeholders(tmpl)) {
    if (!bindings.count(name)) throw UnboundPlaceholder(name);
  }
  std::string out;
  out.reserve(tmpl.body.size());
  scan(tmpl.body, [&](std::string_view text) { out += text; }, [&](const std::string& name) { out += bindings.at(name); });
  return out;
}

}  // namespace tableqa
