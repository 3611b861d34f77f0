#include "scenarios.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>

#include "tableqa/text.hpp"

namespace tableqa::testing {

namespace fs = std::filesystem;
using nlohmann::json;

const std::string kTable1Csv =
    "Year,Region,Net Sales,YoY % Growth,YoY % Growth (ex FX),Net Sales Mix\n"
    "2011,North America,\"$26,705\",43%,43%,56%\n"
    "2011,International,\"$21,372\",38%,31%,44%\n"
    "2012,North America,\"$34,813\",30%,30%,57%\n"
    "2012,International,\"$26,280\",23%,27%,43%\n"
    "2013,North America,\"$44,517\",28%,28%,60%\n"
    "2013,International,\"$29,935\",14%,19%,40%\n";

const std::string kQuestion = "What was the net sales for North America in the year 2013?";
const std::string kGroundTruth = "$44,517";

const std::string kReasoningResponse = R"(```STEPS
1. Filter the table to include only rows where the Region column is equal to "North America" and the Year column is equal to 2013.
2. Verify that the Net Sales column contains a numeric value for the filtered row.
3. Retrieve the value from the Net Sales column for the filtered row.
4. Ensure that no additional calculations or transformations are applied to the Net Sales value.
5. Return the retrieved Net Sales value as the final answer.
```
```COLUMNS
Region
Year
Net Sales
```
```FILTERS
Region = North America
Year = 2013
```)";

// The two-line if-condition is parenthesized so that the listing parses.
const std::string kWorkedListing = R"(import pandas as pd

def parse_dataframe(df: pd.DataFrame) -> str:
    # <<< MAIN LOGIC IMPLEMENTATION START >>>
    # Step 1: Filter the DataFrame for 'North America' in 2013
    filtered_df = df[
    (df['Region'] == 'North America') & (df['Year'] == 2013)
    ]

    # Step 2: Verify that the 'Net Sales'
    # column contains a numeric value
    if (not filtered_df.empty
    and pd.api.types.is_numeric_dtype(filtered_df['Net Sales'])):
        # Step 3: Retrieve the 'Net Sales' value
        net_sales_value = filtered_df['Net Sales'].values[0]
        # Step 4: Assign to result and cast to string
        result = str(net_sales_value)
    else:
        result = ""
    # <<< MAIN LOGIC IMPLEMENTATION END >>>

    return result)";

const std::string kExplanationText =
    "The net sales for North America in the year 2013 were calculated by filtering the table for that year and "
    "region, verifying the numeric value in the ‘Net Sales’ column, and extracting the result.";

namespace {

std::string fenced(const std::string& lang, const std::string& body) { return "```" + lang + "\n" + body + "\n```"; }

ExecutionOutcome runtime_error(const std::string& message, const std::string& line) {
  return ExecutionOutcome::failure(ExecStatus::script_error, ErrorCategory::runtime, message,
                                   "Traceback (most recent call last):\n  File \"<generated>\", line " + line +
                                       ", in parse_dataframe\n" + message + "\n");
}

std::vector<Scenario> build() {
  std::vector<Scenario> out;

  Scenario fin;
  fin.id = "fintabnet-0001";
  fin.subset = "FinTabNetQA";
  fin.question = kQuestion;
  fin.answers = {kGroundTruth};
  fin.plan_response =
      "1. Combine the header into a single row: Year, Region, Net Sales, YoY % Growth, YoY % Growth (ex FX), "
      "Net Sales Mix.\n"
      "2. The year cells are merged across the North America and International rows; repeat each year on both "
      "rows.\n"
      "3. Keep Region as its own column so every year/region group becomes one flat row.\n"
      "4. Copy Net Sales with its $ sign and thousands separators, and the percentage columns with their % signs.\n";
  fin.csv_responses = {fenced("csv", kTable1Csv.substr(0, kTable1Csv.size() - 1))};
  fin.reasoning_response = kReasoningResponse;
  fin.code_responses = {fenced("python", kWorkedListing)};
  fin.outcomes = {ExecutionOutcome::success("44517")};
  fin.explanation_response = kExplanationText;
  out.push_back(fin);

  Scenario medals;
  medals.id = "vwtq-0001";
  medals.subset = "VWTQ";
  medals.question = "Which nation won the most gold medals?";
  medals.answers = {"Norway"};
  medals.plan_response =
      "1. Use the first row as the header: Nation, Gold, Silver, Bronze, Total.\n"
      "2. Emit one row per nation with its medal counts.";
  medals.csv_responses = {
      fenced("csv", "Nation,Gold,Silver,Bronze,Total\nNorway,16,8,13,37\nGermany,12,10,5,27\nCanada,11,8,10,29\n"
                    "United States,9,8,6,23")};
  medals.reasoning_response = R"(STEPS:
1. Sort the rows by the gold column in descending order.
2. Take the Nation value of the first row.

COLUMNS:
- Nation
- gold

FILTERS:
)";
  medals.code_responses = {
      fenced("python", "def parse_dataframe(df):\n    top = df.sort_values('gold', ascending=False)\n"
                       "    return str(top['Nation'].iloc[0])"),
      fenced("python", "def parse_dataframe(df):\n    gold = fuzzy_lookup_column(df, 'gold')\n"
                       "    top = df.sort_values(gold, ascending=False)\n    return str(top['Nation'].iloc[0])"),
  };
  medals.outcomes = {runtime_error("KeyError: 'gold'", "2"), ExecutionOutcome::success("Norway")};
  medals.explanation_response =
      "The code found the real name of the gold column, sorted the nations by gold medals from most to fewest, "
      "and returned the first nation, Norway.";
  out.push_back(medals);

  Scenario fact;
  fact.id = "vtabfact-0001";
  fact.subset = "VTabFact";
  fact.question = "Is the following statement supported by the table? Nikola Jokic scored more points than Joel Embiid.";
  fact.answers = {"yes"};
  fact.plan_response = "Read the table row by row; it already has a single header.";
  fact.csv_responses = {
      fenced("csv", "Player,Team,Points\nNikola Jokic,Denver,32\nJoel Embiid,Philadelphia,28,7\nJayson Tatum,Boston,30"),
      fenced("csv", "Player,Team,Points\nNikola Jokic,Denver,32\nJoel Embiid,Philadelphia,28\nJayson Tatum,Boston,30"),
  };
  fact.reasoning_response = R"(```STEPS
1. Find the Points value of the row where Player is "Nikola Jokic".
2. Find the Points value of the row where Player is "Joel Embid".
3. Compare the two values and answer True if the first is larger, otherwise False.
```
```COLUMNS
Player
Points
```
```FILTERS
Player = Nikola Jokic
Player = Joel Embid
```)";
  fact.code_responses = {fenced(
      "python",
      "def parse_dataframe(df):\n    jokic = first_value(fuzzy_filter_equals(df, 'Player', 'Nikola Jokic'), 'Points')\n"
      "    embiid = first_value(fuzzy_filter_equals(df, 'Player', 'Joel Embid'), 'Points')\n"
      "    return str(jokic > embiid)")};
  fact.outcomes = {ExecutionOutcome::success("True")};
  fact.explanation_response =
      "The code looked up the points of Nikola Jokic and Joel Embiid and checked whether the first is larger, "
      "which it is (32 against 28), so it returned True.";
  out.push_back(fact);

  Scenario cities;
  cities.id = "vwtq-syn-0001";
  cities.subset = "VWTQ-Syn";
  cities.question = "What is the combined population of the two largest cities?";
  cities.answers = {"31,704,000"};
  cities.plan_response = "- Use the header row as is.\n- Keep the population figures with their separators.";
  cities.csv_responses = {fenced("csv", "City,Country,Population\nLagos,Nigeria,\"15,388,000\"\n"
                                        "Cairo,Egypt,\"10,230,350\"\nKinshasa,DR Congo,\"16,316,000\"")};
  cities.reasoning_response = R"(## STEPS
1. Sort the rows by Populaton in descending order.
2. Add the two largest Populaton values.
## COLUMNS
Populaton
)";
  cities.code_responses = {
      fenced("python", "def parse_dataframe(df):\n    top = df.nlargest(2, 'Population'\n    return str(top.sum())"),
      fenced("python", "def parse_dataframe(df):\n    top = df.nlargest(2, 'Populaton')\n"
                       "    return str(int(top['Populaton'].sum()))"),
      fenced("python", "def parse_dataframe(df):\n    top = df.nlargest(2, 'Population')\n"
                       "    return str(int(top['Population'].sum() / 0))"),
  };
  cities.outcomes = {
      ExecutionOutcome::failure(ExecStatus::script_error, ErrorCategory::syntax, "SyntaxError: '(' was never closed",
                                "  File \"<generated>\", line 2\n    top = df.nlargest(2, 'Population'\n"),
      runtime_error("KeyError: 'Populaton'", "2"),
      runtime_error("ZeroDivisionError: division by zero", "3"),
  };
  out.push_back(cities);

  return out;
}

// Records fingerprint -> response for every request it answers.
struct Recorder {
  std::mutex mutex;
  std::map<std::string, std::string> responses;

  void put(const ChatRequest& req, const std::string& text) {
    std::lock_guard lock(mutex);
    auto [it, inserted] = responses.emplace(fingerprint(req), text);
    if (!inserted && it->second != text) throw std::logic_error("two responses for one fingerprint (" + req.tag + ")");
  }
};

}  // namespace

const std::vector<Scenario>& scenarios() {
  static const std::vector<Scenario> kScenarios = build();
  return kScenarios;
}

const Scenario& scenario(const std::string& id) {
  for (const auto& s : scenarios()) {
    if (s.id == id) return s;
  }
  throw std::out_of_range("no scenario " + id);
}

json fixture_config_json() {
  return {
      {"backends",
       {{"default", {{"kind", "scripted"}, {"mapping", "mapping.json"}, {"strict", true}}},
        {"understanding", {{"model_id", "qwen2.5-vl-7b-instruct"}, {"vision", true}}},
        {"reasoning", {{"model_id", "qwen3-14b"}}},
        {"codegen", {{"model_id", "qwen3-14b"}}},
        {"explanation", {{"model_id", "qwen3-14b"}}}}},
      {"max_tries", 3},
      {"extraction_max_tries", 2},
      {"executor_script", "outcomes.json"},
      {"output_dir", "tableqa-out"},
      {"parallelism", 4},
  };
}

void write_fixtures(const fs::path& dir) {
  const json config_json = fixture_config_json();
  RunConfig config = config_from_json(config_json, fs::absolute(dir));
  const fs::path scratch = make_temp_dir("tableqa-fixturegen");
  config.output_dir = scratch;

  Recorder recorder;
  json outcomes = json::object();
  std::string manifest;

  for (const auto& s : scenarios()) {
    std::size_t csv_calls = 0;
    std::size_t code_calls = 0;
    auto respond = [&](const ChatRequest& req) {
      std::string text;
      if (req.tag == "extraction_plan") {
        text = s.plan_response;
      } else if (req.tag == "extract_csv") {
        text = s.csv_responses.at(csv_calls++);
      } else if (req.tag == "reasoning") {
        text = s.reasoning_response;
      } else if (req.tag == "codegen" || req.tag == "codegen_retry") {
        text = s.code_responses.at(code_calls++);
      } else if (req.tag == "explanation") {
        text = s.explanation_response;
      } else {
        throw std::logic_error("unexpected request tag " + req.tag);
      }
      recorder.put(req, text);
      ChatResponse r;
      r.text = text;
      return r;
    };
    auto backend = std::make_shared<FunctionBackend>(respond);
    Backends backends{backend, backend, backend, backend};

    auto executor = std::make_unique<FakeExecutor>([&](const ExecRequest& req) {
      for (std::size_t i = 0; i < s.code_responses.size(); ++i) {
        if (strip_code_fences(s.code_responses[i]) == req.code) {
          outcomes[sha256_hex(req.code)] = to_json(s.outcomes.at(i));
          return s.outcomes.at(i);
        }
      }
      throw std::logic_error("executor received unscripted code");
    });
    Pipeline pipeline(config, backends, {});
    QAInstance instance{s.id, s.subset, fs::absolute(dir) / "images" / s.image_name(), s.question, s.answers};
    pipeline.run_one(instance, *executor);
    if (csv_calls != s.csv_responses.size() || code_calls != s.code_responses.size()) {
      throw std::logic_error("scenario " + s.id + " did not consume all of its scripted responses");
    }

    json line = {{"id", s.id}, {"subset", s.subset}, {"image_path", "images/" + s.image_name()},
                 {"question", s.question}, {"answers", s.answers}};
    manifest += line.dump() + "\n";
  }
  fs::remove_all(scratch);

  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    out << content;
  };
  write("mapping.json", json(recorder.responses).dump(2) + "\n");
  write("outcomes.json", outcomes.dump(2) + "\n");
  write("manifest.jsonl", manifest);
  write("config.json", config_json.dump(2) + "\n");
}

fs::path fixture_dir() { return fs::path(TABLEQA_FIXTURE_DIR) / "worked_example"; }

fs::path make_temp_dir(const std::string& prefix) {
  static std::atomic<unsigned> counter{0};
  std::random_device rd;
  for (int i = 0; i < 100; ++i) {
    fs::path p = fs::temp_directory_path() /
                 (prefix + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    if (fs::create_directories(p)) return p;
  }
  throw std::runtime_error("cannot create a temporary directory");
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace tableqa::testing
