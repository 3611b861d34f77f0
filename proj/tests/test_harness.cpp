#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "support/scenarios.hpp"
#include "tableqa/errors.hpp"
#include "tableqa/pipeline.hpp"
#include "tableqa/text.hpp"

using namespace tableqa;
using namespace tableqa::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

RunConfig fixture_config(const fs::path& out) {
  auto c = load_config(fixture_dir() / "config.json");
  c.output_dir = out;
  return c;
}

Pipeline fixture_pipeline(const RunConfig& c) { return Pipeline(c, make_backends(c), make_executor_factory(c)); }

const std::vector<QAInstance>& manifest() {
  static const auto kManifest = load_manifest(fixture_dir() / "manifest.jsonl");
  return kManifest;
}

const QAInstance& instance(const std::string& id) {
  for (const auto& q : manifest()) {
    if (q.id == id) return q;
  }
  throw std::out_of_range(id);
}

// Runs every fixture instance once and keeps the bundles.
struct Runs : ::testing::Test {
  static inline fs::path out;
  static inline std::map<std::string, AuditBundle> bundles;

  static void SetUpTestSuite() {
    out = make_temp_dir("tableqa-harness");
    auto pipeline = fixture_pipeline(fixture_config(out));
    for (const auto& q : manifest()) bundles[q.id] = pipeline.run_one(q);
  }
  static void TearDownTestSuite() { fs::remove_all(out); }

  static std::unique_ptr<Executor> executor() { return make_executor_factory(fixture_config(out))(); }
};

void write(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

json base_config() {
  return {{"backends", {{"default", {{"kind", "scripted"}, {"mapping", "m.json"}, {"model_id", "m"}}}}},
          {"executor_script", "o.json"}};
}

void expect_config_error(const json& j) {
  EXPECT_THROW(config_from_json(j, "/base").validate(), ConfigError) << j.dump();
}

std::size_t manifest_error_line(const std::string& text) {
  auto dir = make_temp_dir("tableqa-manifest");
  write(dir / "a.png", "x");
  write(dir / "m.jsonl", text);
  try {
    load_manifest(dir / "m.jsonl");
  } catch (const ManifestError& e) {
    fs::remove_all(dir);
    return e.line();
  }
  fs::remove_all(dir);
  return 0;
}

}  // namespace

TEST(Config, FixtureLoads) {
  auto c = load_config(fixture_dir() / "config.json");
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.understanding.model_id, "qwen2.5-vl-7b-instruct");
  EXPECT_TRUE(c.understanding.vision);
  EXPECT_EQ(c.codegen.model_id, "qwen3-14b");
  EXPECT_EQ(c.codegen.kind, "scripted");  // inherited from "default"
  EXPECT_EQ(c.codegen.mapping, (fixture_dir() / "mapping.json").lexically_normal());
  EXPECT_EQ(c.executor_script, (fixture_dir() / "outcomes.json").lexically_normal());
  EXPECT_EQ(c.max_tries, 3);
  EXPECT_EQ(c.parallelism, 4);
}

TEST(Config, Defaults) {
  auto c = config_from_json(base_config(), "/base");
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.max_tries, 3);
  EXPECT_EQ(c.extraction_max_tries, 2);
  EXPECT_DOUBLE_EQ(c.fuzzy_threshold, 0.75);
  EXPECT_DOUBLE_EQ(c.anls_threshold, 0.5);
  EXPECT_EQ(c.exec_timeout_ms, 10000);
  EXPECT_EQ(c.reasoning.mapping, fs::path("/base/m.json"));
  EXPECT_DOUBLE_EQ(c.reasoning.temperature, 0.0);
}

TEST(Config, Invalid) {
  auto with = [](const json& patch) {
    json j = base_config();
    j.merge_patch(patch);
    return j;
  };
  expect_config_error(with({{"max_tries", 0}}));
  expect_config_error(with({{"extraction_max_tries", 3}}));
  expect_config_error(with({{"parallelism", 0}}));
  expect_config_error(with({{"exec_timeout_ms", 5}}));
  expect_config_error(with({{"anls_threshold", 0}}));
  expect_config_error(with({{"fuzzy_threshold", 1.5}}));
  expect_config_error(with({{"executor_script", nullptr}}));
  expect_config_error(with({{"backends", {{"codegen", {{"kind", "magic"}}}}}}));
  expect_config_error(with({{"backends", {{"codegen", {{"temperature", 2}}}}}}));
  expect_config_error(with({{"backends", {{"codegen", {{"model_id", ""}}}}}}));
  expect_config_error(with({{"backends", {{"codegen", {{"kind", "openai"}}}}}}));
  expect_config_error(with({{"max_tries", "three"}}));
  expect_config_error(json::array());
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
  auto dir = make_temp_dir("tableqa-config");
  write(dir / "c.json", "{ not json");
  EXPECT_THROW(load_config(dir / "c.json"), ConfigError);
  fs::remove_all(dir);
}

TEST(Config, SnapshotLeavesOutSchedulingFields) {
  auto a = config_from_json(base_config(), "/base");
  auto b = a;
  b.parallelism = 9;
  b.output_dir = "/elsewhere";
  EXPECT_EQ(result_snapshot(a), result_snapshot(b));
  EXPECT_FALSE(result_snapshot(a).contains("parallelism"));
  EXPECT_EQ(to_json(b)["parallelism"], 9);
  EXPECT_EQ(result_snapshot(a)["helpers_version"], helper_library().version);
  b.max_tries = 1;
  EXPECT_NE(result_snapshot(a), result_snapshot(b));
}

TEST(Manifest, FixtureLoads) {
  ASSERT_EQ(manifest().size(), scenarios().size());
  for (const auto& q : manifest()) {
    EXPECT_TRUE(q.image_path.is_absolute());
    EXPECT_TRUE(fs::exists(q.image_path));
  }
  EXPECT_EQ(instance("fintabnet-0001").answers, (std::vector<std::string>{"$44,517"}));
}

TEST(Manifest, ErrorsCarryLineNumbers) {
  const std::string good = R"({"id":"a","subset":"VWTQ","image_path":"a.png","question":"q","answers":["x"]})";
  EXPECT_EQ(manifest_error_line(good + "\n\n" + good + "\n"), 3u);  // duplicate id
  EXPECT_EQ(manifest_error_line(good + "\n{oops\n"), 2u);
  EXPECT_EQ(manifest_error_line(R"({"id":"b","subset":"Other","image_path":"a.png","question":"q","answers":["x"]})"),
            1u);
  EXPECT_EQ(manifest_error_line(R"({"id":"b","image_path":"a.png","question":"q","answers":[]})"), 1u);
  EXPECT_EQ(manifest_error_line(R"({"id":"b","image_path":"nope.png","question":"q","answers":["x"]})"), 1u);
  EXPECT_EQ(manifest_error_line(R"({"id":"b","image_path":"a.png","question":" ","answers":["x"]})"), 1u);
  EXPECT_EQ(manifest_error_line(R"({"id":"b","image_path":"a.png","answers":["x"]})"), 1u);
  EXPECT_EQ(manifest_error_line("\n\n"), 2u);
  EXPECT_EQ(manifest_error_line(good + "\n"), 0u);
}

TEST(Manifest, SingleStringAnswerAndDefaultSubset) {
  auto q = qa_instance_from_json(json{{"id", "x"}, {"image_path", "i.png"}, {"question", "q"}, {"answers", "yes"}});
  EXPECT_EQ(q.answers, (std::vector<std::string>{"yes"}));
  EXPECT_EQ(q.subset, "custom");
}

TEST(BundleFileName, SafeAndUnique) {
  EXPECT_EQ(bundle_file_name("fintabnet-0001"), "fintabnet-0001.json");
  auto slash = bundle_file_name("a/b");
  EXPECT_TRUE(slash.starts_with("a_b-"));
  EXPECT_NE(slash, bundle_file_name("a_b"));
  EXPECT_NE(bundle_file_name("a/b"), bundle_file_name("a:b"));
  EXPECT_EQ(bundle_file_name("..").find('/'), std::string::npos);
  EXPECT_NE(bundle_file_name(".."), "...json");
  EXPECT_NE(bundle_file_name(""), ".json");
}

TEST_F(Runs, WorkedExample) {
  const auto& b = bundles.at("fintabnet-0001");
  EXPECT_EQ(b.answer, "44517");
  EXPECT_EQ(b.scores.exact, 0);
  EXPECT_EQ(b.scores.relieved, 1);
  EXPECT_NEAR(b.scores.anls, 5.0 / 7.0, 1e-12);
  EXPECT_EQ(b.understanding.status, StageStatus::ok);
  EXPECT_EQ(b.understanding.attempts, 1);
  EXPECT_EQ(serialize_csv(*b.understanding.table), kTable1Csv);
  ASSERT_EQ(b.understanding.plan->steps.size(), 4u);
  EXPECT_EQ(b.reasoning.trace->steps.size(), 5u);
  EXPECT_TRUE(b.reasoning.trace->reconciliations.empty());
  EXPECT_EQ(b.codegen.loop->attempts.size(), 1u);
  EXPECT_EQ(b.codegen.loop->attempts[0].artifact.source, kWorkedListing);
  EXPECT_EQ(b.explanation.explanation->text, kExplanationText);
  EXPECT_EQ(b.explanation.explanation->source_attempt, 1);

  std::vector<std::string> tags;
  for (const auto& r : b.gateway_log) tags.push_back(r.tag);
  EXPECT_EQ(tags, (std::vector<std::string>{"extraction_plan", "extract_csv", "reasoning", "codegen", "explanation"}));
  EXPECT_EQ(b.gateway_log[0].model_id, "qwen2.5-vl-7b-instruct");
  EXPECT_EQ(b.gateway_log[2].model_id, "qwen3-14b");

  auto path = out / "fintabnet-0001.json";
  ASSERT_TRUE(fs::exists(path));
  EXPECT_EQ(read_file(path), dump_bundle(b));
}

TEST_F(Runs, RuntimeErrorThenFix) {
  const auto& b = bundles.at("vwtq-0001");
  EXPECT_EQ(b.answer, "Norway");
  EXPECT_EQ(b.scores.exact, 1);
  ASSERT_EQ(b.codegen.loop->attempts.size(), 2u);
  EXPECT_EQ(b.codegen.loop->attempts[0].outcome.error->message, "KeyError: 'gold'");
  EXPECT_EQ(b.explanation.explanation->source_attempt, 2);
  const auto& trace = *b.reasoning.trace;
  EXPECT_EQ(trace.columns_used, (std::vector<std::string>{"Nation", "Gold"}));
  ASSERT_EQ(trace.reconciliations.size(), 1u);
  EXPECT_EQ(trace.reconciliations[0].original, "gold");
  std::vector<std::string> tags;
  for (const auto& r : b.gateway_log) tags.push_back(r.tag);
  EXPECT_EQ(tags[4], "codegen_retry");
}

TEST_F(Runs, ExtractionRetryAndValueReconciliation) {
  const auto& b = bundles.at("vtabfact-0001");
  EXPECT_EQ(b.understanding.attempts, 2);
  EXPECT_EQ(b.understanding.parse_errors.size(), 1u);
  EXPECT_EQ(b.answer, "True");
  EXPECT_EQ(b.scores.exact, 0);
  EXPECT_EQ(b.scores.relieved, 1);
  EXPECT_EQ(b.reasoning.trace->filters[1], (Filter{"Player", "Joel Embiid"}));
}

TEST_F(Runs, ExhaustedLoop) {
  const auto& b = bundles.at("vwtq-syn-0001");
  EXPECT_FALSE(b.answer);
  EXPECT_EQ(b.codegen.status, StageStatus::failed);
  ASSERT_TRUE(b.codegen.loop);
  EXPECT_TRUE(b.codegen.loop->exhausted);
  EXPECT_EQ(b.codegen.loop->attempts.size(), 3u);
  EXPECT_EQ(b.codegen.loop->attempts[0].outcome.error->category, ErrorCategory::syntax);
  EXPECT_EQ(b.explanation.status, StageStatus::skipped);
  EXPECT_EQ(b.scores.exact + b.scores.relieved, 0);
  EXPECT_EQ(b.scores.anls, 0.0);
  EXPECT_EQ(b.reasoning.trace->columns_used, (std::vector<std::string>{"Population"}));
}

TEST_F(Runs, BundleJsonIsStable) {
  for (const auto& [id, b] : bundles) {
    auto text = dump_bundle(b);
    auto back = bundle_from_json(json::parse(text));
    EXPECT_EQ(dump_bundle(back), text) << id;
    EXPECT_EQ(to_json(b)["schema"], kBundleSchema);
  }
}

TEST_F(Runs, CorruptBundles) {
  auto j = to_json(bundles.at("fintabnet-0001"));
  auto schema = j;
  schema["schema"] = "other/9";
  EXPECT_THROW(bundle_from_json(schema), BundleCorrupt);
  auto missing = j;
  missing["stages"].erase("codegen");
  EXPECT_THROW(bundle_from_json(missing), BundleCorrupt);
  auto status = j;
  status["stages"]["reasoning"]["status"] = "great";
  EXPECT_THROW(bundle_from_json(status), BundleCorrupt);
  write(out / "broken.json", "{\"schema\":");
  EXPECT_THROW(load_bundle(out / "broken.json"), BundleCorrupt);
  EXPECT_THROW(load_bundle(out / "absent.json"), BundleCorrupt);
}

TEST_F(Runs, ReplayIsGreen) {
  for (const auto& [id, b] : bundles) {
    auto ex = executor();
    for (const auto& check : replay(load_bundle(out / bundle_file_name(id)), *ex)) {
      EXPECT_TRUE(check.passed) << id << " " << check.name << ": " << check.detail;
    }
  }
}

TEST_F(Runs, ReplayCatchesTampering) {
  auto failed = [](const std::vector<ReplayCheck>& checks) {
    std::set<std::string> names;
    for (const auto& c : checks) {
      if (!c.passed) names.insert(c.name);
    }
    return names;
  };
  auto ex = executor();
  auto answer = bundles.at("fintabnet-0001");
  answer.answer = "44,517";
  EXPECT_EQ(failed(replay(answer, *ex)), (std::set<std::string>{"answer", "scores"}));

  auto code = bundles.at("fintabnet-0001");
  code.codegen.loop->attempts[0].artifact.source += "\n# edited";
  EXPECT_EQ(failed(replay(code, *ex)), (std::set<std::string>{"answer"}));

  auto table = bundles.at("vwtq-0001");
  table.understanding.csv_text = "Nation,Gold\nNorway,1\n";
  EXPECT_TRUE(failed(replay(table, *ex)).count("table"));

  auto helpers = bundles.at("vwtq-0001");
  helpers.codegen.loop->attempts[1].artifact.helpers_version = "0123456789abcdef";
  EXPECT_TRUE(failed(replay(helpers, *ex)).count("helpers_version"));

  auto scores = bundles.at("vwtq-syn-0001");
  scores.scores.anls = 1.0;
  EXPECT_EQ(failed(replay(scores, *ex)), (std::set<std::string>{"scores"}));
}

TEST_F(Runs, InspectSections) {
  const auto& b = bundles.at("fintabnet-0001");
  EXPECT_EQ(inspect(b, "table"), kTable1Csv);
  EXPECT_EQ(inspect(b, "code"), kWorkedListing + "\n");
  EXPECT_EQ(inspect(b, "answer"), "44517\n");
  EXPECT_EQ(json::parse(inspect(b, "scores"))["relieved"], 1);
  EXPECT_EQ(json::parse(inspect(b, "gateway_log")).size(), 5u);
  for (const char* s : {"instance", "config", "understanding", "reasoning", "codegen", "explanation"}) {
    EXPECT_NO_THROW(json::parse(inspect(b, s))) << s;
  }
  EXPECT_THROW(inspect(b, "everything"), Error);
  EXPECT_EQ(inspect(bundles.at("vwtq-syn-0001"), "answer"), "(no answer)\n");
  EXPECT_NE(inspect(bundles.at("vwtq-syn-0001"), "code").find("top['Population'].sum() / 0"), std::string::npos);
}

TEST(Pipeline, UnreadableImageSkipsLaterStages) {
  auto out = make_temp_dir("tableqa-noimage");
  auto c = fixture_config(out);
  QAInstance q = instance("fintabnet-0001");
  q.image_path = out / "missing.png";
  auto b = fixture_pipeline(c).run_one(q);
  EXPECT_EQ(b.understanding.status, StageStatus::failed);
  EXPECT_NE(b.understanding.error->find("missing.png"), std::string::npos);
  EXPECT_EQ(b.reasoning.status, StageStatus::skipped);
  EXPECT_EQ(b.codegen.status, StageStatus::skipped);
  EXPECT_EQ(b.explanation.status, StageStatus::skipped);
  EXPECT_FALSE(b.answer);
  EXPECT_TRUE(b.gateway_log.empty());
  EXPECT_TRUE(fs::exists(out / "fintabnet-0001.json"));
  fs::remove_all(out);
}

TEST(Pipeline, UnmappedPromptIsAStageFailure) {
  auto out = make_temp_dir("tableqa-unmapped");
  QAInstance q = instance("fintabnet-0001");
  q.question = "A question nobody scripted?";
  auto b = fixture_pipeline(fixture_config(out)).run_one(q);
  EXPECT_EQ(b.understanding.status, StageStatus::ok);
  EXPECT_EQ(b.reasoning.status, StageStatus::failed);
  EXPECT_NE(b.reasoning.error->find("fingerprint"), std::string::npos);
  EXPECT_FALSE(b.answer);
  EXPECT_EQ(b.gateway_log.size(), 3u);
  EXPECT_TRUE(b.gateway_log.back().error);
  fs::remove_all(out);
}

TEST(Pipeline, ExplanationFailureKeepsAnswer) {
  auto out = make_temp_dir("tableqa-noexplain");
  auto c = fixture_config(out);
  auto backends = make_backends(c);
  backends.explanation = std::make_shared<FunctionBackend>(
      [](const ChatRequest&) -> ChatResponse { throw BackendRefusal(400, "bad request"); });
  auto b = Pipeline(c, backends, make_executor_factory(c)).run_one(instance("fintabnet-0001"));
  EXPECT_EQ(b.answer, "44517");
  EXPECT_EQ(b.explanation.status, StageStatus::failed);
  EXPECT_EQ(b.scores.relieved, 1);
  fs::remove_all(out);
}

TEST(Pipeline, EvalReportAndParallelism) {
  auto out1 = make_temp_dir("tableqa-eval1");
  auto out4 = make_temp_dir("tableqa-eval4");
  auto c1 = fixture_config(out1);
  c1.parallelism = 1;
  auto c4 = fixture_config(out4);
  c4.parallelism = 4;
  auto r1 = fixture_pipeline(c1).run_eval(manifest());
  auto r4 = fixture_pipeline(c4).run_eval(manifest());
  EXPECT_EQ(r1.overall.count, 4u);
  EXPECT_EQ(r1.per_subset.at("VWTQ").count, 1u);
  EXPECT_DOUBLE_EQ(r1.overall.exact_pct, 25.0);
  EXPECT_DOUBLE_EQ(r1.overall.relieved_pct, 75.0);
  EXPECT_EQ(read_file(out1 / "report.json"), read_file(out4 / "report.json"));
  EXPECT_EQ(read_file(out1 / "report.txt"), read_file(out4 / "report.txt"));
  for (const auto& q : manifest()) EXPECT_TRUE(fs::exists(out4 / bundle_file_name(q.id)));
  fs::remove_all(out1);
  fs::remove_all(out4);
}

TEST(Fixtures, UpToDate) {
  auto dir = make_temp_dir("tableqa-fixtures");
  fs::copy(fixture_dir() / "images", dir / "images");
  write_fixtures(dir);
  for (const char* name : {"mapping.json", "outcomes.json", "manifest.jsonl", "config.json"}) {
    EXPECT_EQ(read_file(dir / name), read_file(fixture_dir() / name))
        << name << " is stale; regenerate with make_fixtures";
  }
  fs::remove_all(dir);
}
