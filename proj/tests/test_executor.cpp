#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <fstream>

#include "support/scenarios.hpp"
#include "tableqa/codegen.hpp"
#include "tableqa/errors.hpp"
#include "tableqa/executor.hpp"
#include "tableqa/text.hpp"

using namespace tableqa;
using nlohmann::json;

namespace {

const std::string& version() { return helper_library().version; }

bool have_python() {
  static const bool ok = std::system("python3 -c 0 >/dev/null 2>&1") == 0;
  return ok;
}

std::string stub_command(const std::string& helpers = version()) {
  return "python3 '" + std::string(TABLEQA_STUB_EXECUTOR) + "' " + helpers;
}

std::string stub_code(const std::string& directive) {
  return "def parse_dataframe(df):\n    # stub: " + directive + "\n    return ''\n";
}

#define REQUIRE_PYTHON() \
  if (!have_python()) GTEST_SKIP() << "python3 not available"

}  // namespace

TEST(ExecJson, RequestRoundTrip) {
  ExecRequest r{"req-1", "def parse_dataframe(df): pass", "A\n1\n", "parse_dataframe", 5000, "abc"};
  auto j = to_json(r);
  EXPECT_EQ(j.size(), 6u);
  auto back = exec_request_from_json(j);
  EXPECT_EQ(back.id, r.id);
  EXPECT_EQ(back.code, r.code);
  EXPECT_EQ(back.table_csv, r.table_csv);
  EXPECT_EQ(back.timeout_ms, 5000);
  EXPECT_EQ(back.helpers_version, "abc");
  j.erase("code");
  EXPECT_THROW(exec_request_from_json(j), json::exception);
}

TEST(ExecJson, ResponseRoundTrip) {
  auto ok = ExecutionOutcome::success("44517", 12);
  auto [id, back] = exec_response_from_json(exec_response_to_json("r7", ok));
  EXPECT_EQ(id, "r7");
  EXPECT_EQ(back.status, ExecStatus::success);
  EXPECT_EQ(back.result, "44517");
  EXPECT_EQ(back.duration_ms, 12);

  auto bad = ExecutionOutcome::failure(ExecStatus::timeout, ErrorCategory::timeout, "timed out", "trace");
  auto j = exec_response_to_json("r8", bad);
  EXPECT_TRUE(j["result"].is_null());
  auto back2 = exec_response_from_json(j).second;
  EXPECT_EQ(back2.error, bad.error);
  EXPECT_EQ(back2.status, ExecStatus::timeout);
}

TEST(ExecJson, SchemaViolations) {
  auto base = exec_response_to_json("r", ExecutionOutcome::success("x"));
  auto both = base;
  both["error"] = {{"category", "runtime"}, {"message", "m"}, {"trace_excerpt", ""}};
  EXPECT_THROW(exec_response_from_json(both), std::invalid_argument);
  auto neither = base;
  neither["result"] = nullptr;
  EXPECT_THROW(exec_response_from_json(neither), std::invalid_argument);
  auto status = base;
  status["status"] = "fine";
  EXPECT_THROW(exec_response_from_json(status), std::invalid_argument);
  auto mismatch = exec_response_to_json("r", ExecutionOutcome::failure(ExecStatus::script_error,
                                                                      ErrorCategory::runtime, "m"));
  mismatch["status"] = "success";
  EXPECT_THROW(exec_response_from_json(mismatch), std::invalid_argument);
  auto no_id = base;
  no_id.erase("id");
  EXPECT_THROW(exec_response_from_json(no_id), json::exception);
}

TEST(ExecJson, TraceExcerptIsBounded) {
  auto o = ExecutionOutcome::failure(ExecStatus::script_error, ErrorCategory::runtime, "m",
                                     std::string(3000, 'a') + "END");
  EXPECT_LE(o.error->trace_excerpt.size(), kMaxTraceExcerpt);
  EXPECT_TRUE(o.error->trace_excerpt.ends_with("END"));
}

TEST(ExecJson, EnumNames) {
  for (auto s : {ExecStatus::success, ExecStatus::script_error, ExecStatus::timeout, ExecStatus::protocol_error}) {
    EXPECT_EQ(exec_status_from_string(to_string(s)), s);
  }
  for (auto c : {ErrorCategory::syntax, ErrorCategory::runtime, ErrorCategory::timeout, ErrorCategory::protocol}) {
    EXPECT_EQ(error_category_from_string(to_string(c)), c);
  }
  EXPECT_FALSE(exec_status_from_string("ok"));
}

TEST(FakeExecutor, ScriptedOutcomes) {
  const std::string code = "def parse_dataframe(df):\n    return '1'";
  auto ex = FakeExecutor::from_outcomes({{sha256_hex(code), ExecutionOutcome::success("1")}});
  EXPECT_EQ(ex->execute(code, "A\n1\n", 1000, version()).result, "1");
  auto unknown = ex->execute(code + " ", "A\n1\n", 1000, version());
  EXPECT_EQ(unknown.status, ExecStatus::protocol_error);
  auto stale = ex->execute(code, "A\n1\n", 1000, "0000000000000000");
  EXPECT_EQ(stale.status, ExecStatus::protocol_error);
  EXPECT_NE(stale.error->message.find("helpers_version"), std::string::npos);
  EXPECT_EQ(ex->calls(), 3u);
}

TEST(FakeExecutor, FromFile) {
  auto dir = tableqa::testing::make_temp_dir("tableqa-fake");
  const std::string code = "def parse_dataframe(df):\n    return '1'";
  std::ofstream(dir / "o.json") << json{{sha256_hex(code), to_json(ExecutionOutcome::success("1"))}}.dump();
  EXPECT_EQ(FakeExecutor::from_file(dir / "o.json")->execute(code, "", 1, version()).result, "1");
  std::ofstream(dir / "bad.json") << R"({"x": {"status": "nope"}})";
  EXPECT_THROW(FakeExecutor::from_file(dir / "bad.json"), ConfigError);
  EXPECT_THROW(FakeExecutor::from_file(dir / "missing.json"), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST(ProcessExecutor, SuccessAndScriptErrors) {
  REQUIRE_PYTHON();
  ProcessExecutor ex(stub_command());
  auto ok = ex.execute(stub_code("result=44517"), "A\n1\n", 5000, version());
  EXPECT_EQ(ok.status, ExecStatus::success);
  EXPECT_EQ(ok.result, "44517");
  auto runtime = ex.execute(stub_code("raise=KeyError: 'gold'"), "A\n1\n", 5000, version());
  EXPECT_EQ(runtime.status, ExecStatus::script_error);
  EXPECT_EQ(runtime.error->category, ErrorCategory::runtime);
  EXPECT_EQ(runtime.error->message, "KeyError: 'gold'");
  auto syntax = ex.execute("print(1)", "A\n1\n", 5000, version());
  EXPECT_EQ(syntax.error->category, ErrorCategory::syntax);
  // Same worker throughout.
  EXPECT_EQ(ex.execute(stub_code("result=again"), "", 5000, version()).result, "again");
}

TEST(ProcessExecutor, WorkerReportedTimeout) {
  REQUIRE_PYTHON();
  ProcessExecutor ex(stub_command());
  auto o = ex.execute(stub_code("sleep=5000"), "", 100, version());
  EXPECT_EQ(o.status, ExecStatus::timeout);
  EXPECT_EQ(o.error->category, ErrorCategory::timeout);
  EXPECT_EQ(ex.execute(stub_code("result=after"), "", 5000, version()).result, "after");
}

TEST(ProcessExecutor, HelpersMismatchIsProtocolError) {
  REQUIRE_PYTHON();
  ProcessExecutor ex(stub_command("someotherversion"));
  auto o = ex.execute(stub_code("result=1"), "", 5000, version());
  EXPECT_EQ(o.status, ExecStatus::protocol_error);
}

TEST(ProcessExecutor, HungWorkerIsKilledAndRestarted) {
  REQUIRE_PYTHON();
  ProcessExecutor ex(stub_command(), std::chrono::milliseconds(300));
  auto start = std::chrono::steady_clock::now();
  EXPECT_THROW(ex.execute(stub_code("hang"), "", 100, version()), ExecutorUnavailable);
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(3));
  EXPECT_EQ(ex.execute(stub_code("result=fresh"), "", 5000, version()).result, "fresh");
}

TEST(ProcessExecutor, BrokenWorkers) {
  REQUIRE_PYTHON();
  ProcessExecutor ex(stub_command());
  EXPECT_THROW(ex.execute(stub_code("exit"), "", 5000, version()), ExecutorUnavailable);
  EXPECT_THROW(ex.execute(stub_code("garbage"), "", 5000, version()), ExecutorUnavailable);
  EXPECT_THROW(ex.execute(stub_code("wrong-id"), "", 5000, version()), ExecutorUnavailable);
  EXPECT_EQ(ex.execute(stub_code("result=ok"), "", 5000, version()).result, "ok");
}

TEST(ProcessExecutor, MissingCommand) {
  ProcessExecutor ex("/nonexistent/tableqa-worker");
  EXPECT_THROW(ex.execute(stub_code("result=1"), "", 1000, version()), ExecutorUnavailable);
}
