#include <fstream>
#include <sstream>

#include "tableqa/errors.hpp"
#include "tableqa/pipeline.hpp"
#include "tableqa/text.hpp"

namespace tableqa {

using nlohmann::json;

std::string_view to_string(StageStatus s) {
  switch (s) {
    case StageStatus::ok: return "ok";
    case StageStatus::failed: return "failed";
    case StageStatus::skipped: return "skipped";
  }
  return "skipped";
}

namespace {

StageStatus stage_status_from(const std::string& s) {
  if (s == "ok") return StageStatus::ok;
  if (s == "failed") return StageStatus::failed;
  if (s == "skipped") return StageStatus::skipped;
  throw BundleCorrupt("unknown stage status " + s);
}

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<std::string> opt_string(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::string>();
}

json table_to_json(const TableDocument& t) {
  json rows = json::array();
  for (const auto& row : t.rows) {
    json r = json::array();
    for (const auto& cell : row) r.push_back(cell.raw);
    rows.push_back(std::move(r));
  }
  json kinds = json::array();
  for (std::size_t c = 0; c < t.columns.size(); ++c) kinds.push_back(std::string(to_string(column_kind(t, c))));
  return {{"columns", t.columns}, {"rows", std::move(rows)}, {"column_kinds", std::move(kinds)},
          {"repair_notes", t.repair_notes}};
}

TableDocument table_from_json(const json& j) {
  TableDocument t;
  t.columns = j.at("columns").get<std::vector<std::string>>();
  for (const auto& r : j.at("rows")) {
    std::vector<CellValue> row;
    for (const auto& cell : r) row.push_back(coerce_cell(cell.get<std::string>()));
    if (row.size() != t.columns.size()) throw BundleCorrupt("recorded table is not rectangular");
    t.rows.push_back(std::move(row));
  }
  t.repair_notes = j.at("repair_notes").get<std::vector<std::string>>();
  return t;
}

json trace_to_json(const ReasoningTrace& t) {
  json filters = json::array();
  for (const auto& f : t.filters) filters.push_back({{"column", f.column}, {"value", f.value}});
  json recs = json::array();
  for (const auto& r : t.reconciliations) {
    recs.push_back({{"field", r.field}, {"original", r.original}, {"replacement", r.replacement}, {"similarity", r.similarity}});
  }
  return {{"steps", t.steps},         {"columns_used", t.columns_used}, {"filters", std::move(filters)},
          {"raw_response", t.raw_response}, {"reconciliations", std::move(recs)}, {"unresolved", t.unresolved}};
}

ReasoningTrace trace_from_json(const json& j) {
  ReasoningTrace t;
  t.steps = j.at("steps").get<std::vector<std::string>>();
  t.columns_used = j.at("columns_used").get<std::vector<std::string>>();
  for (const auto& f : j.at("filters")) t.filters.push_back({f.at("column").get<std::string>(), f.at("value").get<std::string>()});
  t.raw_response = j.at("raw_response").get<std::string>();
  for (const auto& r : j.at("reconciliations")) {
    t.reconciliations.push_back({r.at("field").get<std::string>(), r.at("original").get<std::string>(),
                                 r.at("replacement").get<std::string>(), r.at("similarity").get<double>()});
  }
  t.unresolved = j.at("unresolved").get<std::vector<std::string>>();
  return t;
}

json loop_to_json(const LoopResult& l) {
  json attempts = json::array();
  for (const auto& a : l.attempts) {
    attempts.push_back({{"artifact",
                         {{"attempt", a.artifact.attempt},
                          {"source", a.artifact.source},
                          {"prompt_fingerprint", a.artifact.prompt_fingerprint},
                          {"helpers_version", a.artifact.helpers_version}}},
                        {"outcome", to_json(a.outcome)}});
  }
  return {{"answer", opt(l.answer)}, {"attempts", std::move(attempts)}, {"exhausted", l.exhausted}};
}

LoopResult loop_from_json(const json& j) {
  LoopResult l;
  l.answer = opt_string(j, "answer");
  l.exhausted = j.at("exhausted").get<bool>();
  for (const auto& a : j.at("attempts")) {
    AttemptRecord rec;
    const auto& art = a.at("artifact");
    rec.artifact.attempt = art.at("attempt").get<int>();
    rec.artifact.source = art.at("source").get<std::string>();
    rec.artifact.prompt_fingerprint = art.at("prompt_fingerprint").get<std::string>();
    rec.artifact.helpers_version = art.at("helpers_version").get<std::string>();
    rec.outcome = execution_outcome_from_json(a.at("outcome"));
    l.attempts.push_back(std::move(rec));
  }
  return l;
}

json stage_header(StageStatus status, const std::optional<std::string>& error) {
  return {{"status", std::string(to_string(status))}, {"error", opt(error)}};
}

}  // namespace

json to_json(const AuditBundle& b) {
  json j;
  j["schema"] = std::string(kBundleSchema);
  j["instance"] = to_json(b.instance);
  j["config"] = b.config_snapshot;

  json u = stage_header(b.understanding.status, b.understanding.error);
  u["plan"] = b.understanding.plan
                  ? json{{"steps", b.understanding.plan->steps}, {"raw_response", b.understanding.plan->raw_response}}
                  : json(nullptr);
  u["csv_text"] = opt(b.understanding.csv_text);
  u["table"] = b.understanding.table ? table_to_json(*b.understanding.table) : json(nullptr);
  u["attempts"] = b.understanding.attempts;
  u["raw_responses"] = b.understanding.raw_responses;
  u["parse_errors"] = b.understanding.parse_errors;

  json r = stage_header(b.reasoning.status, b.reasoning.error);
  r["trace"] = b.reasoning.trace ? trace_to_json(*b.reasoning.trace) : json(nullptr);

  json c = stage_header(b.codegen.status, b.codegen.error);
  c["loop"] = b.codegen.loop ? loop_to_json(*b.codegen.loop) : json(nullptr);

  json e = stage_header(b.explanation.status, b.explanation.error);
  e["explanation"] = b.explanation.explanation ? json{{"text", b.explanation.explanation->text},
                                                      {"source_attempt", b.explanation.explanation->source_attempt}}
                                               : json(nullptr);

  j["stages"] = {{"understanding", std::move(u)}, {"reasoning", std::move(r)}, {"codegen", std::move(c)},
                 {"explanation", std::move(e)}};
  j["answer"] = opt(b.answer);
  j["scores"] = to_json(b.scores);
  json log = json::array();
  for (const auto& rec : b.gateway_log) log.push_back(to_json(rec));
  j["gateway_log"] = std::move(log);
  j["timestamps"] = {{"started", b.started_at}, {"finished", b.finished_at}};
  return j;
}

AuditBundle bundle_from_json(const json& j) {
  try {
    if (j.at("schema").get<std::string>() != kBundleSchema) throw BundleCorrupt("unsupported bundle schema");
    AuditBundle b;
    b.instance = qa_instance_from_json(j.at("instance"));
    b.config_snapshot = j.at("config");
    const auto& stages = j.at("stages");

    const auto& u = stages.at("understanding");
    b.understanding.status = stage_status_from(u.at("status").get<std::string>());
    b.understanding.error = opt_string(u, "error");
    if (!u.at("plan").is_null()) {
      b.understanding.plan = ExtractionPlan{u["plan"].at("steps").get<std::vector<std::string>>(),
                                            u["plan"].at("raw_response").get<std::string>()};
    }
    b.understanding.csv_text = opt_string(u, "csv_text");
    if (!u.at("table").is_null()) b.understanding.table = table_from_json(u["table"]);
    b.understanding.attempts = u.at("attempts").get<int>();
    b.understanding.raw_responses = u.at("raw_responses").get<std::vector<std::string>>();
    b.understanding.parse_errors = u.at("parse_errors").get<std::vector<std::string>>();

    const auto& r = stages.at("reasoning");
    b.reasoning.status = stage_status_from(r.at("status").get<std::string>());
    b.reasoning.error = opt_string(r, "error");
    if (!r.at("trace").is_null()) b.reasoning.trace = trace_from_json(r["trace"]);

    const auto& c = stages.at("codegen");
    b.codegen.status = stage_status_from(c.at("status").get<std::string>());
    b.codegen.error = opt_string(c, "error");
    if (!c.at("loop").is_null()) b.codegen.loop = loop_from_json(c["loop"]);

    const auto& e = stages.at("explanation");
    b.explanation.status = stage_status_from(e.at("status").get<std::string>());
    b.explanation.error = opt_string(e, "error");
    if (!e.at("explanation").is_null()) {
      b.explanation.explanation =
          Explanation{e["explanation"].at("text").get<std::string>(), e["explanation"].at("source_attempt").get<int>()};
    }

    b.answer = opt_string(j, "answer");
    b.scores = scored_instance_from_json(j.at("scores"));
    for (const auto& rec : j.at("gateway_log")) b.gateway_log.push_back(gateway_record_from_json(rec));
    b.started_at = j.at("timestamps").at("started").get<std::string>();
    b.finished_at = j.at("timestamps").at("finished").get<std::string>();
    return b;
  } catch (const BundleCorrupt&) {
    throw;
  } catch (const std::exception& ex) {
    throw BundleCorrupt(std::string("malformed audit bundle: ") + ex.what());
  }
}

AuditBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw BundleCorrupt("cannot open bundle " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw BundleCorrupt("bundle " + path.string() + " is not valid JSON: " + e.what());
  }
  return bundle_from_json(j);
}

std::string dump_bundle(const AuditBundle& b) { return to_json(b).dump(2) + "\n"; }

std::string bundle_file_name(const std::string& instance_id) {
  std::string name;
  for (char c : instance_id) {
    bool safe = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_' ||
                c == '.';
    name.push_back(safe ? c : '_');
  }
  if (name.empty() || name == "." || name == "..") name = "_" + name;
  // Distinct ids must not collide after sanitizing.
  if (name != instance_id) name += "-" + sha256_hex(instance_id).substr(0, 8);
  return name + ".json";
}

}  // namespace tableqa
