#include "tableqa/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "tableqa/text.hpp"

namespace tableqa {

std::size_t levenshtein(std::string_view a, std::string_view b) {
  const std::u32string s = utf8_decode(a);
  const std::u32string t = utf8_decode(b);
  if (s.empty()) return t.size();
  if (t.empty()) return s.size();
  std::vector<std::size_t> prev(t.size() + 1), cur(t.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= s.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= t.size(); ++j) {
      std::size_t sub = prev[j - 1] + (s[i - 1] == t[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[t.size()];
}

namespace {

double normalized_distance(std::string_view a, std::string_view b) {
  std::size_t la = utf8_decode(a).size();
  std::size_t lb = utf8_decode(b).size();
  std::size_t longest = std::max(la, lb);
  if (longest == 0) return 0.0;
  return static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

}  // namespace

double similarity(std::string_view a, std::string_view b) {
  return 1.0 - normalized_distance(to_lower_ascii(trim(a)), to_lower_ascii(trim(b)));
}

double anls(std::string_view prediction, const std::vector<std::string>& ground_truths, double threshold) {
  const std::string p = to_lower_ascii(trim(prediction));
  double best = 0.0;
  for (const auto& g : ground_truths) {
    double nl = normalized_distance(p, to_lower_ascii(trim(g)));
    double s = nl < threshold ? 1.0 - nl : 0.0;
    best = std::max(best, s);
  }
  return best;
}

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::string strip_quotes(std::string s) {
  static constexpr std::pair<std::string_view, std::string_view> kPairs[] = {
      {"\"", "\""}, {"'", "'"}, {"“", "”"}, {"‘", "’"}, {"`", "`"}};
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto [open, close] : kPairs) {
      if (s.size() >= open.size() + close.size() && s.starts_with(open) && s.ends_with(close)) {
        s = std::string(trim(std::string_view(s).substr(open.size(), s.size() - open.size() - close.size())));
        changed = true;
      }
    }
  }
  return s;
}

std::string remove_all(std::string s, std::string_view needle) {
  std::size_t pos;
  while ((pos = s.find(needle)) != std::string::npos) s.erase(pos, needle.size());
  return s;
}

// Drops commas sitting between a digit and exactly three digits.
std::string remove_thousands_commas(const std::string& s) {
  std::string out;
  auto digit_at = [&](std::size_t k) { return k < s.size() && is_digit(s[k]); };
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == ',' && i > 0 && is_digit(s[i - 1]) && digit_at(i + 1) && digit_at(i + 2) && digit_at(i + 3) &&
        !digit_at(i + 4)) {
      continue;
    }
    out.push_back(s[i]);
  }
  return out;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : trim(s)) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      pending_space = true;
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::string canonicalize_number(std::string s) {
  std::string_view v = s;
  std::string sign;
  if (!v.empty() && (v[0] == '+' || v[0] == '-')) {
    sign = v[0] == '-' ? "-" : "";
    v.remove_prefix(1);
  }
  auto dot = v.find('.');
  std::string_view whole = v.substr(0, dot);
  std::string_view frac = dot == std::string_view::npos ? std::string_view{} : v.substr(dot + 1);
  if (whole.empty() || !std::all_of(whole.begin(), whole.end(), is_digit)) return s;
  if (dot != std::string_view::npos) {
    if (frac.empty() || !std::all_of(frac.begin(), frac.end(), is_digit)) return s;
    if (std::all_of(frac.begin(), frac.end(), [](char c) { return c == '0'; })) frac = {};
  }
  std::string out = sign + std::string(whole);
  if (!frac.empty()) out += "." + std::string(frac);
  return out;
}

std::string normalize_once(std::string_view input) {
  std::string s(trim(input));
  s = strip_quotes(s);
  s = to_lower_ascii(s);
  for (auto sym : {"$", "€", "£"}) s = remove_all(s, sym);
  s = remove_thousands_commas(s);
  if (!s.empty() && s.back() == '%') s.pop_back();
  s = collapse_whitespace(s);
  s = canonicalize_number(s);
  if (s == "yes" || s == "true") return "true";
  if (s == "no" || s == "false") return "false";
  return s;
}

}  // namespace

std::string normalize_relieved(std::string_view s) {
  std::string current = normalize_once(s);
  // Later steps can expose work for earlier ones ("$'a'" exposes quotes).
  for (int i = 0; i < 16; ++i) {
    std::string next = normalize_once(current);
    if (next == current) break;
    current = std::move(next);
  }
  return current;
}

ScoredInstance score(std::string instance_id, const std::optional<std::string>& prediction,
                     std::vector<std::string> ground_truths, double anls_threshold) {
  ScoredInstance out;
  out.instance_id = std::move(instance_id);
  out.prediction = prediction;
  out.ground_truths = std::move(ground_truths);
  if (!prediction) return out;
  const std::string_view p = trim(*prediction);
  const std::string np = normalize_relieved(*prediction);
  for (const auto& g : out.ground_truths) {
    if (p == trim(g)) out.exact = 1;
    if (np == normalize_relieved(g)) out.relieved = 1;
  }
  out.anls = anls(*prediction, out.ground_truths, anls_threshold);
  return out;
}

namespace {

struct Accumulator {
  std::size_t count = 0;
  double exact = 0, relieved = 0, anls = 0;

  void add(const ScoredInstance& s) {
    ++count;
    exact += s.exact;
    relieved += s.relieved;
    anls += s.anls;
  }
  SubsetScores finish() const {
    SubsetScores out;
    out.count = count;
    if (count == 0) return out;
    const double n = static_cast<double>(count);
    out.exact_pct = 100.0 * exact / n;
    out.relieved_pct = 100.0 * relieved / n;
    out.anls_mean = anls / n;
    return out;
  }
};

}  // namespace

EvalReport aggregate(const std::vector<ScoredInstance>& instances,
                     const std::function<std::string(const ScoredInstance&)>& subset_of) {
  std::map<std::string, Accumulator> subsets;
  Accumulator overall;
  for (const auto& s : instances) {
    subsets[subset_of(s)].add(s);
    overall.add(s);
  }
  EvalReport report;
  for (const auto& [name, acc] : subsets) report.per_subset[name] = acc.finish();
  report.overall = overall.finish();
  return report;
}

nlohmann::json to_json(const ScoredInstance& s) {
  nlohmann::json j;
  j["instance_id"] = s.instance_id;
  j["prediction"] = s.prediction ? nlohmann::json(*s.prediction) : nlohmann::json(nullptr);
  j["ground_truths"] = s.ground_truths;
  j["exact"] = s.exact;
  j["relieved"] = s.relieved;
  j["anls"] = s.anls;
  return j;
}

ScoredInstance scored_instance_from_json(const nlohmann::json& j) {
  ScoredInstance s;
  s.instance_id = j.at("instance_id").get<std::string>();
  if (!j.at("prediction").is_null()) s.prediction = j.at("prediction").get<std::string>();
  s.ground_truths = j.at("ground_truths").get<std::vector<std::string>>();
  s.exact = j.at("exact").get<int>();
  s.relieved = j.at("relieved").get<int>();
  s.anls = j.at("anls").get<double>();
  return s;
}

namespace {

nlohmann::json to_json(const SubsetScores& s) {
  return {{"count", s.count}, {"exact_pct", s.exact_pct}, {"relieved_pct", s.relieved_pct}, {"anls_mean", s.anls_mean}};
}

}  // namespace

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json j;
  j["per_subset"] = nlohmann::json::object();
  for (const auto& [name, s] : report.per_subset) j["per_subset"][name] = to_json(s);
  j["overall"] = to_json(report.overall);
  j["normalization"] = std::string(kNormalizationVersion);
  j["config"] = report.config_snapshot;
  return j;
}

std::string format_report_table(const EvalReport& report) {
  static const std::vector<std::string> kKnown = {"VWTQ", "VWTQ-Syn", "VTabFact", "FinTabNetQA"};
  std::vector<std::string> columns = kKnown;
  for (const auto& [name, _] : report.per_subset) {
    if (std::find(columns.begin(), columns.end(), name) == columns.end()) columns.push_back(name);
  }

  auto fmt = [](double v, int precision) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << v;
    return os.str();
  };
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header = {"Metric"};
  for (const auto& c : columns) header.push_back(c);
  header.push_back("Avg.");
  grid.push_back(header);

  auto row_for = [&](const std::string& label, auto value_of) {
    std::vector<std::string> row = {label};
    for (const auto& c : columns) {
      auto it = report.per_subset.find(c);
      row.push_back(it == report.per_subset.end() ? "-" : value_of(it->second));
    }
    row.push_back(report.overall.count ? value_of(report.overall) : "-");
    grid.push_back(std::move(row));
  };
  row_for("Count", [](const SubsetScores& s) { return std::to_string(s.count); });
  row_for("Exact (%)", [&](const SubsetScores& s) { return fmt(s.exact_pct, 2); });
  row_for("Relieved (%)", [&](const SubsetScores& s) { return fmt(s.relieved_pct, 2); });
  row_for("ANLS", [&](const SubsetScores& s) { return fmt(s.anls_mean, 4); });

  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& row : grid) {
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], utf8_decode(row[i]).size());
  }
  std::ostringstream os;
  for (std::size_t r = 0; r < grid.size(); ++r) {
    os << '|';
    for (std::size_t i = 0; i < grid[r].size(); ++i) {
      const auto& cell = grid[r][i];
      os << ' ' << cell << std::string(widths[i] - utf8_decode(cell).size(), ' ') << " |";
    }
    os << '\n';
    if (r == 0) {
      os << '|';
      for (auto w : widths) os << std::string(w + 2, '-') << '|';
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace tableqa
