#include "tableqa/codegen.hpp"
#include "tableqa/text.hpp"

namespace tableqa {

namespace {

constexpr const char* kSharedSource = R"PY(import re as _re

_NUMBER = _re.compile(r"^([+-]?)((?:[0-9]{1,3}(?:,[0-9]{3})+|[0-9]+)(?:\.[0-9]+)?)$")
_SPACE = " \t\n\r\f\v"
FUZZY_THRESHOLD = 0.75


def _parse_number(text):
    m = _NUMBER.match(text)
    if not m:
        return None
    body = m.group(2).replace(",", "")
    value = float(body) if "." in body else int(body)
    return -value if m.group(1) == "-" else value


def _lower_ascii(text):
    return "".join(chr(ord(c) + 32) if "A" <= c <= "Z" else c for c in text)


def _levenshtein(a, b):
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _similarity(a, b):
    a = _lower_ascii(str(a).strip(_SPACE))
    b = _lower_ascii(str(b).strip(_SPACE))
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - _levenshtein(a, b) / longest


def _best_match(query, candidates):
    best, best_score = None, -1.0
    for c in candidates:
        s = _similarity(query, c)
        if s > best_score:
            best, best_score = c, s
    if best is None or best_score < FUZZY_THRESHOLD:
        return None
    return best
)PY";

const std::vector<HelperDefinition>& definitions() {
  static const std::vector<HelperDefinition> kDefs = {
      {"to_number", "to_number(cell_text) -> int | float | None",
       "Parses a cell as a number. Strips a leading currency symbol ($, EUR sign, GBP sign) and thousands "
       "separators; a trailing percent sign keeps the face value (\"28%\" -> 28). Returns None for non-numeric text.",
       R"PY(def to_number(cell_text):
    if cell_text is None:
        return None
    if isinstance(cell_text, bool):
        return None
    if isinstance(cell_text, (int, float)):
        return cell_text
    s = str(cell_text).strip(_SPACE)
    if not s:
        return None
    rest, negative = s, False
    if rest.startswith("-"):
        rest, negative = rest[1:], True
    for symbol in ("$", "€", "£"):
        if rest.startswith(symbol):
            body = rest[len(symbol):].strip(_SPACE)
            if negative and body[:1] in ("+", "-"):
                return None
            value = _parse_number(body)
            if value is None:
                return None
            return -value if negative else value
    if s.endswith("%"):
        return _parse_number(s[:-1].strip(_SPACE))
    return _parse_number(s)
)PY"},
      {"fuzzy_lookup_column", "fuzzy_lookup_column(table, name) -> str",
       "Returns the real column name closest to name (case-insensitive edit-distance similarity of at least "
       "0.75). Raises KeyError when nothing is close enough.",
       R"PY(def fuzzy_lookup_column(table, name):
    columns = [str(c) for c in table.columns]
    if name in columns:
        return name
    match = _best_match(name, columns)
    if match is None:
        raise KeyError("no column resembling %r; columns are %r" % (name, columns))
    return match
)PY"},
      {"fuzzy_filter_equals", "fuzzy_filter_equals(table, column, value) -> DataFrame",
       "Rows where column equals value. Column names are resolved with fuzzy_lookup_column. Numeric values are "
       "compared numerically; text values are first snapped to the closest distinct value in the column.",
       R"PY(def fuzzy_filter_equals(table, column, value):
    column = fuzzy_lookup_column(table, column)
    series = table[column]
    number = to_number(value)
    if number is not None:
        return table[series.map(to_number) == number]
    values = [str(v) for v in series.dropna().unique()]
    target = str(value)
    if target not in values:
        match = _best_match(target, values)
        if match is not None:
            target = match
    return table[series.astype(str) == target]
)PY"},
      {"first_value", "first_value(table, column) -> object",
       "Value of column in the first row of table, or None when the table is empty. The column name is resolved "
       "with fuzzy_lookup_column.",
       R"PY(def first_value(table, column):
    column = fuzzy_lookup_column(table, column)
    if len(table) == 0:
        return None
    return table[column].iloc[0]
)PY"},
  };
  return kDefs;
}

}  // namespace

std::string HelperLibrary::prompt_listing() const {
  std::string out;
  for (const auto& d : definitions) out += "- " + d.signature + "\n    " + d.doc + "\n";
  return out;
}

std::string HelperLibrary::python_module() const {
  std::string out = kSharedSource;
  for (const auto& d : definitions) out += "\n\n" + d.source;
  return out;
}

const HelperLibrary& helper_library() {
  static const HelperLibrary kLibrary = [] {
    HelperLibrary lib;
    lib.definitions = definitions();
    std::string material = kSharedSource;
    for (const auto& d : lib.definitions) {
      material += '\0' + d.name + '\0' + d.signature + '\0' + d.doc + '\0' + d.source;
    }
    lib.version = sha256_hex(material).substr(0, 16);
    return lib;
  }();
  return kLibrary;
}

}  // namespace tableqa
