#include "tableqa/table_model.hpp"

#include <algorithm>
#include <set>

#include "tableqa/errors.hpp"
#include "tableqa/text.hpp"

namespace tableqa {

std::optional<Decimal> Decimal::parse(std::string_view text) {
  if (text.empty()) return std::nullopt;
  Decimal d;
  std::size_t i = 0;
  if (text[0] == '+' || text[0] == '-') {
    d.negative_ = text[0] == '-';
    ++i;
  }
  std::string whole, frac;
  bool seen_dot = false;
  for (; i < text.size(); ++i) {
    char c = text[i];
    if (c == '.' && !seen_dot) {
      seen_dot = true;
    } else if (c >= '0' && c <= '9') {
      (seen_dot ? frac : whole).push_back(c);
    } else {
      return std::nullopt;
    }
  }
  // Both sides of a decimal point need digits: ".5" and "5." stay text.
  if (whole.empty()) return std::nullopt;
  if (seen_dot && frac.empty()) return std::nullopt;
  std::string digits = whole + frac;
  auto first = digits.find_first_not_of('0');
  d.digits_ = first == std::string::npos ? "0" : digits.substr(first);
  d.scale_ = static_cast<int>(frac.size());
  if (d.digits_ == "0") d.negative_ = false;
  return d;
}

std::string Decimal::to_string() const {
  std::string digits = digits_;
  if (static_cast<int>(digits.size()) <= scale_) {
    digits.insert(0, static_cast<std::size_t>(scale_) - digits.size() + 1, '0');
  }
  std::string out = negative_ ? "-" : "";
  if (scale_ == 0) return out + digits;
  auto split = digits.size() - static_cast<std::size_t>(scale_);
  return out + digits.substr(0, split) + "." + digits.substr(split);
}

namespace {

// Strips trailing fractional zeros so equal values compare equal.
std::pair<std::string, int> canonical(const std::string& digits, int scale) {
  std::string d = digits;
  while (scale > 0 && d.size() > 1 && d.back() == '0') {
    d.pop_back();
    --scale;
  }
  if (d == "0") scale = 0;
  return {d, scale};
}

}  // namespace

bool operator==(const Decimal& a, const Decimal& b) {
  return a.negative_ == b.negative_ && canonical(a.digits_, a.scale_) == canonical(b.digits_, b.scale_);
}

std::string_view to_string(CellKind kind) {
  switch (kind) {
    case CellKind::text: return "text";
    case CellKind::integer: return "integer";
    case CellKind::decimal: return "decimal";
    case CellKind::percentage: return "percentage";
    case CellKind::currency: return "currency";
  }
  return "text";
}

std::optional<CellKind> cell_kind_from_string(std::string_view name) {
  for (auto k : {CellKind::text, CellKind::integer, CellKind::decimal, CellKind::percentage,
                 CellKind::currency}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

namespace {

constexpr std::string_view kCurrencySymbols[] = {"$", "€", "£"};

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Accepts plain digit runs or comma-grouped thousands, with an optional
// fractional part. Returns the separator-free form.
std::optional<std::string> strip_grouping(std::string_view body) {
  auto dot = body.find('.');
  std::string_view whole = body.substr(0, dot);
  std::string_view frac = dot == std::string_view::npos ? std::string_view{} : body.substr(dot + 1);
  if (dot != std::string_view::npos && (frac.empty() || !std::all_of(frac.begin(), frac.end(), is_digit))) {
    return std::nullopt;
  }
  std::string out;
  if (whole.find(',') == std::string_view::npos) {
    if (!std::all_of(whole.begin(), whole.end(), is_digit)) return std::nullopt;
    if (whole.empty() && dot == std::string_view::npos) return std::nullopt;
    out = std::string(whole);
  } else {
    // d{1,3}(,ddd)+
    std::size_t pos = 0;
    std::size_t comma = whole.find(',');
    std::string_view head = whole.substr(0, comma);
    if (head.empty() || head.size() > 3 || !std::all_of(head.begin(), head.end(), is_digit)) {
      return std::nullopt;
    }
    out = std::string(head);
    pos = comma;
    while (pos != std::string_view::npos) {
      std::string_view group = whole.substr(pos + 1, 3);
      if (group.size() != 3 || !std::all_of(group.begin(), group.end(), is_digit)) return std::nullopt;
      out += group;
      std::size_t next = pos + 4;
      if (next == whole.size()) break;
      if (whole[next] != ',') return std::nullopt;
      pos = next;
    }
  }
  if (dot != std::string_view::npos) out += "." + std::string(frac);
  return out;
}

// Optional sign, then a grouped number.
std::optional<Decimal> parse_number(std::string_view s) {
  std::string sign;
  if (!s.empty() && (s[0] == '+' || s[0] == '-')) {
    sign = s[0] == '-' ? "-" : "";
    s.remove_prefix(1);
  }
  auto body = strip_grouping(s);
  if (!body) return std::nullopt;
  return Decimal::parse(sign + *body);
}

}  // namespace

CellValue coerce_cell(std::string_view raw) {
  CellValue cell;
  cell.raw = std::string(raw);
  std::string_view s = trim(raw);
  if (s.empty()) return cell;

  // Currency: [-]SYM number or SYM[-]number.
  {
    std::string_view rest = s;
    bool neg = false;
    if (!rest.empty() && rest[0] == '-') {
      neg = true;
      rest.remove_prefix(1);
    }
    for (auto sym : kCurrencySymbols) {
      if (rest.substr(0, sym.size()) == sym) {
        std::string_view body = trim(rest.substr(sym.size()));
        if (neg && !body.empty() && (body[0] == '-' || body[0] == '+')) break;
        if (auto num = parse_number(body)) {
          if (neg) num = Decimal::parse("-" + num->to_string());
          cell.kind = CellKind::currency;
          cell.numeric = num;
          cell.currency_symbol = std::string(sym);
          return cell;
        }
        break;
      }
    }
  }

  if (s.back() == '%') {
    if (auto num = parse_number(trim(s.substr(0, s.size() - 1)))) {
      cell.kind = CellKind::percentage;
      cell.numeric = num;
    }
    return cell;
  }

  if (auto num = parse_number(s)) {
    cell.kind = num->scale() == 0 ? CellKind::integer : CellKind::decimal;
    cell.numeric = num;
  }
  return cell;
}

std::size_t TableDocument::column_index(std::string_view name) const {
  auto it = std::find(columns.begin(), columns.end(), name);
  return it == columns.end() ? npos : static_cast<std::size_t>(it - columns.begin());
}

namespace {

struct CsvRecord {
  std::vector<std::string> fields;
  std::size_t line = 0;
};

std::vector<CsvRecord> split_records(std::string_view text) {
  std::vector<CsvRecord> records;
  CsvRecord current;
  std::string field;
  std::size_t line = 1;
  current.line = line;
  bool in_quotes = false;
  bool was_quoted = false;
  bool after_quote = false;  // closing quote seen, expecting separator
  bool record_has_content = false;

  auto end_field = [&] {
    current.fields.push_back(std::move(field));
    field.clear();
    was_quoted = false;
    after_quote = false;
  };
  auto end_record = [&] {
    end_field();
    // A record consisting of one unquoted empty field is a blank line.
    if (record_has_content) records.push_back(std::move(current));
    current = CsvRecord{};
    record_has_content = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
          after_quote = true;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') continue;
    if (c == ',') {
      record_has_content = true;
      end_field();
    } else if (c == '\n') {
      end_record();
      ++line;
      current.line = line;
    } else if (after_quote) {
      throw UnbalancedQuote("unexpected character after closing quote on line " + std::to_string(line));
    } else if (c == '"' && field.empty() && !was_quoted) {
      in_quotes = true;
      was_quoted = true;
      record_has_content = true;
    } else {
      record_has_content = true;
      field.push_back(c);
    }
  }
  if (in_quotes) throw UnbalancedQuote("quoted field opened on line " + std::to_string(current.line) + " never closes");
  end_record();
  return records;
}

std::string escape_field(const std::string& cell, bool sole_cell) {
  bool needs_quotes = cell.find_first_of(",\"\n\r") != std::string::npos || (sole_cell && cell.empty());
  if (!needs_quotes) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void append_row(std::string& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out.push_back(',');
    out += escape_field(cells[i], cells.size() == 1);
  }
  out.push_back('\n');
}

void append_row(std::string& out, const std::vector<CellValue>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out.push_back(',');
    out += escape_field(cells[i].raw, cells.size() == 1);
  }
  out.push_back('\n');
}

}  // namespace

TableDocument parse_csv(std::string_view text) {
  auto records = split_records(text);
  if (records.empty()) throw EmptyInput("CSV text has no header line");

  TableDocument table;
  const auto& header = records.front();
  std::set<std::string> taken;
  for (std::size_t i = 0; i < header.fields.size(); ++i) {
    std::string name(trim(header.fields[i]));
    if (name != header.fields[i]) {
      table.repair_notes.push_back("trimmed whitespace around header '" + name + "'");
    }
    if (name.empty()) {
      name = "column_" + std::to_string(i + 1);
      table.repair_notes.push_back("named empty header at position " + std::to_string(i + 1) + " '" + name + "'");
    }
    if (taken.count(name)) {
      std::string base = name;
      int n = 2;
      while (taken.count(base + "_" + std::to_string(n))) ++n;
      name = base + "_" + std::to_string(n);
      table.repair_notes.push_back("renamed duplicate header '" + base + "' to '" + name + "'");
    }
    taken.insert(name);
    table.columns.push_back(std::move(name));
  }

  const std::size_t width = table.columns.size();
  for (std::size_t r = 1; r < records.size(); ++r) {
    auto& rec = records[r];
    if (rec.fields.size() > width) throw OverlongRow(rec.line, rec.fields.size(), width);
    std::vector<CellValue> row;
    row.reserve(width);
    for (auto& f : rec.fields) row.push_back(coerce_cell(f));
    if (row.size() < width) {
      table.repair_notes.push_back("padded row on line " + std::to_string(rec.line) + " from " +
                                   std::to_string(row.size()) + " to " + std::to_string(width) + " cells");
      while (row.size() < width) row.push_back(coerce_cell(""));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string serialize_csv(const TableDocument& table) {
  std::string out;
  append_row(out, table.columns);
  for (const auto& row : table.rows) append_row(out, row);
  return out;
}

std::string preview(const TableDocument& table, std::size_t max_rows) {
  if (max_rows == 0) max_rows = 1;
  std::string out;
  append_row(out, table.columns);
  const std::size_t shown = std::min(max_rows, table.rows.size());
  for (std::size_t r = 0; r < shown; ++r) append_row(out, table.rows[r]);
  if (shown < table.rows.size()) {
    out += "… " + std::to_string(table.rows.size() - shown) + " more rows\n";
  }
  return out;
}

CellKind column_kind(const TableDocument& table, std::size_t column) {
  std::optional<CellKind> kind;
  bool mixed_numeric = false;
  for (const auto& row : table.rows) {
    const auto& cell = row.at(column);
    if (trim(cell.raw).empty()) continue;
    if (!cell.is_numeric()) return CellKind::text;
    if (!kind) {
      kind = cell.kind;
    } else if (*kind != cell.kind) {
      mixed_numeric = true;
    }
  }
  if (!kind) return CellKind::text;
  return mixed_numeric ? CellKind::decimal : *kind;
}

}  // namespace tableqa
