#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tableqa {

/// Exact base-10 number: unscaled digits plus a scale, never a binary float.
///
/// "44517" has scale 0, "28.50" keeps scale 2 so it prints back as written.
/// Equality is numeric ("28.50" == "28.5").
class Decimal {
 public:
  Decimal() = default;

  /// Parses [+-]?digits[.digits]. Returns nullopt for anything else.
  static std::optional<Decimal> parse(std::string_view text);

  std::string to_string() const;
  bool negative() const noexcept { return negative_; }
  int scale() const noexcept { return scale_; }

  friend bool operator==(const Decimal& a, const Decimal& b);

 private:
  bool negative_ = false;
  std::string digits_ = "0";  // no leading zeros except the single "0"
  int scale_ = 0;
};

enum class CellKind { text, integer, decimal, percentage, currency };

std::string_view to_string(CellKind kind);
std::optional<CellKind> cell_kind_from_string(std::string_view name);

struct CellValue {
  std::string raw;
  CellKind kind = CellKind::text;
  std::optional<Decimal> numeric;
  std::optional<std::string> currency_symbol;

  bool is_numeric() const noexcept { return kind != CellKind::text; }
  friend bool operator==(const CellValue&, const CellValue&) = default;
};

/// Types a raw cell. Currency ($, €, £ prefix), trailing-% percentages, plain
/// integers and decimals (thousands separators allowed); anything else is text.
CellValue coerce_cell(std::string_view raw);

struct TableDocument {
  std::vector<std::string> columns;
  std::vector<std::vector<CellValue>> rows;
  std::vector<std::string> repair_notes;

  std::size_t column_index(std::string_view name) const;  // npos if absent
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  friend bool operator==(const TableDocument&, const TableDocument&) = default;
};

/// Parses comma-separated text whose first line is the header.
///
/// Short rows are right-padded with empty cells and duplicate headers get
/// "_2", "_3", ... suffixes; both repairs are noted in repair_notes. Rows
/// longer than the header throw OverlongRow. Blank lines are skipped.
TableDocument parse_csv(std::string_view text);

/// Canonical CSV: minimal quoting, "\n" terminators, exactly one trailing newline.
std::string serialize_csv(const TableDocument& table);

/// Header plus the first max_rows rows, with a "… N more rows" line when cut.
std::string preview(const TableDocument& table, std::size_t max_rows);

/// Shared kind of a column's non-empty cells: the common kind when they all
/// agree, decimal when they are all numeric but mixed, otherwise text.
CellKind column_kind(const TableDocument& table, std::size_t column);

}  // namespace tableqa
