#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace scmkit {

/// Inclusive range of integer periods [first, last].
struct Window {
  int first = 0;
  int last = 0;

  constexpr int length() const noexcept { return last - first + 1; }
  constexpr bool contains(int t) const noexcept { return t >= first && t <= last; }
  bool operator==(const Window&) const = default;
};

struct Observation {
  std::string unit;
  int time = 0;
  std::string variable;
  double value = 0.0;

  bool operator==(const Observation&) const = default;
};

/**
 * Long-format annual panel: a partial map (unit, time, variable) -> value.
 *
 * Units and variables are kept in byte-lexicographic order and times in
 * increasing order, so the canonical CSV rendering (unit, then time, then
 * variable) is a pure function of the contents and `load_panel` inverts
 * `write_panel` exactly. Missing cells are allowed. Immutable once built.
 */
class Panel {
 public:
  Panel() = default;

  /// Throws DuplicateKey, InvalidArgument (empty identifier, comma in an
  /// identifier, non-finite value) or EmptyInput.
  static Panel from_observations(std::vector<Observation> rows);

  const std::vector<std::string>& units() const noexcept { return units_; }
  const std::vector<int>& times() const noexcept { return times_; }
  const std::vector<std::string>& variables() const noexcept { return variables_; }

  std::optional<std::size_t> unit_index(std::string_view unit) const;
  std::optional<std::size_t> time_index(int time) const;
  std::optional<std::size_t> variable_index(std::string_view variable) const;

  std::optional<double> value(std::string_view unit, int time, std::string_view variable) const;
  std::optional<double> at(std::size_t unit, std::size_t time, std::size_t variable) const;

  /// Values of one variable for one unit over `window`; throws CoverageError
  /// naming the first missing year, or the lookup errors of check_coverage.
  std::vector<double> series(std::string_view unit, std::string_view variable, Window window) const;

  std::size_t observation_count() const noexcept { return count_; }

  /// All present cells in canonical order.
  std::vector<Observation> observations() const;

  bool operator==(const Panel&) const = default;

 private:
  std::size_t flat(std::size_t u, std::size_t t, std::size_t v) const noexcept {
    return (u * times_.size() + t) * variables_.size() + v;
  }

  std::vector<std::string> units_;
  std::vector<int> times_;
  std::vector<std::string> variables_;
  std::vector<double> values_;
  std::vector<std::uint8_t> present_;
  std::size_t count_ = 0;
};

/// Parses `unit,time,variable,value` CSV (LF or CRLF, optional UTF-8 BOM).
Panel load_panel(std::istream& in);
Panel load_panel(const std::filesystem::path& path);

/// Canonical CSV: LF line endings, shortest round-trip decimal values,
/// exactly one LF after the last row.
void write_panel(std::ostream& out, const Panel& panel);
void write_panel(const std::filesystem::path& path, const Panel& panel);
std::string panel_to_csv(const Panel& panel);

/// True iff every (unit, t, variable) with t in `window` is present.
/// Throws UnknownUnit, UnknownVariable, WindowOutOfRange.
bool check_coverage(const Panel& panel, std::span<const std::string> units, std::string_view variable,
                    Window window);

}  // namespace scmkit
