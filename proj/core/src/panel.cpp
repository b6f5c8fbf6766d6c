#include "scmkit/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <tuple>

#include "scmkit/error.hpp"

namespace scmkit {

namespace {

constexpr std::string_view kHeader = "unit,time,variable,value";

template <typename T>
std::optional<std::size_t> index_of(const std::vector<T>& sorted, const T& key) {
  auto it = std::lower_bound(sorted.begin(), sorted.end(), key);
  if (it == sorted.end() || *it != key) return std::nullopt;
  return static_cast<std::size_t>(it - sorted.begin());
}

std::optional<std::size_t> index_of(const std::vector<std::string>& sorted, std::string_view key) {
  auto it = std::lower_bound(sorted.begin(), sorted.end(), key,
                             [](const std::string& a, std::string_view b) { return a < b; });
  if (it == sorted.end() || *it != key) return std::nullopt;
  return static_cast<std::size_t>(it - sorted.begin());
}

template <typename T>
std::vector<T> sorted_unique(std::vector<T> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

[[noreturn]] void malformed(std::size_t line, const std::string& why) {
  throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line) + ": " + why);
}

void check_identifier(const std::string& id, const char* what) {
  if (id.empty()) throw Error(ErrorCode::InvalidArgument, std::string("empty ") + what + " identifier");
  if (id.find(',') != std::string::npos || id.find('\n') != std::string::npos ||
      id.find('\r') != std::string::npos)
    throw Error(ErrorCode::InvalidArgument, std::string(what) + " identifier '" + id + "' contains a separator");
}

std::string format_window(Window w) {
  return "[" + std::to_string(w.first) + ", " + std::to_string(w.last) + "]";
}

}  // namespace

Panel Panel::from_observations(std::vector<Observation> rows) {
  if (rows.empty()) throw Error(ErrorCode::EmptyInput, "panel has no observations");

  Panel p;
  std::vector<std::string> units, variables;
  std::vector<int> times;
  units.reserve(rows.size());
  variables.reserve(rows.size());
  times.reserve(rows.size());
  for (const auto& r : rows) {
    check_identifier(r.unit, "unit");
    check_identifier(r.variable, "variable");
    if (!std::isfinite(r.value))
      throw Error(ErrorCode::InvalidArgument, "non-finite value for (" + r.unit + ", " + std::to_string(r.time) +
                                                  ", " + r.variable + ")");
    units.push_back(r.unit);
    variables.push_back(r.variable);
    times.push_back(r.time);
  }
  p.units_ = sorted_unique(std::move(units));
  p.variables_ = sorted_unique(std::move(variables));
  p.times_ = sorted_unique(std::move(times));

  const std::size_t cells = p.units_.size() * p.times_.size() * p.variables_.size();
  p.values_.assign(cells, 0.0);
  p.present_.assign(cells, 0);
  for (const auto& r : rows) {
    const std::size_t k = p.flat(*index_of(p.units_, std::string_view(r.unit)), *index_of(p.times_, r.time),
                                 *index_of(p.variables_, std::string_view(r.variable)));
    if (p.present_[k])
      throw Error(ErrorCode::DuplicateKey,
                  "(" + r.unit + ", " + std::to_string(r.time) + ", " + r.variable + ")");
    p.present_[k] = 1;
    p.values_[k] = r.value;
  }
  p.count_ = rows.size();
  return p;
}

std::optional<std::size_t> Panel::unit_index(std::string_view unit) const { return index_of(units_, unit); }

std::optional<std::size_t> Panel::time_index(int time) const { return index_of(times_, time); }

std::optional<std::size_t> Panel::variable_index(std::string_view variable) const {
  return index_of(variables_, variable);
}

std::optional<double> Panel::at(std::size_t u, std::size_t t, std::size_t v) const {
  if (u >= units_.size() || t >= times_.size() || v >= variables_.size()) return std::nullopt;
  const std::size_t k = flat(u, t, v);
  if (!present_[k]) return std::nullopt;
  return values_[k];
}

std::optional<double> Panel::value(std::string_view unit, int time, std::string_view variable) const {
  auto u = unit_index(unit);
  auto t = time_index(time);
  auto v = variable_index(variable);
  if (!u || !t || !v) return std::nullopt;
  return at(*u, *t, *v);
}

std::vector<double> Panel::series(std::string_view unit, std::string_view variable, Window window) const {
  auto u = unit_index(unit);
  if (!u) throw Error(ErrorCode::UnknownUnit, std::string(unit));
  auto v = variable_index(variable);
  if (!v) throw Error(ErrorCode::UnknownVariable, std::string(variable));
  if (window.first > window.last) throw Error(ErrorCode::WindowOutOfRange, format_window(window));

  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(window.length()));
  for (int year = window.first; year <= window.last; ++year) {
    auto t = time_index(year);
    std::optional<double> x = t ? at(*u, *t, *v) : std::nullopt;
    if (!x)
      throw Error(ErrorCode::CoverageError, "variable '" + std::string(variable) + "' unit '" + std::string(unit) +
                                                "' window " + format_window(window) + ": missing " +
                                                std::to_string(year));
    out.push_back(*x);
  }
  return out;
}

std::vector<Observation> Panel::observations() const {
  std::vector<Observation> out;
  out.reserve(count_);
  for (std::size_t u = 0; u < units_.size(); ++u)
    for (std::size_t t = 0; t < times_.size(); ++t)
      for (std::size_t v = 0; v < variables_.size(); ++v) {
        const std::size_t k = flat(u, t, v);
        if (present_[k]) out.push_back({units_[u], times_[t], variables_[v], values_[k]});
      }
  return out;
}

Panel load_panel(std::istream& in) {
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (text.empty()) throw Error(ErrorCode::EmptyInput, "empty panel input");
  std::string_view rest(text);
  if (rest.starts_with("\xEF\xBB\xBF")) rest.remove_prefix(3);

  std::vector<Observation> rows;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!rest.empty()) {
    const std::size_t nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    ++line_no;
    if (line.ends_with('\r')) line.remove_suffix(1);

    if (!header_seen) {
      if (line != kHeader) malformed(line_no, "expected header '" + std::string(kHeader) + "'");
      header_seen = true;
      continue;
    }
    if (line.empty()) {
      // Tolerated only as the terminator of the final row.
      if (rest.empty()) break;
      malformed(line_no, "empty line");
    }

    std::string_view fields[4];
    std::size_t n = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      if (n == 4) malformed(line_no, "expected 4 fields");
      fields[n++] = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (n != 4) malformed(line_no, "expected 4 fields, found " + std::to_string(n));
    if (fields[0].empty()) malformed(line_no, "empty unit");
    if (fields[2].empty()) malformed(line_no, "empty variable");

    Observation row;
    row.unit = fields[0];
    row.variable = fields[2];
    {
      auto [p, ec] = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), row.time);
      if (ec != std::errc() || p != fields[1].data() + fields[1].size() || fields[1].empty())
        malformed(line_no, "time '" + std::string(fields[1]) + "' is not an integer");
    }
    {
      auto [p, ec] = std::from_chars(fields[3].data(), fields[3].data() + fields[3].size(), row.value);
      if (ec != std::errc() || p != fields[3].data() + fields[3].size() || fields[3].empty() ||
          !std::isfinite(row.value))
        malformed(line_no, "value '" + std::string(fields[3]) + "' is not a finite decimal");
    }
    rows.push_back(std::move(row));
  }
  if (!header_seen) throw Error(ErrorCode::EmptyInput, "empty panel input");
  if (rows.empty()) throw Error(ErrorCode::EmptyInput, "panel has a header but no rows");
  return Panel::from_observations(std::move(rows));
}

Panel load_panel(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open panel '" + path.string() + "'");
  return load_panel(in);
}

std::string panel_to_csv(const Panel& panel) {
  std::string out(kHeader);
  out += '\n';
  char buf[64];
  for (const auto& o : panel.observations()) {
    out += o.unit;
    out += ',';
    out += std::to_string(o.time);
    out += ',';
    out += o.variable;
    out += ',';
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, o.value);
    out.append(buf, p);
    out += '\n';
  }
  return out;
}

void write_panel(std::ostream& out, const Panel& panel) { out << panel_to_csv(panel); }

void write_panel(const std::filesystem::path& path, const Panel& panel) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write panel '" + path.string() + "'");
  write_panel(out, panel);
  if (!out) throw Error(ErrorCode::Io, "failed writing panel '" + path.string() + "'");
}

bool check_coverage(const Panel& panel, std::span<const std::string> units, std::string_view variable,
                    Window window) {
  auto v = panel.variable_index(variable);
  if (!v) throw Error(ErrorCode::UnknownVariable, std::string(variable));
  const auto& times = panel.times();
  if (window.first > window.last || window.first < times.front() || window.last > times.back())
    throw Error(ErrorCode::WindowOutOfRange,
                format_window(window) + " outside panel periods " + format_window({times.front(), times.back()}));

  std::vector<std::size_t> unit_idx;
  unit_idx.reserve(units.size());
  for (const auto& unit : units) {
    auto u = panel.unit_index(unit);
    if (!u) throw Error(ErrorCode::UnknownUnit, unit);
    unit_idx.push_back(*u);
  }
  for (int year = window.first; year <= window.last; ++year) {
    auto t = panel.time_index(year);
    if (!t) return false;
    for (std::size_t u : unit_idx)
      if (!panel.at(u, *t, *v)) return false;
  }
  return true;
}

}  // namespace scmkit
