#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scmkit/inference.hpp"
#include "scmkit/solver.hpp"
#include "scmkit/study.hpp"

namespace scmkit {

std::string_view tool_version() noexcept;

/// Rounds to 9 significant digits, the precision every emitted artifact
/// carries. Non-finite values pass through.
double quantize(double x);

struct PlaceboUnitSummary {
  std::string unit;
  bool treated = false;
  double pre_rmspe = 0.0;
  double post_rmspe = 0.0;
  double ratio = 0.0;
  bool retained = true;
  std::vector<double> gap;  // aligned with Report::gaps.times
  bool operator==(const PlaceboUnitSummary&) const = default;
};

struct PlaceboReport {
  std::string criterion;  // selected headline criterion
  std::optional<double> filter_multiple;
  double pseudo_p = 0.0;  // under `criterion`
  double pseudo_p_rmspe_ratio = 0.0;
  double pseudo_p_terminal_abs_gap = 0.0;
  std::vector<std::string> exceeding_rmspe_ratio;
  std::vector<std::string> exceeding_terminal_abs_gap;
  int retained_units = 0;
  std::vector<PlaceboUnitSummary> units;
  std::vector<std::string> failed_units;
  bool operator==(const PlaceboReport&) const = default;
};

struct OracleCheck {
  double resolution = 0.0;
  double solver_objective = 0.0;
  double oracle_objective = 0.0;
  /// solver minus oracle; must not exceed 1e-9.
  double gap = 0.0;
  bool passed = false;
  bool operator==(const OracleCheck&) const = default;
};

struct ReportGaps {
  std::vector<int> times;
  int treatment_time = 0;
  std::vector<double> actual, synthetic, gap, gap_pct;
  bool operator==(const ReportGaps&) const = default;
};

struct ReportEffect {
  int year = 0;
  double vs_synthetic = 0.0;
  double vs_actual = 0.0;
  bool operator==(const ReportEffect&) const = default;
};

/**
 * Everything a run emits. All numbers are quantized on construction, and the
 * CSV/SVG writers read from here, so each printed figure is the JSON figure.
 */
struct Report {
  std::string tool_version;
  std::uint64_t seed = 0;
  StudySpec spec;
  std::vector<std::string> donors;
  std::vector<double> donor_weights;
  std::vector<std::string> predictor_labels;
  std::vector<double> v_weights;
  double pre_mspe = 0.0;
  double pre_rmspe = 0.0;
  double post_rmspe = 0.0;
  double rmspe_ratio = 0.0;  // +inf for a perfect pre-fit (null in JSON)
  double inner_objective = 0.0;
  ReportGaps gaps;
  std::vector<ReportEffect> effects;
  std::optional<PlaceboReport> placebo;
  std::optional<OracleCheck> oracle_check;
  std::vector<std::string> warnings;

  bool operator==(const Report&) const = default;

  /// Donors with positive weight, descending by weight then id.
  std::vector<DonorWeight> positive_weights() const;
};

Report make_report(const SynthFit& fit, const GapSeries& gaps, std::vector<std::string> warnings = {});
void attach_placebos(Report& report, const PlaceboSet& placebos, Criterion criterion);

/// Stable document: keys sorted, two-space indent, trailing newline.
std::string report_to_json(const Report& report);
Report report_from_json(std::string_view text);

/// `donor,weight`, positive weights only, 6 decimals, descending.
std::string weights_csv(const Report& report);
/// `time,actual,synthetic,gap,gap_pct`, 6 decimals.
std::string gaps_csv(const Report& report);
/// `unit,time,gap`, 6 decimals, treated first.
std::string placebo_gaps_csv(const Report& report);
/// `unit,pre_rmspe,post_rmspe,ratio,retained`.
std::string placebo_summary_csv(const Report& report);

/// Actual (solid) vs synthetic (dashed) with a vertical rule at T0.
std::string gaps_svg(const Report& report);
/// Gap paths: treated heavy, placebos light, vertical rule at T0. One
/// polyline per retained unit.
std::string placebo_svg(const Report& report);

/// Diagnostics for one column of a weights-and-fit summary table.
struct TableColumn {
  std::string title;
  double mspe = 0.0;
  double rmspe_ratio = 0.0;
  std::vector<DonorWeight> weights;
};

/// "3.61E-01" style.
std::string format_scientific(double x);
/// Two decimals, "186.60".
std::string format_ratio(double x);
/// Three decimals with trailing zeros removed: 0.660 -> "0.66".
std::string format_weight(double x);
/// "Name (0.66)".
std::string format_donor_weight(const DonorWeight& w);

/// Plain-text table: a title row, an MSPE row, an RMSPE ratio row and one
/// row per positively weighted donor (descending), tab separated.
std::string render_weight_table(std::span<const TableColumn> columns);

TableColumn table_column(const Report& report, std::string title);

}  // namespace scmkit
