#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scmkit/panel.hpp"
#include "scmkit/solver.hpp"
#include "scmkit/study.hpp"

namespace scmkit {

/// Actual vs synthetic outcome over pre_window and post_window.
struct GapSeries {
  std::vector<int> times;
  int treatment_time = 0;
  std::vector<double> actual;
  std::vector<double> synthetic;
  std::vector<double> gap;
  /// 100 * gap / synthetic; NaN where synthetic is zero.
  std::vector<double> gap_pct;
};

GapSeries gap_series(const SynthFit& fit, const Panel& panel);

enum class GapWindow { Pre, Post };

/// Root mean squared gap over the pre or post periods. Throws EmptyWindow.
double rmspe(const GapSeries& gaps, GapWindow window);

/// post / pre RMSPE. A perfect pre-treatment fit yields +infinity and, when
/// `warnings` is given, appends a PerfectPreFit note.
double rmspe_ratio(const GapSeries& gaps, std::vector<std::string>* warnings = nullptr);
double rmspe_ratio(const SynthFit& fit, const Panel& panel, std::vector<std::string>* warnings = nullptr);

struct PlaceboOptions {
  FitOptions fit;
  /// Drop placebo units whose pre-MSPE exceeds this multiple of the treated
  /// unit's pre-MSPE. Unset keeps every unit.
  std::optional<double> filter_multiple;
  /// Worker threads for the placebo refits; 0 picks hardware concurrency.
  unsigned threads = 1;
};

struct PlaceboUnit {
  std::string unit;
  bool treated = false;
  SynthFit fit;
  GapSeries gaps;
  double pre_mspe = 0.0;
  double pre_rmspe = 0.0;
  double post_rmspe = 0.0;
  double ratio = 0.0;
  bool retained = true;
};

struct PlaceboFailure {
  std::string unit;
  std::string message;
};

/// Treated unit first, then every donor treated in turn, in donor order.
struct PlaceboSet {
  std::vector<PlaceboUnit> units;
  std::vector<PlaceboFailure> failures;
  std::optional<double> filter_multiple;
  std::vector<std::string> warnings;

  const PlaceboUnit& treated() const { return units.front(); }
  std::size_t retained_count() const;
};

/**
 * In-space placebos. Each donor d is refit as pseudo-treated with pool =
 * original pool minus d; the truly treated unit never serves as a donor.
 * A failed placebo fit is recorded in `failures` and skipped. Results do not
 * depend on the thread count. Errors from the treated fit propagate.
 */
PlaceboSet run_placebos(const StudySpec& spec, const Panel& panel, const PlaceboOptions& options = {});

enum class Criterion { RmspeRatio, TerminalAbsGap };

std::string_view to_string(Criterion c) noexcept;
Criterion parse_criterion(std::string_view s);

/// Percentage effect at one post year under both conventions.
struct EffectPct {
  int year = 0;
  double vs_synthetic = 0.0;  // 100 (actual - synthetic) / synthetic, the headline value
  double vs_actual = 0.0;     // 100 (synthetic - actual) / actual
};

/// Throws YearNotInPost, and InvalidArgument when the synthetic value is zero.
EffectPct effect_pct(const GapSeries& gaps, int year);

struct InferenceSummary {
  Criterion criterion = Criterion::RmspeRatio;
  double treated_statistic = 0.0;
  /// 1 + number of retained placebos with a strictly larger statistic.
  int rank = 1;
  int retained_units = 0;
  std::vector<std::string> exceeding_units;
  double pseudo_p = 0.0;
  std::vector<EffectPct> effects;
  EffectPct horizon;
};

/// Statistic used for ranking: the RMSPE ratio, or |gap| at the last post year.
double criterion_statistic(const PlaceboUnit& unit, Criterion criterion);

/// pseudo_p = (# retained placebos with statistic > treated) / (# retained
/// units, treated included). Throws DonorPoolTooSmall with fewer than two
/// retained units.
InferenceSummary pseudo_p(const PlaceboSet& placebos, Criterion criterion = Criterion::RmspeRatio);

}  // namespace scmkit
