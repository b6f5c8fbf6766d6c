#include "scmkit/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "scmkit/error.hpp"

namespace scmkit {

GapSeries gap_series(const SynthFit& fit, const Panel& panel) {
  const StudySpec& spec = fit.spec;
  const Window window{spec.pre_window.first, spec.post_window.last};
  GapSeries g;
  g.treatment_time = spec.treatment_time;
  g.actual = panel.series(spec.treated_unit, spec.outcome, window);
  g.synthetic.assign(g.actual.size(), 0.0);
  const auto& donors = fit.donors();
  for (std::size_t j = 0; j < donors.size(); ++j) {
    const double wj = fit.w(static_cast<Eigen::Index>(j));
    if (wj == 0.0) continue;
    const auto y = panel.series(donors[j], spec.outcome, window);
    for (std::size_t t = 0; t < y.size(); ++t) g.synthetic[t] += wj * y[t];
  }
  g.times.reserve(g.actual.size());
  g.gap.reserve(g.actual.size());
  g.gap_pct.reserve(g.actual.size());
  for (std::size_t t = 0; t < g.actual.size(); ++t) {
    g.times.push_back(window.first + static_cast<int>(t));
    const double gap = g.actual[t] - g.synthetic[t];
    g.gap.push_back(gap);
    g.gap_pct.push_back(g.synthetic[t] != 0.0 ? 100.0 * gap / g.synthetic[t]
                                              : std::numeric_limits<double>::quiet_NaN());
  }
  return g;
}

double rmspe(const GapSeries& gaps, GapWindow window) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < gaps.times.size(); ++t) {
    const bool post = gaps.times[t] >= gaps.treatment_time;
    if (post != (window == GapWindow::Post)) continue;
    sum += gaps.gap[t] * gaps.gap[t];
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::EmptyWindow, window == GapWindow::Pre ? "no pre-treatment periods" : "no post-treatment periods");
  return std::sqrt(sum / static_cast<double>(n));
}

double rmspe_ratio(const GapSeries& gaps, std::vector<std::string>* warnings) {
  const double pre = rmspe(gaps, GapWindow::Pre);
  const double post = rmspe(gaps, GapWindow::Post);
  if (pre == 0.0) {
    if (warnings) warnings->push_back("PerfectPreFit: pre-treatment RMSPE is zero; RMSPE ratio reported as +infinity");
    return std::numeric_limits<double>::infinity();
  }
  return post / pre;
}

double rmspe_ratio(const SynthFit& fit, const Panel& panel, std::vector<std::string>* warnings) {
  return rmspe_ratio(gap_series(fit, panel), warnings);
}

std::size_t PlaceboSet::retained_count() const {
  return static_cast<std::size_t>(std::count_if(units.begin(), units.end(), [](const PlaceboUnit& u) { return u.retained; }));
}

namespace {

PlaceboUnit evaluate_unit(const StudySpec& spec, const Panel& panel, const FitOptions& options, bool treated,
                          std::vector<std::string>& warnings) {
  PlaceboUnit u;
  u.unit = spec.treated_unit;
  u.treated = treated;
  u.fit = fit(spec, panel, options);
  u.gaps = gap_series(u.fit, panel);
  u.pre_mspe = u.fit.pre_mspe;
  u.pre_rmspe = rmspe(u.gaps, GapWindow::Pre);
  u.post_rmspe = rmspe(u.gaps, GapWindow::Post);
  std::vector<std::string> local;
  u.ratio = rmspe_ratio(u.gaps, &local);
  for (auto& w : local) warnings.push_back(u.unit + ": " + w);
  return u;
}

}  // namespace

PlaceboSet run_placebos(const StudySpec& raw, const Panel& panel, const PlaceboOptions& options) {
  const StudySpec spec = resolve_spec(raw, panel);
  const auto& donors = *spec.donor_units;

  PlaceboSet set;
  set.filter_multiple = options.filter_multiple;
  set.units.push_back(evaluate_unit(spec, panel, options.fit, true, set.warnings));

  struct Slot {
    std::optional<PlaceboUnit> unit;
    std::string error;
    std::vector<std::string> warnings;
  };
  std::vector<Slot> slots(donors.size());

  auto work = [&](std::size_t d) {
    StudySpec placebo = spec;
    placebo.treated_unit = donors[d];
    std::vector<std::string> pool;
    for (std::size_t j = 0; j < donors.size(); ++j)
      if (j != d) pool.push_back(donors[j]);
    placebo.donor_units = pool;
    placebo.exclusions.clear();
    try {
      slots[d].unit = evaluate_unit(placebo, panel, options.fit, false, slots[d].warnings);
    } catch (const std::exception& e) {
      slots[d].error = e.what();
    }
  };

  unsigned threads = options.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : options.threads;
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(donors.size(), 1)));
  if (threads <= 1) {
    for (std::size_t d = 0; d < donors.size(); ++d) work(d);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t d = next++; d < donors.size(); d = next++) work(d);
      });
  }

  for (std::size_t d = 0; d < donors.size(); ++d) {
    auto& slot = slots[d];
    set.warnings.insert(set.warnings.end(), slot.warnings.begin(), slot.warnings.end());
    if (slot.unit) {
      set.units.push_back(std::move(*slot.unit));
    } else {
      set.failures.push_back({donors[d], slot.error});
      set.warnings.push_back(donors[d] + ": placebo fit failed and was excluded: " + slot.error);
    }
  }

  if (options.filter_multiple) {
    const double cutoff = *options.filter_multiple * set.treated().pre_mspe;
    for (auto& u : set.units)
      if (!u.treated && u.pre_mspe > cutoff) u.retained = false;
  }
  return set;
}

std::string_view to_string(Criterion c) noexcept {
  return c == Criterion::RmspeRatio ? "rmspe_ratio" : "terminal_abs_gap";
}

Criterion parse_criterion(std::string_view s) {
  if (s == "rmspe_ratio") return Criterion::RmspeRatio;
  if (s == "terminal_abs_gap") return Criterion::TerminalAbsGap;
  throw Error(ErrorCode::InvalidArgument, "criterion must be 'rmspe_ratio' or 'terminal_abs_gap', got '" + std::string(s) + "'");
}

EffectPct effect_pct(const GapSeries& gaps, int year) {
  if (year < gaps.treatment_time) throw Error(ErrorCode::YearNotInPost, std::to_string(year));
  auto it = std::find(gaps.times.begin(), gaps.times.end(), year);
  if (it == gaps.times.end()) throw Error(ErrorCode::YearNotInPost, std::to_string(year));
  const auto t = static_cast<std::size_t>(it - gaps.times.begin());
  const double actual = gaps.actual[t];
  const double synthetic = gaps.synthetic[t];
  if (synthetic == 0.0) throw Error(ErrorCode::InvalidArgument, "synthetic outcome is zero in " + std::to_string(year));
  EffectPct e;
  e.year = year;
  e.vs_synthetic = 100.0 * (actual - synthetic) / synthetic;
  e.vs_actual = actual != 0.0 ? 100.0 * (synthetic - actual) / actual : std::numeric_limits<double>::quiet_NaN();
  return e;
}

double criterion_statistic(const PlaceboUnit& unit, Criterion criterion) {
  if (criterion == Criterion::RmspeRatio) return unit.ratio;
  return std::abs(unit.gaps.gap.back());
}

InferenceSummary pseudo_p(const PlaceboSet& placebos, Criterion criterion) {
  if (placebos.units.empty() || !placebos.units.front().treated)
    throw Error(ErrorCode::InvalidArgument, "placebo set has no treated unit");
  const std::size_t retained = placebos.retained_count();
  if (retained < 2)
    throw Error(ErrorCode::DonorPoolTooSmall,
                "pseudo p-value needs at least 2 retained units, have " + std::to_string(retained));

  InferenceSummary s;
  s.criterion = criterion;
  s.retained_units = static_cast<int>(retained);
  s.treated_statistic = criterion_statistic(placebos.treated(), criterion);
  for (const auto& u : placebos.units) {
    if (u.treated || !u.retained) continue;
    if (criterion_statistic(u, criterion) > s.treated_statistic) s.exceeding_units.push_back(u.unit);
  }
  s.rank = 1 + static_cast<int>(s.exceeding_units.size());
  s.pseudo_p = static_cast<double>(s.exceeding_units.size()) / static_cast<double>(retained);

  const GapSeries& g = placebos.treated().gaps;
  for (int year : g.times)
    if (year >= g.treatment_time) s.effects.push_back(effect_pct(g, year));
  s.horizon = s.effects.back();
  return s;
}

}  // namespace scmkit
