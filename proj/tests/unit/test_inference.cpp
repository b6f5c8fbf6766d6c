#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "scmkit/error.hpp"
#include "scmkit/inference.hpp"
#include "scmkit/rng.hpp"
#include "scmkit/simlab.hpp"
#include "scmkit/study.hpp"
#include "test_support.hpp"

using namespace scmkit;

namespace {

GapSeries gaps_of(std::vector<int> times, int t0, std::vector<double> actual, std::vector<double> synthetic) {
  GapSeries g;
  g.times = std::move(times);
  g.treatment_time = t0;
  g.actual = std::move(actual);
  g.synthetic = std::move(synthetic);
  for (std::size_t i = 0; i < g.actual.size(); ++i) {
    g.gap.push_back(g.actual[i] - g.synthetic[i]);
    g.gap_pct.push_back(100.0 * g.gap.back() / g.synthetic[i]);
  }
  return g;
}

/// A placebo set whose units carry only the given ratios; the treated unit
/// comes first.
PlaceboSet with_ratios(double treated, const std::vector<double>& placebos) {
  PlaceboSet set;
  PlaceboUnit t;
  t.unit = "treated";
  t.treated = true;
  t.ratio = treated;
  t.gaps = gaps_of({2000, 2001}, 2001, {1, 2}, {1, 1});
  set.units.push_back(t);
  for (std::size_t i = 0; i < placebos.size(); ++i) {
    PlaceboUnit u;
    u.unit = "p" + std::to_string(i);
    u.ratio = placebos[i];
    u.gaps = t.gaps;
    set.units.push_back(u);
  }
  return set;
}

ErrorCode error_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::Io;
}

struct NzFixture {
  Panel panel;
  StudySpec spec;
};

const NzFixture& nz() {
  static const NzFixture f = [] {
    NzFixture x{load_panel(testkit::source_path("data/fixtures/nz_like.csv")),
                load_study_spec(testkit::source_path("configs/canterbury_2011.json"))};
    x.spec.v_strategy = VStrategy::Equal;
    return x;
  }();
  return f;
}

SimConfig small_config(std::uint64_t seed) {
  SimConfig cfg;
  cfg.donors = 6;
  cfg.periods = 20;
  cfg.treatment_index = 15;
  cfg.extra_variables = 3;
  cfg.effect_path = {0.1};
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(GapSeries, ComputedFromTheFit) {
  SimConfig cfg = small_config(3);
  cfg.noise_sd = 0.0;
  cfg.true_weights = {0, 0, 1, 0, 0, 0};
  const auto sim = generate_panel(cfg);
  const SynthFit f = fit(default_study(cfg), sim.panel);
  const GapSeries g = gap_series(f, sim.panel);
  ASSERT_EQ(g.times.size(), 20u);
  EXPECT_EQ(g.treatment_time, 2000);
  for (std::size_t i = 0; i < g.times.size(); ++i) {
    const bool post = g.times[i] >= g.treatment_time;
    EXPECT_NEAR(g.actual[i], *sim.panel.value("treated", g.times[i], "y"), 1e-12);
    EXPECT_NEAR(g.synthetic[i], *sim.panel.value("donor03", g.times[i], "y"), 1e-9);
    EXPECT_NEAR(g.gap[i], g.actual[i] - g.synthetic[i], 1e-12);
    EXPECT_NEAR(g.gap_pct[i], post ? 10.0 : 0.0, 1e-7);
  }
}

TEST(Rmspe, HandComputed) {
  const GapSeries g = gaps_of({1, 2, 3, 4}, 3, {3, 4, 2, 5}, {0, 0, 0, 0});
  EXPECT_NEAR(rmspe(g, GapWindow::Pre), 3.5355339059327378, 1e-12);
  EXPECT_NEAR(rmspe(g, GapWindow::Post), std::sqrt(14.5), 1e-12);
  EXPECT_NEAR(rmspe_ratio(g), std::sqrt(14.5) / std::sqrt(12.5), 1e-12);
}

TEST(Rmspe, RatioExamplesAndPerfectFit) {
  EXPECT_NEAR(rmspe_ratio(gaps_of({1, 2}, 2, {11, 12}, {10, 10})), 2.0, 1e-12);
  std::vector<std::string> warnings;
  const double r = rmspe_ratio(gaps_of({1, 2}, 2, {10, 12}, {10, 10}), &warnings);
  EXPECT_TRUE(std::isinf(r) && r > 0);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("PerfectPreFit"), std::string::npos);
  EXPECT_EQ(error_of([] { rmspe(gaps_of({1, 2}, 5, {1, 1}, {1, 1}), GapWindow::Post); }), ErrorCode::EmptyWindow);
}

TEST(EffectPct, BothConventions) {
  const GapSeries g = gaps_of({2014, 2015}, 2015, {100, 110}, {100, 100});
  const EffectPct e = effect_pct(g, 2015);
  EXPECT_NEAR(e.vs_synthetic, 10.0, 1e-12);
  EXPECT_NEAR(e.vs_actual, -9.0909090909, 1e-9);

  const EffectPct lower = effect_pct(gaps_of({2014, 2015}, 2015, {100, 100}, {100, 90.19}), 2015);
  EXPECT_NEAR(lower.vs_actual, -9.81, 1e-9);
  EXPECT_NEAR(lower.vs_synthetic, 100.0 * 9.81 / 90.19, 1e-9);

  EXPECT_EQ(error_of([&] { effect_pct(g, 2014); }), ErrorCode::YearNotInPost);
  EXPECT_EQ(error_of([&] { effect_pct(g, 2016); }), ErrorCode::YearNotInPost);
  EXPECT_EQ(error_of([] { effect_pct(gaps_of({1, 2}, 2, {1, 1}, {1, 0}), 2); }), ErrorCode::InvalidArgument);
}

TEST(PseudoP, ArithmeticFixtures) {
  const auto none = pseudo_p(with_ratios(10.0, std::vector<double>(14, 1.0)));
  EXPECT_EQ(none.retained_units, 15);
  EXPECT_EQ(none.pseudo_p, 0.0);
  EXPECT_EQ(none.rank, 1);

  std::vector<double> ratios(13, 1.0);
  ratios[4] = 12.0;
  const auto one = pseudo_p(with_ratios(10.0, ratios));
  EXPECT_EQ(one.retained_units, 14);
  EXPECT_NEAR(one.pseudo_p, 0.071429, 1e-6);
  EXPECT_EQ(one.exceeding_units, std::vector<std::string>{"p4"});
  EXPECT_EQ(one.rank, 2);

  // Ties do not count as exceedances.
  EXPECT_EQ(pseudo_p(with_ratios(3.0, {3.0, 3.0, 1.0})).pseudo_p, 0.0);
}

TEST(PseudoP, FilteredUnitsLeaveTheDenominator) {
  PlaceboSet set = with_ratios(2.0, {5.0, 5.0, 1.0, 1.0});
  set.units[1].retained = false;
  const auto s = pseudo_p(set);
  EXPECT_EQ(s.retained_units, 4);
  EXPECT_DOUBLE_EQ(s.pseudo_p, 0.25);

  PlaceboSet lonely = with_ratios(2.0, {5.0});
  lonely.units[1].retained = false;
  EXPECT_EQ(error_of([&] { pseudo_p(lonely); }), ErrorCode::DonorPoolTooSmall);
}

TEST(PseudoP, RelabelInvariantAndOnTheGrid) {
  SplitMix64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.next() % 15);
    std::vector<double> ratios;
    for (int i = 0; i < n; ++i) ratios.push_back(std::floor(rng.uniform(0.0, 5.0)));
    const double treated = std::floor(rng.uniform(0.0, 5.0));
    const auto a = pseudo_p(with_ratios(treated, ratios));
    std::vector<double> reversed(ratios.rbegin(), ratios.rend());
    const auto b = pseudo_p(with_ratios(treated, reversed));
    EXPECT_EQ(a.pseudo_p, b.pseudo_p);
    const double steps = a.pseudo_p * (n + 1);
    EXPECT_NEAR(steps, std::round(steps), 1e-12);
    EXPECT_GE(a.pseudo_p, 0.0);
    EXPECT_LT(a.pseudo_p, 1.0);
  }
}

TEST(PseudoP, TerminalGapCriterion) {
  PlaceboSet set = with_ratios(1.0, {1.0, 1.0});
  set.units[0].gaps = gaps_of({1, 2}, 2, {1, 4}, {1, 1});   // |gap| 3
  set.units[1].gaps = gaps_of({1, 2}, 2, {1, -5}, {1, 1});  // |gap| 6
  set.units[2].gaps = gaps_of({1, 2}, 2, {1, 2}, {1, 1});   // |gap| 1
  const auto s = pseudo_p(set, Criterion::TerminalAbsGap);
  EXPECT_EQ(s.treated_statistic, 3.0);
  EXPECT_EQ(s.exceeding_units, std::vector<std::string>{"p0"});
  EXPECT_EQ(parse_criterion(to_string(Criterion::TerminalAbsGap)), Criterion::TerminalAbsGap);
  EXPECT_EQ(error_of([] { parse_criterion("median"); }), ErrorCode::InvalidArgument);
}

TEST(Placebos, NzFixtureProducesFifteenSeries) {
  const PlaceboSet set = run_placebos(nz().spec, nz().panel);
  ASSERT_EQ(set.units.size(), 15u);
  EXPECT_TRUE(set.failures.empty());
  EXPECT_EQ(set.treated().unit, "canterbury");
  EXPECT_TRUE(set.treated().treated);
  for (std::size_t i = 1; i < set.units.size(); ++i) {
    const auto& u = set.units[i];
    EXPECT_FALSE(u.treated);
    EXPECT_EQ(u.unit, nz().spec.donor_units ? (*nz().spec.donor_units)[i - 1] : set.treated().fit.donors()[i - 1]);
    // The treated unit never serves as a donor, nor does the placebo itself.
    EXPECT_EQ(u.fit.donors().size(), 13u);
    for (const auto& d : u.fit.donors()) {
      EXPECT_NE(d, "canterbury");
      EXPECT_NE(d, u.unit);
    }
    EXPECT_EQ(u.gaps.times, set.treated().gaps.times);
  }
  const auto s = pseudo_p(set);
  EXPECT_EQ(s.retained_units, 15);
  EXPECT_EQ(s.effects.size(), 5u);
  EXPECT_EQ(s.horizon.year, 2015);
}

TEST(Placebos, FilterDropsPoorPreFits) {
  const PlaceboSet all = run_placebos(nz().spec, nz().panel);
  std::vector<double> multiples;
  for (std::size_t i = 1; i < all.units.size(); ++i) multiples.push_back(all.units[i].pre_mspe / all.treated().pre_mspe);
  const double k = median(multiples);
  PlaceboOptions options;
  options.filter_multiple = k;
  const PlaceboSet filtered = run_placebos(nz().spec, nz().panel, options);
  const double limit = k * filtered.treated().pre_mspe;
  EXPECT_TRUE(filtered.treated().retained);
  std::size_t dropped = 0;
  for (std::size_t i = 1; i < filtered.units.size(); ++i) {
    const auto& u = filtered.units[i];
    EXPECT_EQ(u.retained, u.pre_mspe <= limit) << u.unit;
    EXPECT_EQ(u.ratio, all.units[i].ratio);
    dropped += !u.retained;
  }
  EXPECT_GT(dropped, 0u);
  EXPECT_EQ(filtered.retained_count(), filtered.units.size() - dropped);
  EXPECT_EQ(pseudo_p(filtered).retained_units, static_cast<int>(filtered.units.size() - dropped));
}

TEST(Placebos, ThreadCountDoesNotChangeResults) {
  const SimConfig cfg = small_config(21);
  const auto sim = generate_panel(cfg);
  StudySpec spec = default_study(cfg);
  spec.v_strategy = VStrategy::Nested;
  spec.seed = 3;
  PlaceboOptions one, many;
  many.threads = 4;
  const PlaceboSet a = run_placebos(spec, sim.panel, one);
  const PlaceboSet b = run_placebos(spec, sim.panel, many);
  ASSERT_EQ(a.units.size(), b.units.size());
  for (std::size_t i = 0; i < a.units.size(); ++i) {
    EXPECT_EQ(a.units[i].unit, b.units[i].unit);
    EXPECT_EQ(a.units[i].fit.w, b.units[i].fit.w);
    EXPECT_EQ(a.units[i].fit.v, b.units[i].fit.v);
    EXPECT_EQ(a.units[i].ratio, b.units[i].ratio);
  }
}

TEST(Placebos, ScaleInvariance) {
  const SimConfig cfg = small_config(9);
  const auto sim = generate_panel(cfg);
  const Panel big = testkit::scaled(sim.panel, 1000.0);
  for (VStrategy strategy : {VStrategy::Equal, VStrategy::Nested}) {
    StudySpec spec = default_study(cfg);
    spec.v_strategy = strategy;
    const PlaceboSet a = run_placebos(spec, sim.panel);
    const PlaceboSet b = run_placebos(spec, big);
    for (std::size_t i = 0; i < a.units.size(); ++i) {
      for (Eigen::Index j = 0; j < a.units[i].fit.w.size(); ++j)
        EXPECT_LE(std::abs(a.units[i].fit.w(j) - b.units[i].fit.w(j)), 1e-9);
      EXPECT_LE(testkit::relative_difference(a.units[i].ratio, b.units[i].ratio), 1e-9);
      for (std::size_t t = 0; t < a.units[i].gaps.gap_pct.size(); ++t)
        EXPECT_LE(testkit::relative_difference(a.units[i].gaps.gap_pct[t], b.units[i].gaps.gap_pct[t],
                                                  testkit::kGapPctFloor),
                  1e-9)
            << a.units[i].unit << " " << t << " " << a.units[i].gaps.gap_pct[t] << " " << b.units[i].gaps.gap_pct[t]
            << " strategy " << to_string(strategy) << " gap " << a.units[i].gaps.gap[t];
    }
    EXPECT_EQ(pseudo_p(a).pseudo_p, pseudo_p(b).pseudo_p);
  }
}

TEST(Placebos, FailedPlaceboIsRecordedAndSkipped) {
  const SimConfig cfg = small_config(2);
  const auto sim = generate_panel(cfg);
  auto rows = sim.panel.observations();
  // x01 is constant across donors, so every placebo fit has a zero-variance
  // predictor while the treated fit does not.
  for (auto& o : rows)
    if (o.variable == "x01") o.value = o.unit == "treated" ? 2.0 : 1.0;
  const PlaceboSet set = run_placebos(default_study(cfg), Panel::from_observations(rows));
  EXPECT_EQ(set.units.size(), 1u);
  ASSERT_EQ(set.failures.size(), 6u);
  EXPECT_EQ(set.failures[0].unit, "donor01");
  EXPECT_NE(set.failures[0].message.find("ZeroVariancePredictor"), std::string::npos) << set.failures[0].message;
  EXPECT_EQ(error_of([&] { pseudo_p(set); }), ErrorCode::DonorPoolTooSmall);
}

TEST(Placebos, PlantedEffectSign) {
  int positive = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const SimConfig cfg = small_config(1000 + static_cast<std::uint64_t>(rep));
    const auto sim = generate_panel(cfg);
    const SynthFit f = fit(default_study(cfg), sim.panel);
    const GapSeries g = gap_series(f, sim.panel);
    double mean = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < g.times.size(); ++i)
      if (g.times[i] >= g.treatment_time) mean += g.gap_pct[i], ++n;
    positive += mean / n > 0.0;
  }
  EXPECT_GE(positive, 95);
}
