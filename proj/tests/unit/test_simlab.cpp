#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "scmkit/error.hpp"
#include "scmkit/simlab.hpp"
#include "test_support.hpp"

using namespace scmkit;

namespace {

ErrorCode error_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::Io;
}

RecoveryOptions without_placebos() {
  RecoveryOptions o;
  o.placebos = false;
  return o;
}

}  // namespace

TEST(GeneratePanel, ShapeAndNames) {
  SimConfig cfg;
  cfg.donors = 3;
  cfg.periods = 10;
  cfg.treatment_index = 7;
  cfg.extra_variables = 2;
  cfg.noise_variables = 1;
  const auto sim = generate_panel(cfg);
  EXPECT_EQ(sim.panel.units(), (std::vector<std::string>{"donor01", "donor02", "donor03", "treated"}));
  EXPECT_EQ(sim.panel.variables(), (std::vector<std::string>{"noise01", "x01", "x02", "y"}));
  EXPECT_EQ(sim.panel.observation_count(), 4u * 10u * 4u);
  EXPECT_EQ(sim.truth.post_years, (std::vector<int>{1992, 1993, 1994}));
  EXPECT_EQ(sim.truth.effect, (std::vector<double>{0, 0, 0}));
  EXPECT_NEAR(std::accumulate(sim.truth.true_weights.begin(), sim.truth.true_weights.end(), 0.0), 1.0, 1e-12);
}

TEST(GeneratePanel, LateStartingVariable) {
  SimConfig cfg;
  cfg.donors = 2;
  cfg.periods = 10;
  cfg.treatment_index = 7;
  cfg.extra_variables = 1;
  cfg.extra_names = {{"tertiary", 4}};
  const auto sim = generate_panel(cfg);
  EXPECT_FALSE(sim.panel.value("donor01", 1988, "tertiary"));
  EXPECT_TRUE(sim.panel.value("donor01", 1989, "tertiary"));
  const StudySpec s = default_study(cfg);
  EXPECT_EQ(s.predictors.back().window, (Window{1989, 1991}));
}

TEST(GeneratePanel, DeterministicPerSeed) {
  SimConfig cfg;
  cfg.seed = 42;
  const auto a = generate_panel(cfg);
  const auto b = generate_panel(cfg);
  EXPECT_EQ(panel_to_csv(a.panel), panel_to_csv(b.panel));
  EXPECT_EQ(ground_truth_to_json(a.truth), ground_truth_to_json(b.truth));
  cfg.seed = 43;
  EXPECT_NE(panel_to_csv(generate_panel(cfg).panel), panel_to_csv(a.panel));
}

TEST(GeneratePanel, TreatedIsThePlantedCombination) {
  SimConfig cfg;
  cfg.noise_sd = 0.0;
  cfg.effect_path = {0.1};
  cfg.seed = 8;
  const auto sim = generate_panel(cfg);
  for (int year : sim.panel.times()) {
    double synthetic = 0.0;
    for (std::size_t j = 0; j < sim.truth.donors.size(); ++j)
      synthetic += sim.truth.true_weights[j] * *sim.panel.value(sim.truth.donors[j], year, "y");
    const double factor = year >= sim.truth.post_years.front() ? 1.1 : 1.0;
    EXPECT_NEAR(*sim.panel.value("treated", year, "y"), factor * synthetic, 1e-9 * synthetic);
    EXPECT_NEAR(*sim.panel.value("treated", year, "x01"),
                [&] {
                  double s = 0.0;
                  for (std::size_t j = 0; j < sim.truth.donors.size(); ++j)
                    s += sim.truth.true_weights[j] * *sim.panel.value(sim.truth.donors[j], year, "x01");
                  return s;
                }(),
                1e-9);
  }
}

TEST(GeneratePanel, ExactRecoveryWithoutNoise) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SimConfig cfg;
    cfg.noise_sd = 0.0;
    cfg.seed = seed;
    const auto sim = generate_panel(cfg);
    const SynthFit f = fit(default_study(cfg), sim.panel);
    for (std::size_t j = 0; j < sim.truth.donors.size(); ++j)
      EXPECT_NEAR(f.weight_of(sim.truth.donors[j]), sim.truth.true_weights[j], 1e-4) << "seed " << seed;
    EXPECT_LE(f.pre_rmspe, 1e-9);
  }
}

TEST(Recovery, MeanEffectNearThePlantedTen) {
  SimConfig cfg;
  cfg.effect_path = {0.1};
  cfg.seed = 100;
  const auto rec = recovery_report(cfg, 50, without_placebos());
  double mean = 0.0;
  for (const auto& r : rec.rows) {
    EXPECT_NEAR(r.true_mean_effect_pct, 10.0, 1e-12);
    mean += r.mean_effect_pct;
  }
  mean /= static_cast<double>(rec.rows.size());
  EXPECT_NEAR(mean, 10.0, 1.0);
  EXPECT_NEAR(rec.effect_bias, mean - 10.0, 1e-9);
}

TEST(Recovery, SingleReplication) {
  SimConfig cfg;
  cfg.seed = 5;
  const auto rec = recovery_report(cfg, 1);
  ASSERT_EQ(rec.rows.size(), 1u);
  EXPECT_EQ(rec.rows[0].seed, 5u);
  EXPECT_FALSE(std::isnan(rec.rows[0].pseudo_p));
  const std::string csv = recovery_csv(rec);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_EQ(csv.rfind("replication,seed,", 0), 0u);

  const auto bare = recovery_report(cfg, 3, without_placebos());
  EXPECT_TRUE(std::isnan(bare.rows[0].pseudo_p));
  EXPECT_TRUE(std::isnan(bare.fraction_p_zero));
}

TEST(Recovery, PlaceboSizeWithoutEffect) {
  SimConfig cfg;
  cfg.seed = 7000;
  const auto rec = recovery_report(cfg, 200);
  // With 9 exchangeable units p <= 0.1 means p = 0, which has probability 1/9.
  EXPECT_GE(rec.fraction_p_at_most_tenth, 0.02);
  EXPECT_LE(rec.fraction_p_at_most_tenth, 0.25);
}

TEST(Recovery, TreatedRatioStandsOutUnderAnEffect) {
  SimConfig cfg;
  cfg.effect_path = {0.1};
  cfg.seed = 300;
  const auto rec = recovery_report(cfg, 20);
  EXPECT_GT(rec.median_treated_ratio, rec.median_placebo_ratio);
  EXPECT_GT(rec.fraction_p_zero, 0.5);
}

TEST(Recovery, DegradesWithNoise) {
  double previous = -1.0;
  for (double noise : {0.2, 2.0, 8.0}) {
    SimConfig cfg;
    cfg.noise_sd = noise;
    cfg.seed = 900;
    const double rmse = recovery_report(cfg, 30, without_placebos()).mean_weight_rmse;
    EXPECT_GT(rmse, previous) << noise;
    previous = rmse;
  }
}

TEST(SimConfig, Validation) {
  auto bad = [](auto mutate) {
    SimConfig cfg;
    mutate(cfg);
    return error_of([&] { validate(cfg); });
  };
  EXPECT_EQ(bad([](SimConfig& c) { c.donors = 1; }), ErrorCode::InvalidConfig);
  EXPECT_EQ(bad([](SimConfig& c) { c.treatment_index = 31; }), ErrorCode::InvalidConfig);
  EXPECT_EQ(bad([](SimConfig& c) { c.treatment_index = 40; }), ErrorCode::InvalidConfig);
  EXPECT_EQ(bad([](SimConfig& c) { c.noise_sd = -1; }), ErrorCode::InvalidConfig);
  EXPECT_EQ(bad([](SimConfig& c) { c.effect_path = {0.1, 0.2}; }), ErrorCode::InvalidConfig);
  EXPECT_EQ(bad([](SimConfig& c) { c.effect_path = {-1.0}; }), ErrorCode::InvalidConfig);
  EXPECT_EQ(bad([](SimConfig& c) { c.true_weights = {0.5, 0.6, 0, 0, 0, 0, 0, 0}; }), ErrorCode::InvalidConfig);
  EXPECT_EQ(bad([](SimConfig& c) { c.true_weights = {1.0}; }), ErrorCode::InvalidConfig);
  EXPECT_EQ(bad([](SimConfig& c) { c.donor_names = {"a"}; }), ErrorCode::InvalidConfig);
  EXPECT_EQ(bad([](SimConfig& c) {
              c.donors = 2;
              c.donor_names = {"treated", "b"};
            }),
            ErrorCode::InvalidConfig);
  EXPECT_EQ(error_of([] { recovery_report(SimConfig{}, 0); }), ErrorCode::InvalidConfig);
}

TEST(SimConfig, JsonRoundTripOfBundledFixtures) {
  for (const char* name : {"data/fixtures/chile_like.sim.json", "data/fixtures/nz_like.sim.json"}) {
    const SimConfig cfg = load_sim_config(testkit::source_path(name));
    EXPECT_NO_THROW(validate(cfg));
    const Panel shipped = load_panel(testkit::source_path(std::string(name).replace(std::string(name).find(".sim.json"), 9, ".csv")));
    EXPECT_EQ(generate_panel(cfg).panel, shipped) << name;
  }
  EXPECT_EQ(error_of([] { parse_sim_config(R"({"donors": 3, "colour": 1})"); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(error_of([] { parse_sim_config("{"); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(parse_sim_config(R"({"donors": 3})").donors, 3);
}
