#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#include "scmkit/error.hpp"
#include "scmkit/panel.hpp"
#include "scmkit/solver.hpp"
#include "scmkit/study.hpp"
#include "test_support.hpp"

using namespace scmkit;
using scmkit::testkit::panel_of;
using scmkit::testkit::source_path;

namespace {

const Panel& chile() {
  static const Panel p = load_panel(source_path("data/fixtures/chile_like.csv"));
  return p;
}

const Panel& nz() {
  static const Panel p = load_panel(source_path("data/fixtures/nz_like.csv"));
  return p;
}

// Three units, outcome y over 2000-2006, predictor x.
Panel small_panel() {
  return panel_of({
      {"a", "y", 2000, {1, 2, 3, 4, 5, 6, 7}},
      {"b", "y", 2000, {2, 3, 4, 5, 6, 7, 8}},
      {"c", "y", 2000, {0, 1, 1, 2, 2, 3, 3}},
      {"a", "x", 2000, {1, 2, 3, 4, 5, 0, 0}},
      {"b", "x", 2000, {2, 2, 2, 2, 2, 0, 0}},
      {"c", "x", 2000, {3, 3, 3, 3, 3, 0, 0}},
  });
}

StudySpec small_spec() {
  StudySpec s;
  s.treated_unit = "a";
  s.treatment_time = 2005;
  s.outcome = "y";
  s.predictors = {{"x", {2000, 2004}}};
  s.pre_window = {2000, 2004};
  s.post_window = {2005, 2006};
  return s;
}

ErrorCode resolve_error(const StudySpec& s, const Panel& p) {
  try {
    resolve_spec(s, p);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "resolve_spec accepted an invalid spec";
  return ErrorCode::Io;
}

}  // namespace

TEST(ResolveSpec, ChileDonorPool) {
  const StudySpec s = resolve_spec(load_study_spec(source_path("configs/maule_2010.json")), chile());
  EXPECT_EQ(chile().units().size(), 13u);
  ASSERT_TRUE(s.donor_units);
  EXPECT_EQ(s.donor_units->size(), 11u);
  EXPECT_EQ(std::count(s.donor_units->begin(), s.donor_units->end(), "biobio"), 0);
  EXPECT_EQ(std::count(s.donor_units->begin(), s.donor_units->end(), "maule"), 0);
  EXPECT_TRUE(std::is_sorted(s.donor_units->begin(), s.donor_units->end()));
}

TEST(ResolveSpec, NzDonorPool) {
  const StudySpec s = resolve_spec(load_study_spec(source_path("configs/canterbury_2011.json")), nz());
  EXPECT_EQ(nz().units().size(), 15u);
  EXPECT_EQ(s.donor_units->size(), 14u);
}

TEST(ResolveSpec, IsIdempotentAndKeepsPanelOrder) {
  StudySpec raw = small_spec();
  raw.donor_units = std::vector<std::string>{"c", "b"};
  const StudySpec once = resolve_spec(raw, small_panel());
  EXPECT_EQ(*once.donor_units, (std::vector<std::string>{"b", "c"}));
  EXPECT_EQ(resolve_spec(once, small_panel()), once);
}

TEST(ResolveSpec, Rejections) {
  const Panel p = small_panel();
  StudySpec s = small_spec();
  s.donor_units = std::vector<std::string>{"a", "b"};
  EXPECT_EQ(resolve_error(s, p), ErrorCode::TreatedInDonors);

  s = small_spec();
  s.exclusions = {"b"};
  EXPECT_EQ(resolve_error(s, p), ErrorCode::DonorPoolTooSmall);

  s = small_spec();
  s.treated_unit = "zz";
  EXPECT_EQ(resolve_error(s, p), ErrorCode::UnknownUnit);

  s = small_spec();
  s.outcome = "gdp";
  EXPECT_EQ(resolve_error(s, p), ErrorCode::UnknownVariable);

  s = small_spec();
  s.pre_window = {2000, 2003};
  EXPECT_EQ(resolve_error(s, p), ErrorCode::InvalidSpec);

  s = small_spec();
  s.pre_window = {2004, 2004};
  EXPECT_EQ(resolve_error(s, p), ErrorCode::InvalidSpec);

  s = small_spec();
  s.post_window = {2006, 2006};
  EXPECT_EQ(resolve_error(s, p), ErrorCode::InvalidSpec);

  s = small_spec();
  s.predictors = {{"x", {2003, 2005}}};
  EXPECT_EQ(resolve_error(s, p), ErrorCode::InvalidSpec);

  s = small_spec();
  s.predictors.clear();
  EXPECT_EQ(resolve_error(s, p), ErrorCode::InvalidSpec);
}

TEST(ResolveSpec, CoverageErrorNamesUnitAndWindow) {
  auto rows = small_panel().observations();
  std::erase_if(rows, [](const Observation& o) { return o.unit == "c" && o.variable == "y" && o.time == 2006; });
  try {
    resolve_spec(small_spec(), Panel::from_observations(rows));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CoverageError);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'c'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("2000"), std::string::npos) << msg;
    EXPECT_NE(msg.find("2006"), std::string::npos) << msg;
  }
}

TEST(BuildMatrices, WindowMeansAndSampleSd) {
  const StudySpec s = resolve_spec(small_spec(), small_panel());
  const Eigen::MatrixXd raw = raw_predictor_matrix(s, small_panel());
  // treated x over 2000..2004 = (1,2,3,4,5) -> 3; donors b -> 2, c -> 3.
  EXPECT_DOUBLE_EQ(raw(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(raw(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(raw(0, 2), 3.0);

  const PredictorBlock b = build_matrices(s, small_panel());
  const double sd = std::sqrt(((3.0 - 8.0 / 3) * (3.0 - 8.0 / 3) * 2 + (2.0 - 8.0 / 3) * (2.0 - 8.0 / 3)) / 2.0);
  EXPECT_NEAR(b.scale(0), sd, 1e-15);
  EXPECT_NEAR(b.treated_predictors(0), 3.0 / sd, 1e-14);
  EXPECT_NEAR(b.donor_predictors(0, 0), 2.0 / sd, 1e-14);
  ASSERT_EQ(b.treated_outcomes.size(), 5);
  EXPECT_DOUBLE_EQ(b.treated_outcomes(4), 5.0);
  EXPECT_DOUBLE_EQ(b.donor_outcomes(0, 1), 0.0);
  EXPECT_EQ(b.pre_times, (std::vector<int>{2000, 2001, 2002, 2003, 2004}));
}

TEST(BuildMatrices, SingleYearWindowAndUnitSd) {
  const Panel p = panel_of({
      {"a", "y", 2000, {1, 2, 3}},
      {"b", "y", 2000, {2, 3, 4}},
      {"c", "y", 2000, {5, 1, 2}},
      {"a", "x", 2001, {1}},
      {"b", "x", 2001, {2}},
      {"c", "x", 2001, {3}},
  });
  StudySpec s;
  s.treated_unit = "a";
  s.treatment_time = 2002;
  s.outcome = "y";
  s.predictors = {{"x", {2001, 2001}}};
  s.pre_window = {2000, 2001};
  s.post_window = {2002, 2002};
  const StudySpec r = resolve_spec(s, p);
  const PredictorBlock b = build_matrices(r, p);
  // (1,2,3) has sample sd 1, so the standardized row is unchanged.
  EXPECT_NEAR(b.scale(0), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(b.treated_predictors(0), 1.0);
  EXPECT_DOUBLE_EQ(b.donor_predictors(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(b.donor_predictors(0, 1), 3.0);
}

TEST(BuildMatrices, ZeroVariancePredictor) {
  const Panel p = panel_of({
      {"a", "y", 2000, {1, 2, 3}},
      {"b", "y", 2000, {2, 3, 4}},
      {"c", "y", 2000, {5, 1, 2}},
      {"a", "x", 2000, {7, 7}},
      {"b", "x", 2000, {7, 7}},
      {"c", "x", 2000, {7, 7}},
  });
  StudySpec s;
  s.treated_unit = "a";
  s.treatment_time = 2002;
  s.outcome = "y";
  s.predictors = {{"y", {2000, 2001}}, {"x", {2000, 2001}}};
  s.pre_window = {2000, 2001};
  s.post_window = {2002, 2002};
  try {
    build_matrices(resolve_spec(s, p), p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroVariancePredictor);
    EXPECT_NE(std::string(e.what()).find("predictor 1"), std::string::npos) << e.what();
  }
}

TEST(BuildMatrices, ScaleInvariancePerVariable) {
  const StudySpec s = resolve_spec(load_study_spec(source_path("configs/maule_2010.json")), chile());
  const PredictorBlock base = build_matrices(s, chile());

  auto rows = chile().observations();
  for (auto& o : rows) {
    if (o.variable == "gdp_pc") o.value *= 1000.0;
    if (o.variable == "share_mining") o.value *= 0.37;
  }
  const Panel scaled = Panel::from_observations(rows);
  const PredictorBlock b = build_matrices(s, scaled);
  EXPECT_LE((b.treated_predictors - base.treated_predictors).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((b.donor_predictors - base.donor_predictors).cwiseAbs().maxCoeff(), 1e-12);

  StudySpec es = s;
  es.v_strategy = VStrategy::Equal;
  EXPECT_LE((fit(es, scaled).w - fit(es, chile()).w).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(StudyJson, RoundTripAndStrictness) {
  const StudySpec s = load_study_spec(source_path("configs/canterbury_2011.json"));
  EXPECT_EQ(s.treated_unit, "canterbury");
  EXPECT_EQ(s.treatment_time, 2011);
  EXPECT_EQ(s.pre_window, (Window{1987, 2010}));
  EXPECT_EQ(s.post_window, (Window{2011, 2015}));
  EXPECT_EQ(s.predictors.front().label(), "gdp_pc[2006-2010]");
  EXPECT_EQ(s.v_strategy, VStrategy::Nested);
  EXPECT_EQ(parse_study_spec(study_spec_to_json(s)), s);

  auto code = [](const std::string& text) {
    try {
      parse_study_spec(text);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Io;
  };
  EXPECT_EQ(code("{"), ErrorCode::InvalidSpec);
  EXPECT_EQ(code("[]"), ErrorCode::InvalidSpec);
  EXPECT_EQ(code(R"({"treated_unit":"a","colour":1})"), ErrorCode::InvalidSpec);
  EXPECT_EQ(code(R"({"treated_unit":"a","treatment_time":2000,"outcome":"y","predictors":[],
                     "pre_window":[1990],"post_window":[2000,2001]})"),
            ErrorCode::InvalidSpec);
  EXPECT_EQ(code(R"({"treated_unit":"a","treatment_time":2000,"outcome":"y",
                     "predictors":[{"variable":"y","window":[1990,1999],"aggregation":"median"}],
                     "pre_window":[1990,1999],"post_window":[2000,2001]})"),
            ErrorCode::InvalidSpec);
  EXPECT_EQ(code(R"({"treated_unit":"a","treatment_time":2000,"outcome":"y",
                     "predictors":[{"variable":"y","window":[1990,1999]}],
                     "pre_window":[1990,1999],"post_window":[2000,2001],"v_strategy":"best"})"),
            ErrorCode::InvalidSpec);
  EXPECT_EQ(code(R"({"treated_unit":"a","treatment_time":2000,"outcome":"y",
                     "predictors":[{"variable":"y","window":[1990,1999]}],
                     "pre_window":[1990,1999],"post_window":[2000,2001],"seed":-1})"),
            ErrorCode::InvalidSpec);
  EXPECT_THROW(load_study_spec(source_path("configs/does_not_exist.json")), Error);
}

TEST(StudyJson, EveryBundledConfigResolvesOnItsFixture) {
  for (const auto& entry : std::filesystem::directory_iterator(source_path("configs"))) {
    const auto name = entry.path().filename().string();
    const Panel& p = name.starts_with("maule") ? chile() : nz();
    SCOPED_TRACE(name);
    const StudySpec s = resolve_spec(load_study_spec(entry.path()), p);
    EXPECT_EQ(s.donor_units->size(), name.starts_with("maule") ? 11u : 14u);
    EXPECT_NO_THROW(build_matrices(s, p));
  }
}
