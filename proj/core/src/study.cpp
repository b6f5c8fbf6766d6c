#include "scmkit/study.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>

#include <nlohmann/json.hpp>

#include "scmkit/error.hpp"

namespace scmkit {

namespace {

using nlohmann::json;

std::string window_text(Window w) {
  return "[" + std::to_string(w.first) + ", " + std::to_string(w.last) + "]";
}

void require_unit(const Panel& panel, const std::string& unit) {
  if (!panel.unit_index(unit)) throw Error(ErrorCode::UnknownUnit, "'" + unit + "' is not in the panel");
}

void require_variable(const Panel& panel, const std::string& variable) {
  if (!panel.variable_index(variable))
    throw Error(ErrorCode::UnknownVariable, "'" + variable + "' is not in the panel");
}

void require_coverage(const Panel& panel, const std::string& unit, const std::string& variable, Window window) {
  const auto u = *panel.unit_index(unit);
  const auto v = *panel.variable_index(variable);
  for (int year = window.first; year <= window.last; ++year) {
    auto t = panel.time_index(year);
    if (!t || !panel.at(u, *t, v))
      throw Error(ErrorCode::CoverageError, "variable '" + variable + "' unit '" + unit + "' window " +
                                                window_text(window) + ": missing " + std::to_string(year));
  }
}

Window window_from_json(const json& j, const char* field) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer())
    throw Error(ErrorCode::InvalidSpec, std::string(field) + " must be [first, last] integer years");
  return {j[0].get<int>(), j[1].get<int>()};
}

std::vector<std::string> string_list(const json& j, const char* field) {
  if (!j.is_array()) throw Error(ErrorCode::InvalidSpec, std::string(field) + " must be an array of strings");
  std::vector<std::string> out;
  for (const auto& e : j) {
    if (!e.is_string()) throw Error(ErrorCode::InvalidSpec, std::string(field) + " must be an array of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

const json& required(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(ErrorCode::InvalidSpec, std::string("missing field '") + key + "'");
  return *it;
}

}  // namespace

std::string PredictorSpec::label() const {
  return variable + "[" + std::to_string(window.first) + "-" + std::to_string(window.last) + "]";
}

std::string_view to_string(VStrategy s) noexcept { return s == VStrategy::Equal ? "equal" : "nested"; }

VStrategy parse_v_strategy(std::string_view s) {
  if (s == "equal") return VStrategy::Equal;
  if (s == "nested") return VStrategy::Nested;
  throw Error(ErrorCode::InvalidSpec, "v_strategy must be 'equal' or 'nested', got '" + std::string(s) + "'");
}

StudySpec resolve_spec(const StudySpec& raw, const Panel& panel) {
  StudySpec spec = raw;

  if (spec.treated_unit.empty()) throw Error(ErrorCode::InvalidSpec, "treated_unit is empty");
  require_unit(panel, spec.treated_unit);
  require_variable(panel, spec.outcome);

  const int t0 = spec.treatment_time;
  if (spec.pre_window.last != t0 - 1)
    throw Error(ErrorCode::InvalidSpec, "pre_window must end at treatment_time - 1 = " + std::to_string(t0 - 1));
  if (spec.post_window.first != t0)
    throw Error(ErrorCode::InvalidSpec, "post_window must start at treatment_time = " + std::to_string(t0));
  if (spec.pre_window.length() < 2) throw Error(ErrorCode::InvalidSpec, "pre_window needs at least 2 periods");
  if (spec.post_window.length() < 1) throw Error(ErrorCode::InvalidSpec, "post_window needs at least 1 period");

  if (spec.predictors.empty()) throw Error(ErrorCode::InvalidSpec, "at least one predictor is required");
  for (const auto& p : spec.predictors) {
    if (p.window.first > p.window.last)
      throw Error(ErrorCode::InvalidSpec, "predictor " + p.label() + " has an empty window");
    if (p.window.last >= t0)
      throw Error(ErrorCode::InvalidSpec, "predictor " + p.label() + " window must end before treatment_time");
    require_variable(panel, p.variable);
  }

  std::set<std::string> excluded;
  for (const auto& e : spec.exclusions) {
    require_unit(panel, e);
    excluded.insert(e);
  }

  std::vector<std::string> donors;
  if (spec.donor_units) {
    std::set<std::string> listed;
    for (const auto& d : *spec.donor_units) {
      require_unit(panel, d);
      if (d == spec.treated_unit) throw Error(ErrorCode::TreatedInDonors, "'" + d + "' is the treated unit");
      if (excluded.count(d)) throw Error(ErrorCode::InvalidSpec, "'" + d + "' is both a donor and excluded");
      if (!listed.insert(d).second) throw Error(ErrorCode::InvalidSpec, "donor '" + d + "' listed twice");
    }
    for (const auto& u : panel.units())
      if (listed.count(u)) donors.push_back(u);
  } else {
    for (const auto& u : panel.units())
      if (u != spec.treated_unit && !excluded.count(u)) donors.push_back(u);
  }
  if (donors.size() < 2)
    throw Error(ErrorCode::DonorPoolTooSmall, "need at least 2 donors, have " + std::to_string(donors.size()));
  spec.donor_units = donors;

  const Window outcome_window{spec.pre_window.first, spec.post_window.last};
  std::vector<std::string> units{spec.treated_unit};
  units.insert(units.end(), donors.begin(), donors.end());
  for (const auto& u : units) {
    require_coverage(panel, u, spec.outcome, outcome_window);
    for (const auto& p : spec.predictors) require_coverage(panel, u, p.variable, p.window);
  }
  return spec;
}

Eigen::MatrixXd raw_predictor_matrix(const StudySpec& spec, const Panel& panel) {
  if (!spec.donor_units) throw Error(ErrorCode::InvalidSpec, "spec is not resolved");
  const auto& donors = *spec.donor_units;
  const auto k_count = static_cast<Eigen::Index>(spec.predictors.size());
  const auto n = static_cast<Eigen::Index>(donors.size() + 1);

  Eigen::MatrixXd raw(k_count, n);
  for (Eigen::Index k = 0; k < k_count; ++k) {
    const auto& p = spec.predictors[static_cast<std::size_t>(k)];
    for (Eigen::Index c = 0; c < n; ++c) {
      const std::string& unit = c == 0 ? spec.treated_unit : donors[static_cast<std::size_t>(c - 1)];
      const auto values = panel.series(unit, p.variable, p.window);
      double sum = 0.0;
      for (double x : values) sum += x;
      raw(k, c) = sum / static_cast<double>(values.size());
    }
  }
  return raw;
}

PredictorBlock build_matrices(const StudySpec& spec, const Panel& panel) {
  const Eigen::MatrixXd raw = raw_predictor_matrix(spec, panel);
  const auto& donors = *spec.donor_units;
  const Eigen::Index k_count = raw.rows();
  const Eigen::Index n = raw.cols();
  const auto j_count = static_cast<Eigen::Index>(donors.size());

  PredictorBlock block;
  block.scale.resize(k_count);
  for (Eigen::Index k = 0; k < k_count; ++k) {
    const double mean = raw.row(k).mean();
    const double ss = (raw.row(k).array() - mean).square().sum();
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    const double magnitude = raw.row(k).cwiseAbs().maxCoeff();
    if (!(sd > 1e-12 * magnitude) || sd == 0.0)
      throw Error(ErrorCode::ZeroVariancePredictor,
                  "predictor " + std::to_string(k) + " (" + spec.predictors[static_cast<std::size_t>(k)].label() +
                      ") is constant across units");
    block.scale(k) = sd;
  }
  const Eigen::MatrixXd standardized = block.scale.cwiseInverse().asDiagonal() * raw;
  block.treated_predictors = standardized.col(0);
  block.donor_predictors = standardized.rightCols(j_count);

  const Window pre = spec.pre_window;
  const auto p_count = static_cast<Eigen::Index>(pre.length());
  block.treated_outcomes.resize(p_count);
  block.donor_outcomes.resize(p_count, j_count);
  const auto treated = panel.series(spec.treated_unit, spec.outcome, pre);
  for (Eigen::Index t = 0; t < p_count; ++t) block.treated_outcomes(t) = treated[static_cast<std::size_t>(t)];
  for (Eigen::Index j = 0; j < j_count; ++j) {
    const auto y = panel.series(donors[static_cast<std::size_t>(j)], spec.outcome, pre);
    for (Eigen::Index t = 0; t < p_count; ++t) block.donor_outcomes(t, j) = y[static_cast<std::size_t>(t)];
  }
  block.pre_times.reserve(static_cast<std::size_t>(p_count));
  for (int year = pre.first; year <= pre.last; ++year) block.pre_times.push_back(year);
  return block;
}

StudySpec parse_study_spec(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidSpec, std::string("study config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::InvalidSpec, "study config must be a JSON object");

  static const std::set<std::string> known{"treated_unit", "donor_units", "exclusions", "treatment_time",
                                           "outcome",      "predictors",  "pre_window", "post_window",
                                           "v_strategy",   "seed",        "description"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw Error(ErrorCode::InvalidSpec, "unknown field '" + key + "'");

  StudySpec spec;
  try {
    spec.treated_unit = required(j, "treated_unit").get<std::string>();
    if (auto it = j.find("donor_units"); it != j.end() && !it->is_null())
      spec.donor_units = string_list(*it, "donor_units");
    if (auto it = j.find("exclusions"); it != j.end()) spec.exclusions = string_list(*it, "exclusions");
    spec.treatment_time = required(j, "treatment_time").get<int>();
    spec.outcome = required(j, "outcome").get<std::string>();
    const json& preds = required(j, "predictors");
    if (!preds.is_array()) throw Error(ErrorCode::InvalidSpec, "predictors must be an array");
    for (const auto& p : preds) {
      PredictorSpec ps;
      ps.variable = required(p, "variable").get<std::string>();
      ps.window = window_from_json(required(p, "window"), "predictor window");
      if (auto it = p.find("aggregation"); it != p.end() && it->get<std::string>() != "mean")
        throw Error(ErrorCode::InvalidSpec, "only 'mean' aggregation is supported");
      spec.predictors.push_back(std::move(ps));
    }
    spec.pre_window = window_from_json(required(j, "pre_window"), "pre_window");
    spec.post_window = window_from_json(required(j, "post_window"), "post_window");
    if (auto it = j.find("v_strategy"); it != j.end()) spec.v_strategy = parse_v_strategy(it->get<std::string>());
    if (auto it = j.find("seed"); it != j.end()) {
      if (!it->is_number_unsigned()) throw Error(ErrorCode::InvalidSpec, "seed must be a non-negative integer");
      spec.seed = it->get<std::uint64_t>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, std::string("study config has a field of the wrong type: ") + e.what());
  }
  return spec;
}

StudySpec load_study_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open study config '" + path.string() + "'");
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_study_spec(text);
}

std::string study_spec_to_json(const StudySpec& spec) {
  json j;
  j["treated_unit"] = spec.treated_unit;
  j["donor_units"] = spec.donor_units ? json(*spec.donor_units) : json(nullptr);
  j["exclusions"] = spec.exclusions;
  j["treatment_time"] = spec.treatment_time;
  j["outcome"] = spec.outcome;
  j["predictors"] = json::array();
  for (const auto& p : spec.predictors)
    j["predictors"].push_back({{"variable", p.variable},
                               {"window", {p.window.first, p.window.last}},
                               {"aggregation", "mean"}});
  j["pre_window"] = {spec.pre_window.first, spec.pre_window.last};
  j["post_window"] = {spec.post_window.first, spec.post_window.last};
  j["v_strategy"] = std::string(to_string(spec.v_strategy));
  j["seed"] = spec.seed;
  return j.dump(2) + "\n";
}

}  // namespace scmkit
