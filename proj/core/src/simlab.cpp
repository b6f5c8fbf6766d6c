#include "scmkit/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "scmkit/error.hpp"
#include "scmkit/rng.hpp"

namespace scmkit {

namespace {

using nlohmann::json;

constexpr double kArCoefficient = 0.5;

std::string numbered(std::string_view prefix, int i, int count) {
  const int digits = std::max(2, static_cast<int>(std::to_string(count).size()));
  std::string n = std::to_string(i + 1);
  return std::string(prefix) + std::string(static_cast<std::size_t>(digits) - std::min(n.size(), std::size_t(digits)), '0') + n;
}

[[noreturn]] void invalid(const std::string& why) { throw Error(ErrorCode::InvalidConfig, why); }

std::vector<double> effect_by_post_period(const SimConfig& cfg) {
  const auto post = static_cast<std::size_t>(cfg.periods - cfg.treatment_index);
  if (cfg.effect_path.empty()) return std::vector<double>(post, 0.0);
  if (cfg.effect_path.size() == 1) return std::vector<double>(post, cfg.effect_path.front());
  return cfg.effect_path;
}

// AR(1) path with a stationary start.
std::vector<double> ar1_path(SplitMix64& rng, int periods, double sd) {
  std::vector<double> e(static_cast<std::size_t>(periods));
  double prev = sd / std::sqrt(1.0 - kArCoefficient * kArCoefficient) * rng.normal();
  e[0] = prev;
  for (int t = 1; t < periods; ++t) {
    prev = kArCoefficient * prev + sd * rng.normal();
    e[static_cast<std::size_t>(t)] = prev;
  }
  return e;
}

}  // namespace

std::vector<std::string> sim_donor_names(const SimConfig& cfg) {
  if (!cfg.donor_names.empty()) return cfg.donor_names;
  std::vector<std::string> out;
  for (int j = 0; j < cfg.donors; ++j) out.push_back(numbered("donor", j, cfg.donors));
  return out;
}

std::vector<SimVariable> sim_extra_variables(const SimConfig& cfg) {
  if (!cfg.extra_names.empty()) return cfg.extra_names;
  std::vector<SimVariable> out;
  for (int m = 0; m < cfg.extra_variables; ++m) out.push_back({numbered("x", m, cfg.extra_variables), 0});
  return out;
}

std::vector<std::string> sim_noise_variable_names(const SimConfig& cfg) {
  std::vector<std::string> out;
  for (int m = 0; m < cfg.noise_variables; ++m) out.push_back(numbered("noise", m, cfg.noise_variables));
  return out;
}

void validate(const SimConfig& cfg) {
  if (cfg.donors < 2) invalid("donors must be at least 2");
  if (cfg.periods < 4) invalid("periods must be at least 4");
  if (!(cfg.treatment_index > 2 && cfg.treatment_index < cfg.periods))
    invalid("treatment_index must satisfy 2 < treatment_index < periods (got " + std::to_string(cfg.treatment_index) +
            " with periods " + std::to_string(cfg.periods) + ")");
  if (cfg.extra_variables < 0 || cfg.noise_variables < 0) invalid("variable counts must be non-negative");
  if (!(cfg.noise_sd >= 0.0) || !std::isfinite(cfg.noise_sd)) invalid("noise_sd must be finite and >= 0");
  if (!(cfg.level_spread >= 0.0) || !(cfg.slope_spread >= 0.0)) invalid("spreads must be >= 0");
  if (!std::isfinite(cfg.level_centre) || !std::isfinite(cfg.slope_centre) || !(cfg.extra_level_centre > 0.0))
    invalid("level and slope centres must be finite; extra_level_centre must be > 0");
  if (!(cfg.level_centre > 0.0)) invalid("level_centre must be > 0");
  const auto post = static_cast<std::size_t>(cfg.periods - cfg.treatment_index);
  if (cfg.effect_path.size() > 1 && cfg.effect_path.size() != post)
    invalid("effect_path must have 0, 1 or " + std::to_string(post) + " entries");
  for (double e : cfg.effect_path)
    if (!std::isfinite(e) || e <= -1.0) invalid("effects must be finite and > -1");
  if (!cfg.true_weights.empty()) {
    if (cfg.true_weights.size() != static_cast<std::size_t>(cfg.donors)) invalid("true_weights must have one entry per donor");
    double sum = 0.0;
    for (double w : cfg.true_weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) invalid("true_weights must be non-negative");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) invalid("true_weights must sum to 1");
  }
  if (cfg.treated_name.empty() || cfg.outcome_name.empty()) invalid("names must be non-empty");
  if (!cfg.donor_names.empty() && cfg.donor_names.size() != static_cast<std::size_t>(cfg.donors))
    invalid("donor_names must have one entry per donor");
  if (!cfg.extra_names.empty() && cfg.extra_names.size() != static_cast<std::size_t>(cfg.extra_variables))
    invalid("extra variable names must have one entry per extra variable");

  std::set<std::string> units{cfg.treated_name};
  for (const auto& d : sim_donor_names(cfg))
    if (d.empty() || !units.insert(d).second) invalid("unit names must be non-empty and unique");
  std::set<std::string> vars{cfg.outcome_name};
  for (const auto& x : sim_extra_variables(cfg)) {
    if (x.name.empty() || !vars.insert(x.name).second) invalid("variable names must be non-empty and unique");
    if (x.first_index < 0 || x.first_index >= cfg.treatment_index)
      invalid("variable '" + x.name + "' must start before the treatment period");
  }
  for (const auto& x : sim_noise_variable_names(cfg))
    if (!vars.insert(x).second) invalid("variable names must be unique");
  for (const auto& name : units)
    if (name.find(',') != std::string::npos) invalid("unit names must not contain commas");
}

SimulatedPanel generate_panel(const SimConfig& cfg) {
  validate(cfg);
  const int J = cfg.donors;
  const int T = cfg.periods;
  const auto donors = sim_donor_names(cfg);
  const auto extras = sim_extra_variables(cfg);
  const auto noise_vars = sim_noise_variable_names(cfg);
  const int planted = 1 + static_cast<int>(extras.size());
  const int variable_count = planted + static_cast<int>(noise_vars.size());

  std::vector<double> weights = cfg.true_weights;
  if (weights.empty()) {
    auto rng = SplitMix64::stream(cfg.seed, 0);
    std::vector<double> u(static_cast<std::size_t>(J));
    for (auto& x : u) x = rng.uniform();
    std::vector<bool> in(static_cast<std::size_t>(J));
    int count = 0;
    for (int j = 0; j < J; ++j) count += (in[static_cast<std::size_t>(j)] = u[static_cast<std::size_t>(j)] < 0.5);
    if (count < 2) {
      std::vector<int> idx(static_cast<std::size_t>(J));
      std::iota(idx.begin(), idx.end(), 0);
      std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return u[static_cast<std::size_t>(a)] < u[static_cast<std::size_t>(b)]; });
      in[static_cast<std::size_t>(idx[0])] = in[static_cast<std::size_t>(idx[1])] = true;
    }
    weights.assign(static_cast<std::size_t>(J), 0.0);
    double sum = 0.0;
    for (int j = 0; j < J; ++j) {
      const double draw = rng.uniform(0.1, 1.0);
      if (in[static_cast<std::size_t>(j)]) {
        weights[static_cast<std::size_t>(j)] = draw;
        sum += draw;
      }
    }
    for (auto& w : weights) w /= sum;
  }

  // levels[j][m], slopes[j][m] for planted variables.
  std::vector<std::vector<double>> levels(static_cast<std::size_t>(J)), slopes(static_cast<std::size_t>(J));
  {
    auto rng = SplitMix64::stream(cfg.seed, 1);
    for (int j = 0; j < J; ++j) {
      for (int m = 0; m < planted; ++m) {
        double level, slope;
        if (m == 0) {
          level = cfg.level_centre + cfg.level_spread * rng.uniform(-1.0, 1.0);
          slope = cfg.slope_centre + cfg.slope_spread * rng.uniform(-1.0, 1.0);
        } else {
          level = cfg.extra_level_centre * rng.uniform(0.5, 1.5);
          slope = cfg.extra_level_centre * 0.02 * rng.uniform(-1.0, 1.0);
        }
        levels[static_cast<std::size_t>(j)].push_back(level);
        slopes[static_cast<std::size_t>(j)].push_back(slope);
      }
    }
  }

  auto noise_stream = [&](int unit, int m) {
    return SplitMix64::stream(cfg.seed, 2 + static_cast<std::uint64_t>(unit) * static_cast<std::uint64_t>(variable_count) +
                                            static_cast<std::uint64_t>(m));
  };
  auto noise_sd_for = [&](int m) {
    return m == 0 ? cfg.noise_sd : cfg.noise_sd * cfg.extra_level_centre / cfg.level_centre;
  };

  const auto effects = effect_by_post_period(cfg);
  std::vector<Observation> rows;
  rows.reserve(static_cast<std::size_t>((J + 1) * T * variable_count));

  for (int m = 0; m < planted; ++m) {
    const std::string& name = m == 0 ? cfg.outcome_name : extras[static_cast<std::size_t>(m - 1)].name;
    const int first = m == 0 ? 0 : extras[static_cast<std::size_t>(m - 1)].first_index;
    std::vector<double> treated(static_cast<std::size_t>(T), 0.0);
    for (int j = 0; j < J; ++j) {
      auto rng = noise_stream(j, m);
      const auto e = ar1_path(rng, T, noise_sd_for(m));
      const auto ju = static_cast<std::size_t>(j);
      for (int t = 0; t < T; ++t) {
        const auto tu = static_cast<std::size_t>(t);
        const double y = levels[ju][static_cast<std::size_t>(m)] + slopes[ju][static_cast<std::size_t>(m)] * t + e[tu];
        treated[tu] += weights[ju] * y;
        if (t >= first) rows.push_back({donors[ju], cfg.start_year + t, name, y});
      }
    }
    auto rng = noise_stream(J, m);
    const auto e = ar1_path(rng, T, noise_sd_for(m));
    for (int t = 0; t < T; ++t) {
      const auto tu = static_cast<std::size_t>(t);
      double y = treated[tu] + e[tu];
      if (m == 0 && t >= cfg.treatment_index) y *= 1.0 + effects[static_cast<std::size_t>(t - cfg.treatment_index)];
      if (t >= first) rows.push_back({cfg.treated_name, cfg.start_year + t, name, y});
    }
  }

  for (std::size_t n = 0; n < noise_vars.size(); ++n) {
    const int m = planted + static_cast<int>(n);
    for (int u = 0; u <= J; ++u) {
      auto rng = noise_stream(u, m);
      const double offset = cfg.extra_level_centre * (1.0 + 0.3 * rng.normal());
      const std::string& unit = u == J ? cfg.treated_name : donors[static_cast<std::size_t>(u)];
      for (int t = 0; t < T; ++t)
        rows.push_back({unit, cfg.start_year + t, noise_vars[n], offset + 0.05 * cfg.extra_level_centre * rng.normal()});
    }
  }

  SimulatedPanel out{Panel::from_observations(std::move(rows)), {}};
  out.truth.treated = cfg.treated_name;
  out.truth.donors = donors;
  out.truth.true_weights = weights;
  for (int t = cfg.treatment_index; t < T; ++t) out.truth.post_years.push_back(cfg.start_year + t);
  out.truth.effect = effects;
  return out;
}

StudySpec default_study(const SimConfig& cfg) {
  validate(cfg);
  StudySpec s;
  s.treated_unit = cfg.treated_name;
  s.treatment_time = cfg.start_year + cfg.treatment_index;
  s.outcome = cfg.outcome_name;
  s.pre_window = {cfg.start_year, s.treatment_time - 1};
  s.post_window = {s.treatment_time, cfg.start_year + cfg.periods - 1};
  s.predictors.push_back({cfg.outcome_name, s.pre_window, Aggregation::Mean});
  s.predictors.push_back({cfg.outcome_name, {s.pre_window.first, s.pre_window.first}, Aggregation::Mean});
  s.predictors.push_back({cfg.outcome_name, {s.pre_window.last, s.pre_window.last}, Aggregation::Mean});
  for (const auto& x : sim_extra_variables(cfg))
    s.predictors.push_back({x.name, {cfg.start_year + x.first_index, s.pre_window.last}, Aggregation::Mean});
  for (const auto& x : sim_noise_variable_names(cfg)) s.predictors.push_back({x, s.pre_window, Aggregation::Mean});
  s.v_strategy = VStrategy::Equal;
  s.seed = cfg.seed;
  return s;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

RecoveryReport recovery_report(const SimConfig& cfg, int reps, const RecoveryOptions& options) {
  if (reps < 1) throw Error(ErrorCode::InvalidConfig, "reps must be at least 1");
  validate(cfg);
  RecoveryReport report;
  std::vector<double> pooled_placebo_ratios, treated_ratios;
  double sum_err = 0.0, sum_sq_err = 0.0, sum_weight_rmse = 0.0;
  int p_zero = 0, p_tenth = 0;

  for (int i = 0; i < reps; ++i) {
    SimConfig rep_cfg = cfg;
    rep_cfg.seed = cfg.seed + static_cast<std::uint64_t>(i);
    const auto sim = generate_panel(rep_cfg);
    const StudySpec study = options.study ? *options.study : default_study(rep_cfg);

    RecoveryRow row;
    row.replication = i;
    row.seed = rep_cfg.seed;

    std::optional<PlaceboSet> placebos;
    SynthFit treated_fit;
    GapSeries gaps;
    if (options.placebos) {
      placebos = run_placebos(study, sim.panel, options.placebo);
      treated_fit = placebos->treated().fit;
      gaps = placebos->treated().gaps;
    } else {
      treated_fit = fit(study, sim.panel, options.placebo.fit);
      gaps = gap_series(treated_fit, sim.panel);
    }

    double max_err = 0.0, sq = 0.0;
    for (std::size_t j = 0; j < sim.truth.donors.size(); ++j) {
      const double err = treated_fit.weight_of(sim.truth.donors[j]) - sim.truth.true_weights[j];
      max_err = std::max(max_err, std::abs(err));
      sq += err * err;
    }
    row.weight_max_error = max_err;
    row.weight_rmse = std::sqrt(sq / static_cast<double>(sim.truth.donors.size()));
    row.pre_rmspe = treated_fit.pre_rmspe;

    double est = 0.0;
    for (int year : sim.truth.post_years) est += effect_pct(gaps, year).vs_synthetic;
    row.mean_effect_pct = est / static_cast<double>(sim.truth.post_years.size());
    row.true_mean_effect_pct =
        100.0 * std::accumulate(sim.truth.effect.begin(), sim.truth.effect.end(), 0.0) / static_cast<double>(sim.truth.effect.size());
    row.treated_ratio = rmspe_ratio(gaps);

    if (placebos) {
      std::vector<double> ratios;
      for (const auto& u : placebos->units)
        if (!u.treated && u.retained) ratios.push_back(u.ratio);
      row.median_placebo_ratio = median(ratios);
      pooled_placebo_ratios.insert(pooled_placebo_ratios.end(), ratios.begin(), ratios.end());
      row.pseudo_p = pseudo_p(*placebos, Criterion::RmspeRatio).pseudo_p;
      p_zero += row.pseudo_p == 0.0;
      p_tenth += row.pseudo_p <= 0.1 + 1e-12;
    } else {
      row.median_placebo_ratio = std::numeric_limits<double>::quiet_NaN();
      row.pseudo_p = std::numeric_limits<double>::quiet_NaN();
    }

    const double err = row.mean_effect_pct - row.true_mean_effect_pct;
    sum_err += err;
    sum_sq_err += err * err;
    sum_weight_rmse += row.weight_rmse;
    treated_ratios.push_back(row.treated_ratio);
    report.rows.push_back(row);
  }

  const double n = static_cast<double>(reps);
  report.mean_weight_rmse = sum_weight_rmse / n;
  report.effect_bias = sum_err / n;
  report.effect_rmse = std::sqrt(sum_sq_err / n);
  report.median_treated_ratio = median(treated_ratios);
  if (options.placebos) {
    report.fraction_p_zero = p_zero / n;
    report.fraction_p_at_most_tenth = p_tenth / n;
    report.median_placebo_ratio = median(pooled_placebo_ratios);
  } else {
    report.fraction_p_zero = report.fraction_p_at_most_tenth = report.median_placebo_ratio =
        std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

std::string recovery_csv(const RecoveryReport& report) {
  std::string out =
      "replication,seed,weight_max_error,weight_rmse,pre_rmspe,mean_effect_pct,true_mean_effect_pct,treated_ratio,"
      "median_placebo_ratio,pseudo_p\n";
  char buf[64];
  auto num = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.9g", x);
    out += ',';
    out += buf;
  };
  for (const auto& r : report.rows) {
    out += std::to_string(r.replication);
    out += ',';
    out += std::to_string(r.seed);
    num(r.weight_max_error);
    num(r.weight_rmse);
    num(r.pre_rmspe);
    num(r.mean_effect_pct);
    num(r.true_mean_effect_pct);
    num(r.treated_ratio);
    num(r.median_placebo_ratio);
    num(r.pseudo_p);
    out += '\n';
  }
  return out;
}

SimConfig parse_sim_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    invalid(std::string("simulation config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) invalid("simulation config must be a JSON object");

  static const std::set<std::string> known{
      "donors",       "periods",      "treatment_index", "start_year",   "extra_variables", "noise_variables",
      "noise_sd",     "effect_path",  "true_weights",    "level_centre", "level_spread",    "slope_centre",
      "slope_spread", "extra_level_centre", "seed",      "treated_name", "donor_names",     "outcome_name",
      "description"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) invalid("unknown field '" + key + "'");

  SimConfig c;
  try {
    if (j.contains("donors")) c.donors = j["donors"].get<int>();
    if (j.contains("periods")) c.periods = j["periods"].get<int>();
    if (j.contains("treatment_index")) c.treatment_index = j["treatment_index"].get<int>();
    if (j.contains("start_year")) c.start_year = j["start_year"].get<int>();
    if (j.contains("extra_variables")) {
      const json& x = j["extra_variables"];
      if (x.is_number_integer()) {
        c.extra_variables = x.get<int>();
      } else if (x.is_array()) {
        for (const auto& e : x) {
          if (e.is_string())
            c.extra_names.push_back({e.get<std::string>(), 0});
          else
            c.extra_names.push_back({e.at("name").get<std::string>(), e.value("first_index", 0)});
        }
        c.extra_variables = static_cast<int>(c.extra_names.size());
      } else {
        invalid("extra_variables must be a count or a list of names");
      }
    }
    if (j.contains("noise_variables")) c.noise_variables = j["noise_variables"].get<int>();
    if (j.contains("noise_sd")) c.noise_sd = j["noise_sd"].get<double>();
    if (j.contains("effect_path")) {
      const json& e = j["effect_path"];
      if (e.is_number())
        c.effect_path = {e.get<double>()};
      else
        c.effect_path = e.get<std::vector<double>>();
    }
    if (j.contains("true_weights")) c.true_weights = j["true_weights"].get<std::vector<double>>();
    if (j.contains("level_centre")) c.level_centre = j["level_centre"].get<double>();
    if (j.contains("level_spread")) c.level_spread = j["level_spread"].get<double>();
    if (j.contains("slope_centre")) c.slope_centre = j["slope_centre"].get<double>();
    if (j.contains("slope_spread")) c.slope_spread = j["slope_spread"].get<double>();
    if (j.contains("extra_level_centre")) c.extra_level_centre = j["extra_level_centre"].get<double>();
    if (j.contains("seed")) {
      if (!j["seed"].is_number_unsigned()) invalid("seed must be a non-negative integer");
      c.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("treated_name")) c.treated_name = j["treated_name"].get<std::string>();
    if (j.contains("donor_names")) {
      c.donor_names = j["donor_names"].get<std::vector<std::string>>();
      if (!j.contains("donors")) c.donors = static_cast<int>(c.donor_names.size());
    }
    if (j.contains("outcome_name")) c.outcome_name = j["outcome_name"].get<std::string>();
  } catch (const json::exception& e) {
    invalid(std::string("simulation config has a field of the wrong type: ") + e.what());
  }
  validate(c);
  return c;
}

SimConfig load_sim_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open simulation config '" + path.string() + "'");
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_sim_config(text);
}

std::string ground_truth_to_json(const GroundTruth& truth) {
  json j;
  j["treated"] = truth.treated;
  j["donors"] = truth.donors;
  j["true_weights"] = truth.true_weights;
  j["post_years"] = truth.post_years;
  j["effect"] = truth.effect;
  return j.dump(2) + "\n";
}

}  // namespace scmkit
