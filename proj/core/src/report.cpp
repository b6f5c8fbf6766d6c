#include "scmkit/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

#include <nlohmann/json.hpp>

#include "scmkit/error.hpp"

#ifndef SCMKIT_VERSION
#define SCMKIT_VERSION "0.0.0"
#endif

namespace scmkit {

namespace {

using nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json numbers(const std::vector<double>& xs) {
  json a = json::array();
  for (double x : xs) a.push_back(number(x));
  return a;
}

double read_number(const json& j, double if_null = kNaN) {
  return j.is_null() ? if_null : j.get<double>();
}

std::vector<double> read_numbers(const json& j, double if_null = kNaN) {
  std::vector<double> out;
  for (const auto& e : j) out.push_back(read_number(e, if_null));
  return out;
}

std::vector<double> quantized(const std::vector<double>& xs) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (double x : xs) out.push_back(quantize(x));
  return out;
}

std::string fixed6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

std::vector<DonorWeight> sorted_positive(const std::vector<std::string>& donors, const std::vector<double>& weights) {
  std::vector<DonorWeight> out;
  for (std::size_t j = 0; j < donors.size(); ++j)
    if (weights[j] > 0.0) out.push_back({donors[j], weights[j]});
  std::sort(out.begin(), out.end(), [](const DonorWeight& a, const DonorWeight& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    return a.donor < b.donor;
  });
  return out;
}

}  // namespace

std::string_view tool_version() noexcept { return SCMKIT_VERSION; }

double quantize(double x) {
  if (!std::isfinite(x)) return x;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return std::strtod(buf, nullptr);
}

std::vector<DonorWeight> Report::positive_weights() const { return sorted_positive(donors, donor_weights); }

Report make_report(const SynthFit& fit, const GapSeries& gaps, std::vector<std::string> warnings) {
  Report r;
  r.tool_version = std::string(tool_version());
  r.seed = fit.spec.seed;
  r.spec = fit.spec;
  r.donors = fit.donors();
  for (Eigen::Index j = 0; j < fit.w.size(); ++j) r.donor_weights.push_back(quantize(fit.w(j)));
  for (std::size_t k = 0; k < fit.spec.predictors.size(); ++k) {
    r.predictor_labels.push_back(fit.spec.predictors[k].label());
    r.v_weights.push_back(quantize(fit.v(static_cast<Eigen::Index>(k))));
  }
  r.pre_mspe = quantize(fit.pre_mspe);
  r.pre_rmspe = quantize(fit.pre_rmspe);
  r.post_rmspe = quantize(rmspe(gaps, GapWindow::Post));
  r.rmspe_ratio = quantize(rmspe_ratio(gaps, &warnings));
  r.inner_objective = quantize(fit.inner_objective);

  r.gaps.times = gaps.times;
  r.gaps.treatment_time = gaps.treatment_time;
  r.gaps.actual = quantized(gaps.actual);
  r.gaps.synthetic = quantized(gaps.synthetic);
  r.gaps.gap = quantized(gaps.gap);
  r.gaps.gap_pct = quantized(gaps.gap_pct);
  for (int year : gaps.times) {
    if (year < gaps.treatment_time) continue;
    const EffectPct e = effect_pct(gaps, year);
    r.effects.push_back({year, quantize(e.vs_synthetic), quantize(e.vs_actual)});
  }
  r.warnings = std::move(warnings);
  return r;
}

void attach_placebos(Report& report, const PlaceboSet& placebos, Criterion criterion) {
  const InferenceSummary by_ratio = pseudo_p(placebos, Criterion::RmspeRatio);
  const InferenceSummary by_gap = pseudo_p(placebos, Criterion::TerminalAbsGap);

  PlaceboReport p;
  p.criterion = std::string(to_string(criterion));
  p.filter_multiple = placebos.filter_multiple;
  p.pseudo_p_rmspe_ratio = quantize(by_ratio.pseudo_p);
  p.pseudo_p_terminal_abs_gap = quantize(by_gap.pseudo_p);
  p.pseudo_p = criterion == Criterion::RmspeRatio ? p.pseudo_p_rmspe_ratio : p.pseudo_p_terminal_abs_gap;
  p.exceeding_rmspe_ratio = by_ratio.exceeding_units;
  p.exceeding_terminal_abs_gap = by_gap.exceeding_units;
  p.retained_units = by_ratio.retained_units;
  for (const auto& u : placebos.units)
    p.units.push_back({u.unit, u.treated, quantize(u.pre_rmspe), quantize(u.post_rmspe), quantize(u.ratio), u.retained,
                       quantized(u.gaps.gap)});
  for (const auto& f : placebos.failures) p.failed_units.push_back(f.unit);
  report.placebo = std::move(p);
  report.warnings.insert(report.warnings.end(), placebos.warnings.begin(), placebos.warnings.end());
}

std::string report_to_json(const Report& r) {
  json j;
  j["tool"] = {{"name", "scmkit"}, {"version", r.tool_version}};
  j["seed"] = r.seed;
  j["spec"] = json::parse(study_spec_to_json(r.spec));
  j["donor_weights"] = json::array();
  for (std::size_t i = 0; i < r.donors.size(); ++i)
    j["donor_weights"].push_back({{"donor", r.donors[i]}, {"weight", number(r.donor_weights[i])}});
  j["v_weights"] = json::array();
  for (std::size_t k = 0; k < r.predictor_labels.size(); ++k)
    j["v_weights"].push_back({{"predictor", r.predictor_labels[k]}, {"v", number(r.v_weights[k])}});
  j["fit"] = {{"pre_mspe", number(r.pre_mspe)},
              {"pre_rmspe", number(r.pre_rmspe)},
              {"post_rmspe", number(r.post_rmspe)},
              {"rmspe_ratio", number(r.rmspe_ratio)},
              {"inner_objective", number(r.inner_objective)}};
  j["gaps"] = {{"time", r.gaps.times},
               {"treatment_time", r.gaps.treatment_time},
               {"actual", numbers(r.gaps.actual)},
               {"synthetic", numbers(r.gaps.synthetic)},
               {"gap", numbers(r.gaps.gap)},
               {"gap_pct", numbers(r.gaps.gap_pct)}};
  j["effects"] = json::array();
  for (const auto& e : r.effects)
    j["effects"].push_back({{"year", e.year}, {"vs_synthetic", number(e.vs_synthetic)}, {"vs_actual", number(e.vs_actual)}});
  if (r.placebo) {
    const auto& p = *r.placebo;
    json pj;
    pj["criterion"] = p.criterion;
    pj["filter_multiple"] = p.filter_multiple ? number(*p.filter_multiple) : json(nullptr);
    pj["pseudo_p"] = number(p.pseudo_p);
    pj["pseudo_p_rmspe_ratio"] = number(p.pseudo_p_rmspe_ratio);
    pj["pseudo_p_terminal_abs_gap"] = number(p.pseudo_p_terminal_abs_gap);
    pj["exceeding_rmspe_ratio"] = p.exceeding_rmspe_ratio;
    pj["exceeding_terminal_abs_gap"] = p.exceeding_terminal_abs_gap;
    pj["retained_units"] = p.retained_units;
    pj["failed_units"] = p.failed_units;
    pj["units"] = json::array();
    for (const auto& u : p.units)
      pj["units"].push_back({{"unit", u.unit},
                             {"treated", u.treated},
                             {"pre_rmspe", number(u.pre_rmspe)},
                             {"post_rmspe", number(u.post_rmspe)},
                             {"ratio", number(u.ratio)},
                             {"retained", u.retained},
                             {"gap", numbers(u.gap)}});
    j["placebo"] = std::move(pj);
  }
  if (r.oracle_check) {
    const auto& o = *r.oracle_check;
    j["oracle_check"] = {{"resolution", number(o.resolution)},
                         {"solver_objective", number(o.solver_objective)},
                         {"oracle_objective", number(o.oracle_objective)},
                         {"gap", number(o.gap)},
                         {"passed", o.passed}};
  }
  j["warnings"] = r.warnings;
  return j.dump(2) + "\n";
}

Report report_from_json(std::string_view text) {
  Report r;
  try {
    const json j = json::parse(text);
    r.tool_version = j.at("tool").at("version").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.spec = parse_study_spec(j.at("spec").dump());
    for (const auto& d : j.at("donor_weights")) {
      r.donors.push_back(d.at("donor").get<std::string>());
      r.donor_weights.push_back(read_number(d.at("weight")));
    }
    for (const auto& v : j.at("v_weights")) {
      r.predictor_labels.push_back(v.at("predictor").get<std::string>());
      r.v_weights.push_back(read_number(v.at("v")));
    }
    const json& f = j.at("fit");
    r.pre_mspe = read_number(f.at("pre_mspe"));
    r.pre_rmspe = read_number(f.at("pre_rmspe"));
    r.post_rmspe = read_number(f.at("post_rmspe"));
    r.rmspe_ratio = read_number(f.at("rmspe_ratio"), kInf);
    r.inner_objective = read_number(f.at("inner_objective"));
    const json& g = j.at("gaps");
    r.gaps.times = g.at("time").get<std::vector<int>>();
    r.gaps.treatment_time = g.at("treatment_time").get<int>();
    r.gaps.actual = read_numbers(g.at("actual"));
    r.gaps.synthetic = read_numbers(g.at("synthetic"));
    r.gaps.gap = read_numbers(g.at("gap"));
    r.gaps.gap_pct = read_numbers(g.at("gap_pct"));
    for (const auto& e : j.at("effects"))
      r.effects.push_back({e.at("year").get<int>(), read_number(e.at("vs_synthetic")), read_number(e.at("vs_actual"))});
    if (auto it = j.find("placebo"); it != j.end()) {
      const json& pj = *it;
      PlaceboReport p;
      p.criterion = pj.at("criterion").get<std::string>();
      if (!pj.at("filter_multiple").is_null()) p.filter_multiple = pj.at("filter_multiple").get<double>();
      p.pseudo_p = read_number(pj.at("pseudo_p"));
      p.pseudo_p_rmspe_ratio = read_number(pj.at("pseudo_p_rmspe_ratio"));
      p.pseudo_p_terminal_abs_gap = read_number(pj.at("pseudo_p_terminal_abs_gap"));
      p.exceeding_rmspe_ratio = pj.at("exceeding_rmspe_ratio").get<std::vector<std::string>>();
      p.exceeding_terminal_abs_gap = pj.at("exceeding_terminal_abs_gap").get<std::vector<std::string>>();
      p.retained_units = pj.at("retained_units").get<int>();
      p.failed_units = pj.at("failed_units").get<std::vector<std::string>>();
      for (const auto& u : pj.at("units"))
        p.units.push_back({u.at("unit").get<std::string>(), u.at("treated").get<bool>(), read_number(u.at("pre_rmspe")),
                           read_number(u.at("post_rmspe")), read_number(u.at("ratio"), kInf),
                           u.at("retained").get<bool>(), read_numbers(u.at("gap"))});
      r.placebo = std::move(p);
    }
    if (auto it = j.find("oracle_check"); it != j.end()) {
      const json& o = *it;
      r.oracle_check = OracleCheck{read_number(o.at("resolution")), read_number(o.at("solver_objective")),
                                   read_number(o.at("oracle_objective")), read_number(o.at("gap")),
                                   o.at("passed").get<bool>()};
    }
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed report: ") + e.what());
  }
  return r;
}

std::string weights_csv(const Report& r) {
  std::string out = "donor,weight\n";
  for (const auto& w : r.positive_weights()) out += w.donor + "," + fixed6(w.weight) + "\n";
  return out;
}

std::string gaps_csv(const Report& r) {
  std::string out = "time,actual,synthetic,gap,gap_pct\n";
  for (std::size_t t = 0; t < r.gaps.times.size(); ++t)
    out += std::to_string(r.gaps.times[t]) + "," + fixed6(r.gaps.actual[t]) + "," + fixed6(r.gaps.synthetic[t]) + "," +
           fixed6(r.gaps.gap[t]) + "," + fixed6(r.gaps.gap_pct[t]) + "\n";
  return out;
}

std::string placebo_gaps_csv(const Report& r) {
  if (!r.placebo) throw Error(ErrorCode::InvalidArgument, "report has no placebo results");
  std::string out = "unit,time,gap\n";
  for (const auto& u : r.placebo->units)
    for (std::size_t t = 0; t < r.gaps.times.size(); ++t)
      out += u.unit + "," + std::to_string(r.gaps.times[t]) + "," + fixed6(u.gap[t]) + "\n";
  return out;
}

std::string placebo_summary_csv(const Report& r) {
  if (!r.placebo) throw Error(ErrorCode::InvalidArgument, "report has no placebo results");
  std::string out = "unit,pre_rmspe,post_rmspe,ratio,retained\n";
  for (const auto& u : r.placebo->units)
    out += u.unit + "," + fixed6(u.pre_rmspe) + "," + fixed6(u.post_rmspe) + "," + fixed6(u.ratio) + "," +
           (u.retained ? "true" : "false") + "\n";
  return out;
}

std::string format_scientific(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2E", x);
  return buf;
}

std::string format_ratio(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string format_weight(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", x);
  std::string s = buf;
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  return s;
}

std::string format_donor_weight(const DonorWeight& w) { return w.donor + " (" + format_weight(w.weight) + ")"; }

std::string render_weight_table(std::span<const TableColumn> columns) {
  std::string out;
  auto row = [&](std::string_view head, auto cell) {
    out += head;
    for (const auto& c : columns) {
      out += '\t';
      out += cell(c);
    }
    out += '\n';
  };
  row("", [](const TableColumn& c) { return c.title; });
  row("MSPE", [](const TableColumn& c) { return format_scientific(c.mspe); });
  row("RMSPE ratio", [](const TableColumn& c) { return format_ratio(c.rmspe_ratio); });

  std::vector<std::vector<DonorWeight>> sorted;
  std::size_t depth = 0;
  for (const auto& c : columns) {
    std::vector<std::string> names;
    std::vector<double> weights;
    for (const auto& w : c.weights) {
      names.push_back(w.donor);
      weights.push_back(w.weight);
    }
    sorted.push_back(sorted_positive(names, weights));
    depth = std::max(depth, sorted.back().size());
  }
  for (std::size_t i = 0; i < depth; ++i) {
    out += i == 0 ? "Weights" : "";
    for (const auto& col : sorted) {
      out += '\t';
      out += i < col.size() ? format_donor_weight(col[i]) : "-";
    }
    out += '\n';
  }
  return out;
}

TableColumn table_column(const Report& report, std::string title) {
  return {std::move(title), report.pre_mspe, report.rmspe_ratio, report.positive_weights()};
}

}  // namespace scmkit
