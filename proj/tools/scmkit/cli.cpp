#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#ifdef SCMKIT_CLI11_SINGLE_HEADER
#include <CLI11.hpp>
#else
#include <CLI/CLI.hpp>
#endif

#include "scmkit/scmkit.hpp"

namespace scmkit::cli {

namespace {

namespace fs = std::filesystem;

constexpr double kOracleTolerance = 1e-9;

struct StudyArgs {
  std::string config;
  std::string panel;
  std::string out;
  std::optional<std::string> v_strategy;
  std::optional<std::uint64_t> seed;
};

struct FitArgs {
  StudyArgs study;
  std::optional<double> oracle_resolution;
};

struct PlaceboArgs {
  StudyArgs study;
  std::optional<double> filter_k;
  std::string criterion = "rmspe_ratio";
};

struct SimulateArgs {
  std::string sim_config;
  std::string out;
  int reps = 1;
  bool placebos = true;
};

unsigned thread_budget() {
  const char* env = std::getenv("SCMKIT_THREADS");
  unsigned requested = 0;
  if (env != nullptr && *env != '\0') {
    const std::string_view s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), requested);
    if (ec != std::errc() || ptr != s.data() + s.size())
      throw Error(ErrorCode::InvalidConfig, "SCMKIT_THREADS must be a non-negative integer, got '" + std::string(s) + "'");
  }
  if (requested == 0) requested = std::max(1u, std::thread::hardware_concurrency());
  return requested;
}

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  f << contents;
  if (!f) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

fs::path prepare_out(const std::string& out) {
  const fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::Io, "cannot create output directory " + out);
  return dir;
}

StudySpec load_study(const StudyArgs& a) {
  StudySpec spec = load_study_spec(a.config);
  if (a.v_strategy) spec.v_strategy = parse_v_strategy(*a.v_strategy);
  if (a.seed) spec.seed = *a.seed;
  return spec;
}

void print_warnings(const std::vector<std::string>& warnings, std::ostream& err) {
  for (const auto& w : warnings) err << "warning: " << w << '\n';
}

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  const StudySpec spec = load_study(a.study);
  const Panel panel = load_panel(fs::path(a.study.panel));
  const fs::path dir = prepare_out(a.study.out);

  const SynthFit f = fit(spec, panel);
  Report report = make_report(f, gap_series(f, panel));

  std::optional<std::string> failure;
  if (a.oracle_resolution) {
    const PredictorBlock block = build_matrices(f.spec, panel);
    const auto oracle = brute_force_inner(block.treated_predictors, block.donor_predictors, f.v, *a.oracle_resolution);
    const double solver = inner_objective(block.treated_predictors, block.donor_predictors, f.v, f.w_raw);
    OracleCheck check;
    check.resolution = *a.oracle_resolution;
    check.solver_objective = quantize(solver);
    check.oracle_objective = quantize(oracle.objective);
    check.gap = quantize(solver - oracle.objective);
    check.passed = solver - oracle.objective <= kOracleTolerance;
    report.oracle_check = check;
    if (!check.passed)
      failure = Error(ErrorCode::VerificationFailed, "solver objective exceeds the brute-force oracle by " +
                                                         std::to_string(solver - oracle.objective))
                    .what();
  }

  write_file(dir / "weights.csv", weights_csv(report));
  write_file(dir / "gaps.csv", gaps_csv(report));
  write_file(dir / "gaps.svg", gaps_svg(report));
  write_file(dir / "report.json", report_to_json(report));

  const TableColumn column = table_column(report, report.spec.treated_unit);
  out << render_weight_table(std::span(&column, 1));
  if (report.oracle_check)
    out << "oracle check (resolution " << report.oracle_check->resolution << "): gap " << report.oracle_check->gap
        << (report.oracle_check->passed ? " ok" : " FAILED") << '\n';
  print_warnings(report.warnings, err);

  if (failure) {
    err << "error: " << *failure << '\n';
    return static_cast<int>(ErrorClass::Numerical);
  }
  return 0;
}

int cmd_placebo(const PlaceboArgs& a, std::ostream& out, std::ostream& err) {
  const StudySpec spec = load_study(a.study);
  const Criterion criterion = parse_criterion(a.criterion);
  if (a.filter_k && !(*a.filter_k > 0.0))
    throw Error(ErrorCode::InvalidArgument, "--filter-k must be positive");
  const Panel panel = load_panel(fs::path(a.study.panel));
  const fs::path dir = prepare_out(a.study.out);

  PlaceboOptions options;
  options.filter_multiple = a.filter_k;
  options.threads = thread_budget();
  const PlaceboSet set = run_placebos(spec, panel, options);
  for (const auto& f : set.failures) err << "warning: placebo " << f.unit << " failed: " << f.message << '\n';

  Report report = make_report(set.treated().fit, set.treated().gaps);
  attach_placebos(report, set, criterion);

  write_file(dir / "placebo_gaps.csv", placebo_gaps_csv(report));
  write_file(dir / "placebo_summary.csv", placebo_summary_csv(report));
  write_file(dir / "placebos.svg", placebo_svg(report));
  write_file(dir / "report.json", report_to_json(report));

  const auto& p = *report.placebo;
  out << "criterion\t" << p.criterion << '\n'
      << "retained units\t" << p.retained_units << '\n'
      << "pseudo p\t" << p.pseudo_p << '\n';
  print_warnings(report.warnings, err);
  return 0;
}

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  const SimConfig cfg = load_sim_config(a.sim_config);
  if (a.reps < 1) throw Error(ErrorCode::InvalidConfig, "--reps must be at least 1");
  validate(cfg);
  const fs::path dir = prepare_out(a.out);

  const SimulatedPanel sim = generate_panel(cfg);
  write_file(dir / "panel.csv", panel_to_csv(sim.panel));
  write_file(dir / "ground_truth.json", ground_truth_to_json(sim.truth));
  write_file(dir / "study.json", study_spec_to_json(default_study(cfg)));

  if (a.reps > 1) {
    RecoveryOptions options;
    options.placebos = a.placebos;
    options.placebo.threads = thread_budget();
    const RecoveryReport rec = recovery_report(cfg, a.reps, options);
    write_file(dir / "recovery.csv", recovery_csv(rec));
    out << "replications\t" << rec.rows.size() << '\n'
        << "mean weight rmse\t" << quantize(rec.mean_weight_rmse) << '\n'
        << "effect bias (pp)\t" << quantize(rec.effect_bias) << '\n'
        << "effect rmse (pp)\t" << quantize(rec.effect_rmse) << '\n';
    if (a.placebos)
      out << "fraction p = 0\t" << quantize(rec.fraction_p_zero) << '\n'
          << "fraction p <= 0.1\t" << quantize(rec.fraction_p_at_most_tenth) << '\n';
  }
  (void)err;
  return 0;
}

void add_study_options(CLI::App& cmd, StudyArgs& a) {
  cmd.add_option("--config", a.config, "Study configuration (JSON)")->required();
  cmd.add_option("--panel", a.panel, "Long-format panel CSV")->required();
  cmd.add_option("--out", a.out, "Output directory")->required();
  cmd.add_option("--v-strategy", a.v_strategy, "Predictor weighting: equal or nested")
      ->check(CLI::IsMember({"equal", "nested"}));
  cmd.add_option("--seed", a.seed, "Seed for the nested V search");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthetic control estimation, placebo inference and simulation", "scmkit"};
  app.set_version_flag("--version", std::string(tool_version()));
  app.require_subcommand(1);

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a synthetic control for the treated unit");
  add_study_options(*fit_cmd, fit_args.study);
  fit_cmd->add_option("--oracle-check", fit_args.oracle_resolution,
                      "Verify the solver against a brute-force grid of this resolution");

  PlaceboArgs placebo_args;
  auto* placebo_cmd = app.add_subcommand("placebo", "In-space placebo inference");
  add_study_options(*placebo_cmd, placebo_args.study);
  placebo_cmd->add_option("--filter-k", placebo_args.filter_k,
                          "Drop placebos whose pre-period MSPE exceeds k times the treated unit's");
  placebo_cmd->add_option("--criterion", placebo_args.criterion, "rmspe_ratio or terminal_abs_gap")
      ->check(CLI::IsMember({"rmspe_ratio", "terminal_abs_gap"}));

  SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a planted-combination panel");
  sim_cmd->add_option("--sim-config", sim_args.sim_config, "Simulation configuration (JSON)")->required();
  sim_cmd->add_option("--out", sim_args.out, "Output directory")->required();
  sim_cmd->add_option("--reps", sim_args.reps, "Replications; more than one also writes recovery.csv");
  sim_cmd->add_flag("!--no-placebos", sim_args.placebos, "Skip placebo runs in the recovery table");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ErrorClass::Config);
  }

  try {
    if (*fit_cmd) return cmd_fit(fit_args, out, err);
    if (*placebo_cmd) return cmd_placebo(placebo_args, out, err);
    return cmd_simulate(sim_args, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(classify(e.code()));
  } catch (const std::bad_alloc&) {
    err << "error: out of memory\n";
    return static_cast<int>(ErrorClass::Numerical);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorClass::Config);
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace scmkit::cli
