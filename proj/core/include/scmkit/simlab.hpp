#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "scmkit/inference.hpp"
#include "scmkit/panel.hpp"
#include "scmkit/study.hpp"

namespace scmkit {

/// An auxiliary variable generated with the same planted combination as the
/// outcome. Observed from period index `first_index` onward.
struct SimVariable {
  std::string name;
  int first_index = 0;
  bool operator==(const SimVariable&) const = default;
};

/**
 * Synthetic panel with a planted convex combination.
 *
 * For every donor j and variable m the latent path is a level plus a linear
 * trend in the period index, with levels and slopes drawn uniformly around
 * per-variable centres. Each unit-variable pair also carries AR(1) noise
 * (coefficient 0.5, stationary start, innovation sd `noise_sd` scaled by the
 * variable's level centre over the outcome's). The treated unit is
 * sum_j w_j * donor_j (observed values) plus its own AR(1) noise, with the
 * outcome multiplied by (1 + effect) from `treatment_index` onward.
 *
 * Random draws come from SplitMix64 streams of `seed`: stream 0 for the
 * weights, stream 1 for levels and slopes, and stream 2 + u * V + m for the
 * noise of unit u (treated last) and variable m (outcome first).
 */
struct SimConfig {
  int donors = 8;
  int periods = 31;
  int treatment_index = 25;
  int start_year = 1985;
  int extra_variables = 8;
  int noise_variables = 0;
  double noise_sd = 1.0;
  /// One multiplicative effect per post period; a single entry applies to all
  /// of them; empty means no effect.
  std::vector<double> effect_path;
  /// Planted weights; drawn from the seed when empty.
  std::vector<double> true_weights;
  double level_centre = 100.0;
  double level_spread = 20.0;
  double slope_centre = 1.0;
  double slope_spread = 0.5;
  double extra_level_centre = 10.0;
  std::uint64_t seed = 42;

  // Naming. Empty lists fall back to donor01.., x01.., noise01...
  std::string treated_name = "treated";
  std::vector<std::string> donor_names;
  std::string outcome_name = "y";
  std::vector<SimVariable> extra_names;

  bool operator==(const SimConfig&) const = default;
};

struct GroundTruth {
  std::string treated;
  std::vector<std::string> donors;
  std::vector<double> true_weights;
  std::vector<int> post_years;
  std::vector<double> effect;  // multiplicative, per post year
};

struct SimulatedPanel {
  Panel panel;
  GroundTruth truth;
};

/// Throws InvalidConfig.
void validate(const SimConfig& cfg);

SimulatedPanel generate_panel(const SimConfig& cfg);

/// Study matching a generated panel: outcome mean over the pre window, the
/// outcome in the first and last pre years, and the pre-window mean of every
/// extra and noise variable. Equal predictor weights.
StudySpec default_study(const SimConfig& cfg);

std::vector<std::string> sim_donor_names(const SimConfig& cfg);
std::vector<SimVariable> sim_extra_variables(const SimConfig& cfg);
std::vector<std::string> sim_noise_variable_names(const SimConfig& cfg);

struct RecoveryRow {
  int replication = 0;
  std::uint64_t seed = 0;
  double weight_max_error = 0.0;
  double weight_rmse = 0.0;
  double pre_rmspe = 0.0;
  double mean_effect_pct = 0.0;       // estimated, vs-synthetic convention
  double true_mean_effect_pct = 0.0;
  double treated_ratio = 0.0;
  double median_placebo_ratio = 0.0;  // NaN when placebos are off
  double pseudo_p = 0.0;              // NaN when placebos are off
};

struct RecoveryReport {
  std::vector<RecoveryRow> rows;
  double mean_weight_rmse = 0.0;
  double effect_bias = 0.0;  // percentage points
  double effect_rmse = 0.0;
  double fraction_p_zero = 0.0;
  double fraction_p_at_most_tenth = 0.0;
  double median_treated_ratio = 0.0;
  double median_placebo_ratio = 0.0;
};

struct RecoveryOptions {
  bool placebos = true;
  PlaceboOptions placebo;
  /// Study template; default_study(cfg) when unset.
  std::optional<StudySpec> study;
};

/// Replication i uses seed cfg.seed + i.
RecoveryReport recovery_report(const SimConfig& cfg, int reps, const RecoveryOptions& options = {});

std::string recovery_csv(const RecoveryReport& report);

SimConfig parse_sim_config(std::string_view json_text);
SimConfig load_sim_config(const std::filesystem::path& path);
std::string ground_truth_to_json(const GroundTruth& truth);

double median(std::vector<double> values);

}  // namespace scmkit
