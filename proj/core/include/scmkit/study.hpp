#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scmkit/panel.hpp"

namespace scmkit {

enum class Aggregation { Mean };

/// One matching characteristic: the mean of `variable` over `window`.
struct PredictorSpec {
  std::string variable;
  Window window;
  Aggregation aggregation = Aggregation::Mean;

  /// "variable[first-last]", used for report keys.
  std::string label() const;
  bool operator==(const PredictorSpec&) const = default;
};

enum class VStrategy { Equal, Nested };

std::string_view to_string(VStrategy s) noexcept;
VStrategy parse_v_strategy(std::string_view s);

/**
 * Declarative synthetic-control study.
 *
 * `treatment_time` is the first treated period: the pre window must end at
 * treatment_time - 1 and the post window must start at treatment_time. When
 * `donor_units` is empty the pool is every panel unit except the treated unit
 * and the exclusions; resolve_spec fills it in.
 */
struct StudySpec {
  std::string treated_unit;
  std::optional<std::vector<std::string>> donor_units;
  std::vector<std::string> exclusions;
  int treatment_time = 0;
  std::string outcome;
  std::vector<PredictorSpec> predictors;
  Window pre_window;
  Window post_window;
  VStrategy v_strategy = VStrategy::Equal;
  std::uint64_t seed = 0;

  bool operator==(const StudySpec&) const = default;
};

/// Standardized predictors and raw pre-treatment outcomes.
struct PredictorBlock {
  Eigen::VectorXd treated_predictors;  // K
  Eigen::MatrixXd donor_predictors;    // K x J
  Eigen::VectorXd treated_outcomes;    // P
  Eigen::MatrixXd donor_outcomes;      // P x J
  Eigen::VectorXd scale;               // K, sample sd of each raw predictor row
  std::vector<int> pre_times;          // P
};

/// Expands the donor pool (panel order) and validates the spec against the
/// panel. Idempotent. Throws InvalidSpec, UnknownUnit, UnknownVariable,
/// TreatedInDonors, DonorPoolTooSmall, CoverageError.
StudySpec resolve_spec(const StudySpec& raw, const Panel& panel);

/// Requires a resolved spec. Throws ZeroVariancePredictor for a predictor
/// that is constant across treated and donors.
PredictorBlock build_matrices(const StudySpec& spec, const Panel& panel);

/// Window means before standardization, K x (1 + J) with the treated unit in
/// column 0.
Eigen::MatrixXd raw_predictor_matrix(const StudySpec& spec, const Panel& panel);

StudySpec parse_study_spec(std::string_view json_text);
StudySpec load_study_spec(const std::filesystem::path& path);
std::string study_spec_to_json(const StudySpec& spec);

}  // namespace scmkit
