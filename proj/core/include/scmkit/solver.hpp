#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "scmkit/panel.hpp"
#include "scmkit/study.hpp"

namespace scmkit {

struct SolverOptions {
  /// Absolute optimality tolerance on the standardized objective.
  double tolerance = 1e-10;
  int max_iterations = 100000;
};

struct InnerSolution {
  Eigen::VectorXd weights;
  double objective = 0.0;
  int iterations = 0;
  /// Frank-Wolfe gap at the returned point; an upper bound on the distance
  /// to the optimal objective.
  double optimality_gap = 0.0;
};

/// sum_k v_k (target_k - sum_j donors_kj w_j)^2, evaluated directly.
double inner_objective(const Eigen::VectorXd& target, const Eigen::MatrixXd& donors, const Eigen::VectorXd& v,
                       const Eigen::VectorXd& w);

/// Euclidean projection onto {w >= 0, sum w = 1}.
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& y);

/**
 * Minimizes the V-weighted predictor loss over the unit simplex.
 *
 * Accelerated projected gradient with gradient-based adaptive restart and
 * step 1/L, L = 2 * ||diag(v)^1/2 donors||_F^2. Stops once the Frank-Wolfe
 * gap drops below `tolerance`. The iterate is finished by an active-set
 * pass that solves the equality-constrained problem on the detected support
 * and adjusts the support until the KKT conditions hold; the pass also runs
 * periodically on slow, ill-conditioned instances. Starts from uniform
 * weights; no randomness.
 *
 * Throws NonFiniteInput, InvalidArgument (shape mismatch, v off the simplex),
 * NoConvergence.
 */
InnerSolution solve_inner(const Eigen::VectorXd& target, const Eigen::MatrixXd& donors, const Eigen::VectorXd& v,
                          const SolverOptions& options = {});

struct BruteForceResult {
  Eigen::VectorXd weights;
  double objective = 0.0;
  std::uint64_t points_evaluated = 0;
};

/**
 * Exhaustive search over simplex points whose coordinates are multiples of
 * `resolution`. Points are visited in descending lexicographic order starting
 * at (1, 0, ..., 0); on exact objective ties the first visited point wins.
 * Throws TooManyDonors for more than 6 donors and InvalidArgument when
 * 1 / resolution is not an integer.
 */
BruteForceResult brute_force_inner(const Eigen::VectorXd& target, const Eigen::MatrixXd& donors,
                                   const Eigen::VectorXd& v, double resolution);

struct NelderMeadOptions {
  int max_evaluations = 2000;
  double f_tolerance = 1e-10;
  double x_tolerance = 1e-6;
  double initial_step = 1.0;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
};

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& start,
                             const NelderMeadOptions& options = {});

struct OptimizeVOptions {
  SolverOptions inner;
  NelderMeadOptions search;
  int random_starts = 8;
  /// Logit given to the favoured predictor for the near-vertex starts.
  double vertex_logit = 9.0;
  /// Share of the total weight spread equally over all predictors.
  double floor_mass = 1e-4;
};

/// Mean squared pre-treatment outcome error of the inner solution for `v`.
double outcome_mspe(const PredictorBlock& block, const Eigen::VectorXd& v, const SolverOptions& inner = {});

/**
 * Chooses predictor importances by minimizing pre-treatment outcome MSPE.
 *
 * v = (1 - f) softmax(theta, 0) + f / K with theta in R^(K-1) and f =
 * `floor_mass`, so every predictor keeps some weight and the donor weights
 * stay identified when the search favours a few predictors. Nelder-Mead runs
 * from equal weights, from a near-vertex start for each predictor, and from
 * `random_starts` points drawn from SplitMix64 stream 0 of `seed`; the best
 * final point wins, earlier starts winning exact ties. The search runs on a
 * copy of the block with outcomes scaled to unit RMS and all entries rounded
 * to single precision, so the chosen v does not depend on the data's units.
 * Returns equal weights when they already give a zero MSPE.
 */
Eigen::VectorXd optimize_v(const PredictorBlock& block, std::uint64_t seed, const OptimizeVOptions& options = {});

struct FitOptions {
  OptimizeVOptions v_search;
  /// Reported donor weights below this are set to zero and the rest rescaled.
  double weight_floor = 1e-4;
};

struct DonorWeight {
  std::string donor;
  double weight = 0.0;
};

struct SynthFit {
  StudySpec spec;          // resolved
  Eigen::VectorXd v;       // K, on the simplex
  Eigen::VectorXd w;       // J, aligned with spec.donor_units, floored
  Eigen::VectorXd w_raw;   // J, solver output before flooring
  double pre_mspe = 0.0;
  double pre_rmspe = 0.0;
  double inner_objective = 0.0;

  const std::vector<std::string>& donors() const { return *spec.donor_units; }
  double weight_of(std::string_view donor) const;
  /// Donors with positive weight, descending by weight then donor id.
  std::vector<DonorWeight> positive_weights() const;
};

/// Zeroes entries below `floor` and rescales to sum one.
Eigen::VectorXd floor_weights(const Eigen::VectorXd& w, double floor);

SynthFit fit(const StudySpec& spec, const Panel& panel, const FitOptions& options = {});

}  // namespace scmkit
