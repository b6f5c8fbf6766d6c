#include "scmkit/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "scmkit/error.hpp"
#include "scmkit/rng.hpp"

namespace scmkit {

namespace {

constexpr int kRefineAfter = 8;

void validate_inner_inputs(const Eigen::VectorXd& target, const Eigen::MatrixXd& donors, const Eigen::VectorXd& v) {
  if (target.size() < 1) throw Error(ErrorCode::InvalidArgument, "need at least one predictor");
  if (donors.rows() != target.size() || v.size() != target.size())
    throw Error(ErrorCode::InvalidArgument, "predictor dimensions disagree");
  if (donors.cols() < 1) throw Error(ErrorCode::InvalidArgument, "need at least one donor");
  if (!target.allFinite() || !donors.allFinite() || !v.allFinite())
    throw Error(ErrorCode::NonFiniteInput, "solver inputs contain NaN or infinity");
  if ((v.array() < -1e-12).any() || std::abs(v.sum() - 1.0) > 1e-9)
    throw Error(ErrorCode::InvalidArgument, "predictor weights must lie on the simplex");
}

struct WeightedProblem {
  Eigen::MatrixXd scaled_donors;  // diag(sqrt v) * donors
  Eigen::VectorXd scaled_target;  // diag(sqrt v) * target

  double objective(const Eigen::VectorXd& w) const { return (scaled_target - scaled_donors * w).squaredNorm(); }

  // Computed from the residual rather than the Gram matrix so it stays
  // accurate near the optimum.
  Eigen::VectorXd gradient(const Eigen::VectorXd& w) const {
    return -2.0 * (scaled_donors.transpose() * (scaled_target - scaled_donors * w));
  }

  double fw_gap(const Eigen::VectorXd& w) const {
    const Eigen::VectorXd g = gradient(w);
    return std::max(0.0, g.dot(w) - g.minCoeff());
  }
};

// Minimizer over the affine hull of the columns in `support`, eliminating the
// first support coordinate through sum(w) = 1 and solving the reduced least
// squares problem by complete orthogonal decomposition (minimum norm when
// the support columns are affinely dependent).
Eigen::VectorXd affine_minimizer(const WeightedProblem& p, const std::vector<Eigen::Index>& support, Eigen::Index size) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(size);
  const Eigen::Index pivot = support.front();
  if (support.size() == 1) {
    out(pivot) = 1.0;
    return out;
  }
  const auto n = static_cast<Eigen::Index>(support.size()) - 1;
  Eigen::MatrixXd reduced(p.scaled_target.size(), n);
  for (Eigen::Index c = 0; c < n; ++c)
    reduced.col(c) = p.scaled_donors.col(support[static_cast<std::size_t>(c + 1)]) - p.scaled_donors.col(pivot);
  const Eigen::VectorXd sub = reduced.completeOrthogonalDecomposition().solve(p.scaled_target - p.scaled_donors.col(pivot));
  double rest = 1.0;
  for (Eigen::Index c = 0; c < n; ++c) {
    out(support[static_cast<std::size_t>(c + 1)]) = sub(c);
    rest -= sub(c);
  }
  out(pivot) = rest;
  return out;
}

// Lawson-Hanson style active-set iteration for the simplex-constrained least
// squares problem, started from a feasible point. Each pass solves on the
// affine hull of the current support, steps back to the boundary when that
// solution leaves the simplex, and otherwise admits the coordinate with the
// most negative reduced gradient.
Eigen::VectorXd active_set_refine(const WeightedProblem& p, Eigen::VectorXd w, int max_passes) {
  const Eigen::Index j_count = w.size();
  std::vector<bool> in(static_cast<std::size_t>(j_count));
  for (Eigen::Index j = 0; j < j_count; ++j) in[static_cast<std::size_t>(j)] = w(j) > 0.0;

  for (int pass = 0; pass < max_passes; ++pass) {
    std::vector<Eigen::Index> support;
    for (Eigen::Index j = 0; j < j_count; ++j)
      if (in[static_cast<std::size_t>(j)]) support.push_back(j);
    const Eigen::VectorXd z = affine_minimizer(p, support, j_count);
    if (!z.allFinite()) break;

    bool interior = true;
    for (Eigen::Index j : support) interior = interior && z(j) > 0.0;
    if (!interior) {
      double step = 1.0;
      Eigen::Index blocking = support.front();
      for (Eigen::Index j : support) {
        if (z(j) > 0.0) continue;
        const double s = w(j) / (w(j) - z(j));
        if (s < step || blocking < 0 || z(blocking) > 0.0) {
          step = std::min(step, s);
          blocking = j;
        }
      }
      w += step * (z - w);
      w(blocking) = 0.0;
      for (Eigen::Index j : support)
        if (w(j) <= 1e-15) {
          w(j) = 0.0;
          in[static_cast<std::size_t>(j)] = false;
        }
      w = w.cwiseMax(0.0);
      w /= w.sum();
      continue;
    }

    w = z;
    const Eigen::VectorXd g = p.gradient(w);
    double multiplier = 0.0;
    for (Eigen::Index j : support) multiplier += g(j);
    multiplier /= static_cast<double>(support.size());
    const double slack = 1e-12 * (1.0 + g.cwiseAbs().maxCoeff());
    Eigen::Index entering = -1;
    double most_negative = -slack;
    for (Eigen::Index j = 0; j < j_count; ++j) {
      if (in[static_cast<std::size_t>(j)]) continue;
      if (g(j) - multiplier < most_negative) {
        most_negative = g(j) - multiplier;
        entering = j;
      }
    }
    if (entering < 0) break;
    in[static_cast<std::size_t>(entering)] = true;
  }
  return w;
}

}  // namespace

double inner_objective(const Eigen::VectorXd& target, const Eigen::MatrixXd& donors, const Eigen::VectorXd& v,
                       const Eigen::VectorXd& w) {
  const Eigen::VectorXd r = target - donors * w;
  return v.dot(r.cwiseAbs2());
}

Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& y) {
  const Eigen::Index n = y.size();
  std::vector<double> sorted(y.data(), y.data() + n);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    cumulative += sorted[static_cast<std::size_t>(i)];
    const double candidate = (cumulative - 1.0) / static_cast<double>(i + 1);
    if (sorted[static_cast<std::size_t>(i)] - candidate > 0.0) theta = candidate;
  }
  return (y.array() - theta).cwiseMax(0.0).matrix();
}

InnerSolution solve_inner(const Eigen::VectorXd& target, const Eigen::MatrixXd& donors, const Eigen::VectorXd& v,
                          const SolverOptions& options) {
  validate_inner_inputs(target, donors, v);
  const Eigen::Index j_count = donors.cols();
  const Eigen::VectorXd vv = v.cwiseMax(0.0);

  InnerSolution out;
  if (j_count == 1) {
    out.weights = Eigen::VectorXd::Ones(1);
    out.objective = inner_objective(target, donors, vv, out.weights);
    return out;
  }

  const WeightedProblem problem{vv.cwiseSqrt().asDiagonal() * donors, vv.cwiseSqrt().cwiseProduct(target)};
  const Eigen::MatrixXd gram = problem.scaled_donors.transpose() * problem.scaled_donors;
  const Eigen::VectorXd linear = problem.scaled_donors.transpose() * problem.scaled_target;
  const double lipschitz = 2.0 * problem.scaled_donors.squaredNorm();

  if (!(lipschitz > 0.0)) {
    // Constant objective: every feasible point is optimal; take the first vertex.
    out.weights = Eigen::VectorXd::Unit(j_count, 0);
    out.objective = inner_objective(target, donors, vv, out.weights);
    return out;
  }

  Eigen::VectorXd x = Eigen::VectorXd::Constant(j_count, 1.0 / static_cast<double>(j_count));
  Eigen::VectorXd y = x;
  double momentum = 1.0;
  double gap = problem.fw_gap(x);
  double previous_objective = problem.objective(x);
  double last_change = std::numeric_limits<double>::infinity();
  int it = 0;
  int next_refine = kRefineAfter;
  constexpr int kCheckEvery = 4;
  const int max_passes = 4 * static_cast<int>(j_count) + 20;

  while (gap > options.tolerance && it < options.max_iterations) {
    ++it;
    const Eigen::VectorXd x_next = project_to_simplex(y - (2.0 / lipschitz) * (gram * y - linear));
    if ((y - x_next).dot(x_next - x) > 0.0) {
      momentum = 1.0;
      y = x_next;
    } else {
      const double momentum_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
      y = x_next + ((momentum - 1.0) / momentum_next) * (x_next - x);
      momentum = momentum_next;
    }
    x = x_next;
    if (it % kCheckEvery == 0 || it == options.max_iterations) {
      gap = problem.fw_gap(x);
      const double objective = problem.objective(x);
      last_change = std::abs(objective - previous_objective) / std::max(1.0, std::abs(objective));
      previous_objective = objective;
    }
    // Ill-conditioned instances converge slowly; try the exact finish early
    // and restart the momentum from its point if it is not yet optimal.
    if (gap > options.tolerance && it == next_refine) {
      next_refine *= 4;
      const Eigen::VectorXd refined = active_set_refine(problem, x, max_passes);
      if (problem.objective(refined) <= problem.objective(x)) {
        x = refined;
        y = x;
        momentum = 1.0;
        gap = problem.fw_gap(x);
      }
    }
  }

  const Eigen::VectorXd refined = active_set_refine(problem, x, max_passes);
  if (problem.objective(refined) <= problem.objective(x)) x = refined;
  gap = problem.fw_gap(x);
  if (gap > options.tolerance && last_change > options.tolerance)
    throw Error(ErrorCode::NoConvergence, std::to_string(it) + " iterations, optimality gap " + std::to_string(gap));

  out.weights = x;
  out.objective = inner_objective(target, donors, vv, x);
  out.iterations = it;
  out.optimality_gap = gap;
  return out;
}

BruteForceResult brute_force_inner(const Eigen::VectorXd& target, const Eigen::MatrixXd& donors,
                                   const Eigen::VectorXd& v, double resolution) {
  validate_inner_inputs(target, donors, v);
  const Eigen::Index j_count = donors.cols();
  if (j_count > 6) throw Error(ErrorCode::TooManyDonors, std::to_string(j_count) + " donors; the oracle handles at most 6");
  if (!(resolution > 0.0) || resolution > 1.0)
    throw Error(ErrorCode::InvalidArgument, "resolution must lie in (0, 1]");
  const long steps = std::lround(1.0 / resolution);
  if (std::abs(static_cast<double>(steps) * resolution - 1.0) > 1e-9)
    throw Error(ErrorCode::InvalidArgument, "resolution must divide 1 evenly");

  const Eigen::Index k_count = target.size();
  const double step = 1.0 / static_cast<double>(steps);

  BruteForceResult best;
  best.objective = std::numeric_limits<double>::infinity();
  best.weights = Eigen::VectorXd::Zero(j_count);

  std::vector<long> counts(static_cast<std::size_t>(j_count), 0);
  // partial[j] holds donors.leftCols(j) * w, accumulated as counts are fixed.
  std::vector<Eigen::VectorXd> partial(static_cast<std::size_t>(j_count) + 1, Eigen::VectorXd::Zero(k_count));

  auto visit = [&](auto&& self, Eigen::Index j, long remaining) -> void {
    const auto ju = static_cast<std::size_t>(j);
    if (j == j_count - 1) {
      counts[ju] = remaining;
      const Eigen::VectorXd fitted = partial[ju] + donors.col(j) * (static_cast<double>(remaining) * step);
      double objective = 0.0;
      for (Eigen::Index k = 0; k < k_count; ++k) {
        const double r = target(k) - fitted(k);
        objective += v(k) * r * r;
      }
      ++best.points_evaluated;
      if (objective < best.objective) {
        best.objective = objective;
        for (Eigen::Index i = 0; i < j_count; ++i)
          best.weights(i) = static_cast<double>(counts[static_cast<std::size_t>(i)]) * step;
      }
      return;
    }
    for (long m = remaining; m >= 0; --m) {
      counts[ju] = m;
      partial[ju + 1] = partial[ju] + donors.col(j) * (static_cast<double>(m) * step);
      self(self, j + 1, remaining - m);
    }
  };
  visit(visit, 0, steps);
  return best;
}

double outcome_mspe(const PredictorBlock& block, const Eigen::VectorXd& v, const SolverOptions& inner) {
  const auto sol = solve_inner(block.treated_predictors, block.donor_predictors, v, inner);
  const Eigen::VectorXd r = block.treated_outcomes - block.donor_outcomes * sol.weights;
  return r.squaredNorm() / static_cast<double>(r.size());
}

namespace {

Eigen::VectorXd softmax_with_pinned_last(const Eigen::VectorXd& theta) {
  Eigen::VectorXd logits(theta.size() + 1);
  logits << theta, 0.0;
  const double top = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - top).exp().matrix();
  return e / e.sum();
}

double to_single(double x) { return static_cast<double>(static_cast<float>(x)); }

// Outcomes rescaled to unit RMS and every entry rounded to single precision.
// Panels that differ only in units map to the same block.
PredictorBlock search_block(const PredictorBlock& block) {
  PredictorBlock out;
  const double rms = block.treated_outcomes.norm() / std::sqrt(static_cast<double>(block.treated_outcomes.size()));
  const double scale = rms > 0.0 ? rms : 1.0;
  out.treated_predictors = block.treated_predictors.unaryExpr(&to_single);
  out.donor_predictors = block.donor_predictors.unaryExpr(&to_single);
  out.treated_outcomes = (block.treated_outcomes / scale).unaryExpr(&to_single);
  out.donor_outcomes = (block.donor_outcomes / scale).unaryExpr(&to_single);
  return out;
}

}  // namespace

Eigen::VectorXd optimize_v(const PredictorBlock& block, std::uint64_t seed, const OptimizeVOptions& options) {
  const Eigen::Index k_count = block.treated_predictors.size();
  if (k_count == 1) return Eigen::VectorXd::Ones(1);
  if (block.treated_outcomes.size() < 2)
    throw Error(ErrorCode::InvalidArgument, "nested V search needs at least 2 pre-treatment periods");

  const Eigen::Index dims = k_count - 1;
  if (outcome_mspe(block, Eigen::VectorXd::Constant(k_count, 1.0 / static_cast<double>(k_count)), options.inner) == 0.0)
    return softmax_with_pinned_last(Eigen::VectorXd::Zero(dims));

  const double floor_mass = options.floor_mass;
  auto to_v = [&](const Eigen::VectorXd& theta) -> Eigen::VectorXd {
    return (((1.0 - floor_mass) * softmax_with_pinned_last(theta)).array() + floor_mass / static_cast<double>(k_count)).matrix();
  };
  const PredictorBlock search = search_block(block);
  auto objective = [&](const Eigen::VectorXd& theta) { return outcome_mspe(search, to_v(theta), options.inner); };

  std::vector<Eigen::VectorXd> starts;
  starts.push_back(Eigen::VectorXd::Zero(dims));
  for (Eigen::Index k = 0; k < dims; ++k) starts.push_back(Eigen::VectorXd::Unit(dims, k) * options.vertex_logit);
  starts.push_back(Eigen::VectorXd::Constant(dims, -options.vertex_logit));
  auto rng = SplitMix64::stream(seed, 0);
  for (int r = 0; r < options.random_starts; ++r) {
    Eigen::VectorXd theta(dims);
    for (Eigen::Index k = 0; k < dims; ++k) theta(k) = 2.0 * rng.normal();
    starts.push_back(theta);
  }

  double best_value = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_theta = starts.front();
  for (std::size_t s = 0; s < starts.size(); ++s) {
    const auto result = nelder_mead(objective, starts[s], options.search);
    if (result.value < best_value) {
      best_value = result.value;
      best_theta = result.x;
    }
  }
  return to_v(best_theta);
}

Eigen::VectorXd floor_weights(const Eigen::VectorXd& w, double floor) {
  Eigen::VectorXd out = (w.array() < floor).select(0.0, w);
  const double total = out.sum();
  if (!(total > 0.0)) {
    Eigen::Index top = 0;
    w.maxCoeff(&top);
    return Eigen::VectorXd::Unit(w.size(), top);
  }
  return out / total;
}

double SynthFit::weight_of(std::string_view donor) const {
  const auto& d = donors();
  for (std::size_t j = 0; j < d.size(); ++j)
    if (d[j] == donor) return w(static_cast<Eigen::Index>(j));
  throw Error(ErrorCode::UnknownUnit, "'" + std::string(donor) + "' is not a donor");
}

std::vector<DonorWeight> SynthFit::positive_weights() const {
  std::vector<DonorWeight> out;
  const auto& d = donors();
  for (std::size_t j = 0; j < d.size(); ++j)
    if (w(static_cast<Eigen::Index>(j)) > 0.0) out.push_back({d[j], w(static_cast<Eigen::Index>(j))});
  std::sort(out.begin(), out.end(), [](const DonorWeight& a, const DonorWeight& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    return a.donor < b.donor;
  });
  return out;
}

SynthFit fit(const StudySpec& spec, const Panel& panel, const FitOptions& options) {
  SynthFit out;
  out.spec = resolve_spec(spec, panel);
  const PredictorBlock block = build_matrices(out.spec, panel);
  const Eigen::Index k_count = block.treated_predictors.size();

  if (out.spec.v_strategy == VStrategy::Equal)
    out.v = Eigen::VectorXd::Constant(k_count, 1.0 / static_cast<double>(k_count));
  else
    out.v = optimize_v(block, out.spec.seed, options.v_search);

  const auto sol = solve_inner(block.treated_predictors, block.donor_predictors, out.v, options.v_search.inner);
  out.w_raw = sol.weights;
  out.w = floor_weights(sol.weights, options.weight_floor);
  const Eigen::VectorXd r = block.treated_outcomes - block.donor_outcomes * out.w;
  out.pre_mspe = r.squaredNorm() / static_cast<double>(r.size());
  out.pre_rmspe = std::sqrt(out.pre_mspe);
  out.inner_objective = inner_objective(block.treated_predictors, block.donor_predictors, out.v, out.w);
  return out;
}

}  // namespace scmkit
