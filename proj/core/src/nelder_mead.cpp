#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "scmkit/solver.hpp"

namespace scmkit {

// Standard coefficients: reflection 1, expansion 2, contraction 1/2, shrink 1/2.
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& start,
                             const NelderMeadOptions& options) {
  const Eigen::Index n = start.size();
  NelderMeadResult out;
  if (n == 0) {
    out.x = start;
    out.value = f(start);
    out.evaluations = 1;
    return out;
  }

  std::vector<Eigen::VectorXd> points;
  std::vector<double> values;
  points.reserve(static_cast<std::size_t>(n) + 1);
  int evaluations = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evaluations;
    return f(x);
  };

  points.push_back(start);
  values.push_back(eval(start));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd p = start;
    p(i) += options.initial_step;
    points.push_back(p);
    values.push_back(eval(p));
  }

  std::vector<std::size_t> order(points.size());
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<Eigen::VectorXd> p2;
    std::vector<double> v2;
    p2.reserve(points.size());
    v2.reserve(points.size());
    for (std::size_t i : order) {
      p2.push_back(points[i]);
      v2.push_back(values[i]);
    }
    points = std::move(p2);
    values = std::move(v2);
  };

  const std::size_t worst = static_cast<std::size_t>(n);
  while (true) {
    sort_simplex();
    const double spread = values[worst] - values[0];
    double diameter = 0.0;
    for (std::size_t i = 1; i <= worst; ++i) diameter = std::max(diameter, (points[i] - points[0]).lpNorm<Eigen::Infinity>());
    if (spread <= options.f_tolerance * std::abs(values[0]) || diameter <= options.x_tolerance ||
        evaluations >= options.max_evaluations)
      break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < worst; ++i) centroid += points[i];
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd reflected = centroid + (centroid - points[worst]);
    const double f_reflected = eval(reflected);
    if (f_reflected < values[0]) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - points[worst]);
      const double f_expanded = eval(expanded);
      if (f_expanded < f_reflected) {
        points[worst] = expanded;
        values[worst] = f_expanded;
      } else {
        points[worst] = reflected;
        values[worst] = f_reflected;
      }
      continue;
    }
    if (f_reflected < values[worst - 1]) {
      points[worst] = reflected;
      values[worst] = f_reflected;
      continue;
    }
    const bool outside = f_reflected < values[worst];
    const Eigen::VectorXd contracted =
        outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid)) : Eigen::VectorXd(centroid + 0.5 * (points[worst] - centroid));
    const double f_contracted = eval(contracted);
    if (f_contracted < (outside ? f_reflected : values[worst])) {
      points[worst] = contracted;
      values[worst] = f_contracted;
      continue;
    }
    for (std::size_t i = 1; i <= worst; ++i) {
      points[i] = points[0] + 0.5 * (points[i] - points[0]);
      values[i] = eval(points[i]);
    }
  }

  out.x = points[0];
  out.value = values[0];
  out.evaluations = evaluations;
  return out;
}

}  // namespace scmkit
