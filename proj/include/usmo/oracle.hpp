#ifndef USMO_ORACLE_HPP
#define USMO_ORACLE_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "usmo/dataset.hpp"
#include "usmo/kernel.hpp"
#include "usmo/solver.hpp"

namespace usmo {

// Reference solver for the dual on small instances. Not built for scale;
// it exists to cross-check the decomposition solver.

struct OracleSolution {
  enum class Method { ProjectedSubgradient, GridEnumeration };
  std::vector<double> sigma;
  std::vector<double> delta;
  double objective = 0;
  Method method = Method::ProjectedSubgradient;
  // upper bound on suboptimality; only certified for GridEnumeration
  double certified_gap = std::numeric_limits<double>::infinity();
};

// Dense form of the dual restricted to the unlabeled block:
//   F(sigma, delta) = 1/2 sigma' Q sigma - q' sigma - 1/2 sum(delta)
// with Q the unlabeled Gram block and q_u = c1 sum_p k(x_u, x_p).
struct DenseProblem {
  std::size_t n = 0;
  std::vector<double> Q;  // n x n
  std::vector<double> q;  // n
  double c2 = 0;
  double target_sum = 0;
};

DenseProblem build_dense(const Dataset& ds, const DerivedConstants& c,
                         const KernelSpec& kernel);

double dual_objective(const DenseProblem& prob, std::span<const double> sigma,
                      std::span<const double> delta);

// delta component eliminated analytically: for fixed sigma in the box, the
// objective is maximized in delta at min(2 sigma_u, 2(c2 - sigma_u), c2).
std::vector<double> reduce_delta(std::span<const double> sigma, double c2);

// G(sigma) = dual objective at (sigma, reduce_delta(sigma)); convex.
double reduced_objective(const DenseProblem& prob,
                         std::span<const double> sigma);

// Euclidean projection onto {0 <= sigma <= c2, sum = target} by bisection.
std::vector<double> project_capped_simplex(std::span<const double> z,
                                           double c2, double target);

// Projected subgradient descent with diminishing steps over the reduced
// objective, followed by a deterministic proximal-gradient polish; returns
// the best iterate found. Requires p + n <= 2000.
OracleSolution solve_dense(const Dataset& ds, const DerivedConstants& c,
                           const KernelSpec& kernel);

// Exhaustive grid over the equality-constrained box, `steps` points per
// free dimension; n <= 4. certified_gap = (Lipschitz bound of G) * spacing.
OracleSolution enumerate_tiny(const Dataset& ds, const DerivedConstants& c,
                              const KernelSpec& kernel, std::size_t steps);

}  // namespace usmo

#endif
