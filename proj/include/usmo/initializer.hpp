#ifndef USMO_INITIALIZER_HPP
#define USMO_INITIALIZER_HPP

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "usmo/dataset.hpp"
#include "usmo/solver.hpp"

namespace usmo {

// One-class score used to rank unlabeled samples; higher = more
// positive-looking. The ranking hook is pluggable so a trained one-class
// scorer can replace the default kernel mean.
using ScoreFn = std::function<double(const Dataset&, std::size_t)>;

ScoreFn kernel_mean_scorer(const KernelSpec& kernel);

// Unlabeled indices sorted by ascending score, ties by index.
std::vector<std::size_t> rank_unlabeled(const Dataset& ds,
                                        const ScoreFn& score);
std::vector<std::size_t> rank_unlabeled(const Dataset& ds,
                                        const KernelSpec& kernel);

// Sizing of the five starting groups (in rank order):
//   1: sigma = 0,      delta = 0
//   2: sigma = sigma2, delta = 2 sigma2
//   3: sigma = c2/2,   delta = c2
//   4: sigma = sigma4, delta = 2 (c2 - sigma4)
//   5: sigma = c2,     delta = 0
// Uniform is the fallback shape sigma_u = target_sum / n.
struct InitPlan {
  enum class Kind { Grouped, Uniform };
  Kind kind = Kind::Uniform;
  double a = 0, b = 0, c = 0;
  double sigma2 = 0, sigma4 = 0;
  std::size_t n1 = 0, n2 = 0, n3 = 0, n4 = 0, n5 = 0;
  double residual = 0;  // squared equality mismatch at the chosen point
};

// Minimizes the squared equality-constraint residual of the group sizing
// over its box by dense grid search (grid_points per variable) plus local
// refinement. Falls back to the uniform plan when the box is empty or n is
// too small for five groups.
InitPlan plan_groups(const DerivedConstants& c, double pi, std::size_t p,
                     std::size_t n, std::size_t grid_points = 20);

InitPlan uniform_plan(const DerivedConstants& c, std::size_t n);

// Assigns group values in rank order, then repairs the equality residual
// inside the movable groups (2 and 4 first, then 1 and 5) without leaving
// the two-branch form. config_error when the residual cannot be absorbed.
DualState assign_initial(const InitPlan& plan,
                         std::span<const std::size_t> order,
                         const DerivedConstants& c);

}  // namespace usmo

#endif
