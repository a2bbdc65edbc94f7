#include "usmo/initializer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "usmo/errors.hpp"

namespace usmo {

ScoreFn kernel_mean_scorer(const KernelSpec& kernel) {
  return [kernel](const Dataset& ds, std::size_t u) {
    const std::size_t p = ds.num_positive;
    double acc = 0;
    auto xu = ds.sample(ds.unlabeled_index(u));
    for (std::size_t i = 0; i < p; ++i)
      acc += eval_kernel(kernel, xu, ds.sample(i));
    return acc / static_cast<double>(p);
  };
}

std::vector<std::size_t> rank_unlabeled(const Dataset& ds,
                                        const ScoreFn& score) {
  const std::size_t n = ds.num_unlabeled;
  std::vector<double> s(n);
  for (std::size_t u = 0; u < n; ++u) s[u] = score(ds, u);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (s[a] != s[b]) return s[a] < s[b];
    return a < b;
  });
  return order;
}

std::vector<std::size_t> rank_unlabeled(const Dataset& ds,
                                        const KernelSpec& kernel) {
  return rank_unlabeled(ds, kernel_mean_scorer(kernel));
}

namespace {

double plan_residual(const DerivedConstants& c, double pi, std::size_t n,
                     double a, double b, double cc, double sigma2,
                     double sigma4) {
  const double nn = static_cast<double>(n);
  return c.target_sum - b * nn * sigma2 - cc * nn * sigma4 -
         c.c2 * nn * (pi * a + (1.0 - a - b - cc) / 2.0);
}

struct Box {
  double a_lo, a_hi, bc_lo, bc_hi;
};

bool group_box(double pi, std::size_t n, Box& box) {
  if (n < 5) return false;
  const double nn = static_cast<double>(n);
  box.a_lo = std::max(1.0 / (pi * nn), 1.0 / ((1.0 - pi) * nn));
  box.a_hi = std::min(1.0 / (1.0 - pi), 1.0 / pi);
  box.bc_lo = 1.0 / nn;
  box.bc_hi = std::log(nn) / nn;
  // a + b + c <= 1 - 1/n must be reachable with the smallest b, c
  box.a_hi = std::min(box.a_hi, 1.0 - 3.0 / nn);
  return box.a_lo <= box.a_hi && box.bc_lo <= box.bc_hi;
}

}  // namespace

InitPlan uniform_plan(const DerivedConstants& c, std::size_t n) {
  InitPlan plan;
  plan.kind = InitPlan::Kind::Uniform;
  plan.n3 = n;
  plan.residual = 0.0;
  (void)c;
  return plan;
}

InitPlan plan_groups(const DerivedConstants& c, double pi, std::size_t p,
                     std::size_t n, std::size_t grid_points) {
  (void)p;
  Box box;
  if (!group_box(pi, n, box)) return uniform_plan(c, n);
  const std::size_t G = std::max<std::size_t>(grid_points, 2);
  const double nn = static_cast<double>(n);
  const double interior = c.c2 * 1e-9;

  struct Point {
    double a, b, c, s2, s4;
  };
  Point best{};
  double best_obj = std::numeric_limits<double>::infinity();
  bool found = false;

  auto grid_value = [](double lo, double hi, std::size_t k, std::size_t count) {
    if (count == 1) return 0.5 * (lo + hi);
    return lo + (hi - lo) * static_cast<double>(k) /
                    static_cast<double>(count - 1);
  };

  auto sweep = [&](double a_lo, double a_hi, double b_lo, double b_hi,
                   double c_lo, double c_hi, double s2_lo, double s2_hi,
                   double s4_lo, double s4_hi, std::size_t count) {
    for (std::size_t ia = 0; ia < count; ++ia) {
      const double a = grid_value(a_lo, a_hi, ia, count);
      for (std::size_t ib = 0; ib < count; ++ib) {
        const double b = grid_value(b_lo, b_hi, ib, count);
        for (std::size_t ic = 0; ic < count; ++ic) {
          const double cc = grid_value(c_lo, c_hi, ic, count);
          if (a + b + cc > 1.0 - 1.0 / nn) continue;
          for (std::size_t i2 = 0; i2 < count; ++i2) {
            const double s2 = grid_value(s2_lo, s2_hi, i2, count);
            for (std::size_t i4 = 0; i4 < count; ++i4) {
              const double s4 = grid_value(s4_lo, s4_hi, i4, count);
              const double r = plan_residual(c, pi, n, a, b, cc, s2, s4);
              const double obj = r * r;
              if (!found || obj < best_obj) {
                found = true;
                best_obj = obj;
                best = {a, b, cc, s2, s4};
              }
            }
          }
        }
      }
    }
  };

  const double s2_lo = interior, s2_hi = c.c2 / 2.0 - interior;
  const double s4_lo = c.c2 / 2.0 + interior, s4_hi = c.c2 - interior;
  sweep(box.a_lo, box.a_hi, box.bc_lo, box.bc_hi, box.bc_lo, box.bc_hi, s2_lo,
        s2_hi, s4_lo, s4_hi, G);
  if (!found) return uniform_plan(c, n);

  // local refinement: shrink a window around the incumbent
  double wa = (box.a_hi - box.a_lo), wb = (box.bc_hi - box.bc_lo);
  double w2 = (s2_hi - s2_lo), w4 = (s4_hi - s4_lo);
  for (int round = 0; round < 10; ++round) {
    wa *= 0.3;
    wb *= 0.3;
    w2 *= 0.3;
    w4 *= 0.3;
    sweep(std::max(box.a_lo, best.a - wa), std::min(box.a_hi, best.a + wa),
          std::max(box.bc_lo, best.b - wb), std::min(box.bc_hi, best.b + wb),
          std::max(box.bc_lo, best.c - wb), std::min(box.bc_hi, best.c + wb),
          std::max(s2_lo, best.s2 - w2), std::min(s2_hi, best.s2 + w2),
          std::max(s4_lo, best.s4 - w4), std::min(s4_hi, best.s4 + w4), 9);
  }

  InitPlan plan;
  plan.kind = InitPlan::Kind::Grouped;
  plan.a = best.a;
  plan.b = best.b;
  plan.c = best.c;
  plan.sigma2 = best.s2;
  plan.sigma4 = best.s4;
  plan.residual = best_obj;

  auto round_sz = [](double v) {
    return static_cast<std::size_t>(std::llround(std::max(0.0, v)));
  };
  plan.n1 = round_sz((1.0 - pi) * best.a * nn);
  plan.n2 = round_sz(best.b * nn);
  plan.n4 = round_sz(best.c * nn);
  plan.n5 = round_sz(pi * best.a * nn);
  // shave the largest groups until group 3 is nonnegative
  while (plan.n1 + plan.n2 + plan.n4 + plan.n5 > n) {
    std::size_t* sizes[4] = {&plan.n1, &plan.n2, &plan.n4, &plan.n5};
    std::size_t* largest = sizes[0];
    for (auto* sz : sizes)
      if (*sz > *largest) largest = sz;
    --*largest;
  }
  plan.n3 = n - (plan.n1 + plan.n2 + plan.n4 + plan.n5);
  return plan;
}

DualState assign_initial(const InitPlan& plan,
                         std::span<const std::size_t> order,
                         const DerivedConstants& c) {
  const std::size_t n = order.size();
  if (n == 0) throw input_error("empty rank order");
  DualState s;
  s.sigma.assign(n, 0.0);
  s.delta.assign(n, 0.0);
  s.fcache.assign(n, 0.0);
  s.fvalid.assign(n, 0);

  // movable samples keep their branch: low means sigma in [0, c2/2] with
  // delta = 2 sigma, high means sigma in [c2/2, c2] with delta = 2(c2-sigma)
  struct Movable {
    std::size_t u;
    bool low;
  };
  std::vector<Movable> primary, secondary;

  if (plan.kind == InitPlan::Kind::Uniform) {
    const double v = c.target_sum / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t u = order[r];
      s.sigma[u] = v;
      primary.push_back({u, v <= c.c2 / 2.0});
    }
  } else {
    if (plan.n1 + plan.n2 + plan.n3 + plan.n4 + plan.n5 != n)
      throw input_error("plan group sizes do not sum to n");
    std::size_t r = 0;
    for (std::size_t k = 0; k < plan.n1; ++k, ++r) {
      s.sigma[order[r]] = 0.0;
      secondary.push_back({order[r], true});
    }
    for (std::size_t k = 0; k < plan.n2; ++k, ++r) {
      s.sigma[order[r]] = plan.sigma2;
      primary.push_back({order[r], true});
    }
    for (std::size_t k = 0; k < plan.n3; ++k, ++r)
      s.sigma[order[r]] = c.c2 / 2.0;
    for (std::size_t k = 0; k < plan.n4; ++k, ++r) {
      s.sigma[order[r]] = plan.sigma4;
      primary.push_back({order[r], false});
    }
    for (std::size_t k = 0; k < plan.n5; ++k, ++r) {
      s.sigma[order[r]] = c.c2;
      secondary.push_back({order[r], false});
    }
  }

  auto branch_delta = [&](std::size_t u, bool low) {
    s.delta[u] = low ? 2.0 * s.sigma[u] : 2.0 * (c.c2 - s.sigma[u]);
    s.delta[u] = std::clamp(s.delta[u], 0.0, c.c2);
  };
  auto current_sum = [&]() {
    long double acc = 0;
    for (double v : s.sigma) acc += v;
    return acc;
  };
  auto absorb = [&](const std::vector<Movable>& group, double& r) {
    for (const auto& mv : group) {
      if (r == 0.0) break;
      const double lo = mv.low ? 0.0 : c.c2 / 2.0;
      const double hi = mv.low ? c.c2 / 2.0 : c.c2;
      const double step = std::clamp(r, lo - s.sigma[mv.u], hi - s.sigma[mv.u]);
      s.sigma[mv.u] += step;
      r -= step;
    }
  };

  double r = static_cast<double>(c.target_sum - current_sum());
  absorb(primary, r);
  absorb(secondary, r);
  // exact top-up: park the floating-point remainder on one movable sample
  r = static_cast<double>(c.target_sum - current_sum());
  if (r != 0.0) {
    bool done = false;
    for (auto group : {&primary, &secondary}) {
      for (const auto& mv : *group) {
        const double lo = mv.low ? 0.0 : c.c2 / 2.0;
        const double hi = mv.low ? c.c2 / 2.0 : c.c2;
        const double moved = s.sigma[mv.u] + r;
        if (moved >= lo && moved <= hi) {
          s.sigma[mv.u] = moved;
          done = true;
          break;
        }
      }
      if (done) break;
    }
  }
  r = static_cast<double>(c.target_sum - current_sum());
  if (std::abs(r) > 1e-10 * std::max(1.0, c.target_sum))
    throw config_error("initial assignment cannot absorb the equality "
                       "residual " +
                       std::to_string(r));

  // the branch is recoverable from the position: repairs never cross c2/2
  for (std::size_t u = 0; u < n; ++u) branch_delta(u, s.sigma[u] <= c.c2 / 2.0);
  return s;
}

}  // namespace usmo
