#include "usmo/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "usmo/errors.hpp"

namespace usmo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void matvec(const DenseProblem& prob, std::span<const double> x,
            std::vector<double>& out) {
  const std::size_t n = prob.n;
  out.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = prob.Q.data() + i * n;
    double acc = 0;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
    out[i] = acc;
  }
}

double lambda_max(const DenseProblem& prob) {
  const std::size_t n = prob.n;
  std::vector<double> v(n, 1.0 / std::sqrt(static_cast<double>(n)));
  std::vector<double> w;
  double lam = 0;
  for (int it = 0; it < 100; ++it) {
    matvec(prob, v, w);
    double norm = 0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-300) break;
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / norm;
    lam = norm;
  }
  return std::max(lam, 1e-12);
}

}  // namespace

DenseProblem build_dense(const Dataset& ds, const DerivedConstants& c,
                         const KernelSpec& kernel) {
  const std::size_t p = ds.num_positive, n = ds.num_unlabeled;
  DenseProblem prob;
  prob.n = n;
  prob.c2 = c.c2;
  prob.target_sum = c.target_sum;
  prob.Q.assign(n * n, 0.0);
  prob.q.assign(n, 0.0);
  for (std::size_t u = 0; u < n; ++u) {
    auto xu = ds.sample(p + u);
    for (std::size_t v = u; v < n; ++v) {
      const double k = eval_kernel(kernel, xu, ds.sample(p + v));
      prob.Q[u * n + v] = k;
      prob.Q[v * n + u] = k;
    }
    double acc = 0;
    for (std::size_t i = 0; i < p; ++i)
      acc += eval_kernel(kernel, xu, ds.sample(i));
    prob.q[u] = c.c1 * acc;
  }
  return prob;
}

double dual_objective(const DenseProblem& prob, std::span<const double> sigma,
                      std::span<const double> delta) {
  const std::size_t n = prob.n;
  double quad = 0, lin = 0, dsum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = prob.Q.data() + i * n;
    double acc = 0;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * sigma[j];
    quad += sigma[i] * acc;
    lin += prob.q[i] * sigma[i];
    dsum += delta[i];
  }
  return 0.5 * quad - lin - 0.5 * dsum;
}

std::vector<double> reduce_delta(std::span<const double> sigma, double c2) {
  std::vector<double> delta(sigma.size());
  for (std::size_t u = 0; u < sigma.size(); ++u) {
    const double s = sigma[u];
    if (s < -1e-12 || s > c2 + 1e-12)
      throw input_error("sigma outside [0, c2] at coordinate " +
                        std::to_string(u));
    delta[u] = std::min({2.0 * s, 2.0 * (c2 - s), c2});
    delta[u] = std::clamp(delta[u], 0.0, c2);
  }
  return delta;
}

double reduced_objective(const DenseProblem& prob,
                         std::span<const double> sigma) {
  const auto delta = reduce_delta(sigma, prob.c2);
  return dual_objective(prob, sigma, delta);
}

std::vector<double> project_capped_simplex(std::span<const double> z,
                                           double c2, double target) {
  const std::size_t n = z.size();
  std::vector<double> out(n);
  auto fill = [&](double theta) {
    long double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = std::clamp(z[i] - theta, 0.0, c2);
      sum += out[i];
    }
    return static_cast<double>(sum);
  };
  double lo = *std::min_element(z.begin(), z.end()) - c2 - 1.0;
  double hi = *std::max_element(z.begin(), z.end()) + 1.0;
  for (int it = 0; it < 128; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (fill(mid) >= target)
      lo = mid;
    else
      hi = mid;
  }
  fill(lo);
  return out;
}

namespace {

// prox of gamma * sum_u max(-sigma_u, sigma_u - c2) over the capped simplex;
// the equality multiplier is found by bisection, each coordinate solves a
// one-dimensional convex piecewise-quadratic problem
void prox_step(std::span<const double> z, double c2, double target,
               double gamma, std::vector<double>& out) {
  const std::size_t n = z.size();
  out.resize(n);
  auto coord = [&](double zu, double nu) {
    const double left = std::clamp(zu + gamma - nu, 0.0, c2 / 2.0);
    const double right = std::clamp(zu - gamma - nu, c2 / 2.0, c2);
    auto value = [&](double s) {
      const double pl = std::max(-s, s - c2);
      return 0.5 * (s - zu) * (s - zu) + gamma * pl + nu * s;
    };
    return value(left) <= value(right) ? left : right;
  };
  auto fill = [&](double nu) {
    long double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = coord(z[i], nu);
      sum += out[i];
    }
    return static_cast<double>(sum);
  };
  double lo = *std::min_element(z.begin(), z.end()) - gamma - c2 - 1.0;
  double hi = *std::max_element(z.begin(), z.end()) + gamma + 1.0;
  for (int it = 0; it < 128; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (fill(mid) >= target)
      lo = mid;
    else
      hi = mid;
  }
  fill(lo);
}

}  // namespace

OracleSolution solve_dense(const Dataset& ds, const DerivedConstants& c,
                           const KernelSpec& kernel) {
  if (ds.size() > 2000)
    throw input_error("dense reference solver is limited to 2000 samples");
  const DenseProblem prob = build_dense(ds, c, kernel);
  const std::size_t n = prob.n;

  std::vector<double> sigma(n, c.target_sum / static_cast<double>(n));
  sigma = project_capped_simplex(sigma, c.c2, c.target_sum);
  std::vector<double> best = sigma;
  double best_obj = reduced_objective(prob, best);

  // phase 1: projected subgradient with diminishing normalized steps
  {
    std::vector<double> grad(n), qs(n), step(n);
    const double radius = 0.5 * c.c2 * std::sqrt(static_cast<double>(n));
    const int max_iters = 20000;
    int since_improved = 0;
    for (int k = 0; k < max_iters && since_improved < 3000; ++k) {
      matvec(prob, sigma, qs);
      double quad = 0, lin = 0, dsum = 0;
      for (std::size_t u = 0; u < n; ++u) {
        quad += sigma[u] * qs[u];
        lin += prob.q[u] * sigma[u];
        dsum += std::min({2.0 * sigma[u], 2.0 * (c.c2 - sigma[u]), c.c2});
      }
      const double obj = 0.5 * quad - lin - 0.5 * dsum;
      if (obj < best_obj - 1e-12 * (1.0 + std::abs(best_obj))) {
        best_obj = obj;
        best = sigma;
        since_improved = 0;
      } else {
        ++since_improved;
      }
      double norm = 0;
      for (std::size_t u = 0; u < n; ++u) {
        grad[u] = qs[u] - prob.q[u] +
                  (sigma[u] < c.c2 / 2.0 ? -1.0
                                         : (sigma[u] > c.c2 / 2.0 ? 1.0 : 0.0));
        norm += grad[u] * grad[u];
      }
      norm = std::sqrt(norm);
      if (norm < 1e-300) break;
      const double s = radius / (norm * std::sqrt(static_cast<double>(k + 1)));
      for (std::size_t u = 0; u < n; ++u) step[u] = sigma[u] - s * grad[u];
      sigma = project_capped_simplex(step, c.c2, c.target_sum);
    }
  }

  // phase 2: proximal-gradient polish with adaptive restart, keeps the
  // subgradient phase's best iterate when it cannot improve on it
  {
    const double lip = 1.01 * lambda_max(prob);
    const double gamma = 1.0 / lip;
    std::vector<double> x = best, y = best, xp(n), grad(n), pre(n);
    double t = 1.0;
    double fx = best_obj;
    int stalled = 0;
    const int max_iters = 20000;
    for (int k = 0; k < max_iters && stalled < 200; ++k) {
      matvec(prob, y, grad);
      for (std::size_t u = 0; u < n; ++u)
        pre[u] = y[u] - gamma * (grad[u] - prob.q[u]);
      prox_step(pre, c.c2, c.target_sum, gamma, xp);
      const double fxp = reduced_objective(prob, xp);
      if (fxp > fx) {
        // momentum overshoot: restart from the last good point
        y = x;
        t = 1.0;
        ++stalled;
        continue;
      }
      const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      for (std::size_t u = 0; u < n; ++u)
        y[u] = xp[u] + ((t - 1.0) / tn) * (xp[u] - x[u]);
      t = tn;
      x = xp;
      if (fxp < fx - 1e-15 * (1.0 + std::abs(fx)))
        stalled = 0;
      else
        ++stalled;
      fx = fxp;
      if (fx < best_obj) {
        best_obj = fx;
        best = x;
      }
    }
  }

  OracleSolution sol;
  sol.method = OracleSolution::Method::ProjectedSubgradient;
  sol.sigma = std::move(best);
  sol.delta = reduce_delta(sol.sigma, c.c2);
  sol.objective = dual_objective(prob, sol.sigma, sol.delta);
  sol.certified_gap = kInf;
  return sol;
}

OracleSolution enumerate_tiny(const Dataset& ds, const DerivedConstants& c,
                              const KernelSpec& kernel, std::size_t steps) {
  const std::size_t n = ds.num_unlabeled;
  if (n > 4) throw input_error("grid enumeration is limited to n <= 4");
  if (steps < 2) throw input_error("need at least 2 grid points");
  const DenseProblem prob = build_dense(ds, c, kernel);

  std::vector<double> sigma(n, 0.0), best(n, 0.0);
  double best_obj = kInf;
  bool found = false;
  const double h = c.c2 / static_cast<double>(steps - 1);

  auto consider = [&]() {
    const double obj = reduced_objective(prob, sigma);
    if (!found || obj < best_obj) {
      found = true;
      best_obj = obj;
      best = sigma;
    }
  };
  auto walk = [&](auto&& self, std::size_t dim, double partial) -> void {
    if (dim + 1 == n) {
      const double last = c.target_sum - partial;
      if (last < -1e-12 || last > c.c2 + 1e-12) return;
      sigma[dim] = std::clamp(last, 0.0, c.c2);
      consider();
      return;
    }
    for (std::size_t k = 0; k < steps; ++k) {
      sigma[dim] = static_cast<double>(k) * h;
      if (partial + sigma[dim] > c.target_sum + 1e-12) break;
      self(self, dim + 1, partial + sigma[dim]);
    }
  };
  walk(walk, 0, 0.0);
  if (!found)
    throw state_error("no feasible grid point; equality target out of range");

  // Lipschitz bound of the reduced objective over the box
  double l2 = 0;
  for (std::size_t u = 0; u < n; ++u) {
    double row_abs = 0;
    for (std::size_t v = 0; v < n; ++v)
      row_abs += std::abs(prob.Q[u * n + v]);
    const double bu = row_abs * c.c2 + std::abs(prob.q[u]) + 1.0;
    l2 += bu * bu;
  }
  l2 = std::sqrt(l2);

  OracleSolution sol;
  sol.method = OracleSolution::Method::GridEnumeration;
  sol.sigma = std::move(best);
  sol.delta = reduce_delta(sol.sigma, c.c2);
  sol.objective = best_obj;
  sol.certified_gap = n <= 1 ? 0.0 : l2 * h * static_cast<double>(n);
  return sol;
}

}  // namespace usmo
