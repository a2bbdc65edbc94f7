#include "usmo/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>

namespace usmo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void Hyperparams::validate() const {
  if (!(pi > 0.0) || !(pi < 1.0))
    throw config_error("pi must be in (0, 1), got " + fmt(pi));
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw config_error("lambda must be > 0, got " + fmt(lambda));
  if (!(tau > 0.0) || !std::isfinite(tau))
    throw config_error("tau must be > 0, got " + fmt(tau));
  if (!(set_eps >= 0.0))
    throw config_error("set_eps must be >= 0");
  if (max_full_scans == 0)
    throw config_error("max_full_scans must be >= 1");
  kernel.validate();
}

DerivedConstants derive_constants(const Hyperparams& h, std::size_t p,
                                  std::size_t n) {
  h.validate();
  if (p < 1) throw input_error("need at least one positive sample");
  if (n < 1) throw input_error("need at least one unlabeled sample");
  DerivedConstants c;
  c.c1 = h.pi / (2.0 * h.lambda * static_cast<double>(p));
  c.c2 = 1.0 / (2.0 * h.lambda * static_cast<double>(n));
  c.target_sum = c.c1 * static_cast<double>(p);
  c.set_eps = h.set_eps * c.c2;
  const double cap = c.c2 * static_cast<double>(n);
  if (c.target_sum > cap * (1.0 + 1e-12))
    throw config_error("infeasible constants: pi=" + fmt(h.pi) + ", lambda=" +
                       fmt(h.lambda) + " give equality target " +
                       fmt(c.target_sum) + " > n*c2 = " + fmt(cap));
  return c;
}

unsigned classify_membership(double sigma_u, double delta_u,
                             const DerivedConstants& c, double eps) {
  const bool low = std::abs(sigma_u - delta_u / 2.0) <= eps;
  const bool high = std::abs(sigma_u - (c.c2 - delta_u / 2.0)) <= eps;
  if (!low && !high)
    throw state_error("coordinate (" + fmt(sigma_u) + ", " + fmt(delta_u) +
                      ") is not in two-branch form");
  unsigned m = 0;
  if (delta_u < c.c2 - eps) {
    if (low) m |= MEMBER_D1;
    if (high) m |= MEMBER_D2;
  }
  if (delta_u > eps) m |= MEMBER_D3;
  return m;
}

void validate_state(const DualState& s, const DerivedConstants& c) {
  const std::size_t n = s.sigma.size();
  if (s.delta.size() != n) throw input_error("sigma/delta size mismatch");
  const double box_tol = 1e-12;
  long double sum = 0;
  for (std::size_t u = 0; u < n; ++u) {
    const double sg = s.sigma[u], dl = s.delta[u];
    if (!(sg >= -box_tol) || !(sg <= c.c2 + box_tol) || !(dl >= -box_tol) ||
        !(dl <= c.c2 + box_tol))
      throw input_error("state outside the box at sample " +
                        std::to_string(u));
    if (sg + dl / 2.0 > c.c2 + c.set_eps + box_tol ||
        sg - dl / 2.0 < -(c.set_eps + box_tol))
      throw input_error("state violates coupled constraints at sample " +
                        std::to_string(u));
    if (std::abs(sg - dl / 2.0) > c.set_eps &&
        std::abs(sg - (c.c2 - dl / 2.0)) > c.set_eps)
      throw input_error("state not in two-branch form at sample " +
                        std::to_string(u));
    sum += sg;
  }
  const double resid =
      std::abs(static_cast<double>(sum) - c.target_sum);
  if (resid > 1e-10 * std::max(1.0, c.target_sum))
    throw input_error("equality constraint violated by " + fmt(resid));
}

void MostCriticalValues::absorb(std::size_t u, unsigned membership, double f) {
  const auto su = static_cast<std::ptrdiff_t>(u);
  if (membership & MEMBER_D1) {
    if (f > m1_max || (f == m1_max && su < arg1_max)) {
      m1_max = f;
      arg1_max = su;
    }
  }
  if (membership & MEMBER_D2) {
    if (f < m2_min || (f == m2_min && su < arg2_min)) {
      m2_min = f;
      arg2_min = su;
    }
  }
  if (membership & MEMBER_D3) {
    if (f < m3_min || (f == m3_min && su < arg3_min)) {
      m3_min = f;
      arg3_min = su;
    }
    if (f > m3_max || (f == m3_max && su < arg3_max)) {
      m3_max = f;
      arg3_max = su;
    }
  }
}

bool check_tau_optimality(const MostCriticalValues& mcv, double tau) {
  // the four comparisons are exactly the feasibility of a bias that puts
  // D1 below -1, D2 above +1 and D3 inside [-1, 1], up to tau
  return mcv.m1_max - mcv.m3_min <= tau && mcv.m3_max - mcv.m2_min <= tau &&
         mcv.m1_max - mcv.m2_min + 2.0 <= tau &&
         mcv.m3_max - mcv.m3_min - 2.0 <= tau;
}

double pair_violation(unsigned mi, unsigned mj, double fi, double fj,
                      double tau) {
  double v = -kInf;
  if ((mi & MEMBER_D1) && (mj & MEMBER_D3)) v = std::max(v, fi - fj - tau);
  if ((mi & MEMBER_D3) && (mj & MEMBER_D1)) v = std::max(v, fj - fi - tau);
  if ((mi & MEMBER_D2) && (mj & MEMBER_D3)) v = std::max(v, fj - fi - tau);
  if ((mi & MEMBER_D3) && (mj & MEMBER_D2)) v = std::max(v, fi - fj - tau);
  if ((mi & MEMBER_D1) && (mj & MEMBER_D2))
    v = std::max(v, fi - fj + 2.0 - tau);
  if ((mi & MEMBER_D2) && (mj & MEMBER_D1))
    v = std::max(v, fj - fi + 2.0 - tau);
  // two saturated coordinates can only host a common bias when their f
  // values are within 2 of each other
  if ((mi & MEMBER_D3) && (mj & MEMBER_D3))
    v = std::max(v, std::abs(fi - fj) - 2.0 - tau);
  return v;
}

bool is_violating_pair(std::size_t i, std::size_t j, const DualState& s,
                       const DerivedConstants& c, double tau) {
  if (i == j) return false;
  const unsigned mi = classify_membership(s.sigma[i], s.delta[i], c, c.set_eps);
  const unsigned mj = classify_membership(s.sigma[j], s.delta[j], c, c.set_eps);
  return pair_violation(mi, mj, s.fcache[i], s.fcache[j], tau) > 0.0;
}

SubproblemResult solve_subproblem(const SubproblemInputs& in,
                                  const DerivedConstants& c) {
  const double c2 = c.c2;
  const double a = in.a;
  if (!std::isfinite(a) || !std::isfinite(in.e1) || !std::isfinite(in.e2))
    throw state_error("non-finite subproblem inputs");
  if (in.eta < -1e-12)
    throw state_error("negative curvature " + fmt(in.eta) +
                      "; kernel is not positive semidefinite");
  const double eta = std::max(in.eta, 0.0);

  struct Case {
    double lo, hi, off;
  };
  // per-case sigma_j interval and linear offset of the stationarity equation
  const Case cases[4] = {
      {std::max(c2 / 2.0, a - c2), std::min(c2, a - c2 / 2.0), 0.0},
      {std::max(0.0, a - c2), std::min(c2 / 2.0, a - c2 / 2.0), 2.0},
      {std::max(c2 / 2.0, a - c2 / 2.0), std::min(c2, a), -2.0},
      {std::max(0.0, a - c2 / 2.0), std::min(c2 / 2.0, a), 0.0},
  };

  auto deltas = [&](int case_id, double si, double sj, double& di,
                    double& dj) {
    di = (case_id == 1 || case_id == 2) ? 2.0 * (c2 - si) : 2.0 * si;
    dj = (case_id == 1 || case_id == 3) ? 2.0 * (c2 - sj) : 2.0 * sj;
    di = std::clamp(di, 0.0, c2);
    dj = std::clamp(dj, 0.0, c2);
  };
  auto restricted = [&](double si, double sj, double di, double dj) {
    return 0.5 * (si * si * in.kii + 2.0 * si * sj * in.kij +
                  sj * sj * in.kjj) +
           in.e1 * si + in.e2 * sj - 0.5 * (di + dj);
  };

  const double old_obj = restricted(in.old_sigma_i, in.old_sigma_j,
                                    in.old_delta_i, in.old_delta_j);
  const double slope = a * (in.kii - in.kij) + in.e1 - in.e2;

  SubproblemResult best;
  double best_obj = kInf;
  bool found = false;
  for (int k = 0; k < 4; ++k) {
    const Case& cs = cases[k];
    if (cs.lo > cs.hi) continue;
    double cand[2];
    int ncand;
    if (eta > 1e-12) {
      cand[0] = std::clamp((slope + cs.off) / eta, cs.lo, cs.hi);
      ncand = 1;
    } else {
      // linear objective along the pair line: an endpoint wins
      cand[0] = cs.lo;
      cand[1] = cs.hi;
      ncand = 2;
    }
    for (int t = 0; t < ncand; ++t) {
      const double sj = cand[t];
      const double si = a - sj;
      double di, dj;
      deltas(k + 1, si, sj, di, dj);
      const double obj = restricted(si, sj, di, dj);
      if (!found || obj < best_obj) {
        found = true;
        best_obj = obj;
        best.sigma_i = si;
        best.sigma_j = sj;
        best.delta_i = di;
        best.delta_j = dj;
        best.case_id = k + 1;
      }
    }
  }
  if (!found)
    throw state_error("all four subproblem intervals empty (a = " + fmt(a) +
                      ", c2 = " + fmt(c2) + ")");
  best.objective_delta = best_obj - old_obj;
  return best;
}

namespace {

struct Counterpart {
  bool found = false;
  std::size_t i = 0, j = 0;
  double violation = -kInf;
};

// Best violating pairing of sample u against the tracked extrema; (i, j)
// is ordered the way the pairwise conditions name the sets.
Counterpart best_counterpart(std::size_t u, unsigned m, double f,
                             const MostCriticalValues& mcv, double tau) {
  Counterpart best;
  auto consider = [&](double violation, std::size_t i, std::size_t j) {
    if (violation > best.violation) {
      best.found = true;
      best.violation = violation;
      best.i = i;
      best.j = j;
    }
  };
  if (m & MEMBER_D1) {
    if (mcv.arg3_min >= 0)
      consider(f - mcv.m3_min - tau, u, static_cast<std::size_t>(mcv.arg3_min));
    if (mcv.arg2_min >= 0)
      consider(f - mcv.m2_min + 2.0 - tau, u,
               static_cast<std::size_t>(mcv.arg2_min));
  }
  if (m & MEMBER_D2) {
    if (mcv.arg3_max >= 0)
      consider(mcv.m3_max - f - tau, static_cast<std::size_t>(mcv.arg3_max), u);
    if (mcv.arg1_max >= 0)
      consider(mcv.m1_max - f + 2.0 - tau,
               static_cast<std::size_t>(mcv.arg1_max), u);
  }
  if (m & MEMBER_D3) {
    if (mcv.arg1_max >= 0)
      consider(mcv.m1_max - f - tau, static_cast<std::size_t>(mcv.arg1_max), u);
    if (mcv.arg2_min >= 0)
      consider(f - mcv.m2_min - tau, u, static_cast<std::size_t>(mcv.arg2_min));
    if (mcv.arg3_min >= 0)
      consider(f - mcv.m3_min - 2.0 - tau, u,
               static_cast<std::size_t>(mcv.arg3_min));
    if (mcv.arg3_max >= 0)
      consider(mcv.m3_max - f - 2.0 - tau,
               static_cast<std::size_t>(mcv.arg3_max), u);
  }
  return best;
}

std::optional<WorkingPair> maximal_pair(const MostCriticalValues& mcv,
                                        double tau) {
  WorkingPair best;
  best.violation = 0.0;
  bool found = false;
  auto consider = [&](double violation, std::ptrdiff_t i, std::ptrdiff_t j) {
    if (i < 0 || j < 0 || i == j) return;
    if (violation > best.violation) {
      found = true;
      best.violation = violation;
      best.i = static_cast<std::size_t>(i);
      best.j = static_cast<std::size_t>(j);
    }
  };
  consider(mcv.m1_max - mcv.m3_min - tau, mcv.arg1_max, mcv.arg3_min);
  consider(mcv.m3_max - mcv.m2_min - tau, mcv.arg3_max, mcv.arg2_min);
  consider(mcv.m1_max - mcv.m2_min + 2.0 - tau, mcv.arg1_max, mcv.arg2_min);
  consider(mcv.m3_max - mcv.m3_min - 2.0 - tau, mcv.arg3_max, mcv.arg3_min);
  if (!found) return std::nullopt;
  return best;
}

// bias-free f(x_u) from scratch via the kernel row of x_u
void seed_fvalue(DualState& s, const Dataset& ds, GramCache& cache,
                 const DerivedConstants& c, std::size_t u) {
  const std::size_t p = ds.num_positive;
  auto row = cache.row(ds, ds.unlabeled_index(u));
  double pos = 0;
  for (std::size_t i = 0; i < p; ++i) pos += row[i];
  double neg = 0;
  for (std::size_t v = 0; v < s.size(); ++v) neg += s.sigma[v] * row[p + v];
  s.fcache[u] = c.c1 * pos - neg;
  s.fvalid[u] = 1;
}

}  // namespace

std::optional<WorkingPair> select_working_set(
    DualState& s, const Dataset& ds, GramCache& cache,
    const DerivedConstants& c, double tau, SelectionScope scope,
    MostCriticalValues* out_mcv) {
  const std::size_t n = s.size();
  auto membership = [&](std::size_t u) {
    return classify_membership(s.sigma[u], s.delta[u], c, c.set_eps);
  };
  auto ensure_valid = [&](std::size_t u) {
    if (!s.fvalid[u]) seed_fvalue(s, ds, cache, c, u);
  };

  MostCriticalValues mcv;
  for (std::size_t u = 0; u < n; ++u) {
    if (!is_non_bound(s.delta[u], c.c2, c.set_eps)) continue;
    ensure_valid(u);
    mcv.absorb(u, membership(u), s.fcache[u]);
  }
  if (scope == SelectionScope::NonBound) {
    if (out_mcv) *out_mcv = mcv;
    return maximal_pair(mcv, tau);
  }

  for (std::size_t u = 0; u < n; ++u) {
    ensure_valid(u);
    const unsigned m = membership(u);
    const double f = s.fcache[u];
    auto cp = best_counterpart(u, m, f, mcv, tau);
    if (cp.found && cp.violation > 0.0 && cp.i != cp.j) {
      if (out_mcv) *out_mcv = mcv;
      return WorkingPair{cp.i, cp.j, cp.violation};
    }
    mcv.absorb(u, m, f);
  }
  if (out_mcv) *out_mcv = mcv;
  return std::nullopt;
}

void update_function_cache(DualState& s, std::size_t i, std::size_t j,
                           double old_alpha_i, double old_alpha_j,
                           std::span<const double> row_i_unlabeled,
                           std::span<const double> row_j_unlabeled) {
  const double dai = -s.sigma[i] - old_alpha_i;
  const double daj = -s.sigma[j] - old_alpha_j;
  if (dai == 0.0 && daj == 0.0) return;
  for (std::size_t u = 0; u < s.size(); ++u) {
    if (!s.fvalid[u]) continue;
    s.fcache[u] += dai * row_i_unlabeled[u] + daj * row_j_unlabeled[u];
  }
}

double compute_bias(const DualState& s, const DerivedConstants& c) {
  const double c2 = c.c2, eps = c.set_eps;
  auto need_f = [&](std::size_t u) {
    if (!s.fvalid[u])
      throw state_error("bias needs f for sample " + std::to_string(u));
    return s.fcache[u];
  };

  long double sum = 0;
  std::size_t count = 0;
  for (std::size_t u = 0; u < s.size(); ++u) {
    if (!is_non_bound(s.delta[u], c2, eps)) continue;
    const unsigned m = classify_membership(s.sigma[u], s.delta[u], c, eps);
    const double f = need_f(u);
    if (m & MEMBER_D1)
      sum += -1.0 - f;
    else if (m & MEMBER_D2)
      sum += 1.0 - f;
    else
      throw state_error("non-bound sample outside D1/D2");
    ++count;
  }
  if (count > 0) return static_cast<double>(sum / count);

  // no non-bound samples: fall back to the delta = c2 interval system
  std::vector<double> lo, hi;
  for (std::size_t u = 0; u < s.size(); ++u) {
    if (std::abs(s.delta[u] - c2) > eps) continue;
    const double f = need_f(u);
    lo.push_back(-1.0 - f);
    hi.push_back(1.0 - f);
  }
  if (lo.empty()) return 0.0;
  const double max_lo = *std::max_element(lo.begin(), lo.end());
  const double min_hi = *std::min_element(hi.begin(), hi.end());
  if (max_lo <= min_hi) return 0.5 * (max_lo + min_hi);

  // disjoint intervals: minimize the total violation, a convex piecewise
  // linear function whose minimum sits on one of the endpoints
  auto violation = [&](double b) {
    double v = 0;
    for (std::size_t k = 0; k < lo.size(); ++k)
      v += std::max(0.0, lo[k] - b) + std::max(0.0, b - hi[k]);
    return v;
  };
  std::vector<double> candidates = lo;
  candidates.insert(candidates.end(), hi.begin(), hi.end());
  std::sort(candidates.begin(), candidates.end());
  double best_b = candidates.front();
  double best_v = violation(best_b);
  for (double b : candidates) {
    const double v = violation(b);
    if (v < best_v) {
      best_v = v;
      best_b = b;
    }
  }
  return best_b;
}

std::vector<double> recover_alpha(std::span<const double> sigma,
                                  const DerivedConstants& c, std::size_t p) {
  std::vector<double> alpha(p + sigma.size());
  for (std::size_t i = 0; i < p; ++i) alpha[i] = c.c1;
  for (std::size_t u = 0; u < sigma.size(); ++u) alpha[p + u] = -sigma[u];
  return alpha;
}

void SolverTrace::write_csv(std::ostream& out) const {
  out << "iter,scope,i,j,objective,violation,kernel_evals,ms\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%llu,%s,%u,%u,%.17g,%.17g,%llu,%.3f\n",
                  static_cast<unsigned long long>(r.iter),
                  r.full_scope ? "full" : "nonbound", r.i, r.j, r.objective,
                  r.violation,
                  static_cast<unsigned long long>(r.kernel_evals), r.ms);
    out << buf;
  }
}

namespace {

Model make_model(const Dataset& ds, std::span<const double> sigma,
                 const DerivedConstants& c, double bias,
                 const KernelSpec& kernel) {
  Model m;
  m.kernel = kernel;
  m.bias = bias;
  m.dim = ds.dim;
  auto alpha = recover_alpha(sigma, c, ds.num_positive);
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (alpha[i] == 0.0) continue;
    m.alpha.push_back(alpha[i]);
    auto x = ds.sample(i);
    m.vectors.insert(m.vectors.end(), x.begin(), x.end());
  }
  return m;
}

struct Session {
  const Dataset& ds;
  const Hyperparams& h;
  const DerivedConstants c;
  const RunHooks* hooks;
  DualState st;
  GramCache cache;
  std::vector<double> q;  // c1 * sum_p k(x_u, x_p), fixed during the run
  std::vector<std::uint32_t> nb_list;
  std::vector<std::int32_t> nb_pos;
  SolverTrace trace;
  std::chrono::steady_clock::time_point t0;
  std::size_t p, n;

  Session(const Dataset& dataset, const Hyperparams& hp, DerivedConstants dc,
          DualState init, const RunHooks* hk)
      : ds(dataset),
        h(hp),
        c(dc),
        hooks(hk),
        st(std::move(init)),
        cache(hp.kernel, 64),
        t0(std::chrono::steady_clock::now()),
        p(dataset.num_positive),
        n(dataset.num_unlabeled) {
    st.fcache.assign(n, 0.0);
    st.fvalid.assign(n, 0);
    nb_pos.assign(n, -1);
    q.assign(n, 0.0);
  }

  double ms() const {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - t0)
        .count();
  }

  unsigned membership(std::size_t u) const {
    return classify_membership(st.sigma[u], st.delta[u], c, c.set_eps);
  }

  void refresh_nb(std::size_t u) {
    const bool nb = is_non_bound(st.delta[u], c.c2, c.set_eps);
    if (nb && nb_pos[u] < 0) {
      nb_pos[u] = static_cast<std::int32_t>(nb_list.size());
      nb_list.push_back(static_cast<std::uint32_t>(u));
      if (!st.fvalid[u]) seed_fvalue(st, ds, cache, c, u);
      trace.peak_non_bound = std::max(trace.peak_non_bound, nb_list.size());
    } else if (!nb && nb_pos[u] >= 0) {
      const auto pos = static_cast<std::size_t>(nb_pos[u]);
      nb_list[pos] = nb_list.back();
      nb_pos[nb_list[pos]] = static_cast<std::int32_t>(pos);
      nb_list.pop_back();
      nb_pos[u] = -1;
    }
  }

  void seed_all() {
    for (std::size_t u = 0; u < n; ++u) {
      auto row = cache.row(ds, p + u);
      double pos = 0;
      for (std::size_t i = 0; i < p; ++i) pos += row[i];
      q[u] = c.c1 * pos;
      double neg = 0;
      for (std::size_t v = 0; v < n; ++v) neg += st.sigma[v] * row[p + v];
      st.fcache[u] = q[u] - neg;
      st.fvalid[u] = 1;
      refresh_nb(u);
    }
    st.objective = objective_from_cache();
  }

  // F = -1/2 sum_u sigma_u (q_u + f_u) - 1/2 sum_u delta_u, which matches
  // the dual objective whenever the cache matches the true f values
  double objective_from_cache() const {
    long double acc = 0;
    for (std::size_t u = 0; u < n; ++u) {
      acc += -0.5L * st.sigma[u] * (q[u] + st.fcache[u]);
      acc += -0.5L * st.delta[u];
    }
    return static_cast<double>(acc);
  }

  MostCriticalValues nb_extrema() const {
    MostCriticalValues mcv;
    for (auto u : nb_list) mcv.absorb(u, membership(u), st.fcache[u]);
    return mcv;
  }

  void do_pair(std::size_t i, std::size_t j, double violation,
               bool full_scope) {
    if (!st.fvalid[i] || !st.fvalid[j])
      throw state_error("working pair without cached f values");
    auto row_i = cache.row(ds, p + i);
    auto row_j = cache.row(ds, p + j);

    SubproblemInputs in;
    in.i = i;
    in.j = j;
    in.kii = row_i[p + i];
    in.kjj = row_j[p + j];
    in.kij = row_i[p + j];
    in.eta = in.kii + in.kjj - 2.0 * in.kij;
    in.old_sigma_i = st.sigma[i];
    in.old_sigma_j = st.sigma[j];
    in.old_delta_i = st.delta[i];
    in.old_delta_j = st.delta[j];
    in.a = st.sigma[i] + st.sigma[j];
    in.e1 = -st.fcache[i] - (in.kii * st.sigma[i] + in.kij * st.sigma[j]);
    in.e2 = -st.fcache[j] - (in.kij * st.sigma[i] + in.kjj * st.sigma[j]);

    const auto res = solve_subproblem(in, c);
    const double old_ai = -st.sigma[i];
    const double old_aj = -st.sigma[j];
    const double di = res.sigma_i - st.sigma[i];
    const double dj = res.sigma_j - st.sigma[j];

    st.sigma[i] = res.sigma_i;
    st.sigma[j] = res.sigma_j;
    st.delta[i] = res.delta_i;
    st.delta[j] = res.delta_j;
    update_function_cache(st, i, j, old_ai, old_aj,
                          row_i.subspan(p, n), row_j.subspan(p, n));
    st.objective += res.objective_delta;
    st.iteration += 1;
    refresh_nb(i);
    refresh_nb(j);

    trace.rows.push_back({st.iteration, full_scope, static_cast<std::uint32_t>(i),
                          static_cast<std::uint32_t>(j), st.objective,
                          violation, cache.evaluations(), ms()});
    if (hooks && hooks->on_iteration) {
      IterationInfo info;
      info.i = i;
      info.j = j;
      info.full_scope = full_scope;
      info.violation = violation;
      info.objective_delta = res.objective_delta;
      info.sigma_step_norm = std::sqrt(di * di + dj * dj);
      info.case_id = res.case_id;
      hooks->on_iteration(st, info);
    }
  }

  void nonbound_phase() {
    const std::uint64_t guard = 1000 + 200 * static_cast<std::uint64_t>(n);
    for (std::uint64_t k = 0; k < guard; ++k) {
      auto pair = maximal_pair(nb_extrema(), h.tau);
      if (!pair) return;
      do_pair(pair->i, pair->j, pair->violation, false);
    }
    // guard tripped; the next full scan re-establishes progress
  }

  bool full_scan() {
    bool any = false;
    MostCriticalValues mcv = nb_extrema();
    for (std::size_t u = 0; u < n; ++u) {
      if (!st.fvalid[u]) seed_fvalue(st, ds, cache, c, u);
      const unsigned m = membership(u);
      const double f = st.fcache[u];
      auto cp = best_counterpart(u, m, f, mcv, h.tau);
      if (cp.found && cp.violation > 0.0 && cp.i != cp.j) {
        do_pair(cp.i, cp.j, cp.violation, true);
        any = true;
        // the pair update moved f everywhere; rebuild the running extrema
        // over the non-bound set and the already-examined prefix
        mcv = nb_extrema();
        for (std::size_t v = 0; v <= u; ++v)
          mcv.absorb(v, membership(v), st.fcache[v]);
      } else {
        mcv.absorb(u, m, f);
      }
    }
    trace.full_scans += 1;
    if (!any && !check_tau_optimality(mcv, h.tau))
      throw state_error("clean full scan left tolerance conditions unmet");
    return any;
  }

  void update_counters() {
    trace.kernel_evals = cache.evaluations();
    trace.cache_misses = cache.misses();
    trace.peak_cached_rows = std::max(trace.peak_cached_rows,
                                      cache.peak_rows());
    trace.peak_capacity = std::max(trace.peak_capacity, cache.capacity());
  }

  TrainResult finish() {
    const double bias = compute_bias(st, c);
    TrainResult out;
    out.model = make_model(ds, st.sigma, c, bias, h.kernel);
    update_counters();
    trace.iterations = st.iteration;
    trace.final_objective = st.objective;
    trace.total_ms = ms();
    out.trace = std::move(trace);
    out.state = std::move(st);
    return out;
  }
};

}  // namespace

TrainResult run(const Dataset& ds, const Hyperparams& h, DualState init,
                const RunHooks* hooks) {
  h.validate();
  if (ds.num_positive < 1) throw input_error("dataset has no positive samples");
  if (ds.num_unlabeled < 1)
    throw input_error("dataset has no unlabeled samples");
  if (init.size() != ds.num_unlabeled)
    throw input_error("initial state size does not match the dataset");
  const DerivedConstants c = derive_constants(h, ds.num_positive,
                                              ds.num_unlabeled);
  validate_state(init, c);

  Session s(ds, h, c, std::move(init), hooks);
  s.seed_all();
  for (;;) {
    s.cache.set_capacity(std::max<std::size_t>(64, 2 * s.nb_list.size()));
    s.trace.peak_capacity = std::max(s.trace.peak_capacity,
                                     s.cache.capacity());
    s.nonbound_phase();
    const bool any = s.full_scan();
    s.st.objective = s.objective_from_cache();
    s.update_counters();
    if (!any) break;
    if (s.trace.full_scans >= h.max_full_scans) {
      const double bias = compute_bias(s.st, c);
      Model best = make_model(ds, s.st.sigma, c, bias, h.kernel);
      s.trace.iterations = s.st.iteration;
      s.trace.final_objective = s.st.objective;
      s.trace.total_ms = s.ms();
      throw budget_error("full scan budget (" +
                             std::to_string(h.max_full_scans) + ") exhausted",
                         std::move(best), std::move(s.trace));
    }
  }
  return s.finish();
}

}  // namespace usmo
