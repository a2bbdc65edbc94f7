#ifndef USMO_SOLVER_HPP
#define USMO_SOLVER_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "usmo/dataset.hpp"
#include "usmo/errors.hpp"
#include "usmo/kernel.hpp"
#include "usmo/model.hpp"

namespace usmo {

struct Hyperparams {
  double pi = 0.5;        // positive class prior, in (0, 1)
  double lambda = 0.01;   // regularization weight, > 0
  double tau = 1e-3;      // optimality tolerance, > 0
  KernelSpec kernel{};
  double set_eps = 1e-9;  // membership tolerance, scaled by c2
  std::size_t max_full_scans = 1000;

  void validate() const;  // config_error on violation
};

struct DerivedConstants {
  double c1 = 0;          // pi / (2 lambda p)
  double c2 = 0;          // 1 / (2 lambda n)
  double target_sum = 0;  // c1 * p, right side of the equality constraint
  double set_eps = 0;     // absolute membership tolerance (set_eps * c2)
};

DerivedConstants derive_constants(const Hyperparams& h, std::size_t p,
                                  std::size_t n);

// Set memberships derived from (sigma_u, delta_u). They overlap: a
// non-bound sample is in D1 or D2 together with D3.
//   D1: 0 <= delta < c2 and sigma = delta/2        (wants f <= -1)
//   D2: 0 <= delta < c2 and sigma = c2 - delta/2   (wants f >= +1)
//   D3: delta > 0                                  (wants -1 <= f <= 1)
enum : unsigned { MEMBER_D1 = 1u, MEMBER_D2 = 2u, MEMBER_D3 = 4u };

unsigned classify_membership(double sigma_u, double delta_u,
                             const DerivedConstants& c, double eps);

inline bool is_non_bound(double delta_u, double c2, double eps) {
  return delta_u > eps && delta_u < c2 - eps;
}

// Solver iterate. Every coordinate keeps the two-branch form
// sigma_u = delta_u/2 or sigma_u = c2 - delta_u/2 and the equality
// sum(sigma) = target_sum. fcache holds bias-free f values for tracked
// samples (fvalid flags); at minimum the non-bound set is tracked.
struct DualState {
  std::vector<double> sigma;
  std::vector<double> delta;
  std::vector<double> fcache;
  std::vector<unsigned char> fvalid;
  double objective = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t iteration = 0;

  std::size_t size() const { return sigma.size(); }
};

// input_error when the state is not feasible for the dual constraints
void validate_state(const DualState& s, const DerivedConstants& c);

struct MostCriticalValues {
  double m1_max = -std::numeric_limits<double>::infinity();
  double m2_min = std::numeric_limits<double>::infinity();
  double m3_min = std::numeric_limits<double>::infinity();
  double m3_max = -std::numeric_limits<double>::infinity();
  std::ptrdiff_t arg1_max = -1;
  std::ptrdiff_t arg2_min = -1;
  std::ptrdiff_t arg3_min = -1;
  std::ptrdiff_t arg3_max = -1;

  void absorb(std::size_t u, unsigned membership, double f);
};

// m1_max - m3_min <= tau, m3_max - m2_min <= tau, m1_max - m2_min + 2 <= tau
// and m3_max - m3_min <= 2 + tau; terms over empty sets hold vacuously.
// Together they say a bias exists that meets every per-sample band.
bool check_tau_optimality(const MostCriticalValues& mcv, double tau);

// Largest amount by which the ordered pair (i, j) exceeds one of the six
// pairwise tolerance conditions; > 0 means violating.
double pair_violation(unsigned member_i, unsigned member_j, double f_i,
                      double f_j, double tau);

bool is_violating_pair(std::size_t i, std::size_t j, const DualState& s,
                       const DerivedConstants& c, double tau);

// Two-variable subproblem over the working set {i, j}. e is the gradient
// offset e = K_{S,rest} sigma_rest - c1 K_{S,P} 1; a is the pair budget
// sigma_i + sigma_j fixed by the equality constraint.
struct SubproblemInputs {
  std::size_t i = 0, j = 0;
  double e1 = 0, e2 = 0;
  double kii = 0, kjj = 0, kij = 0;
  double eta = 0;  // kii + kjj - 2 kij, >= 0 for a Mercer kernel
  double a = 0;
  double old_sigma_i = 0, old_sigma_j = 0;
  double old_delta_i = 0, old_delta_j = 0;
};

struct SubproblemResult {
  double sigma_i = 0, sigma_j = 0;
  double delta_i = 0, delta_j = 0;
  int case_id = 0;  // 1..4, which branch combination won
  double objective_delta = 0;
};

// Tries the four branch combinations (each reduces to one variable), clips
// into the case interval, and returns the feasible candidate with the
// lowest restricted objective. With eta ~ 0 the objective is linear along
// the pair line and an interval endpoint wins.
SubproblemResult solve_subproblem(const SubproblemInputs& in,
                                  const DerivedConstants& c);

struct WorkingPair {
  std::size_t i = 0, j = 0;
  double violation = 0;  // excess over tau, > 0
};

enum class SelectionScope { NonBound, Full };

// NonBound: maximal violating pair built from the non-bound extrema.
// Full: scans every unlabeled sample against the accumulated extrema,
// returning the first violating pair; a clean scan leaves *out_mcv equal to
// the whole-set most critical values. May compute f for untracked samples.
std::optional<WorkingPair> select_working_set(
    DualState& s, const Dataset& ds, GramCache& cache,
    const DerivedConstants& c, double tau, SelectionScope scope,
    MostCriticalValues* out_mcv = nullptr);

// fcache[u] += d_alpha_i k(x_i, x_u) + d_alpha_j k(x_j, x_u) for every
// tracked u. Row spans cover the unlabeled samples only.
void update_function_cache(DualState& s, std::size_t i, std::size_t j,
                           double old_alpha_i, double old_alpha_j,
                           std::span<const double> row_i_unlabeled,
                           std::span<const double> row_j_unlabeled);

// Mean of the per-sample bias over the non-bound set. Fallback when it is
// empty: intersect the intervals [-1 - f_u, 1 - f_u] of the delta = c2
// samples (midpoint), or the total-violation minimizer when they are
// disjoint; 0 when no sample constrains the bias at all.
double compute_bias(const DualState& s, const DerivedConstants& c);

// alpha = c1 on the p positive samples, -sigma_u on the unlabeled ones
std::vector<double> recover_alpha(std::span<const double> sigma,
                                  const DerivedConstants& c, std::size_t p);

struct TraceRow {
  std::uint64_t iter = 0;
  bool full_scope = false;
  std::uint32_t i = 0, j = 0;
  double objective = 0;
  double violation = 0;
  std::uint64_t kernel_evals = 0;
  double ms = 0;
};

struct SolverTrace {
  std::vector<TraceRow> rows;
  std::uint64_t iterations = 0;
  std::uint64_t full_scans = 0;
  std::uint64_t kernel_evals = 0;
  std::uint64_t cache_misses = 0;
  std::size_t peak_cached_rows = 0;
  std::size_t peak_capacity = 0;
  std::size_t peak_non_bound = 0;
  double total_ms = 0;
  double final_objective = std::numeric_limits<double>::quiet_NaN();

  // header: iter,scope,i,j,objective,violation,kernel_evals,ms
  void write_csv(std::ostream& out) const;
};

struct IterationInfo {
  std::size_t i = 0, j = 0;
  bool full_scope = false;
  double violation = 0;
  double objective_delta = 0;
  double sigma_step_norm = 0;
  int case_id = 0;
};

// Observation hook for instrumented runs; called after every pair update.
struct RunHooks {
  std::function<void(const DualState&, const IterationInfo&)> on_iteration;
};

struct TrainResult {
  Model model;
  SolverTrace trace;
  DualState state;
};

// Budget exhaustion carries the best iterate found so far.
struct budget_error : error {
  budget_error(const std::string& msg, Model best, SolverTrace t)
      : error(msg), best_model(std::move(best)), trace(std::move(t)) {}
  Model best_model;
  SolverTrace trace;
};

// Alternates non-bound passes with full scans until a complete scan finds
// no violating pair. Every iteration strictly decreases the objective.
TrainResult run(const Dataset& ds, const Hyperparams& h, DualState init,
                const RunHooks* hooks = nullptr);

}  // namespace usmo

#endif
