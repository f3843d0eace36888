#pragma once

#include "meanviab/viability.hpp"

namespace meanviab {

/// Piecewise delay rho_s = tau_k on [tau_k, tau_{k+1}), rho_s = s off [t, tau).
/// Breakpoints are grid indices; spacing <= eps realizes s - eps <= rho_s <= s.
struct DelayFunction {
  std::vector<Index> breakpoints;  // k_0 = index(t) < ... < k_m = index(tau)

  Index start_index() const { return breakpoints.front(); }
  Index stop_index() const { return breakpoints.back(); }

  /// Grid index of rho at grid time index k.
  Index rho_index(Index k) const {
    if (breakpoints.empty() || k < breakpoints.front() || k >= breakpoints.back()) return k;
    auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), k);
    return *(it - 1);
  }
  double rho(const TimeGrid& grid, double s) const {
    return grid.time(rho_index(grid.index_of(s)));
  }
};

struct ConditionCheck {
  bool pass = false;
  double slack = 0.0;  // worst margin (negative = violated by |slack|)
  std::string detail;
};

/// Per-condition verification of the approximate-solution definition.
struct ConditionReport {
  ConditionCheck stopping_time;   // (i)   t < tau <= T
  ConditionCheck delay;           // (ii)  s - eps <= rho_s <= s, rho = s past tau
  ConditionCheck energy;          // (iii) perturbation energy <= eps (tau - t)
  ConditionCheck moments;         // (iv)  delayed coefficients square-integrable
  ConditionCheck dynamics;        // (v)   stored paths solve the delayed SDE
  ConditionCheck target;          // (vi)  dist_K(E vhat(rho_s ^ tau)) <= eps E[s ^ tau - t]
  bool all_pass() const {
    return stopping_time.pass && delay.pass && energy.pass && moments.pass && dynamics.pass &&
           target.pass;
  }
};

struct ApproximateSolution {
  double epsilon = 0.0;
  double start_time = 0.0;
  Path start_path;
  double y = 0.0;
  double tau = 0.0;  // deterministic stopping time
  DelayFunction delay;
  ControlProcess control;           // piecewise constant per grid cell
  std::vector<double> control_cells;  // raw per-cell values on [t, tau)
  PerturbationProcess perturbation;
  PathEnsemble ensemble;
  PathEnsemble noise;
  ConditionReport condition_report;
  bool complete = false;  // tau reached T
  std::string diagnostic;
  std::uint64_t seed = 0;
  bool antithetic = false;
  int steps_taken = 0;
};

enum class RepMode { mean_path, per_path_vote };

struct ApproxBuildOptions {
  TangencySearch search;
  std::size_t tangency_paths = 4000;  // Monte Carlo size of each local test
  int max_steps = 10000;
  RepMode rep_mode = RepMode::mean_path;
  int vote_sample = 9;  // base points sampled in per_path_vote mode
  int threads = 1;
  bool antithetic = true;
};

struct LocalStep {
  bool found = false;
  Index delta_cells = 0;
  int control_index = -1;
  ControlProcess control;
  PerturbationProcess perturbation;
  TangencyCertificate certificate;
  std::string diagnostic;
};

/// One greedy step: quasi-tangency witness at the representative point, with
/// the target level lifted to max(y, v(t_k, rep)) so successive steps
/// telescope into condition (vi).
LocalStep local_step(const ProblemSpec& spec, double t_k, const Path& x_rep, double y,
                     double epsilon, const TangencySearch& search, std::size_t n_paths,
                     std::uint64_t seed);

/// Greedy construction of an eps-approximate solution: iterates local steps,
/// advancing the ensemble with coefficients frozen at the last breakpoint
/// (the delayed dynamics of condition (v)), until tau = T, the local test
/// fails, or max_steps is hit. The condition report is filled by direct
/// evaluation of (i)-(vi).
ApproximateSolution build_approx_solution(const ProblemSpec& spec, double t, const Path& x,
                                          double y, double epsilon,
                                          const ApproxBuildOptions& opt, std::size_t n_paths,
                                          std::uint64_t seed);

/// Re-evaluates every condition from the stored data; deterministic.
ConditionReport verify_approx_solution(const ProblemSpec& spec, const ApproximateSolution& sol);

struct GapReport {
  std::vector<double> times;  // breakpoints tau_1 .. tau_m
  std::vector<double> gaps;   // E sup_{[0, T_1]} |X_true - X_delayed|^2
  double final_gap = 0.0;
};

/// E ||X^{t,x,a}_{.^T1} - X_{.^T1}||_inf^2 between the true dynamics under
/// sol.control and the stored delayed dynamics, driven by common noise.
GapReport delayed_vs_true_gap(const ProblemSpec& spec, const ApproximateSolution& sol,
                              std::size_t n_paths, std::uint64_t seed, int threads = 1);

}  // namespace meanviab
