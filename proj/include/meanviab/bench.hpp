#pragma once

#include "meanviab/hjb.hpp"

namespace meanviab {

/// Closed-form benchmark: a problem plus an oracle value function and the
/// control attaining it. Oracles are never trusted bare; see
/// oracle_consistency_check.
struct Benchmark {
  std::string id;
  ProblemSpec spec;
  CandidateFn oracle_value;  // (t, stopped path) -> V(t, x)
  ControlProcess oracle_optimal_control;
  double t0 = 0.0;  // nominal evaluation point for consistency checks
  Vector x0;
  double candidate_L = 1.0;  // declared (H) constant of the oracle candidate
  std::string notes;

  CandidateFunction oracle_candidate() const {
    CandidateFunction c;
    c.v = oracle_value;
    c.declared_L = candidate_L;
    c.lower_bound = -spec.terminal_cost.bound() - 1.0;
    c.upper_bound = spec.terminal_cost.bound() + 1.0;
    return c;
  }
  double oracle_at_start() const {
    const Path p = Path::constant(spec.grid, x0);
    return oracle_value(t0, PathSlice::stopped_at_time(p, t0));
  }
};

/// B0 uncontrolled Gaussian, B1 controlled drift, B2 controlled volatility,
/// B3 path-dependent increment, B4 bang-bang drift with sign flip.
std::vector<Benchmark> builtin_benchmarks(const TimeGrid& grid = TimeGrid(1.0, 128));

/// Benchmark lookup by id; throws on unknown ids.
Benchmark benchmark_by_id(const std::string& id, const TimeGrid& grid = TimeGrid(1.0, 128));

/// Path-dependent drift fixture (id "S1"): b = 0.5 sin(x_t), sigma = 1,
/// singleton control set. No closed-form oracle; used for the delayed-gap
/// scaling studies where the coefficients must genuinely depend on the path.
ProblemSpec sine_drift_problem(const TimeGrid& grid = TimeGrid(1.0, 128));

/// E[f(mu + scale Z)], Z standard normal, by Gauss-Hermite quadrature.
double gauss_hermite_expectation(const std::function<double(double)>& f, double mu,
                                 double scale, int nodes = 64);

/// Folded normal mean E|N(mu, sigma^2)|.
double folded_normal_mean(double mu, double sigma);

struct OracleConsistencyReport {
  std::string id;
  double oracle = 0.0;
  double brute_force_value = 0.0;  // exhaustive minimum over the constant A-grid
  double brute_force_stderr = 0.0;
  double optimal_control_value = 0.0;  // E[h] under the declared optimal control
  double optimal_control_stderr = 0.0;
  long clip_count = 0;
  bool pass_value = false;
  bool pass_optimal = false;
  bool pass_clipping = false;
  bool pass = false;
};

/// (a) brute-force control-grid minimum matches the oracle within 3 stderr,
/// (b) the declared optimal control attains it, (c) clipping never fired.
OracleConsistencyReport oracle_consistency_check(const Benchmark& bench, std::size_t n_paths,
                                                 std::uint64_t seed, int threads = 1);

}  // namespace meanviab
