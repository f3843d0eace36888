#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "meanviab/control.hpp"
#include "meanviab/problem.hpp"

namespace meanviab {

struct SimulationError : std::runtime_error {
  SimulationError(const std::string& what, Index step)
      : std::runtime_error(what), step_index(step) {}
  Index step_index;
};

struct SimOptions {
  std::size_t n_paths = 1;
  std::uint64_t seed = 0;
  int threads = 1;
  bool antithetic = false;
  std::uint32_t stream = 1;  // substream label mixed into the RNG key
};

struct SimulationResult {
  PathEnsemble ensemble;       // state paths
  PathEnsemble driving_noise;  // accumulated Brownian path W - W_t (zero on [0,t])
  std::uint64_t seed = 0;
  std::string scheme = "euler-maruyama";
  std::size_t n_paths = 0;
  bool antithetic = false;
  double start_time = 0.0;
  double end_time = 0.0;  // simulated up to here; paths are constant afterwards
};

/// Euler-Maruyama for dX = b(s, X, a_s) ds + sigma(s, X, a_s) dW on [t, T],
/// X = x on [0, t]. Coefficients see the running path stopped at the current
/// step; feedback controls see the accumulated noise path.
SimulationResult simulate_controlled(const ProblemSpec& spec, double t, const Path& x,
                                     const ControlProcess& a, const SimOptions& opt);

/// Tangency dynamics: coefficients frozen at the stopped initial path x_{.^t},
/// deterministic (p, q) added, simulated on [t, t+delta] and held constant after.
SimulationResult simulate_perturbed(const ProblemSpec& spec, double t, const Path& x,
                                    const ControlProcess& a, const PerturbationProcess& pert,
                                    double delta, const SimOptions& opt);

/// True dynamics driven by the shifted control a^{t,ring_x}: feedback rules are
/// evaluated on the spliced path 1_{[0,t)} ring_x + 1_{[t,inf)}(ring_x_t + W - W_t).
SimulationResult simulate_frozen_shifted(const ProblemSpec& spec, double t, const Path& x,
                                         const Path& ring_x, const ControlProcess& a,
                                         const SimOptions& opt);

/// Streaming form of simulate_controlled: visit(i, X, noise) is called once per
/// path; visitors must write only to slots owned by path i.
using PathVisitor = std::function<void(std::size_t path_index, const Path& x, const Path& noise)>;
void simulate_controlled_visit(const ProblemSpec& spec, double t, const Path& x,
                               const ControlProcess& a, const SimOptions& opt,
                               const PathVisitor& visit);

/// Streaming form of simulate_perturbed.
void simulate_perturbed_visit(const ProblemSpec& spec, double t, const Path& x,
                              const ControlProcess& a, const PerturbationProcess& pert,
                              double delta, const SimOptions& opt, const PathVisitor& visit);

/// Tangency dynamics driven by a shifted feedback control: like
/// simulate_perturbed, with feedback rules reading the spliced path built
/// from ring_x.
void simulate_perturbed_shifted_visit(const ProblemSpec& spec, double t, const Path& x,
                                      const Path& ring_x, const ControlProcess& a,
                                      const PerturbationProcess& pert, double delta,
                                      const SimOptions& opt, const PathVisitor& visit);

/// In-place segment step for the delayed dynamics of the approximate-solution
/// builder: advances every ensemble member on grid cells [k0, k1) with
/// coefficients evaluated at the member's own path stopped at freeze_index,
/// plus the deterministic perturbation. Noise increments are drawn from the
/// per-path substream addressed by the global cell index, so segments
/// concatenate without reuse.
void advance_delayed_segment(const ProblemSpec& spec, PathEnsemble& states,
                             PathEnsemble& noise, Index k0, Index k1, Index freeze_index,
                             const ControlProcess& a, const PerturbationProcess& pert,
                             const SimOptions& opt);

struct MomentBoundReport {
  std::vector<double> deltas;
  std::vector<double> moments;  // E sup_{[t,t+delta]} |X - x_t|^2
  std::vector<double> stderrs;
  double slope = 0.0;     // log-log fit of moment vs delta
  double fitted_C = 0.0;  // max over deltas of moment / (L_b^2 delta)
  bool sigma_degenerate = false;
  bool pass = false;  // slope in [0.8, 1.2]; only asserted when sigma is active
};

/// Empirical check of the short-horizon estimate
/// E ||X_{.^(t+delta)} - x_{.^t}||_inf^2 <= C L_b^2 delta.
MomentBoundReport moment_bound_check(const ProblemSpec& spec, double t, const Path& x,
                                     const ControlProcess& a,
                                     const std::vector<double>& delta_list,
                                     const SimOptions& opt);

/// Least-squares slope of log(y) vs log(x), ignoring non-positive entries.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace meanviab
