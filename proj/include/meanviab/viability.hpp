#pragma once

#include "meanviab/tangency.hpp"

namespace meanviab {

/// Euclidean distance from y to the closed target set K.
inline double dist_to_target(const TargetSet& target, double y) { return target.distance(y); }

struct ViabilityQuery {
  double t = 0.0;
  Path x;
  double y = 0.0;
  CandidateFunction candidate;
  TargetSet target;

  double initial_vhat(const TimeGrid& grid) const {
    const Index k = grid.index_of(t);
    return candidate.eval(grid.time(k), x, k) - y;
  }
};

/// dist_K(E[vhat(s, X, y)]) per grid time s in [t, T], with Monte Carlo
/// standard errors. The entry at s = t is deterministic.
struct DeviationProfile {
  std::vector<double> times;
  std::vector<double> deviations;
  std::vector<double> mc_standard_errors;

  double max_deviation() const {
    double m = 0.0;
    for (double v : deviations) m = std::max(m, v);
    return m;
  }
};

DeviationProfile mean_deviation(const ProblemSpec& spec, const ViabilityQuery& query,
                                const ControlProcess& a, std::size_t n_paths,
                                std::uint64_t seed, int threads = 1);

enum class ScoreMode { sup_over_s, per_s };

struct ViabilityScore {
  double score = 0.0;
  int best_control = -1;
  DeviationProfile profile;  // best control's profile (sup mode) or per-s minima
  std::vector<double> per_control_sup;  // sup-over-s deviation per family member
};

/// Finite-family surrogate of eq. inf_a sup_s inf_k |E[vhat] - k|:
/// sup_over_s takes min over the family of the max-over-time deviation;
/// per_s exchanges inf and sup (weaker, per-time conclusion).
ViabilityScore approx_viability_score(const ProblemSpec& spec, const ViabilityQuery& query,
                                      const std::vector<ControlProcess>& control_family,
                                      std::size_t n_paths, std::uint64_t seed, ScoreMode mode,
                                      int threads = 1);

struct NecessityReport {
  bool premise_ok = false;  // some family member achieves score <= epsilon
  double score = 0.0;
  int best_control = -1;
  double delta = 0.0;            // chosen step, <= eps / (2 C L_b^4)
  double fitted_C = 0.0;         // from the moment bound sweep
  double moment_slope = 0.0;
  TangencyCertificate certificate;
  bool certificate_ok = false;   // budget and target inequality both hold
  bool pass = false;
  std::string note;
};

/// Necessity harness: from the best family control, freezes the coefficient
/// pair at x_{.^t}, takes the realized residuals as (p, q), and verifies the
/// eps*delta budget and target inequality of the quasi-tangency definition.
NecessityReport test_necessity(const ProblemSpec& spec, const ViabilityQuery& query,
                               const std::vector<ControlProcess>& control_family,
                               double epsilon, std::size_t n_paths, std::uint64_t seed,
                               int threads = 1);

}  // namespace meanviab
