#pragma once

#include "meanviab/tangency.hpp"

namespace meanviab {

struct ValueEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
  int best_control = -1;
  std::size_t family_size = 0;
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;
};

/// V(t,x) as the family minimum of Monte Carlo estimates of E[h(X^{t,x,a})],
/// common random numbers across controls. At t = T this is h(x_{.^T}) exactly.
ValueEstimate value_function(const ProblemSpec& spec, double t, const Path& x,
                             const std::vector<ControlProcess>& control_family,
                             std::size_t n_paths, std::uint64_t seed, int threads = 1);

struct DppReport {
  double value_direct = 0.0;
  double value_nested = 0.0;  // min over family of E[ V(s, X_{.^s}) ]
  double gap = 0.0;
  double combined_stderr = 0.0;
  double allowance = 0.0;
  bool pass = false;
};

/// Dynamic-programming consistency via nested Monte Carlo. The inner family
/// may be overridden to exhibit a crippled-family gap.
DppReport dpp_check(const ProblemSpec& spec, double t, const Path& x, double s,
                    const std::vector<ControlProcess>& family, std::size_t n_outer,
                    std::size_t n_inner, std::uint64_t seed, double allowance = 0.0,
                    const std::vector<ControlProcess>* inner_family = nullptr,
                    int threads = 1);

enum class Verdict { pass, fail, inconclusive };

struct PointCheck {
  double t = 0.0;
  double x_at_t = 0.0;  // first coordinate at t, for reporting
  double estimate = 0.0;
  double stderr_ = 0.0;
  Verdict verdict = Verdict::inconclusive;
};

struct SemisolutionReport {
  std::string role;  // "supersolution" | "subsolution"
  std::vector<PointCheck> points;
  bool terminal_ok = false;
  double terminal_worst = 0.0;  // most negative margin of the terminal inequality
  bool overall = false;         // every verdict passes and the terminal check holds
  int n_pass = 0, n_fail = 0, n_inconclusive = 0;
};

struct SamplePoint {
  double t = 0.0;
  Path x;
};

/// Sample points from trajectories of the problem itself, so verification
/// happens at reachable states. Times are drawn from grid indices in
/// [0, t_fraction * n].
std::vector<SamplePoint> sample_reachable_points(const ProblemSpec& spec, std::size_t count,
                                                 std::uint64_t seed, const Path& x0,
                                                 double t_fraction = 0.75, int threads = 1);

/// Quasi-contingent supersolution test: epiderivative over E_+ at each point
/// must be <= tol, and v(T, .) >= h on sampled terminal paths. Verdicts are
/// three-valued: estimates inside the 3-stderr band are inconclusive rather
/// than failed.
SemisolutionReport verify_supersolution(const ProblemSpec& spec,
                                        const CandidateFunction& candidate,
                                        const std::vector<SamplePoint>& sample_points,
                                        const std::vector<double>& epsilon_ladder, double tol,
                                        const TangencySearch& search, std::size_t n_paths,
                                        std::uint64_t seed);

/// Quasi-contingent subsolution test: min over the A-grid of the
/// hypoderivative in the frozen direction must be >= -tol, and v(T, .) <= h.
SemisolutionReport verify_subsolution(const ProblemSpec& spec,
                                      const CandidateFunction& candidate,
                                      const std::vector<SamplePoint>& sample_points,
                                      const std::vector<double>& epsilon_ladder, double tol,
                                      const TangencySearch& search, std::size_t n_paths,
                                      std::uint64_t seed);

struct ComparisonRow {
  double t = 0.0;
  double x_at_t = 0.0;
  double v_minus = 0.0;
  double value = 0.0;
  double stderr_ = 0.0;
  double v_plus = 0.0;
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
  double max_lower_violation = 0.0;  // v_minus - (V + 3 se), positive = violated
  double max_upper_violation = 0.0;  // V - (v_plus + 3 se)
  double max_sub_over_super = -1e300;  // max of v_minus - v_plus
  bool pass = false;
};

/// Sandwich check v_minus <= V <= v_plus at every sample point, against the
/// Monte Carlo value estimate with a 3-stderr band. Both candidates must
/// arrive with their semisolution reports attached.
ComparisonReport comparison_check(const ProblemSpec& spec, const CandidateFunction& v_minus,
                                  const CandidateFunction& v_plus,
                                  const SemisolutionReport& sub_report,
                                  const SemisolutionReport& super_report,
                                  const std::vector<SamplePoint>& sample_points,
                                  const std::vector<ControlProcess>& family,
                                  std::size_t n_paths, std::uint64_t seed, int threads = 1);

}  // namespace meanviab
