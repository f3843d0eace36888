#pragma once

#include <optional>
#include <vector>

#include "meanviab/sde.hpp"

namespace meanviab {

/// Multi-valued direction for tangency tests and contingent derivatives.
/// E_plus carries the frozen-coefficient directions (b,sigma)(., x_{.^t}, a)
/// generated by a control family; E_plus_frozen_control is the singleton
/// direction of the subsolution machinery, with its shift path.
struct DirectionSet {
  enum class Kind { E_plus, E_plus_frozen_control };
  Kind kind = Kind::E_plus;
  double t = 0.0;
  Path x;
  std::vector<ControlProcess> control_family;
  ControlProcess frozen_control;
  Path shift_path;

  static DirectionSet e_plus(double t, Path x, std::vector<ControlProcess> family) {
    if (family.empty()) throw std::invalid_argument("DirectionSet: empty control family");
    DirectionSet d;
    d.kind = Kind::E_plus;
    d.t = t;
    d.x = std::move(x);
    d.control_family = std::move(family);
    return d;
  }
  static DirectionSet e_plus_frozen(double t, Path x, ControlProcess a, Path shift) {
    DirectionSet d;
    d.kind = Kind::E_plus_frozen_control;
    d.t = t;
    d.x = std::move(x);
    d.frozen_control = std::move(a);
    d.shift_path = std::move(shift);
    return d;
  }

  std::size_t size() const {
    return kind == Kind::E_plus ? control_family.size() : 1u;
  }
  const ControlProcess& control(std::size_t i) const {
    return kind == Kind::E_plus ? control_family.at(i) : frozen_control;
  }
  bool shifted() const { return kind == Kind::E_plus_frozen_control; }
};

/// Constant-control family on the A-grid (values ascending), each equal to
/// the anchor before the activation time.
std::vector<ControlProcess> constant_control_family(const ProblemSpec& spec,
                                                    double activation_time);

/// Witness for membership in the mean quasi-tangent class: delta within
/// (0, min(eps, T-t)], deterministic perturbation energy within the eps*delta
/// budget, achieved distance within eps*delta + 3 stderr.
struct TangencyCertificate {
  double epsilon = 0.0;
  double delta = 0.0;
  int control_index = -1;
  PerturbationProcess perturbation;
  double achieved_distance = 0.0;
  double perturbation_energy = 0.0;
  double mc_stderr = 0.0;
};

struct TangencyAttempt {
  double delta = 0.0;
  int direction_index = 0;
  int pert_index = 0;
  double distance = 0.0;
  double stderr_ = 0.0;
  double energy = 0.0;
  bool success = false;
};

struct TangencyResult {
  bool found = false;
  TangencyCertificate certificate;  // the witness, or the best failing attempt
  std::vector<TangencyAttempt> trace;
};

struct TangencySearch {
  int delta_ladder = 7;             // geometric ladder min(eps, T-t) * 2^-k
  bool coordinate_perturbations = true;
  bool antithetic = true;
  int threads = 1;
};

/// Searches (delta, direction, p, q) for a quasi-tangency witness at (t,x,y).
/// Deterministic first-witness order: delta descending, direction index
/// ascending, zero perturbation first.
TangencyResult quasi_tangency_test(const ProblemSpec& spec, double t, const Path& x, double y,
                                   const DirectionSet& directions, double epsilon,
                                   const TangencySearch& search, std::size_t n_paths,
                                   std::uint64_t seed);

struct DerivativeLadderEntry {
  double epsilon = 0.0;
  double value = 0.0;  // inner inf (epi) or sup (hypo) at this epsilon
  double stderr_ = 0.0;
  double delta = 0.0;
  int direction_index = 0;
  int pert_index = 0;
};

struct DerivativeEstimate {
  double value = 0.0;  // max over the ladder (epi), min (hypo)
  double mc_stderr = 0.0;
  std::vector<DerivativeLadderEntry> ladder;
};

/// Contingent epiderivative estimate: per-epsilon infimum of the difference
/// quotient E[(v(t+delta,X) - v(t,x)) / delta] over budgeted perturbations,
/// maximized over the (finite, decreasing) epsilon ladder. Search sets are
/// nested across the ladder and attempts reuse seeds, so the per-epsilon
/// infima are monotone by construction.
DerivativeEstimate epiderivative(const ProblemSpec& spec, double t, const Path& x,
                                 const CandidateFunction& candidate,
                                 const DirectionSet& directions,
                                 const std::vector<double>& epsilon_ladder,
                                 const TangencySearch& search, std::size_t n_paths,
                                 std::uint64_t seed);

/// Contingent hypoderivative in a single frozen direction: per-epsilon
/// supremum, then minimum over the ladder.
DerivativeEstimate hypoderivative(const ProblemSpec& spec, double t, const Path& x,
                                  const CandidateFunction& candidate,
                                  const DirectionSet& direction,
                                  const std::vector<double>& epsilon_ladder,
                                  const TangencySearch& search, std::size_t n_paths,
                                  std::uint64_t seed);

struct EquivalenceReport {
  double epi_estimate = 0.0;
  double epi_stderr = 0.0;
  bool derivative_nonpositive = false;
  bool tangency_found = false;
  double tol_used = 0.0;
  bool agree = false;
  DerivativeEstimate derivative;
  TangencyResult tangency;
};

/// Checks D_up v(t,x)(E) <= 0  <=>  E in QTS(t, x, v(t,x)) on one point, with
/// tol = max(tolerance, 3 stderr) shielding the sign decision.
EquivalenceReport tangency_derivative_equivalence_check(
    const ProblemSpec& spec, double t, const Path& x, const CandidateFunction& candidate,
    const DirectionSet& directions, double epsilon, double tolerance,
    const TangencySearch& search, std::size_t n_paths, std::uint64_t seed);

}  // namespace meanviab
