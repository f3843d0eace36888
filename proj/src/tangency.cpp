#include "meanviab/tangency.hpp"

#include <cmath>

#include "meanviab/parallel.hpp"
#include "meanviab/rng.hpp"

namespace meanviab {

namespace {

constexpr std::uint32_t kStreamTangency = 0x7A6u;

// Deterministic chunked mean/stderr accumulator for per-path scalars.
struct ChunkStats {
  explicit ChunkStats(std::size_t n, std::size_t chunk = 1024)
      : chunk_(chunk), sums_((n + chunk - 1) / chunk, 0.0),
        sumsqs_((n + chunk - 1) / chunk, 0.0), n_(n) {}

  void add(std::size_t i, double v) {
    sums_[i / chunk_] += v;
    sumsqs_[i / chunk_] += v * v;
  }
  double mean() const {
    double s = 0.0;
    for (double v : sums_) s += v;
    return s / static_cast<double>(n_);
  }
  double stderr_() const {
    double s = 0.0, ss = 0.0;
    for (double v : sums_) s += v;
    for (double v : sumsqs_) ss += v;
    const double n = static_cast<double>(n_);
    const double m = s / n;
    return std::sqrt(std::max(0.0, ss / n - m * m) / n);
  }

 private:
  std::size_t chunk_;
  std::vector<double> sums_, sumsqs_;
  std::size_t n_;
};

struct Attempt {
  Index kd;             // end grid index of [t, t+delta]
  double delta;
  int dir_index;
  int pert_index;
  const PerturbationProcess* pert;
};

// Geometric delta ladder snapped to the grid, descending, deduplicated.
std::vector<Index> delta_ladder_indices(const TimeGrid& grid, Index k0, double base,
                                        int rungs) {
  std::vector<Index> out;
  for (int k = 0; k < rungs; ++k) {
    const double delta = base * std::pow(2.0, -k);
    const double target = grid.time(k0) + delta;
    Index kd = grid.in_range(target) ? grid.index_of(target) : grid.num_steps();
    if (kd <= k0) kd = k0 + 1;
    if (kd > grid.num_steps()) continue;
    if (grid.time(kd) - grid.time(k0) > base + 1e-12) continue;
    if (out.empty() || out.back() != kd) out.push_back(kd);
  }
  return out;
}

// Coordinate perturbation family at a fixed energy density: zero first, then
// single-entry +-r e_i and +-r E_ij with r^2 slightly under the density so the
// eps*delta budget holds exactly in floating point.
std::vector<PerturbationProcess> coordinate_family(Index d, double activation,
                                                   double energy_density) {
  std::vector<PerturbationProcess> fam;
  fam.push_back(PerturbationProcess::zero(d, activation));
  const double r = std::sqrt(energy_density * (1.0 - 1e-9));
  for (Index i = 0; i < d; ++i)
    for (double s : {1.0, -1.0}) {
      Vector p = Vector::Zero(d);
      p(i) = s * r;
      fam.push_back(PerturbationProcess::constant(p, Matrix::Zero(d, d), activation));
    }
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j)
      for (double s : {1.0, -1.0}) {
        Matrix q = Matrix::Zero(d, d);
        q(i, j) = s * r;
        fam.push_back(PerturbationProcess::constant(Vector::Zero(d), q, activation));
      }
  return fam;
}

struct AttemptOutcome {
  double mean = 0.0;    // E[v(t+delta, X)]
  double stderr_ = 0.0;
  double energy = 0.0;  // deterministic perturbation energy on [t, t+delta]
};

AttemptOutcome evaluate_attempt(const ProblemSpec& spec, const CandidateFunction& cand,
                                double t, const Path& x, const DirectionSet& dirs,
                                const Attempt& at, std::size_t n_paths,
                                std::uint64_t attempt_seed, const TangencySearch& search) {
  const Index k0 = spec.grid.index_of(t);
  const double t_end = spec.grid.time(at.kd);
  SimOptions opt;
  opt.n_paths = n_paths;
  opt.seed = attempt_seed;
  opt.threads = search.threads;
  opt.antithetic = search.antithetic;
  opt.stream = kStreamTangency;

  ChunkStats stats(n_paths);
  const PathVisitor visit = [&](std::size_t i, const Path& X, const Path&) {
    stats.add(i, cand.eval(t_end, X, at.kd));
  };
  const ControlProcess& a = dirs.control(static_cast<std::size_t>(at.dir_index));
  if (dirs.shifted())
    simulate_perturbed_shifted_visit(spec, t, x, dirs.shift_path, a, *at.pert,
                                     t_end - spec.grid.time(k0), opt, visit);
  else
    simulate_perturbed_visit(spec, t, x, a, *at.pert, t_end - spec.grid.time(k0), opt, visit);

  AttemptOutcome out;
  out.mean = stats.mean();
  out.stderr_ = stats.stderr_();
  out.energy = at.pert->energy(spec.grid, k0, at.kd);
  return out;
}

std::uint64_t attempt_seed(std::uint64_t seed, Index kd, int dir, int pert) {
  return derive_seed(seed, (static_cast<std::uint64_t>(kd) << 40) ^
                               (static_cast<std::uint64_t>(dir) << 20) ^
                               static_cast<std::uint64_t>(pert));
}

}  // namespace

std::vector<ControlProcess> constant_control_family(const ProblemSpec& spec,
                                                    double activation_time) {
  std::vector<ControlProcess> fam;
  fam.reserve(static_cast<std::size_t>(spec.control_space.grid_points));
  for (Index j = 0; j < spec.control_space.grid_points; ++j)
    fam.push_back(ControlProcess::constant(spec.control_space.value(j), activation_time,
                                           spec.anchor.a0));
  return fam;
}

TangencyResult quasi_tangency_test(const ProblemSpec& spec, double t, const Path& x, double y,
                                   const DirectionSet& directions, double epsilon,
                                   const TangencySearch& search, std::size_t n_paths,
                                   std::uint64_t seed) {
  if (!spec.candidate)
    throw std::invalid_argument("quasi_tangency_test: problem has no candidate function");
  const CandidateFunction& cand = *spec.candidate;
  const TargetSet& K = spec.target_set;
  const TimeGrid& grid = spec.grid;
  const Index k0 = grid.index_of(t);
  if (k0 >= grid.num_steps()) throw std::invalid_argument("quasi_tangency_test: t must be < T");

  const double v0 = cand.eval(grid.time(k0), x, k0);
  if (K.distance(v0 - y) > 1e-12)
    throw std::invalid_argument("quasi_tangency_test: vhat(t,x,y) not in K");

  const double base = std::min(epsilon, grid.horizon() - grid.time(k0));
  const auto kds = delta_ladder_indices(grid, k0, base, search.delta_ladder);
  auto perts = search.coordinate_perturbations
                   ? coordinate_family(spec.dimension, grid.time(k0), epsilon)
                   : std::vector<PerturbationProcess>{PerturbationProcess::zero(
                         spec.dimension, grid.time(k0))};

  TangencyResult res;
  double best_gap = std::numeric_limits<double>::infinity();

  for (Index kd : kds) {
    const double delta = grid.time(kd) - grid.time(k0);
    for (std::size_t di = 0; di < directions.size(); ++di) {
      for (std::size_t pi = 0; pi < perts.size(); ++pi) {
        Attempt at{kd, delta, static_cast<int>(di), static_cast<int>(pi), &perts[pi]};
        const double budget = epsilon * delta;
        const double pre_energy = perts[pi].energy(grid, k0, kd);
        if (pre_energy > budget) continue;  // infeasible under this delta

        const auto out = evaluate_attempt(spec, cand, t, x, directions, at, n_paths,
                                          attempt_seed(seed, kd, at.dir_index, at.pert_index),
                                          search);
        const double dist = K.distance(out.mean - y);
        TangencyAttempt ta{delta, at.dir_index, at.pert_index, dist, out.stderr_, out.energy,
                           false};
        const bool ok = out.energy <= budget && dist <= budget + 3.0 * out.stderr_;
        ta.success = ok;
        res.trace.push_back(ta);

        const double gap = dist - (budget + 3.0 * out.stderr_);
        if (!res.found && gap < best_gap) {
          best_gap = gap;
          res.certificate = TangencyCertificate{epsilon, delta, at.dir_index, perts[pi],
                                                dist, out.energy, out.stderr_};
        }
        if (ok) {
          res.found = true;
          res.certificate = TangencyCertificate{epsilon, delta, at.dir_index, perts[pi],
                                                dist, out.energy, out.stderr_};
          return res;
        }
      }
    }
  }
  return res;
}

namespace {

// Shared ladder machinery for both contingent derivatives. Minimize = true
// gives the epiderivative inner infimum; false the hypoderivative supremum.
DerivativeEstimate derivative_ladder(const ProblemSpec& spec, double t, const Path& x,
                                     const CandidateFunction& cand,
                                     const DirectionSet& directions,
                                     const std::vector<double>& epsilon_ladder,
                                     const TangencySearch& search, std::size_t n_paths,
                                     std::uint64_t seed, bool minimize) {
  const TimeGrid& grid = spec.grid;
  const Index k0 = grid.index_of(t);
  if (k0 >= grid.num_steps()) throw std::invalid_argument("derivative: t must be < T");
  if (epsilon_ladder.empty()) throw std::invalid_argument("derivative: empty epsilon ladder");
  for (std::size_t i = 1; i < epsilon_ladder.size(); ++i)
    if (!(epsilon_ladder[i] < epsilon_ladder[i - 1]))
      throw std::invalid_argument("derivative: epsilon ladder must be decreasing");

  const double eps_max = epsilon_ladder.front();
  const double v0 = cand.eval(grid.time(k0), x, k0);
  const double horizon_cap = grid.horizon() - grid.time(k0);

  // Master search set at the largest epsilon; smaller epsilons filter it by
  // budget, so the feasible sets are nested and (with per-attempt seeds
  // independent of epsilon) the ladder is monotone by construction.
  const auto master_kds =
      delta_ladder_indices(grid, k0, std::min(eps_max, horizon_cap), search.delta_ladder);
  std::vector<PerturbationProcess> perts;
  perts.push_back(PerturbationProcess::zero(spec.dimension, grid.time(k0)));
  if (search.coordinate_perturbations) {
    for (double eps : epsilon_ladder) {
      auto fam = coordinate_family(spec.dimension, grid.time(k0), eps);
      perts.insert(perts.end(), fam.begin() + 1, fam.end());  // skip duplicate zero
    }
  }

  struct Cache {
    bool done = false;
    double quotient = 0.0;
    double stderr_ = 0.0;
    double energy = 0.0;
  };
  std::vector<std::vector<Cache>> cache(master_kds.size());
  for (auto& row : cache) row.resize(directions.size() * perts.size());

  DerivativeEstimate est;
  est.value = minimize ? -std::numeric_limits<double>::infinity()
                       : std::numeric_limits<double>::infinity();

  for (double eps : epsilon_ladder) {
    DerivativeLadderEntry entry;
    entry.epsilon = eps;
    entry.value = minimize ? std::numeric_limits<double>::infinity()
                           : -std::numeric_limits<double>::infinity();

    for (std::size_t ki = 0; ki < master_kds.size(); ++ki) {
      const Index kd = master_kds[ki];
      const double delta = grid.time(kd) - grid.time(k0);
      if (delta > eps + 1e-12) continue;  // delta in (0, eps ^ (T-t)]
      for (std::size_t di = 0; di < directions.size(); ++di) {
        for (std::size_t pi = 0; pi < perts.size(); ++pi) {
          if (perts[pi].energy(grid, k0, kd) > eps * delta) continue;
          Cache& c = cache[ki][di * perts.size() + pi];
          if (!c.done) {
            Attempt at{kd, delta, static_cast<int>(di), static_cast<int>(pi), &perts[pi]};
            const auto out = evaluate_attempt(
                spec, cand, t, x, directions, at, n_paths,
                attempt_seed(seed, kd, at.dir_index, at.pert_index), search);
            c.quotient = (out.mean - v0) / delta;
            c.stderr_ = out.stderr_ / delta;
            c.energy = out.energy;
            c.done = true;
          }
          const bool better = minimize ? c.quotient < entry.value : c.quotient > entry.value;
          if (better) {
            entry.value = c.quotient;
            entry.stderr_ = c.stderr_;
            entry.delta = delta;
            entry.direction_index = static_cast<int>(di);
            entry.pert_index = static_cast<int>(pi);
          }
        }
      }
    }
    est.ladder.push_back(entry);
    const bool better = minimize ? entry.value > est.value : entry.value < est.value;
    if (better) {
      est.value = entry.value;
      est.mc_stderr = entry.stderr_;
    }
  }
  return est;
}

}  // namespace

DerivativeEstimate epiderivative(const ProblemSpec& spec, double t, const Path& x,
                                 const CandidateFunction& candidate,
                                 const DirectionSet& directions,
                                 const std::vector<double>& epsilon_ladder,
                                 const TangencySearch& search, std::size_t n_paths,
                                 std::uint64_t seed) {
  if (candidate.lower_bound <= -1e29)
    throw std::invalid_argument("epiderivative: candidate must declare a lower bound");
  return derivative_ladder(spec, t, x, candidate, directions, epsilon_ladder, search, n_paths,
                           seed, /*minimize=*/true);
}

DerivativeEstimate hypoderivative(const ProblemSpec& spec, double t, const Path& x,
                                  const CandidateFunction& candidate,
                                  const DirectionSet& direction,
                                  const std::vector<double>& epsilon_ladder,
                                  const TangencySearch& search, std::size_t n_paths,
                                  std::uint64_t seed) {
  if (candidate.upper_bound >= 1e29)
    throw std::invalid_argument("hypoderivative: candidate must declare an upper bound");
  if (direction.size() != 1)
    throw std::invalid_argument("hypoderivative: direction must be a single frozen pair");
  return derivative_ladder(spec, t, x, candidate, direction, epsilon_ladder, search, n_paths,
                           seed, /*minimize=*/false);
}

EquivalenceReport tangency_derivative_equivalence_check(
    const ProblemSpec& spec, double t, const Path& x, const CandidateFunction& candidate,
    const DirectionSet& directions, double epsilon, double tolerance,
    const TangencySearch& search, std::size_t n_paths, std::uint64_t seed) {
  EquivalenceReport rep;
  const std::vector<double> ladder{epsilon, epsilon / 2.0, epsilon / 4.0};
  rep.derivative =
      epiderivative(spec, t, x, candidate, directions, ladder, search, n_paths, seed);
  rep.epi_estimate = rep.derivative.value;
  rep.epi_stderr = rep.derivative.mc_stderr;
  rep.tol_used = std::max(tolerance, 3.0 * rep.epi_stderr);
  rep.derivative_nonpositive = rep.epi_estimate <= rep.tol_used;

  const double y = candidate.eval(spec.grid.time(spec.grid.index_of(t)), x,
                                  spec.grid.index_of(t));
  ProblemSpec with_candidate = spec;
  with_candidate.candidate = candidate;
  rep.tangency = quasi_tangency_test(with_candidate, t, x, y, directions, epsilon, search,
                                     n_paths, derive_seed(seed, 0x517Eu));
  rep.tangency_found = rep.tangency.found;
  rep.agree = rep.derivative_nonpositive == rep.tangency_found;
  return rep;
}

}  // namespace meanviab
