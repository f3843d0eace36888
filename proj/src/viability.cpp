#include "meanviab/viability.hpp"

#include <cmath>

#include "meanviab/rng.hpp"

namespace meanviab {

namespace {
constexpr std::uint32_t kStreamViab = 0x71Au;
constexpr std::size_t kChunk = 1024;
}  // namespace

DeviationProfile mean_deviation(const ProblemSpec& spec, const ViabilityQuery& query,
                                const ControlProcess& a, std::size_t n_paths,
                                std::uint64_t seed, int threads) {
  const TimeGrid& grid = spec.grid;
  const Index k0 = grid.index_of(query.t);
  if (k0 >= grid.num_steps()) throw std::invalid_argument("mean_deviation: t must be < T");
  const Index n_times = grid.num_steps() - k0 + 1;

  // Chunked accumulation keeps the reduction order fixed for any thread count.
  const std::size_t n_chunks = (n_paths + kChunk - 1) / kChunk;
  std::vector<std::vector<double>> sums(n_chunks, std::vector<double>(n_times, 0.0));
  std::vector<std::vector<double>> sumsqs(n_chunks, std::vector<double>(n_times, 0.0));

  SimOptions opt;
  opt.n_paths = n_paths;
  opt.seed = seed;
  opt.threads = threads;
  opt.stream = kStreamViab;

  simulate_controlled_visit(spec, query.t, query.x, a, opt,
                            [&](std::size_t i, const Path& X, const Path&) {
                              auto& s = sums[i / kChunk];
                              auto& ss = sumsqs[i / kChunk];
                              for (Index j = 0; j < n_times; ++j) {
                                const Index k = k0 + j;
                                const double v = query.candidate.eval(grid.time(k), X, k);
                                s[j] += v;
                                ss[j] += v * v;
                              }
                            });

  DeviationProfile prof;
  const double n = static_cast<double>(n_paths);
  for (Index j = 0; j < n_times; ++j) {
    double s = 0.0, ss = 0.0;
    for (std::size_t c = 0; c < n_chunks; ++c) {
      s += sums[c][j];
      ss += sumsqs[c][j];
    }
    const double mean = s / n;
    const double var = std::max(0.0, ss / n - mean * mean);
    prof.times.push_back(grid.time(k0 + j));
    prof.deviations.push_back(query.target.distance(mean - query.y));
    prof.mc_standard_errors.push_back(std::sqrt(var / n));
  }
  return prof;
}

ViabilityScore approx_viability_score(const ProblemSpec& spec, const ViabilityQuery& query,
                                      const std::vector<ControlProcess>& control_family,
                                      std::size_t n_paths, std::uint64_t seed, ScoreMode mode,
                                      int threads) {
  if (control_family.empty())
    throw std::invalid_argument("approx_viability_score: empty control family");

  ViabilityScore out;
  std::vector<DeviationProfile> profiles;
  profiles.reserve(control_family.size());
  for (const auto& a : control_family)
    profiles.push_back(mean_deviation(spec, query, a, n_paths, seed, threads));

  if (mode == ScoreMode::sup_over_s) {
    out.score = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < profiles.size(); ++i) {
      const double sup = profiles[i].max_deviation();
      out.per_control_sup.push_back(sup);
      if (sup < out.score) {
        out.score = sup;
        out.best_control = static_cast<int>(i);
      }
    }
    out.profile = profiles[static_cast<std::size_t>(out.best_control)];
  } else {
    // per_s: pointwise minimum over the family, then the largest of those.
    out.profile.times = profiles.front().times;
    out.profile.deviations.assign(out.profile.times.size(),
                                  std::numeric_limits<double>::infinity());
    out.profile.mc_standard_errors.assign(out.profile.times.size(), 0.0);
    for (std::size_t i = 0; i < profiles.size(); ++i) {
      const double sup = profiles[i].max_deviation();
      out.per_control_sup.push_back(sup);
      for (std::size_t j = 0; j < out.profile.times.size(); ++j) {
        if (profiles[i].deviations[j] < out.profile.deviations[j]) {
          out.profile.deviations[j] = profiles[i].deviations[j];
          out.profile.mc_standard_errors[j] = profiles[i].mc_standard_errors[j];
        }
      }
    }
    out.score = out.profile.max_deviation();
    out.best_control = 0;
  }
  return out;
}

NecessityReport test_necessity(const ProblemSpec& spec, const ViabilityQuery& query,
                               const std::vector<ControlProcess>& control_family,
                               double epsilon, std::size_t n_paths, std::uint64_t seed,
                               int threads) {
  NecessityReport rep;
  const TimeGrid& grid = spec.grid;
  const Index k0 = grid.index_of(query.t);

  const auto score = approx_viability_score(spec, query, control_family, n_paths,
                                            derive_seed(seed, 1), ScoreMode::sup_over_s,
                                            threads);
  rep.score = score.score;
  rep.best_control = score.best_control;
  rep.premise_ok = score.score <= epsilon;
  if (!rep.premise_ok) {
    rep.note = "premise failed: no family control reaches the epsilon deviation level";
    return rep;
  }
  const ControlProcess& a = control_family[static_cast<std::size_t>(score.best_control)];

  // Fit C in E||X_{.^(t+d)} - x_{.^t}||^2 <= C L_b^2 d over a dyadic sweep.
  std::vector<double> deltas;
  for (Index k = 1; k0 + k <= grid.num_steps(); k *= 2)
    deltas.push_back(grid.time(k0 + k) - grid.time(k0));
  SimOptions mopt;
  mopt.n_paths = n_paths;
  mopt.seed = derive_seed(seed, 2);
  mopt.threads = threads;
  const auto moment = moment_bound_check(spec, query.t, query.x, a, deltas, mopt);
  rep.fitted_C = moment.fitted_C;
  rep.moment_slope = moment.slope;

  // Paper step size: delta <= eps / (2 C L_b^4), snapped down to the grid.
  const double L_b = spec.coefficients.declared_L_b;
  double cap = epsilon;
  if (rep.fitted_C > 0.0)
    cap = std::min(cap, epsilon / (2.0 * rep.fitted_C * L_b * L_b * L_b * L_b));
  cap = std::min(cap, grid.horizon() - grid.time(k0));
  Index kd = k0 + std::max<Index>(1, static_cast<Index>(std::floor(cap / grid.step())));
  kd = std::min(kd, grid.num_steps());
  const double delta = grid.time(kd) - grid.time(k0);
  rep.delta = delta;

  // Realized residuals along the true dynamics: p_s = b(s, X_{.^s}, a_s) -
  // b(s, x_{.^t}, a_s), likewise q. Their mean energy is the certificate
  // budget; the target inequality reuses the same simulation.
  const Index d = spec.dimension;
  const std::size_t n_chunks = (n_paths + kChunk - 1) / kChunk;
  std::vector<double> energy_sum(n_chunks, 0.0);
  std::vector<double> vhat_sum(n_chunks, 0.0), vhat_sumsq(n_chunks, 0.0);
  const Index n_cells = kd - k0;
  std::vector<std::vector<double>> presid_sum(n_chunks,
                                              std::vector<double>(n_cells * d, 0.0));

  SimOptions sopt;
  sopt.n_paths = n_paths;
  sopt.seed = derive_seed(seed, 3);
  sopt.threads = threads;
  sopt.stream = kStreamViab;

  simulate_controlled_visit(
      spec, query.t, query.x, a, sopt, [&](std::size_t i, const Path& X, const Path& W) {
        const std::size_t c = i / kChunk;
        Vector b_run(d), b_frozen(d), pres(d);
        Matrix s_run(d, d), s_frozen(d, d);
        double acc = 0.0;
        for (Index k = k0; k < kd; ++k) {
          const double tk = grid.time(k);
          double av;
          if (a.is_open_loop())
            av = a.at_cell(grid, k);
          else
            av = a.at_cell(grid, k, PathSlice(W, k));
          av = spec.control_space.clamp(av);
          spec.coefficients.eval_b(tk, X, k, av, b_run);
          spec.coefficients.eval_b(tk, query.x, k0, av, b_frozen);
          spec.coefficients.eval_sigma(tk, X, k, av, s_run);
          spec.coefficients.eval_sigma(tk, query.x, k0, av, s_frozen);
          pres = b_run - b_frozen;
          acc += pres.squaredNorm() + (s_run - s_frozen).squaredNorm();
          for (Index r = 0; r < d; ++r) presid_sum[c][(k - k0) * d + r] += pres(r);
        }
        energy_sum[c] += acc * grid.step();
        const double vh = query.candidate.eval(grid.time(kd), X, kd) - query.y;
        vhat_sum[c] += vh;
        vhat_sumsq[c] += vh * vh;
      });

  double energy = 0.0, vs = 0.0, vss = 0.0;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    energy += energy_sum[c];
    vs += vhat_sum[c];
    vss += vhat_sumsq[c];
  }
  const double n = static_cast<double>(n_paths);
  energy /= n;
  const double vmean = vs / n;
  const double vstderr = std::sqrt(std::max(0.0, vss / n - vmean * vmean) / n);
  const double dist = query.target.distance(vmean);

  // Mean residual per cell, stored as the certificate's deterministic summary.
  PerturbationProcess mean_resid(d, grid.time(k0));
  for (Index k = 0; k < n_cells; ++k) {
    Vector p(d);
    for (Index r = 0; r < d; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < n_chunks; ++c) s += presid_sum[c][k * d + r];
      p(r) = s / n;
    }
    mean_resid.set_cell(k0 + k, p, Matrix::Zero(d, d));
  }

  rep.certificate = TangencyCertificate{epsilon, delta, rep.best_control, mean_resid,
                                        dist, energy, vstderr};
  const double budget = epsilon * delta;
  rep.certificate_ok = energy <= budget && dist <= budget + 3.0 * vstderr;
  rep.pass = rep.premise_ok && rep.certificate_ok && moment.pass;
  if (!rep.certificate_ok) rep.note = "certificate budget or target inequality violated";
  return rep;
}

}  // namespace meanviab
