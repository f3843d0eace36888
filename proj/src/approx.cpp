#include "meanviab/approx.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "meanviab/parallel.hpp"
#include "meanviab/rng.hpp"

namespace meanviab {

namespace {
constexpr std::uint32_t kStreamBuild = 0xB11Du;
constexpr std::size_t kChunk = 1024;

double effective_level(const ProblemSpec& spec, double y, double v_rep) {
  // Lift the target level to the representative point's own value (the
  // y-monotonicity of the tangent class), so step k+1 inherits step k's
  // accumulated slack instead of being charged for it.
  if (spec.target_set.kind == TargetSet::Kind::half_line_nonpositive)
    return std::max(y, v_rep);
  return y;
}

LocalStep run_local(const ProblemSpec& spec, double t_k, const Path& x_rep, double y,
                    double epsilon, const TangencySearch& search, std::size_t n_paths,
                    std::uint64_t seed) {
  LocalStep out;
  const TimeGrid& grid = spec.grid;
  const Index k0 = grid.index_of(t_k);
  const double v_rep = spec.candidate->eval(grid.time(k0), x_rep, k0);
  const double y_eff = effective_level(spec, y, v_rep);

  auto family = constant_control_family(spec, grid.time(k0));
  auto dirs = DirectionSet::e_plus(grid.time(k0), x_rep, family);
  const auto res = quasi_tangency_test(spec, t_k, x_rep, y_eff, dirs, epsilon, search,
                                       n_paths, seed);
  if (!res.found) {
    out.found = false;
    std::ostringstream os;
    os << "tangency failed at t=" << grid.time(k0) << ": best distance "
       << res.certificate.achieved_distance << " vs budget "
       << epsilon * res.certificate.delta;
    out.diagnostic = os.str();
    out.certificate = res.certificate;
    return out;
  }
  out.found = true;
  out.certificate = res.certificate;
  out.control_index = res.certificate.control_index;
  out.control = dirs.control(static_cast<std::size_t>(res.certificate.control_index));
  out.perturbation = res.certificate.perturbation;
  out.delta_cells = grid.index_of(grid.time(k0) + res.certificate.delta) - k0;
  if (out.delta_cells < 1) out.delta_cells = 1;
  return out;
}

}  // namespace

LocalStep local_step(const ProblemSpec& spec, double t_k, const Path& x_rep, double y,
                     double epsilon, const TangencySearch& search, std::size_t n_paths,
                     std::uint64_t seed) {
  if (!spec.candidate) throw std::invalid_argument("local_step: problem has no candidate");
  if (spec.grid.index_of(t_k) >= spec.grid.num_steps())
    throw std::invalid_argument("local_step: t must be < T");
  return run_local(spec, t_k, x_rep, y, epsilon, search, n_paths, seed);
}

ApproximateSolution build_approx_solution(const ProblemSpec& spec, double t, const Path& x,
                                          double y, double epsilon,
                                          const ApproxBuildOptions& opt, std::size_t n_paths,
                                          std::uint64_t seed) {
  if (!spec.candidate)
    throw std::invalid_argument("build_approx_solution: problem has no candidate");
  const TimeGrid& grid = spec.grid;
  const Index k_start = grid.index_of(t);
  if (k_start >= grid.num_steps())
    throw std::invalid_argument("build_approx_solution: t must be < T");
  {
    const double v0 = spec.candidate->eval(grid.time(k_start), x, k_start);
    if (spec.target_set.distance(v0 - y) > 1e-12)
      throw std::invalid_argument("build_approx_solution: vhat(t,x,y) not in K");
  }

  ApproximateSolution sol;
  sol.epsilon = epsilon;
  sol.start_time = grid.time(k_start);
  sol.start_path = stop_path(x, grid.time(k_start));
  sol.y = y;
  sol.seed = seed;
  sol.antithetic = opt.antithetic;
  sol.delay.breakpoints = {k_start};
  sol.perturbation = PerturbationProcess(spec.dimension, grid.time(k_start));
  sol.ensemble = PathEnsemble(grid, spec.dimension);
  sol.noise = PathEnsemble(grid, spec.dimension);
  sol.ensemble.seed_record = {seed, kStreamBuild};
  sol.noise.seed_record = {seed, kStreamBuild};
  sol.ensemble.paths.assign(n_paths, sol.start_path);
  {
    Path zero;
    zero.grid = grid;
    zero.values = Matrix::Zero(spec.dimension, grid.num_points());
    sol.noise.paths.assign(n_paths, zero);
  }

  SimOptions adv;
  adv.n_paths = n_paths;
  adv.seed = derive_seed(seed, 0xADul);
  adv.threads = opt.threads;
  adv.antithetic = opt.antithetic;
  adv.stream = kStreamBuild;

  Index k_cur = k_start;
  while (k_cur < grid.num_steps() && sol.steps_taken < opt.max_steps) {
    const std::uint64_t step_seed =
        derive_seed(seed, 0xB100ul + static_cast<std::uint64_t>(sol.steps_taken));

    LocalStep step;
    if (opt.rep_mode == RepMode::mean_path || sol.ensemble.size() == 1) {
      const Path rep = stop_path(sol.ensemble.mean_path(), grid.time(k_cur));
      step = run_local(spec, grid.time(k_cur), rep, y, epsilon, opt.search,
                       opt.tangency_paths, step_seed);
    } else {
      // per-path vote over a fixed subsample: most common first-witness
      // (delta, control, pert) triple wins, ties by enumeration order.
      std::map<std::tuple<Index, int, int>, std::pair<int, LocalStep>> votes;
      const int m = std::min<int>(opt.vote_sample, static_cast<int>(sol.ensemble.size()));
      for (int i = 0; i < m; ++i) {
        const Path rep = stop_path(sol.ensemble.paths[static_cast<std::size_t>(i)],
                                   grid.time(k_cur));
        LocalStep cand = run_local(spec, grid.time(k_cur), rep, y, epsilon, opt.search,
                                   opt.tangency_paths, step_seed);
        if (!cand.found) continue;
        auto key = std::make_tuple(cand.delta_cells, cand.control_index, 0);
        auto [it, fresh] = votes.try_emplace(key, 0, cand);
        ++it->second.first;
        (void)fresh;
      }
      if (votes.empty()) {
        step.found = false;
        step.diagnostic = "tangency failed on every sampled base point";
      } else {
        auto best = votes.begin();
        for (auto it = votes.begin(); it != votes.end(); ++it)
          if (it->second.first > best->second.first) best = it;
        step = best->second.second;
      }
    }

    if (!step.found) {
      sol.complete = false;
      sol.diagnostic = step.diagnostic;
      break;
    }

    Index k_next = std::min<Index>(k_cur + step.delta_cells, grid.num_steps());
    for (Index k = k_cur; k < k_next; ++k) {
      sol.control_cells.push_back(step.control.at_cell(grid, k));
      sol.perturbation.set_cell(k, step.perturbation.p_at_cell(grid, k),
                                step.perturbation.q_at_cell(grid, k));
    }
    // Cell-indexed control over everything recorded so far; only the freshly
    // appended cells drive this segment.
    std::vector<double> padded(static_cast<std::size_t>(k_next), spec.anchor.a0);
    for (std::size_t j = 0; j < sol.control_cells.size(); ++j)
      padded[static_cast<std::size_t>(k_start) + j] = sol.control_cells[j];
    ControlProcess seg_control = ControlProcess::piecewise(std::move(padded),
                                                           grid.time(k_start), spec.anchor.a0);

    advance_delayed_segment(spec, sol.ensemble, sol.noise, k_cur, k_next, k_cur,
                            seg_control, step.perturbation, adv);
    k_cur = k_next;
    sol.delay.breakpoints.push_back(k_cur);
    ++sol.steps_taken;
  }

  if (k_cur >= grid.num_steps()) sol.complete = true;
  else if (sol.diagnostic.empty())
    sol.diagnostic = "max_steps exceeded before reaching T";
  sol.tau = grid.time(k_cur);
  sol.control = ControlProcess::piecewise(
      [&] {
        std::vector<double> padded(static_cast<std::size_t>(grid.num_steps()),
                                   spec.anchor.a0);
        for (std::size_t j = 0; j < sol.control_cells.size(); ++j)
          padded[static_cast<std::size_t>(k_start) + j] = sol.control_cells[j];
        return padded;
      }(),
      grid.time(k_start), spec.anchor.a0);

  sol.condition_report = verify_approx_solution(spec, sol);
  return sol;
}

ConditionReport verify_approx_solution(const ProblemSpec& spec,
                                       const ApproximateSolution& sol) {
  if (!spec.candidate)
    throw std::invalid_argument("verify_approx_solution: problem has no candidate");
  ConditionReport rep;
  const TimeGrid& grid = spec.grid;
  const Index k_start = grid.index_of(sol.start_time);
  const Index k_tau = grid.index_of(sol.tau);
  const Index d = spec.dimension;
  const double eps = sol.epsilon;
  const double dt = grid.step();

  // (i) t < tau <= T.
  rep.stopping_time.pass = k_tau > k_start && k_tau <= grid.num_steps();
  rep.stopping_time.slack = sol.tau - sol.start_time;
  if (!rep.stopping_time.pass) rep.stopping_time.detail = "tau outside (t, T]";

  // (ii) breakpoints increasing, spacing <= eps, rho pinned outside [t, tau).
  {
    bool ok = !sol.delay.breakpoints.empty() &&
              sol.delay.breakpoints.front() == k_start &&
              sol.delay.breakpoints.back() == k_tau;
    double worst = eps;
    for (std::size_t i = 1; ok && i < sol.delay.breakpoints.size(); ++i) {
      const Index a = sol.delay.breakpoints[i - 1];
      const Index b = sol.delay.breakpoints[i];
      if (b <= a) ok = false;
      const double spacing = grid.time(b) - grid.time(a);
      worst = std::min(worst, eps - spacing);
    }
    for (Index k = 0; ok && k <= grid.num_steps(); ++k) {
      const Index r = sol.delay.rho_index(k);
      if (r > k) ok = false;
      if ((k < k_start || k >= k_tau) && r != k) ok = false;
      if (grid.time(k) - grid.time(r) > eps + 1e-12) ok = false;
    }
    rep.delay.pass = ok && worst >= -1e-12;
    rep.delay.slack = worst;
    if (!rep.delay.pass) rep.delay.detail = "breakpoint spacing exceeds eps or rho invalid";
  }

  // (iii) deterministic perturbation energy on [t, tau].
  {
    const double energy = sol.perturbation.energy(grid, k_start, k_tau);
    const double budget = eps * (sol.tau - sol.start_time);
    rep.energy.pass = energy <= budget + 1e-12;
    rep.energy.slack = budget - energy;
    std::ostringstream os;
    os << "energy " << energy << " vs budget " << budget;
    rep.energy.detail = os.str();
  }

  // (iv)-(vi) need the stored ensemble.
  const std::size_t n = sol.ensemble.size();
  if (n == 0 || sol.noise.size() != n) {
    rep.moments.detail = rep.dynamics.detail = rep.target.detail = "no stored ensemble";
    return rep;
  }

  // (iv) empirical second moments of the delayed coefficients on [t, tau].
  // (v) recompute the Euler increments from the stored noise.
  {
    double moment_acc = 0.0;
    double worst_defect = 0.0;
    Vector drift(d), dw(d);
    Matrix diff(d, d);
    bool finite = true;
    for (std::size_t i = 0; i < n; ++i) {
      const Path& X = sol.ensemble.paths[i];
      const Path& W = sol.noise.paths[i];
      double acc = 0.0;
      for (Index k = k_start; k < k_tau; ++k) {
        const double tk = grid.time(k);
        const Index freeze = sol.delay.rho_index(k);
        const double a = sol.control.at_cell(grid, k);
        spec.coefficients.eval_b(tk, X, freeze, a, drift);
        spec.coefficients.eval_sigma(tk, X, freeze, a, diff);
        acc += drift.squaredNorm() + diff.squaredNorm();
        drift += sol.perturbation.p_at_cell(grid, k);
        diff += sol.perturbation.q_at_cell(grid, k);
        dw = W.values.col(k + 1) - W.values.col(k);
        const double defect =
            (X.values.col(k + 1) - (X.values.col(k) + drift * dt + diff * dw)).norm();
        worst_defect = std::max(worst_defect, defect);
      }
      acc *= dt;
      if (!std::isfinite(acc)) finite = false;
      moment_acc += acc;
    }
    moment_acc /= static_cast<double>(n);
    rep.moments.pass = finite && std::isfinite(moment_acc);
    rep.moments.slack = moment_acc;
    {
      std::ostringstream os;
      os << "mean integrated |b|^2 + |sigma|^2 = " << moment_acc;
      rep.moments.detail = os.str();
    }
    rep.dynamics.pass = worst_defect <= 1e-10;
    rep.dynamics.slack = worst_defect;
    {
      std::ostringstream os;
      os << "max reconstruction defect " << worst_defect;
      rep.dynamics.detail = os.str();
    }
  }

  // (vi) dist_K(E vhat(rho_s ^ tau, X, y)) <= eps (s ^ tau - t) at every grid s.
  {
    bool ok = true;
    double worst = std::numeric_limits<double>::infinity();
    for (Index ks = k_start; ks <= grid.num_steps(); ++ks) {
      const Index k_eval = std::min(sol.delay.rho_index(std::min(ks, k_tau)), k_tau);
      const double t_eval = grid.time(k_eval);
      double s = 0.0, ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double v = spec.candidate->eval(t_eval, sol.ensemble.paths[i], k_eval);
        s += v;
        ss += v * v;
      }
      const double mean = s / static_cast<double>(n);
      const double se =
          std::sqrt(std::max(0.0, ss / static_cast<double>(n) - mean * mean) /
                    static_cast<double>(n));
      const double dist = spec.target_set.distance(mean - sol.y);
      const double allowance =
          eps * (grid.time(std::min(ks, k_tau)) - sol.start_time) + 3.0 * se;
      if (dist > allowance + 1e-12) ok = false;
      worst = std::min(worst, allowance - dist);
    }
    rep.target.pass = ok;
    rep.target.slack = worst;
    if (!ok) rep.target.detail = "mean deviation exceeds eps (s - t) + 3 stderr";
  }

  return rep;
}

GapReport delayed_vs_true_gap(const ProblemSpec& spec, const ApproximateSolution& sol,
                              std::size_t n_paths, std::uint64_t seed, int threads) {
  if (!sol.complete)
    throw std::invalid_argument("delayed_vs_true_gap: solution must be complete (tau = T)");
  const TimeGrid& grid = spec.grid;
  const Index k_start = grid.index_of(sol.start_time);
  const Index k_tau = grid.index_of(sol.tau);
  const Index d = spec.dimension;
  const double dt = grid.step();
  const double sqdt = std::sqrt(dt);

  // Common noise: re-run both dynamics per path from the same substream.
  const std::size_t n_chunks = (n_paths + kChunk - 1) / kChunk;
  std::vector<std::vector<double>> gap_sums(
      n_chunks, std::vector<double>(sol.delay.breakpoints.size(), 0.0));

  run_chunked(n_paths, threads, [&](std::size_t lo, std::size_t hi) {
    Vector drift(d), dw(d);
    Matrix diff(d, d);
    for (std::size_t i = lo; i < hi; ++i) {
      NormalStream stream(seed, 0x6A9u, i);
      Path Xt = sol.start_path;  // true dynamics
      Path Xd = sol.start_path;  // delayed dynamics
      double running = 0.0;
      auto& sums = gap_sums[i / kChunk];
      for (Index k = k_start; k < k_tau; ++k) {
        const double tk = grid.time(k);
        const double a = sol.control.at_cell(grid, k);
        for (Index r = 0; r < d; r += 2) {
          const auto z = stream.normal_pair(static_cast<std::uint32_t>(k),
                                            static_cast<std::uint32_t>(r / 2));
          dw(r) = z[0] * sqdt;
          if (r + 1 < d) dw(r + 1) = z[1] * sqdt;
        }
        spec.coefficients.eval_b(tk, Xt, k, a, drift);
        spec.coefficients.eval_sigma(tk, Xt, k, a, diff);
        Xt.values.col(k + 1) = Xt.values.col(k) + drift * dt + diff * dw;

        const Index freeze = sol.delay.rho_index(k);
        spec.coefficients.eval_b(tk, Xd, freeze, a, drift);
        spec.coefficients.eval_sigma(tk, Xd, freeze, a, diff);
        drift += sol.perturbation.p_at_cell(grid, k);
        diff += sol.perturbation.q_at_cell(grid, k);
        Xd.values.col(k + 1) = Xd.values.col(k) + drift * dt + diff * dw;

        running = std::max(running,
                           (Xt.values.col(k + 1) - Xd.values.col(k + 1)).squaredNorm());
        for (std::size_t bp = 0; bp < sol.delay.breakpoints.size(); ++bp)
          if (sol.delay.breakpoints[bp] == k + 1) sums[bp] += running;
      }
    }
  });

  GapReport rep;
  for (std::size_t bp = 1; bp < sol.delay.breakpoints.size(); ++bp) {
    double s = 0.0;
    for (std::size_t c = 0; c < n_chunks; ++c) s += gap_sums[c][bp];
    rep.times.push_back(grid.time(sol.delay.breakpoints[bp]));
    rep.gaps.push_back(s / static_cast<double>(n_paths));
  }
  rep.final_gap = rep.gaps.empty() ? 0.0 : rep.gaps.back();
  return rep;
}

}  // namespace meanviab
