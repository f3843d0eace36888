#include "meanviab/sde.hpp"

#include <cmath>

#include "meanviab/parallel.hpp"
#include "meanviab/rng.hpp"

namespace meanviab {

namespace {

struct Kernel {
  const ProblemSpec* spec;
  const ControlProcess* control;
  const PerturbationProcess* pert = nullptr;
  bool freeze_at_start = false;   // coefficients pinned to the initial stopped path
  const Path* splice_base = nullptr;  // ring_x for shifted feedback controls
  Index k_start = 0;
  Index k_end = 0;
};

// One Euler-Maruyama trajectory. `x` must be defined up to k_start. `sign`
// flips the Gaussian increments for antithetic pairs.
void run_one(const Kernel& km, const Path& x, NormalStream stream, double sign,
             Path& X, Path& W) {
  const ProblemSpec& spec = *km.spec;
  const TimeGrid& grid = spec.grid;
  const Index d = spec.dimension;
  const Index n = grid.num_steps();
  const double dt = grid.step();
  const double sqdt = std::sqrt(dt);

  X.grid = grid;
  X.values.setZero(d, n + 1);
  X.values.leftCols(km.k_start + 1) = x.values.leftCols(km.k_start + 1);
  W.grid = grid;
  W.values.setZero(d, n + 1);

  // Spliced path for shifted feedback controls: ring_x before t, then
  // ring_x_t + (W - W_t).
  Path spliced;
  if (km.splice_base) {
    spliced.grid = grid;
    spliced.values.setZero(d, n + 1);
    spliced.values.leftCols(km.k_start) = km.splice_base->values.leftCols(km.k_start);
    spliced.values.col(km.k_start) = km.splice_base->values.col(km.k_start);
  }

  Vector drift(d), dw(d);
  Matrix diff(d, d);
  const std::uint32_t pairs_per_step = static_cast<std::uint32_t>((d + 1) / 2);

  for (Index k = km.k_start; k < km.k_end; ++k) {
    const double tk = grid.time(k);

    double a;
    if (km.control->is_open_loop()) {
      a = km.control->at_cell(grid, k);
    } else {
      const Path& ctl_path = km.splice_base ? spliced : W;
      a = km.control->at_cell(grid, k, PathSlice(ctl_path, k));
    }
    a = spec.control_space.clamp(a);

    const Path& coeff_path = km.freeze_at_start ? x : X;
    const Index coeff_stop = km.freeze_at_start ? km.k_start : k;
    spec.coefficients.eval_b(tk, coeff_path, coeff_stop, a, drift);
    spec.coefficients.eval_sigma(tk, coeff_path, coeff_stop, a, diff);

    for (std::uint32_t c = 0; c < pairs_per_step; ++c) {
      const auto z = stream.normal_pair(static_cast<std::uint32_t>(k), c);
      dw(2 * c) = sign * z[0] * sqdt;
      if (2 * c + 1 < static_cast<std::uint32_t>(d)) dw(2 * c + 1) = sign * z[1] * sqdt;
    }

    if (km.pert) {
      drift += km.pert->p_at_cell(grid, k);
      diff += km.pert->q_at_cell(grid, k);
    }

    X.values.col(k + 1) = X.values.col(k) + drift * dt + diff * dw;
    W.values.col(k + 1) = W.values.col(k) + dw;
    if (km.splice_base) spliced.values.col(k + 1) = spliced.values.col(km.k_start) + W.values.col(k + 1);

    if (!X.values.col(k + 1).allFinite())
      throw SimulationError("simulate: non-finite state", k + 1);
  }

  // Hold the terminal state beyond the simulated window.
  for (Index k = km.k_end; k < n; ++k) {
    X.values.col(k + 1) = X.values.col(km.k_end);
    W.values.col(k + 1) = W.values.col(km.k_end);
  }
}

SimulationResult run_ensemble(const Kernel& km, const Path& x, const SimOptions& opt) {
  const ProblemSpec& spec = *km.spec;
  SimulationResult out;
  out.seed = opt.seed;
  out.n_paths = opt.n_paths;
  out.antithetic = opt.antithetic;
  out.start_time = spec.grid.time(km.k_start);
  out.end_time = spec.grid.time(km.k_end);
  out.ensemble = PathEnsemble(spec.grid, spec.dimension);
  out.driving_noise = PathEnsemble(spec.grid, spec.dimension);
  out.ensemble.seed_record = {opt.seed, opt.stream};
  out.driving_noise.seed_record = {opt.seed, opt.stream};
  out.ensemble.paths.resize(opt.n_paths);
  out.driving_noise.paths.resize(opt.n_paths);

  run_chunked(opt.n_paths, opt.threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const std::uint64_t stream_idx = opt.antithetic ? i / 2 : i;
      const double sign = (opt.antithetic && (i % 2 == 1)) ? -1.0 : 1.0;
      run_one(km, x, NormalStream(opt.seed, opt.stream, stream_idx), sign,
              out.ensemble.paths[i], out.driving_noise.paths[i]);
    }
  });
  return out;
}

void check_start(const ProblemSpec& spec, double t, const Path& x) {
  if (!spec.grid.in_range(t)) throw std::invalid_argument("simulate: t outside [0, T]");
  if (x.grid != spec.grid) throw std::runtime_error("simulate: initial path grid mismatch");
  if (x.dim() != spec.dimension)
    throw std::runtime_error("simulate: initial path dimension mismatch");
}

}  // namespace

SimulationResult simulate_controlled(const ProblemSpec& spec, double t, const Path& x,
                                     const ControlProcess& a, const SimOptions& opt) {
  check_start(spec, t, x);
  const Index k0 = spec.grid.index_of(t);
  if (k0 >= spec.grid.num_steps())
    throw std::invalid_argument("simulate_controlled: t must be < T");
  Kernel km{&spec, &a, nullptr, false, nullptr, k0, spec.grid.num_steps()};
  return run_ensemble(km, x, opt);
}

SimulationResult simulate_perturbed(const ProblemSpec& spec, double t, const Path& x,
                                    const ControlProcess& a, const PerturbationProcess& pert,
                                    double delta, const SimOptions& opt) {
  check_start(spec, t, x);
  const Index k0 = spec.grid.index_of(t);
  const Index kd = spec.grid.index_of(spec.grid.snap(t) + delta);
  if (kd <= k0) throw std::invalid_argument("simulate_perturbed: delta below grid step");
  if (kd > spec.grid.num_steps())
    throw std::invalid_argument("simulate_perturbed: t + delta beyond T");
  Kernel km{&spec, &a, &pert, true, nullptr, k0, kd};
  return run_ensemble(km, x, opt);
}

SimulationResult simulate_frozen_shifted(const ProblemSpec& spec, double t, const Path& x,
                                         const Path& ring_x, const ControlProcess& a,
                                         const SimOptions& opt) {
  check_start(spec, t, x);
  if (ring_x.grid != spec.grid || ring_x.dim() != spec.dimension)
    throw std::runtime_error("simulate_frozen_shifted: shift path mismatch");
  const Index k0 = spec.grid.index_of(t);
  if (k0 >= spec.grid.num_steps())
    throw std::invalid_argument("simulate_frozen_shifted: t must be < T");
  Kernel km{&spec, &a, nullptr, false, &ring_x, k0, spec.grid.num_steps()};
  return run_ensemble(km, x, opt);
}

void simulate_controlled_visit(const ProblemSpec& spec, double t, const Path& x,
                               const ControlProcess& a, const SimOptions& opt,
                               const PathVisitor& visit) {
  check_start(spec, t, x);
  const Index k0 = spec.grid.index_of(t);
  if (k0 >= spec.grid.num_steps())
    throw std::invalid_argument("simulate_controlled_visit: t must be < T");
  Kernel km{&spec, &a, nullptr, false, nullptr, k0, spec.grid.num_steps()};
  run_chunked(opt.n_paths, opt.threads, [&](std::size_t lo, std::size_t hi) {
    Path X, W;
    for (std::size_t i = lo; i < hi; ++i) {
      const std::uint64_t stream_idx = opt.antithetic ? i / 2 : i;
      const double sign = (opt.antithetic && (i % 2 == 1)) ? -1.0 : 1.0;
      run_one(km, x, NormalStream(opt.seed, opt.stream, stream_idx), sign, X, W);
      visit(i, X, W);
    }
  });
}

namespace {

void run_visit(const Kernel& km, const Path& x, const SimOptions& opt,
               const PathVisitor& visit) {
  run_chunked(opt.n_paths, opt.threads, [&](std::size_t lo, std::size_t hi) {
    Path X, W;
    for (std::size_t i = lo; i < hi; ++i) {
      const std::uint64_t stream_idx = opt.antithetic ? i / 2 : i;
      const double sign = (opt.antithetic && (i % 2 == 1)) ? -1.0 : 1.0;
      run_one(km, x, NormalStream(opt.seed, opt.stream, stream_idx), sign, X, W);
      visit(i, X, W);
    }
  });
}

Index perturbed_end_index(const ProblemSpec& spec, double t, double delta) {
  const Index k0 = spec.grid.index_of(t);
  const Index kd = spec.grid.index_of(spec.grid.snap(t) + delta);
  if (kd <= k0) throw std::invalid_argument("simulate_perturbed: delta below grid step");
  if (kd > spec.grid.num_steps())
    throw std::invalid_argument("simulate_perturbed: t + delta beyond T");
  return kd;
}

}  // namespace

void simulate_perturbed_visit(const ProblemSpec& spec, double t, const Path& x,
                              const ControlProcess& a, const PerturbationProcess& pert,
                              double delta, const SimOptions& opt, const PathVisitor& visit) {
  check_start(spec, t, x);
  const Index k0 = spec.grid.index_of(t);
  const Index kd = perturbed_end_index(spec, t, delta);
  Kernel km{&spec, &a, &pert, true, nullptr, k0, kd};
  run_visit(km, x, opt, visit);
}

void simulate_perturbed_shifted_visit(const ProblemSpec& spec, double t, const Path& x,
                                      const Path& ring_x, const ControlProcess& a,
                                      const PerturbationProcess& pert, double delta,
                                      const SimOptions& opt, const PathVisitor& visit) {
  check_start(spec, t, x);
  if (ring_x.grid != spec.grid || ring_x.dim() != spec.dimension)
    throw std::runtime_error("simulate_perturbed_shifted: shift path mismatch");
  const Index k0 = spec.grid.index_of(t);
  const Index kd = perturbed_end_index(spec, t, delta);
  Kernel km{&spec, &a, &pert, true, &ring_x, k0, kd};
  run_visit(km, x, opt, visit);
}

void advance_delayed_segment(const ProblemSpec& spec, PathEnsemble& states,
                             PathEnsemble& noise, Index k0, Index k1, Index freeze_index,
                             const ControlProcess& a, const PerturbationProcess& pert,
                             const SimOptions& opt) {
  if (states.size() != noise.size())
    throw std::runtime_error("advance_delayed_segment: ensembles misaligned");
  const TimeGrid& grid = spec.grid;
  const Index d = spec.dimension;
  const double dt = grid.step();
  const double sqdt = std::sqrt(dt);
  const std::uint32_t pairs_per_step = static_cast<std::uint32_t>((d + 1) / 2);

  run_chunked(states.size(), opt.threads, [&](std::size_t lo, std::size_t hi) {
    Vector drift(d), dw(d);
    Matrix diff(d, d);
    for (std::size_t i = lo; i < hi; ++i) {
      Path& X = states.paths[i];
      Path& W = noise.paths[i];
      const std::uint64_t stream_idx = opt.antithetic ? i / 2 : i;
      const double sign = (opt.antithetic && (i % 2 == 1)) ? -1.0 : 1.0;
      NormalStream stream(opt.seed, opt.stream, stream_idx);
      for (Index k = k0; k < k1; ++k) {
        const double tk = grid.time(k);
        double av;
        if (a.is_open_loop())
          av = a.at_cell(grid, k);
        else
          av = a.at_cell(grid, k, PathSlice(W, k));
        av = spec.control_space.clamp(av);

        spec.coefficients.eval_b(tk, X, freeze_index, av, drift);
        spec.coefficients.eval_sigma(tk, X, freeze_index, av, diff);
        drift += pert.p_at_cell(grid, k);
        diff += pert.q_at_cell(grid, k);

        for (std::uint32_t c = 0; c < pairs_per_step; ++c) {
          const auto z = stream.normal_pair(static_cast<std::uint32_t>(k), c);
          dw(2 * c) = sign * z[0] * sqdt;
          if (2 * c + 1 < static_cast<std::uint32_t>(d)) dw(2 * c + 1) = sign * z[1] * sqdt;
        }

        X.values.col(k + 1) = X.values.col(k) + drift * dt + diff * dw;
        W.values.col(k + 1) = W.values.col(k) + dw;
        if (!X.values.col(k + 1).allFinite())
          throw SimulationError("advance_delayed_segment: non-finite state", k + 1);
      }
    }
  });
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
    if (x[i] <= 0.0 || y[i] <= 0.0) continue;
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (n * sxy - sx * sy) / denom;
}

MomentBoundReport moment_bound_check(const ProblemSpec& spec, double t, const Path& x,
                                     const ControlProcess& a,
                                     const std::vector<double>& delta_list,
                                     const SimOptions& opt) {
  MomentBoundReport rep;
  const Index k0 = spec.grid.index_of(t);
  for (std::size_t i = 1; i < delta_list.size(); ++i)
    if (!(delta_list[i] > delta_list[i - 1]))
      throw std::invalid_argument("moment_bound_check: delta_list must be increasing");

  // Probe whether the diffusion is active anywhere along the anchor control.
  {
    Matrix sig(spec.dimension, spec.dimension);
    double smax = 0.0;
    for (Index k = k0; k < spec.grid.num_steps(); ++k) {
      spec.coefficients.eval_sigma(spec.grid.time(k), x, k0, spec.anchor.a0, sig);
      smax = std::max(smax, sig.norm());
    }
    rep.sigma_degenerate = smax < 1e-12;
  }

  std::vector<Index> kds;
  for (double del : delta_list) {
    const Index kd = spec.grid.index_of(spec.grid.snap(t) + del);
    kds.push_back(kd);
    rep.deltas.push_back(spec.grid.time(kd) - spec.grid.time(k0));
  }

  // Per-path sup over [t, t+delta] of |X - x_t|^2, accumulated per delta.
  std::vector<double> sum(delta_list.size(), 0.0), sumsq(delta_list.size(), 0.0);
  std::vector<std::vector<double>> per_path(delta_list.size(),
                                            std::vector<double>(opt.n_paths, 0.0));
  simulate_controlled_visit(spec, t, x, a, opt, [&](std::size_t i, const Path& X, const Path&) {
    const Vector x_t = x.values.col(k0);
    double running = 0.0;
    std::size_t which = 0;
    for (Index k = k0; k <= spec.grid.num_steps() && which < kds.size(); ++k) {
      running = std::max(running, (X.values.col(k) - x_t).squaredNorm());
      while (which < kds.size() && k == kds[which]) {
        per_path[which][i] = running;
        ++which;
      }
    }
  });
  for (std::size_t j = 0; j < delta_list.size(); ++j) {
    for (double v : per_path[j]) {
      sum[j] += v;
      sumsq[j] += v * v;
    }
    const double n = static_cast<double>(opt.n_paths);
    const double mean = sum[j] / n;
    rep.moments.push_back(mean);
    rep.stderrs.push_back(std::sqrt(std::max(0.0, sumsq[j] / n - mean * mean) / n));
  }

  rep.slope = loglog_slope(rep.deltas, rep.moments);
  const double L2 = spec.coefficients.declared_L_b * spec.coefficients.declared_L_b;
  for (std::size_t j = 0; j < rep.moments.size(); ++j)
    if (rep.deltas[j] > 0.0) rep.fitted_C = std::max(rep.fitted_C, rep.moments[j] / (L2 * rep.deltas[j]));
  rep.pass = rep.sigma_degenerate || (rep.slope >= 0.8 && rep.slope <= 1.2);
  return rep;
}

}  // namespace meanviab
