#include "meanviab/hjb.hpp"

#include <cmath>

#include "meanviab/parallel.hpp"
#include "meanviab/rng.hpp"

namespace meanviab {

namespace {
constexpr std::uint32_t kStreamValue = 0x7A1u;
constexpr std::size_t kChunk = 1024;

struct MeanStderr {
  double mean = 0.0;
  double se = 0.0;
};

MeanStderr terminal_cost_stats(const ProblemSpec& spec, double t, const Path& x,
                               const ControlProcess& a, std::size_t n_paths,
                               std::uint64_t seed, int threads) {
  const std::size_t n_chunks = (n_paths + kChunk - 1) / kChunk;
  std::vector<double> sums(n_chunks, 0.0), sumsqs(n_chunks, 0.0);
  SimOptions opt;
  opt.n_paths = n_paths;
  opt.seed = seed;
  opt.threads = threads;
  opt.stream = kStreamValue;
  simulate_controlled_visit(spec, t, x, a, opt,
                            [&](std::size_t i, const Path& X, const Path&) {
                              const double h = spec.terminal_cost(PathSlice::whole(X));
                              sums[i / kChunk] += h;
                              sumsqs[i / kChunk] += h * h;
                            });
  double s = 0.0, ss = 0.0;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    s += sums[c];
    ss += sumsqs[c];
  }
  const double n = static_cast<double>(n_paths);
  MeanStderr out;
  out.mean = s / n;
  out.se = std::sqrt(std::max(0.0, ss / n - out.mean * out.mean) / n);
  return out;
}

}  // namespace

ValueEstimate value_function(const ProblemSpec& spec, double t, const Path& x,
                             const std::vector<ControlProcess>& control_family,
                             std::size_t n_paths, std::uint64_t seed, int threads) {
  if (control_family.empty()) throw std::invalid_argument("value_function: empty family");
  if (!spec.grid.in_range(t)) throw std::invalid_argument("value_function: t outside [0, T]");
  if (n_paths < 1) throw std::invalid_argument("value_function: n_paths must be >= 1");

  ValueEstimate est;
  est.family_size = control_family.size();
  est.n_paths = n_paths;
  est.seed = seed;

  const Index k0 = spec.grid.index_of(t);
  if (k0 == spec.grid.num_steps()) {
    est.value = spec.terminal_cost(PathSlice::whole(stop_path(x, spec.grid.horizon())));
    est.stderr_ = 0.0;
    est.best_control = 0;
    return est;
  }

  est.value = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < control_family.size(); ++j) {
    const auto ms = terminal_cost_stats(spec, t, x, control_family[j], n_paths, seed, threads);
    if (ms.mean < est.value) {
      est.value = ms.mean;
      est.stderr_ = ms.se;
      est.best_control = static_cast<int>(j);
    }
  }
  return est;
}

DppReport dpp_check(const ProblemSpec& spec, double t, const Path& x, double s,
                    const std::vector<ControlProcess>& family, std::size_t n_outer,
                    std::size_t n_inner, std::uint64_t seed, double allowance,
                    const std::vector<ControlProcess>* inner_family, int threads) {
  if (!(spec.grid.index_of(t) < spec.grid.index_of(s)))
    throw std::invalid_argument("dpp_check: need t < s");
  const std::vector<ControlProcess>& inner = inner_family ? *inner_family : family;
  const Index ks = spec.grid.index_of(s);
  const double ts = spec.grid.time(ks);

  DppReport rep;
  const auto direct = value_function(spec, t, x, family, n_outer * 4, derive_seed(seed, 1),
                                     threads);
  rep.value_direct = direct.value;

  double best = std::numeric_limits<double>::infinity();
  double best_se = 0.0;
  for (std::size_t j = 0; j < family.size(); ++j) {
    std::vector<double> inner_vals(n_outer, 0.0);
    SimOptions opt;
    opt.n_paths = n_outer;
    opt.seed = derive_seed(seed, 2);
    opt.threads = threads;
    opt.stream = kStreamValue;
    simulate_controlled_visit(
        spec, t, x, family[j], opt, [&](std::size_t i, const Path& X, const Path&) {
          const Path stopped = stop_path(X, ts);
          const auto v = value_function(spec, ts, stopped, inner, n_inner,
                                        derive_seed(seed, 100 + i), 1);
          inner_vals[i] = v.value;
        });
    double sum = 0.0, sumsq = 0.0;
    for (double v : inner_vals) {
      sum += v;
      sumsq += v * v;
    }
    const double n = static_cast<double>(n_outer);
    const double mean = sum / n;
    const double se = std::sqrt(std::max(0.0, sumsq / n - mean * mean) / n);
    if (mean < best) {
      best = mean;
      best_se = se;
    }
  }
  rep.value_nested = best;
  rep.gap = rep.value_nested - rep.value_direct;
  rep.combined_stderr = std::sqrt(best_se * best_se + direct.stderr_ * direct.stderr_);
  rep.allowance = allowance;
  rep.pass = std::abs(rep.gap) <= 3.0 * rep.combined_stderr + allowance;
  return rep;
}

std::vector<SamplePoint> sample_reachable_points(const ProblemSpec& spec, std::size_t count,
                                                 std::uint64_t seed, const Path& x0,
                                                 double t_fraction, int threads) {
  std::vector<SamplePoint> points(count);
  const ControlProcess anchor = ControlProcess::constant(spec.anchor.a0);
  SimOptions opt;
  opt.n_paths = count;
  opt.seed = derive_seed(seed, 0x5A3Fu);
  opt.threads = threads;
  opt.stream = kStreamValue;
  const Index k_hi = std::max<Index>(
      1, static_cast<Index>(t_fraction * static_cast<double>(spec.grid.num_steps())));
  simulate_controlled_visit(spec, 0.0, x0, anchor, opt,
                            [&](std::size_t i, const Path& X, const Path&) {
                              NormalStream pick(seed, 0x9017u, i);
                              Index k = static_cast<Index>(pick.uniform(0, 0) *
                                                           static_cast<double>(k_hi + 1));
                              k = std::clamp<Index>(k, 0, k_hi);
                              points[i].t = spec.grid.time(k);
                              points[i].x = stop_path(X, spec.grid.time(k));
                            });
  return points;
}

namespace {

SemisolutionReport verify_semisolution(const ProblemSpec& spec,
                                       const CandidateFunction& candidate,
                                       const std::vector<SamplePoint>& sample_points,
                                       const std::vector<double>& epsilon_ladder, double tol,
                                       const TangencySearch& search, std::size_t n_paths,
                                       std::uint64_t seed, bool super) {
  SemisolutionReport rep;
  rep.role = super ? "supersolution" : "subsolution";

  for (std::size_t pi = 0; pi < sample_points.size(); ++pi) {
    const auto& pt = sample_points[pi];
    const Index kt = spec.grid.index_of(pt.t);
    PointCheck pc;
    pc.t = spec.grid.time(kt);
    pc.x_at_t = pt.x.values(0, kt);
    if (kt >= spec.grid.num_steps())
      throw std::invalid_argument("verify_semisolution: sample point at t = T");

    const std::uint64_t pseed = derive_seed(seed, 0x9E00u + pi);
    if (super) {
      auto dirs = DirectionSet::e_plus(pc.t, pt.x, constant_control_family(spec, pc.t));
      const auto d = epiderivative(spec, pc.t, pt.x, candidate, dirs, epsilon_ladder, search,
                                   n_paths, pseed);
      pc.estimate = d.value;
      pc.stderr_ = d.mc_stderr;
      // Supersolution needs estimate <= 0 (within tol / MC resolution).
      if (pc.estimate <= tol)
        pc.verdict = Verdict::pass;
      else if (pc.estimate <= 3.0 * pc.stderr_)
        pc.verdict = Verdict::inconclusive;
      else
        pc.verdict = Verdict::fail;
    } else {
      // Subsolution: inf over the A-grid of the hypoderivative in the frozen
      // direction must be >= 0. Constant controls make the shift trivial.
      double worst = std::numeric_limits<double>::infinity();
      double worst_se = 0.0;
      for (Index j = 0; j < spec.control_space.grid_points; ++j) {
        const ControlProcess a =
            ControlProcess::constant(spec.control_space.value(j), pc.t, spec.anchor.a0);
        auto dir = DirectionSet::e_plus_frozen(pc.t, pt.x, a, pt.x);
        const auto d = hypoderivative(spec, pc.t, pt.x, candidate, dir, epsilon_ladder,
                                      search, n_paths, derive_seed(pseed, j));
        if (d.value < worst) {
          worst = d.value;
          worst_se = d.mc_stderr;
        }
      }
      pc.estimate = worst;
      pc.stderr_ = worst_se;
      if (pc.estimate >= -tol)
        pc.verdict = Verdict::pass;
      else if (pc.estimate >= -3.0 * pc.stderr_)
        pc.verdict = Verdict::inconclusive;
      else
        pc.verdict = Verdict::fail;
    }
    rep.points.push_back(pc);
    if (pc.verdict == Verdict::pass) ++rep.n_pass;
    if (pc.verdict == Verdict::fail) ++rep.n_fail;
    if (pc.verdict == Verdict::inconclusive) ++rep.n_inconclusive;
  }

  // Terminal inequality on sampled terminal paths.
  {
    const ControlProcess anchor = ControlProcess::constant(spec.anchor.a0);
    SimOptions opt;
    opt.n_paths = 64;
    opt.seed = derive_seed(seed, 0x7E3Au);
    opt.stream = kStreamValue;
    const Path x0 = sample_points.empty()
                        ? Path::constant(spec.grid, Vector::Zero(spec.dimension))
                        : stop_path(sample_points.front().x, 0.0);
    double worst = std::numeric_limits<double>::infinity();
    simulate_controlled_visit(spec, 0.0, x0, anchor, opt,
                              [&](std::size_t, const Path& X, const Path&) {
                                const double vT =
                                    candidate.eval(spec.grid.horizon(), X,
                                                   spec.grid.num_steps());
                                const double h = spec.terminal_cost(PathSlice::whole(X));
                                const double margin = super ? vT - h : h - vT;
                                worst = std::min(worst, margin);
                              });
    rep.terminal_worst = worst;
    rep.terminal_ok = worst >= -1e-9;
  }

  rep.overall = rep.n_fail == 0 && rep.n_inconclusive == 0 && rep.terminal_ok;
  return rep;
}

}  // namespace

SemisolutionReport verify_supersolution(const ProblemSpec& spec,
                                        const CandidateFunction& candidate,
                                        const std::vector<SamplePoint>& sample_points,
                                        const std::vector<double>& epsilon_ladder, double tol,
                                        const TangencySearch& search, std::size_t n_paths,
                                        std::uint64_t seed) {
  return verify_semisolution(spec, candidate, sample_points, epsilon_ladder, tol, search,
                             n_paths, seed, /*super=*/true);
}

SemisolutionReport verify_subsolution(const ProblemSpec& spec,
                                      const CandidateFunction& candidate,
                                      const std::vector<SamplePoint>& sample_points,
                                      const std::vector<double>& epsilon_ladder, double tol,
                                      const TangencySearch& search, std::size_t n_paths,
                                      std::uint64_t seed) {
  return verify_semisolution(spec, candidate, sample_points, epsilon_ladder, tol, search,
                             n_paths, seed, /*super=*/false);
}

ComparisonReport comparison_check(const ProblemSpec& spec, const CandidateFunction& v_minus,
                                  const CandidateFunction& v_plus,
                                  const SemisolutionReport& sub_report,
                                  const SemisolutionReport& super_report,
                                  const std::vector<SamplePoint>& sample_points,
                                  const std::vector<ControlProcess>& family,
                                  std::size_t n_paths, std::uint64_t seed, int threads) {
  if (sub_report.role != "subsolution" || super_report.role != "supersolution")
    throw std::invalid_argument("comparison_check: reports attached with wrong roles");

  ComparisonReport rep;
  for (std::size_t i = 0; i < sample_points.size(); ++i) {
    const auto& pt = sample_points[i];
    const Index kt = spec.grid.index_of(pt.t);
    const auto est = value_function(spec, pt.t, pt.x, family, n_paths,
                                    derive_seed(seed, 0xC0901ull + i), threads);
    ComparisonRow row;
    row.t = spec.grid.time(kt);
    row.x_at_t = pt.x.values(0, kt);
    row.v_minus = v_minus.eval(row.t, pt.x, kt);
    row.v_plus = v_plus.eval(row.t, pt.x, kt);
    row.value = est.value;
    row.stderr_ = est.stderr_;
    rep.rows.push_back(row);

    rep.max_lower_violation =
        std::max(rep.max_lower_violation, row.v_minus - (row.value + 3.0 * row.stderr_));
    rep.max_upper_violation =
        std::max(rep.max_upper_violation, row.value - (row.v_plus + 3.0 * row.stderr_));
    rep.max_sub_over_super = std::max(rep.max_sub_over_super, row.v_minus - row.v_plus);
  }
  rep.pass = rep.max_lower_violation <= 0.0 && rep.max_upper_violation <= 0.0;
  return rep;
}

}  // namespace meanviab
