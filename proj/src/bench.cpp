#include "meanviab/bench.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "meanviab/rng.hpp"

namespace meanviab {

namespace {

constexpr double kClipLevel = 1e6;

struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Golub-Welsch on the Hermite Jacobi matrix (weight e^{-x^2}).
GaussHermiteRule gauss_hermite_rule(int n) {
  Matrix J = Matrix::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double beta = std::sqrt(static_cast<double>(k) / 2.0);
    J(k, k - 1) = beta;
    J(k - 1, k) = beta;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(J);
  GaussHermiteRule rule;
  const double sqrt_pi = std::sqrt(M_PI);
  for (int i = 0; i < n; ++i) {
    rule.nodes.push_back(es.eigenvalues()(i));
    const double v0 = es.eigenvectors()(0, i);
    rule.weights.push_back(sqrt_pi * v0 * v0);
  }
  return rule;
}

double clip(double v, double m) { return std::clamp(v, -m, m); }

}  // namespace

double gauss_hermite_expectation(const std::function<double(double)>& f, double mu,
                                 double scale, int nodes) {
  static thread_local int cached_n = 0;
  static thread_local GaussHermiteRule cached;
  if (cached_n != nodes) {
    cached = gauss_hermite_rule(nodes);
    cached_n = nodes;
  }
  const double inv_sqrt_pi = 1.0 / std::sqrt(M_PI);
  double acc = 0.0;
  for (std::size_t i = 0; i < cached.nodes.size(); ++i)
    acc += cached.weights[i] * f(mu + scale * M_SQRT2 * cached.nodes[i]);
  return acc * inv_sqrt_pi;
}

double folded_normal_mean(double mu, double sigma) {
  if (sigma <= 0.0) return std::abs(mu);
  const double z = mu / sigma;
  return sigma * std::sqrt(2.0 / M_PI) * std::exp(-0.5 * z * z) +
         mu * std::erf(z / M_SQRT2);
}

std::vector<Benchmark> builtin_benchmarks(const TimeGrid& grid) {
  std::vector<Benchmark> out;
  const double T = grid.horizon();
  const double M = kClipLevel;

  // B0: uncontrolled Brownian endpoint; oracle by Gaussian quadrature.
  {
    Benchmark b;
    b.id = "B0";
    b.spec.grid = grid;
    b.spec.dimension = 1;
    b.spec.control_space = ControlSpace::singleton(0.0);
    b.spec.coefficients = make_coefficients("controlled_drift",
                                            {.drift_scale = 0.0, .vol = 1.0}, 1, M + 1.0);
    b.spec.terminal_cost = TerminalCost([](const PathSlice& x) { return x.back()(0); }, M);
    b.spec.anchor = AnchorTriple::zero(1, 0.0);
    b.oracle_value = [T, M](double t, const PathSlice& x) {
      const double xt = x.back()(0);
      return gauss_hermite_expectation([M](double v) { return clip(v, M); }, xt,
                                       std::sqrt(std::max(0.0, T - t)));
    };
    b.oracle_optimal_control = ControlProcess::constant(0.0);
    b.x0 = Vector::Zero(1);
    b.candidate_L = 1.0;
    b.notes = "uncontrolled: V(t,x) = E[clip(x_t + Z sqrt(T-t))], quadrature oracle";
    out.push_back(std::move(b));
  }

  // B1: controlled drift b = a, sigma = 1; infimum at a = 0, V = x_t.
  {
    Benchmark b;
    b.id = "B1";
    b.spec.grid = grid;
    b.spec.dimension = 1;
    b.spec.control_space = ControlSpace(0.0, 1.0, 11);
    b.spec.coefficients =
        make_coefficients("controlled_drift", {.drift_scale = 1.0, .vol = 1.0}, 1, M + 2.0);
    b.spec.terminal_cost = TerminalCost([](const PathSlice& x) { return x.back()(0); }, M);
    b.spec.anchor = AnchorTriple::zero(1, 0.0);
    b.oracle_value = [](double, const PathSlice& x) { return x.back()(0); };
    b.oracle_optimal_control = ControlProcess::constant(0.0);
    b.x0 = Vector::Constant(1, 0.3);
    b.candidate_L = 1.0;
    b.notes = "V(t,x) = x_t while clipping is inactive; optimal control a = 0";
    out.push_back(std::move(b));
  }

  // B2: controlled volatility, convex payoff; bang-bang at sigma_min.
  {
    const double smin = 0.2, smax = 1.0;
    Benchmark b;
    b.id = "B2";
    b.spec.grid = grid;
    b.spec.dimension = 1;
    b.spec.control_space = ControlSpace(0.0, 1.0, 11);
    b.spec.coefficients = make_coefficients(
        "controlled_vol", {.vol_min = smin, .vol_max = smax}, 1, M + 2.0);
    b.spec.terminal_cost =
        TerminalCost([](const PathSlice& x) { return x.back()(0) * x.back()(0); }, M);
    b.spec.anchor = AnchorTriple::zero(1, 0.0);
    b.oracle_value = [T, smin](double t, const PathSlice& x) {
      const double xt = x.back()(0);
      return xt * xt + smin * smin * std::max(0.0, T - t);
    };
    b.oracle_optimal_control = ControlProcess::constant(0.0);
    b.x0 = Vector::Zero(1);
    b.candidate_L = 20.0;
    b.notes = "V(t,x) = x_t^2 + sigma_min^2 (T-t); convex payoff pins a = 0";
    out.push_back(std::move(b));
  }

  // B3: path-dependent increment payoff, uncontrolled.
  {
    Benchmark b;
    b.id = "B3";
    b.spec.grid = grid;
    b.spec.dimension = 1;
    b.spec.control_space = ControlSpace::singleton(0.0);
    b.spec.coefficients = make_coefficients("controlled_drift",
                                            {.drift_scale = 0.0, .vol = 1.0}, 1, M + 1.0);
    b.spec.terminal_cost = TerminalCost(
        [](const PathSlice& x) {
          const Index half = x.grid().num_steps() / 2;
          return std::abs(x.back()(0) - x.col(half)(0));
        },
        M);
    b.spec.anchor = AnchorTriple::zero(1, 0.0);
    b.oracle_value = [T, grid](double t, const PathSlice& x) {
      const double t_half = T / 2.0;
      if (t <= t_half + 1e-12) return std::sqrt(T / M_PI);  // half-normal mean
      const Index half = grid.num_steps() / 2;
      const double mu = x.back()(0) - x.col(half)(0);
      return folded_normal_mean(mu, std::sqrt(std::max(0.0, T - t)));
    };
    b.oracle_optimal_control = ControlProcess::constant(0.0);
    b.x0 = Vector::Zero(1);
    b.candidate_L = 2.0;
    b.notes = "E|x_T - x_{T/2}| = sqrt(T/pi) for t <= T/2 (half-normal mean)";
    out.push_back(std::move(b));
  }

  // B4: sign-flipped payoff forces the bang-bang choice a = 1.
  {
    Benchmark b;
    b.id = "B4";
    b.spec.grid = grid;
    b.spec.dimension = 1;
    b.spec.control_space = ControlSpace(0.0, 1.0, 11);
    b.spec.coefficients =
        make_coefficients("controlled_drift", {.drift_scale = 1.0, .vol = 1.0}, 1, M + 2.0);
    b.spec.terminal_cost = TerminalCost([](const PathSlice& x) { return -x.back()(0); }, M);
    b.spec.anchor = AnchorTriple::zero(1, 0.0);
    b.oracle_value = [T](double t, const PathSlice& x) {
      return -x.back()(0) - std::max(0.0, T - t);
    };
    b.oracle_optimal_control = ControlProcess::constant(1.0);
    b.x0 = Vector::Constant(1, 0.3);
    b.candidate_L = 2.0;
    b.notes = "V(t,x) = -x_t - (T-t); optimal control a = 1";
    out.push_back(std::move(b));
  }

  return out;
}

Benchmark benchmark_by_id(const std::string& id, const TimeGrid& grid) {
  for (auto& b : builtin_benchmarks(grid))
    if (b.id == id) return b;
  throw std::invalid_argument("unknown benchmark id '" + id + "'");
}

ProblemSpec sine_drift_problem(const TimeGrid& grid) {
  ProblemSpec spec;
  spec.grid = grid;
  spec.dimension = 1;
  spec.control_space = ControlSpace::singleton(0.0);
  spec.coefficients =
      make_coefficients("sine", {.drift_scale = 0.5, .vol = 1.0, .freq = 1.0}, 1, kClipLevel);
  spec.terminal_cost =
      TerminalCost([](const PathSlice& x) { return x.back()(0); }, kClipLevel);
  spec.anchor = AnchorTriple::zero(1, 0.0);
  return spec;
}

OracleConsistencyReport oracle_consistency_check(const Benchmark& bench, std::size_t n_paths,
                                                 std::uint64_t seed, int threads) {
  OracleConsistencyReport rep;
  rep.id = bench.id;
  rep.oracle = bench.oracle_at_start();
  const Path x = Path::constant(bench.spec.grid, bench.x0);
  bench.spec.terminal_cost.reset_clip_count();

  const auto family = constant_control_family(bench.spec, bench.t0);
  const auto est = value_function(bench.spec, bench.t0, x, family, n_paths, seed, threads);
  rep.brute_force_value = est.value;
  rep.brute_force_stderr = est.stderr_;
  rep.pass_value = std::abs(est.value - rep.oracle) <= 3.0 * est.stderr_;

  const auto opt = value_function(bench.spec, bench.t0, x, {bench.oracle_optimal_control},
                                  n_paths, derive_seed(seed, 1), threads);
  rep.optimal_control_value = opt.value;
  rep.optimal_control_stderr = opt.stderr_;
  rep.pass_optimal = std::abs(opt.value - rep.oracle) <= 3.0 * opt.stderr_;

  rep.clip_count = bench.spec.terminal_cost.clip_count();
  rep.pass_clipping = rep.clip_count == 0;
  rep.pass = rep.pass_value && rep.pass_optimal && rep.pass_clipping;
  return rep;
}

}  // namespace meanviab
