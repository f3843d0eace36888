#include "meanviab/validate.hpp"

#include <cmath>
#include <sstream>

#include "meanviab/rng.hpp"

namespace meanviab {

Path sample_wiener_path(const TimeGrid& grid, Index d, std::uint64_t seed,
                        std::uint64_t index, double vol, double start_amplitude) {
  NormalStream stream(seed, 0x57A7u, index);
  Matrix v(d, grid.num_points());
  const double sqdt = std::sqrt(grid.step());
  for (Index r = 0; r < d; ++r)
    v(r, 0) = start_amplitude * (2.0 * stream.uniform(0, static_cast<std::uint32_t>(r)) - 1.0);
  for (Index k = 0; k < grid.num_steps(); ++k) {
    for (Index r = 0; r < d; ++r) {
      const auto z = stream.normal_pair(static_cast<std::uint32_t>(k + 1),
                                        static_cast<std::uint32_t>(r));
      v(r, k + 1) = v(r, k) + vol * sqdt * z[0];
    }
  }
  return Path(grid, std::move(v));
}

ValidationReport check_A2(const ProblemSpec& spec, std::size_t samples, std::uint64_t rng_seed) {
  ValidationReport rep;
  rep.check = "A2";
  rep.samples = samples;
  rep.threshold = spec.coefficients.declared_L_b;
  const double slack = 1e-12;
  const TimeGrid& grid = spec.grid;
  const Index d = spec.dimension;
  Vector b1(d), b2(d);
  Matrix s1(d, d), s2(d, d);

  for (std::size_t i = 0; i < samples; ++i) {
    const Path x = sample_wiener_path(grid, d, rng_seed, 2 * i);
    const Path x2 = sample_wiener_path(grid, d, rng_seed, 2 * i + 1);
    NormalStream pick(rng_seed, 0xCAFEu, i);
    const Index k = static_cast<Index>(pick.uniform(0, 0) * static_cast<double>(grid.num_steps() + 1));
    const Index kk = std::clamp<Index>(k, 0, grid.num_steps());
    const double t = grid.time(kk);
    const Index ja = static_cast<Index>(pick.uniform(0, 1) * static_cast<double>(spec.control_space.grid_points));
    const double a = spec.control_space.value(std::clamp<Index>(ja, 0, spec.control_space.grid_points - 1));

    spec.coefficients.eval_b(t, x, kk, a, b1);
    spec.coefficients.eval_sigma(t, x, kk, a, s1);
    spec.coefficients.eval_b(t, x2, kk, a, b2);
    spec.coefficients.eval_sigma(t, x2, kk, a, s2);

    const double mag = b1.norm() + s1.norm() +
                       std::abs(spec.terminal_cost(PathSlice::whole(x)));
    if (mag > rep.max_magnitude) {
      rep.max_magnitude = mag;
      if (mag > rep.threshold + slack) {
        std::ostringstream os;
        os << "magnitude " << mag << " > L_b at t=" << t << ", a=" << a;
        rep.witness = os.str();
      }
    }

    const double den = stopped_sup_distance(x, kk, x2, kk);
    if (den > 1e-12) {
      const double num = (b1 - b2).norm() + (s1 - s2).norm();
      const double ratio = num / den;
      if (ratio > rep.max_lipschitz_ratio) {
        rep.max_lipschitz_ratio = ratio;
        if (ratio > rep.threshold + slack) {
          std::ostringstream os;
          os << "Lipschitz ratio " << ratio << " > L_b at t=" << t << ", a=" << a;
          rep.witness = os.str();
        }
      }
    }
  }
  rep.pass = rep.max_lipschitz_ratio <= rep.threshold + slack &&
             rep.max_magnitude <= rep.threshold + slack;
  return rep;
}

ValidationReport check_H(const CandidateFunction& cand, const TimeGrid& grid, Index dimension,
                         std::size_t samples, std::uint64_t rng_seed) {
  ValidationReport rep;
  rep.check = "H";
  rep.samples = samples;
  rep.threshold = cand.declared_L;
  const double slack = 1e-12;

  for (std::size_t i = 0; i < samples; ++i) {
    const Path x = sample_wiener_path(grid, dimension, rng_seed, 2 * i);
    const Path x2 = sample_wiener_path(grid, dimension, rng_seed, 2 * i + 1);
    NormalStream pick(rng_seed, 0xBEEFu, i);
    Index ks = static_cast<Index>(pick.uniform(0, 0) * static_cast<double>(grid.num_steps() + 1));
    Index kt = static_cast<Index>(pick.uniform(0, 1) * static_cast<double>(grid.num_steps() + 1));
    ks = std::clamp<Index>(ks, 0, grid.num_steps());
    kt = std::clamp<Index>(kt, 0, grid.num_steps());
    if (ks > kt) std::swap(ks, kt);

    // Space increment at time kt.
    const double den = stopped_sup_distance(x, kt, x2, kt);
    if (den > 1e-12) {
      const double num = std::abs(cand.eval(grid.time(kt), x, kt) -
                                  cand.eval(grid.time(kt), x2, kt));
      const double ratio = num / den;
      if (ratio > rep.max_lipschitz_ratio) {
        rep.max_lipschitz_ratio = ratio;
        if (ratio > rep.threshold + slack) {
          std::ostringstream os;
          os << "space ratio " << ratio << " > L at t=" << grid.time(kt);
          rep.witness = os.str();
        }
      }
    }

    // Time increment along the path stopped at s: v(t, x_{.^s}) vs v(s, x).
    if (kt > ks) {
      const double s = grid.time(ks);
      const double t = grid.time(kt);
      const double num = std::abs(cand.eval(t, x, ks) - cand.eval(s, x, ks));
      const double scale = (1.0 + PathSlice(x, ks).sup_norm()) * std::sqrt(t - s);
      const double ratio = num / scale;
      if (ratio > rep.max_time_ratio) {
        rep.max_time_ratio = ratio;
        if (ratio > rep.threshold + slack) {
          std::ostringstream os;
          os << "time ratio " << ratio << " > L for s=" << s << ", t=" << t;
          rep.witness = os.str();
        }
      }
    }
  }
  rep.pass = rep.max_lipschitz_ratio <= rep.threshold + slack &&
             rep.max_time_ratio <= rep.threshold + slack;
  return rep;
}

ValidationReport check_A1_nonanticipativity(const ProblemSpec& spec, std::size_t samples,
                                            std::uint64_t rng_seed) {
  ValidationReport rep;
  rep.check = "A1";
  rep.samples = samples;
  const TimeGrid& grid = spec.grid;
  const Index d = spec.dimension;
  Vector b1(d), b2(d);
  Matrix s1(d, d), s2(d, d);

  for (std::size_t i = 0; i < samples; ++i) {
    const Path x = sample_wiener_path(grid, d, rng_seed, 3 * i);
    const Path tail = sample_wiener_path(grid, d, rng_seed, 3 * i + 1);
    NormalStream pick(rng_seed, 0xF00Du, i);
    Index k = static_cast<Index>(pick.uniform(0, 0) * static_cast<double>(grid.num_steps()));
    k = std::clamp<Index>(k, 0, grid.num_steps() - 1);
    const double t = grid.time(k);
    const Index ja = static_cast<Index>(pick.uniform(0, 1) * static_cast<double>(spec.control_space.grid_points));
    const double a = spec.control_space.value(std::clamp<Index>(ja, 0, spec.control_space.grid_points - 1));

    // x2 agrees with x up to k, differs strictly after.
    Path x2 = x;
    for (Index c = k + 1; c <= grid.num_steps(); ++c)
      x2.values.col(c) = tail.values.col(c) + Vector::Constant(d, 1.0);

    // Raw slices: stop index at t but anticipating reads would see the tails.
    spec.coefficients.b(t, PathSlice(x, k), a, b1);
    spec.coefficients.b(t, PathSlice(x2, k), a, b2);
    spec.coefficients.sigma(t, PathSlice(x, k), a, s1);
    spec.coefficients.sigma(t, PathSlice(x2, k), a, s2);

    if (b1 != b2 || s1 != s2) {
      rep.pass = false;
      std::ostringstream os;
      os << "coefficient output depends on the path after t=" << t;
      rep.witness = os.str();
      return rep;
    }

    // Referential transparency of h.
    const double h1 = spec.terminal_cost(PathSlice::whole(x));
    const double h2 = spec.terminal_cost(PathSlice::whole(x));
    if (h1 != h2) {
      rep.pass = false;
      rep.witness = "terminal cost is not referentially transparent";
      return rep;
    }
  }
  rep.pass = true;
  return rep;
}

}  // namespace meanviab
