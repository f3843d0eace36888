#pragma once

#include <cstdint>
#include <string>

#include "meanviab/problem.hpp"

namespace meanviab {

/// Outcome of a sampling-based assumption check. Failures carry a witness
/// description; reports never throw.
struct ValidationReport {
  std::string check;
  bool pass = true;
  std::size_t samples = 0;
  double max_lipschitz_ratio = 0.0;  // worst |increment| / pseudo-metric ratio
  double max_magnitude = 0.0;        // worst |b| + |sigma| + |h|
  double max_time_ratio = 0.0;       // (H) second line, worst normalized increment
  double threshold = 0.0;            // declared constant the extremes are held against
  std::string witness;
};

/// Brownian-like sample path for validator sweeps (start uniform in
/// [-start_amplitude, start_amplitude], increments N(0, vol^2 dt)).
Path sample_wiener_path(const TimeGrid& grid, Index d, std::uint64_t seed,
                        std::uint64_t index, double vol = 1.0,
                        double start_amplitude = 1.0);

/// (A2): Lipschitz ratio in the stopped sup norm and joint magnitude bound,
/// both against declared_L_b, over randomly sampled (t, x, x~, a).
ValidationReport check_A2(const ProblemSpec& spec, std::size_t samples, std::uint64_t rng_seed);

/// Hypothesis (H) for a candidate: space-Lipschitz ratio against L and the
/// time increment |v(t, x_{.^s}) - v(s, x)| against L (1 + ||x_{.^s}||) (t-s)^{1/2}.
ValidationReport check_H(const CandidateFunction& cand, const TimeGrid& grid, Index dimension,
                         std::size_t samples, std::uint64_t rng_seed);

/// (A1): evaluates b, sigma on path pairs that agree up to t but differ after;
/// outputs must be bit-identical. h is checked for referential transparency.
ValidationReport check_A1_nonanticipativity(const ProblemSpec& spec, std::size_t samples,
                                            std::uint64_t rng_seed);

}  // namespace meanviab
