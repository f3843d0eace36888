#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "meanviab/path.hpp"

namespace meanviab {

/// Closed control interval inside [0,1], discretized to a finite grid.
/// Every infimum over controls in this library is a minimum over value(j).
struct ControlSpace {
  double lower = 0.0;
  double upper = 1.0;
  Index grid_points = 11;

  ControlSpace() = default;
  ControlSpace(double lo, double hi, Index n) : lower(lo), upper(hi), grid_points(n) {
    if (!(0.0 <= lower && lower <= upper && upper <= 1.0))
      throw std::invalid_argument("ControlSpace: need 0 <= lower <= upper <= 1");
    if (grid_points < 1) throw std::invalid_argument("ControlSpace: grid_points >= 1");
  }
  static ControlSpace singleton(double a) { return ControlSpace(a, a, 1); }

  double value(Index j) const {
    if (grid_points == 1) return lower;
    return lower + (upper - lower) * static_cast<double>(j) /
                       static_cast<double>(grid_points - 1);
  }
  double clamp(double a) const { return std::clamp(a, lower, upper); }
  bool contains(double a) const { return a >= lower - 1e-12 && a <= upper + 1e-12; }
};

// Functionals receive the path through a PathSlice stopped at the current
// time; well-behaved coefficients read only clamped columns.
using DriftFn = std::function<void(double t, const PathSlice& x, double a,
                                   Eigen::Ref<Vector> out)>;
using DiffusionFn = std::function<void(double t, const PathSlice& x, double a,
                                       Eigen::Ref<Matrix> out)>;
using TerminalFn = std::function<double(const PathSlice& x)>;
using CandidateFn = std::function<double(double t, const PathSlice& x)>;

/// Drift b and diffusion sigma with their declared (A2) constant.
/// eval_* stop the path at t and apply the 1_{[0,T]}(t) cutoff.
struct Coefficients {
  DriftFn b;
  DiffusionFn sigma;
  double declared_L_b = 1.0;
  std::string family;  // named family key when built declaratively

  void eval_b(double t, const Path& x, Index stop, double a, Eigen::Ref<Vector> out) const {
    if (t > x.grid.horizon()) { out.setZero(); return; }
    b(t, PathSlice(x, stop), a, out);
  }
  void eval_sigma(double t, const Path& x, Index stop, double a, Eigen::Ref<Matrix> out) const {
    if (t > x.grid.horizon()) { out.setZero(); return; }
    sigma(t, PathSlice(x, stop), a, out);
  }
};

/// Terminal cost h with (A2) clipping at |h| <= bound. Clips are counted so
/// oracle runs can certify that clipping never fired.
class TerminalCost {
 public:
  TerminalCost() : clips_(std::make_shared<std::atomic<long>>(0)) {}
  TerminalCost(TerminalFn h, double bound)
      : h_(std::move(h)), bound_(bound), clips_(std::make_shared<std::atomic<long>>(0)) {}

  double operator()(const PathSlice& x) const {
    const double raw = h_(x);
    if (raw > bound_) { ++(*clips_); return bound_; }
    if (raw < -bound_) { ++(*clips_); return -bound_; }
    return raw;
  }
  double eval_at_T(const Path& x) const { return (*this)(PathSlice::whole(x)); }

  double bound() const { return bound_; }
  long clip_count() const { return clips_->load(); }
  void reset_clip_count() const { clips_->store(0); }
  const TerminalFn& raw() const { return h_; }

 private:
  TerminalFn h_ = [](const PathSlice&) { return 0.0; };
  double bound_ = 1.0;
  std::shared_ptr<std::atomic<long>> clips_;
};

struct AnchorTriple {
  double a0 = 0.0;
  Vector p0;
  Matrix q0;

  static AnchorTriple zero(Index d, double a0 = 0.0) {
    AnchorTriple t;
    t.a0 = a0;
    t.p0 = Vector::Zero(d);
    t.q0 = Matrix::Zero(d, d);
    return t;
  }
};

/// Candidate v for the viability / HJB machinery, with the hypothesis (H)
/// constant it claims to satisfy.
struct CandidateFunction {
  CandidateFn v;
  double declared_L = 1.0;
  double lower_bound = -1e30;
  double upper_bound = 1e30;

  double eval(double t, const Path& x, Index stop) const { return v(t, PathSlice(x, stop)); }
  double eval_at(double t, const Path& x) const {
    return v(t, PathSlice::stopped_at_time(x, t));
  }
};

/// vhat(t,x,y) = v(t,x) - y.
inline double vhat(const CandidateFunction& cand, double t, const Path& x, Index stop,
                   double y) {
  return cand.eval(t, x, stop) - y;
}

struct TargetSet {
  enum class Kind { half_line_nonpositive, closed_interval };
  Kind kind = Kind::half_line_nonpositive;
  double lower = 0.0;  // interval bounds, used when kind == closed_interval
  double upper = 0.0;

  static TargetSet nonpositive() { return TargetSet{}; }
  static TargetSet interval(double lo, double hi) {
    if (!(lo <= hi)) throw std::invalid_argument("TargetSet: empty interval");
    return TargetSet{Kind::closed_interval, lo, hi};
  }

  double distance(double y) const {
    switch (kind) {
      case Kind::half_line_nonpositive: return std::max(y, 0.0);
      case Kind::closed_interval: return std::max({lower - y, y - upper, 0.0});
    }
    return 0.0;
  }
  bool contains(double y, double tol = 0.0) const { return distance(y) <= tol; }
};

struct ProblemSpec {
  TimeGrid grid;
  Index dimension = 1;
  ControlSpace control_space;
  Coefficients coefficients;
  TerminalCost terminal_cost;
  AnchorTriple anchor;
  TargetSet target_set;
  std::optional<CandidateFunction> candidate;

  double horizon() const { return grid.horizon(); }

  void validate_shapes() const {
    if (dimension < 1) throw std::invalid_argument("ProblemSpec: dimension >= 1");
    if (anchor.p0.size() != dimension || anchor.q0.rows() != dimension ||
        anchor.q0.cols() != dimension)
      throw std::invalid_argument("ProblemSpec: anchor dimensions inconsistent");
    if (!control_space.contains(anchor.a0))
      throw std::invalid_argument("ProblemSpec: anchor control not in A");
  }
};

// Declarative construction: named coefficient families with numeric
// parameters, selected by string key from JSON configs.
//   controlled_drift: b = drift_scale*a + drift_offset, sigma = vol (constant)
//   controlled_vol:   b = 0, sigma = vol_min + a*(vol_max - vol_min)
//   affine:           b = drift_offset + drift_slope*x_t, sigma = vol
//   sine:             b = drift_scale*sin(freq*x_t), sigma = vol
struct CoefficientParams {
  double drift_scale = 1.0;
  double drift_offset = 0.0;
  double drift_slope = 0.0;
  double vol = 1.0;
  double vol_min = 0.2;
  double vol_max = 1.0;
  double freq = 1.0;
};

Coefficients make_coefficients(const std::string& family, const CoefficientParams& params,
                               Index dimension, double declared_L_b);

/// Parse a ProblemSpec from a JSON document (see README for the schema).
ProblemSpec problem_from_json(const std::string& json_text);
std::string problem_to_json(const ProblemSpec& spec, const std::string& id);

}  // namespace meanviab
