#pragma once

#include <functional>
#include <vector>

#include "meanviab/problem.hpp"

namespace meanviab {

// Control evaluated on the driving-noise path (the canonical process of the
// underlying probability space), matching the predictable class A^t: the
// anchor value applies on cells before the activation time.
using FeedbackFn = std::function<double(double t, const PathSlice& noise)>;

class ControlProcess {
 public:
  enum class Kind { constant, piecewise_constant_deterministic, feedback };

  static ControlProcess constant(double value, double activation_time = 0.0,
                                 double anchor = 0.0) {
    ControlProcess c;
    c.kind_ = Kind::constant;
    c.constant_ = value;
    c.activation_time_ = activation_time;
    c.anchor_ = anchor;
    return c;
  }
  // values[k] applies on grid cell [t_k, t_{k+1}).
  static ControlProcess piecewise(std::vector<double> values, double activation_time = 0.0,
                                  double anchor = 0.0) {
    ControlProcess c;
    c.kind_ = Kind::piecewise_constant_deterministic;
    c.values_ = std::move(values);
    c.activation_time_ = activation_time;
    c.anchor_ = anchor;
    return c;
  }
  static ControlProcess feedback(FeedbackFn rule, double activation_time = 0.0,
                                 double anchor = 0.0) {
    ControlProcess c;
    c.kind_ = Kind::feedback;
    c.rule_ = std::move(rule);
    c.activation_time_ = activation_time;
    c.anchor_ = anchor;
    return c;
  }

  Kind kind() const { return kind_; }
  double activation_time() const { return activation_time_; }
  double anchor() const { return anchor_; }
  bool is_open_loop() const { return kind_ != Kind::feedback; }

  /// Value on the cell starting at grid index k; noise is the driving path
  /// stopped at k (only feedback rules look at it).
  double at_cell(const TimeGrid& grid, Index k, const PathSlice& noise) const {
    const double t = grid.time(k);
    if (t < activation_time_ - 1e-12 * grid.horizon()) return anchor_;
    switch (kind_) {
      case Kind::constant: return constant_;
      case Kind::piecewise_constant_deterministic: {
        const Index j = std::clamp<Index>(k, 0, static_cast<Index>(values_.size()) - 1);
        return values_[static_cast<std::size_t>(j)];
      }
      case Kind::feedback: return rule_(t, noise);
    }
    return anchor_;
  }

  /// Open-loop value on cell k (throws for feedback controls).
  double at_cell(const TimeGrid& grid, Index k) const {
    if (kind_ == Kind::feedback)
      throw std::logic_error("ControlProcess: feedback control needs a noise path");
    const double t = grid.time(k);
    if (t < activation_time_ - 1e-12 * grid.horizon()) return anchor_;
    if (kind_ == Kind::constant) return constant_;
    const Index j = std::clamp<Index>(k, 0, static_cast<Index>(values_.size()) - 1);
    return values_[static_cast<std::size_t>(j)];
  }

 private:
  Kind kind_ = Kind::constant;
  double constant_ = 0.0;
  std::vector<double> values_;
  FeedbackFn rule_;
  double activation_time_ = 0.0;
  double anchor_ = 0.0;
};

/// Deterministic piecewise-constant perturbation (p, q) supported on
/// [activation_time, T]; the anchor pair applies before activation.
class PerturbationProcess {
 public:
  PerturbationProcess() = default;
  PerturbationProcess(Index d, double activation_time)
      : dim_(d), activation_(activation_time) {}

  static PerturbationProcess zero(Index d, double activation_time = 0.0) {
    return PerturbationProcess(d, activation_time);
  }
  /// Constant (p, q) on every cell from activation onwards.
  static PerturbationProcess constant(Vector p, Matrix q, double activation_time) {
    PerturbationProcess out(p.size(), activation_time);
    out.const_p_ = std::move(p);
    out.const_q_ = std::move(q);
    out.has_const_ = true;
    return out;
  }

  Index dim() const { return dim_; }
  double activation_time() const { return activation_; }
  bool is_zero() const { return !has_const_ && cells_p_.empty(); }

  void set_cell(Index k, Vector p, Matrix q) {
    if (cells_p_.size() <= static_cast<std::size_t>(k)) {
      cells_p_.resize(static_cast<std::size_t>(k) + 1);
      cells_q_.resize(static_cast<std::size_t>(k) + 1);
    }
    cells_p_[static_cast<std::size_t>(k)] = std::move(p);
    cells_q_[static_cast<std::size_t>(k)] = std::move(q);
  }

  Vector p_at_cell(const TimeGrid& grid, Index k) const {
    if (grid.time(k) < activation_ - 1e-12 * grid.horizon()) return Vector::Zero(dim_);
    if (has_const_) return const_p_;
    if (static_cast<std::size_t>(k) < cells_p_.size() && cells_p_[static_cast<std::size_t>(k)].size() > 0)
      return cells_p_[static_cast<std::size_t>(k)];
    return Vector::Zero(dim_);
  }
  Matrix q_at_cell(const TimeGrid& grid, Index k) const {
    if (grid.time(k) < activation_ - 1e-12 * grid.horizon()) return Matrix::Zero(dim_, dim_);
    if (has_const_) return const_q_;
    if (static_cast<std::size_t>(k) < cells_q_.size() && cells_q_[static_cast<std::size_t>(k)].size() > 0)
      return cells_q_[static_cast<std::size_t>(k)];
    return Matrix::Zero(dim_, dim_);
  }

  /// int_{[t_k0, t_k1)} (|p|^2 + |q|_F^2) dr, the deterministic L^2 energy.
  double energy(const TimeGrid& grid, Index k0, Index k1) const {
    double acc = 0.0;
    for (Index k = k0; k < k1; ++k)
      acc += p_at_cell(grid, k).squaredNorm() + q_at_cell(grid, k).squaredNorm();
    return acc * grid.step();
  }

  PerturbationProcess scaled(double factor) const {
    PerturbationProcess out = *this;
    if (out.has_const_) {
      out.const_p_ *= factor;
      out.const_q_ *= factor;
    }
    for (auto& p : out.cells_p_)
      if (p.size() > 0) p *= factor;
    for (auto& q : out.cells_q_)
      if (q.size() > 0) q *= factor;
    return out;
  }

 private:
  Index dim_ = 1;
  double activation_ = 0.0;
  bool has_const_ = false;
  Vector const_p_;
  Matrix const_q_;
  std::vector<Vector> cells_p_;
  std::vector<Matrix> cells_q_;
};

}  // namespace meanviab
