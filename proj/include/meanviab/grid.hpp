#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace meanviab {

using Index = std::ptrdiff_t;

/// Uniform time grid on [0, T]. Grid points are index-derived, t_i = T*i/n,
/// so t_n == T exactly and no accumulation drift can occur.
class TimeGrid {
 public:
  TimeGrid() = default;
  TimeGrid(double horizon, Index num_steps)
      : horizon_(horizon), num_steps_(num_steps) {
    if (!(horizon > 0.0)) throw std::invalid_argument("TimeGrid: horizon must be > 0");
    if (num_steps < 1) throw std::invalid_argument("TimeGrid: num_steps must be >= 1");
  }

  double horizon() const { return horizon_; }
  Index num_steps() const { return num_steps_; }
  Index num_points() const { return num_steps_ + 1; }
  double step() const { return horizon_ / static_cast<double>(num_steps_); }

  double time(Index i) const {
    return horizon_ * static_cast<double>(i) / static_cast<double>(num_steps_);
  }

  // Snap to the nearest grid point, round-half-up in index space.
  Index index_of(double t) const {
    if (!in_range(t)) throw std::invalid_argument("TimeGrid: time outside [0, T]");
    const double raw = t / horizon_ * static_cast<double>(num_steps_);
    Index i = static_cast<Index>(std::floor(raw + 0.5));
    if (i < 0) i = 0;
    if (i > num_steps_) i = num_steps_;
    return i;
  }

  // Snapped grid time.
  double snap(double t) const { return time(index_of(t)); }

  bool in_range(double t) const {
    const double slack = 1e-9 * horizon_;
    return t >= -slack && t <= horizon_ + slack;
  }

  bool operator==(const TimeGrid& o) const {
    return horizon_ == o.horizon_ && num_steps_ == o.num_steps_;
  }
  bool operator!=(const TimeGrid& o) const { return !(*this == o); }

 private:
  double horizon_ = 1.0;
  Index num_steps_ = 1;
};

}  // namespace meanviab
