#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "meanviab/grid.hpp"

namespace meanviab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A d-dimensional path sampled on a uniform grid: values is d x (n+1),
/// column i = state at grid time t_i.
struct Path {
  TimeGrid grid;
  Matrix values;

  Path() = default;
  Path(TimeGrid g, Matrix v) : grid(g), values(std::move(v)) {
    if (values.cols() != grid.num_points())
      throw std::invalid_argument("Path: values length must match grid");
  }

  static Path constant(const TimeGrid& g, const Vector& x0) {
    Matrix v(x0.size(), g.num_points());
    v.colwise() = x0;
    return Path(g, std::move(v));
  }
  static Path constant(const TimeGrid& g, double x0) {
    return constant(g, Vector::Constant(1, x0));
  }

  Index dim() const { return values.rows(); }
  bool all_finite() const { return values.allFinite(); }
};

/// Non-anticipating view of a path stopped at a grid index: col(i) clamps
/// to the stop index, so functionals evaluated through the view can only
/// read x_{.^t}. raw_col() bypasses the clamp; it exists so the (A1)
/// validator can exercise deliberately anticipating functionals.
class PathSlice {
 public:
  PathSlice(const Path& p, Index stop_index)
      : path_(&p), stop_(std::clamp<Index>(stop_index, 0, p.grid.num_steps())) {}

  static PathSlice stopped_at_time(const Path& p, double t) {
    return PathSlice(p, p.grid.index_of(t));
  }
  static PathSlice whole(const Path& p) { return PathSlice(p, p.grid.num_steps()); }

  const TimeGrid& grid() const { return path_->grid; }
  Index dim() const { return path_->dim(); }
  Index stop_index() const { return stop_; }
  double stop_time() const { return path_->grid.time(stop_); }

  Eigen::Ref<const Vector> col(Index i) const {
    return path_->values.col(std::clamp<Index>(i, 0, stop_));
  }
  Eigen::Ref<const Vector> at_time(double t) const { return col(grid().index_of(t)); }
  Eigen::Ref<const Vector> back() const { return path_->values.col(stop_); }

  // Unclamped access to the backing storage.
  Eigen::Ref<const Vector> raw_col(Index i) const {
    return path_->values.col(std::clamp<Index>(i, 0, grid().num_steps()));
  }

  // sup over grid points of the Euclidean norm of the stopped path.
  double sup_norm() const {
    double m = 0.0;
    for (Index i = 0; i <= stop_; ++i) m = std::max(m, path_->values.col(i).norm());
    return m;
  }

  const Path& underlying() const { return *path_; }

 private:
  const Path* path_;
  Index stop_;
};

/// sup over grid points of |x_{.^sx} - y_{.^sy}| for two paths on one grid.
inline double stopped_sup_distance(const Path& x, Index sx, const Path& y, Index sy) {
  if (x.grid != y.grid) throw std::runtime_error("stopped_sup_distance: grid mismatch");
  if (x.dim() != y.dim()) throw std::runtime_error("stopped_sup_distance: dimension mismatch");
  const Index n = x.grid.num_steps();
  double m = 0.0;
  for (Index i = 0; i <= n; ++i) {
    const Index ix = std::min(i, sx);
    const Index iy = std::min(i, sy);
    m = std::max(m, (x.values.col(ix) - y.values.col(iy)).norm());
  }
  return m;
}

/// x_{.^t}: equal to x up to the index of t, constant afterwards.
inline Path stop_path(const Path& x, double t) {
  const Index k = x.grid.index_of(t);
  Path out;
  out.grid = x.grid;
  out.values.resize(x.dim(), x.grid.num_points());
  out.values.leftCols(k + 1) = x.values.leftCols(k + 1);
  if (k < x.grid.num_steps())
    out.values.rightCols(x.grid.num_steps() - k).colwise() = x.values.col(k);
  return out;
}

/// Pseudo-metric |t - t2| + sup_i |x_{.^t} - x2_{.^t2}|.
inline double path_distance(double t, const Path& x, double t2, const Path& x2) {
  if (!x.grid.in_range(t) || !x2.grid.in_range(t2))
    throw std::invalid_argument("path_distance: time outside [0, T]");
  const Index sx = x.grid.index_of(t);
  const Index sy = x2.grid.index_of(t2);
  return std::abs(t - t2) + stopped_sup_distance(x, sx, x2, sy);
}

struct SeedRecord {
  std::uint64_t seed = 0;
  std::uint32_t stream = 0;
};

/// A collection of paths sharing one grid and dimension.
struct PathEnsemble {
  TimeGrid grid;
  Index dimension = 0;
  std::vector<Path> paths;
  SeedRecord seed_record;

  PathEnsemble() = default;
  PathEnsemble(TimeGrid g, Index d) : grid(g), dimension(d) {}

  void push_back(Path p) {
    if (p.grid != grid || p.dim() != dimension)
      throw std::runtime_error("PathEnsemble: member grid/dimension mismatch");
    paths.push_back(std::move(p));
  }
  std::size_t size() const { return paths.size(); }

  /// Pointwise ensemble mean path.
  Path mean_path() const {
    if (paths.empty()) throw std::runtime_error("PathEnsemble: empty");
    Matrix acc = Matrix::Zero(dimension, grid.num_points());
    for (const Path& p : paths) acc += p.values;
    acc /= static_cast<double>(paths.size());
    return Path(grid, std::move(acc));
  }
};

}  // namespace meanviab
