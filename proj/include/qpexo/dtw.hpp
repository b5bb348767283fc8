#pragma once

// Onset detection: banded dynamic time warping of the live observation
// window against each motion model, using squared Mahalanobis cell costs.
//
// Matrix layout: one row per observation (oldest first), one column per model
// grid point. A warping path may start on any cell of the first observation
// row or of the first grid column, and must end on the newest observation row.
// The adjustment window is anchored at the end cell: a path ending at grid
// column e may only visit cells whose offset from the unit-slope diagonal
// through (newest, e) is at most `band_halfwidth` grid cells.

#include "qpexo/core.hpp"
#include "qpexo/motion_model.hpp"

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

namespace qpexo {

inline constexpr std::size_t kWindowSize = 30;

struct ObservationWindow {
  std::vector<Vec2> obs;  // oldest first
  std::vector<double> t;  // seconds, same length as obs

  std::size_t size() const { return obs.size(); }
};

struct DtwConfig {
  int band_halfwidth = 15;
  double s_req = 0.10;
  double t_req = 0.15;
  double d_max = 120.0;
};

enum class RejectReason { none, progress_span, time_span, distance_cap, no_path };

inline const char* to_string(RejectReason r) {
  switch (r) {
    case RejectReason::none: return "none";
    case RejectReason::progress_span: return "progress_span";
    case RejectReason::time_span: return "time_span";
    case RejectReason::distance_cap: return "distance_cap";
    case RejectReason::no_path: return "no_path";
  }
  return "?";
}

struct PathCell {
  std::size_t obs = 0;
  std::size_t grid = 0;
  bool operator==(const PathCell&) const = default;
};

struct DtwMatch {
  std::string model_name;
  double D = std::numeric_limits<double>::infinity();
  std::size_t L = 0;
  double s_start = 0.0;
  double s_curr = 0.0;
  std::size_t grid_curr = 0;
  double t_span = 0.0;
  bool valid = false;
  RejectReason reject_reason = RejectReason::no_path;
  std::vector<PathCell> path;

  bool has_path() const { return L > 0; }
};

/// (q - mu)^T Sigma^-1 (q - mu) at grid index n, using the cached inverse.
inline double mahalanobis_sq(const Vec2& q, const MotionModel& model, std::size_t n) {
  const Vec2 d = q - model.mean[n];
  return d.dot(model.cov_inv[n] * d);
}

namespace detail {

class DtwGrid {
 public:
  DtwGrid(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), cost_(rows * cols), cum_(rows * cols) {}

  double& cost(std::size_t i, std::size_t n) { return cost_[i * cols_ + n]; }
  double& cum(std::size_t i, std::size_t n) { return cum_[i * cols_ + n]; }

  bool in_band(std::size_t i, std::size_t n, std::size_t end, int band) const {
    const auto offset = (static_cast<long>(n) - static_cast<long>(end)) - (static_cast<long>(i) - static_cast<long>(rows_ - 1));
    return offset >= -band && offset <= band;
  }

  /// Fills cumulative costs for paths ending at column `end`; returns cum at the end cell.
  double fill(std::size_t end, int band) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::fill(cum_.begin(), cum_.end(), inf);
    for (std::size_t i = 0; i < rows_; ++i) {
      for (std::size_t n = 0; n < cols_; ++n) {
        if (!in_band(i, n, end, band)) continue;
        double best = inf;
        if (i == 0 || n == 0) {
          best = 0.0;  // relaxed start: edges of the matrix
        } else {
          best = std::min({cum(i - 1, n - 1), cum(i, n - 1), cum(i - 1, n)});
        }
        if (best < inf) cum(i, n) = cost(i, n) + best;
      }
    }
    return cum(rows_ - 1, end);
  }

  /// Walks back from the end cell. Ties prefer the diagonal, then the grid
  /// axis, then the time axis.
  std::vector<PathCell> retrace(std::size_t end) {
    std::vector<PathCell> path;
    std::size_t i = rows_ - 1, n = end;
    while (true) {
      path.push_back({i, n});
      if (i == 0 || n == 0) break;
      const double d = cum(i - 1, n - 1), g = cum(i, n - 1), t = cum(i - 1, n);
      const double best = std::min({d, g, t});
      if (d == best) {
        --i;
        --n;
      } else if (g == best) {
        --n;
      } else {
        --i;
      }
    }
    std::reverse(path.begin(), path.end());
    return path;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

 private:
  std::size_t rows_, cols_;
  std::vector<double> cost_, cum_;
};

}  // namespace detail

inline DtwMatch dtw_match(const ObservationWindow& window, const MotionModel& model, const DtwConfig& cfg = {}) {
  DtwMatch m;
  m.model_name = model.name;
  const std::size_t rows = window.size(), cols = model.grid_size();
  if (rows == 0 || cols == 0 || cfg.band_halfwidth < 0) return m;
  if (window.t.size() != rows) throw ValidationError("observation window timestamps do not match samples");

  detail::DtwGrid grid(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t n = 0; n < cols; ++n) grid.cost(i, n) = mahalanobis_sq(window.obs[i], model, n);

  double best = std::numeric_limits<double>::infinity();
  std::size_t best_end = 0;
  for (std::size_t e = 0; e < cols; ++e) {
    const double d = grid.fill(e, cfg.band_halfwidth);
    if (d < best) {  // strict: smallest column wins ties
      best = d;
      best_end = e;
    }
  }
  if (!(best < std::numeric_limits<double>::infinity())) return m;

  grid.fill(best_end, cfg.band_halfwidth);
  m.path = grid.retrace(best_end);
  m.D = best;
  m.L = m.path.size();
  m.s_start = grid_progress(m.path.front().grid, cols);
  m.s_curr = grid_progress(m.path.back().grid, cols);
  m.grid_curr = m.path.back().grid;
  m.t_span = window.t[m.path.back().obs] - window.t[m.path.front().obs];

  if (!(m.D < cfg.d_max)) {
    m.reject_reason = RejectReason::distance_cap;
  } else if (!(m.s_curr - m.s_start > cfg.s_req)) {
    m.reject_reason = RejectReason::progress_span;
  } else if (!(m.t_span > cfg.t_req)) {
    m.reject_reason = RejectReason::time_span;
  } else {
    m.reject_reason = RejectReason::none;
    m.valid = true;
  }
  return m;
}

/// One match per database model, in database order.
inline std::vector<DtwMatch> match_all(const ObservationWindow& window, const ModelDatabase& db, const DtwConfig& cfg = {}) {
  std::vector<DtwMatch> out;
  out.reserve(db.models.size());
  for (const auto& model : db.models) out.push_back(dtw_match(window, model, cfg));
  return out;
}

}  // namespace qpexo
