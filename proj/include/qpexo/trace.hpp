#pragma once

// Motion trace ingestion, segmentation and time normalization.

#include "qpexo/core.hpp"
#include "qpexo/io.hpp"

#include <algorithm>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qpexo {

struct TraceSample {
  double t = 0.0;             // seconds
  Vec2 q = Vec2::Zero();      // hip flexion (left, right), radians
  std::optional<Vec2> tau;    // hip torque (left, right), N·m
};

struct MotionTrace {
  std::vector<TraceSample> samples;
  double rate_hz = 100.0;
  std::string label = "unlabeled";

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  bool has_torque() const { return !samples.empty() && samples.front().tau.has_value(); }
  double duration() const { return samples.empty() ? 0.0 : samples.back().t - samples.front().t; }

  /// Throws ValidationError when an invariant is broken.
  void validate() const {
    if (!(rate_hz > 0.0)) throw ValidationError("trace rate must be positive");
    const bool torque = has_torque();
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      if (!std::isfinite(s.t)) throw ValidationError("non-finite time @sample " + std::to_string(i + 1));
      if (i > 0 && !(s.t > samples[i - 1].t))
        throw ValidationError("non-monotonic time @sample " + std::to_string(i + 1));
      if (!is_finite(s.q) || std::abs(s.q.x()) > kPi || std::abs(s.q.y()) > kPi)
        throw ValidationError("angle out of range @sample " + std::to_string(i + 1));
      if (s.tau.has_value() != torque)
        throw ValidationError("torque present on some samples only @sample " + std::to_string(i + 1));
      if (torque && !is_finite(*s.tau)) throw ValidationError("non-finite torque @sample " + std::to_string(i + 1));
    }
  }
};

/// 101 bivariate angle samples on the uniform progress grid.
struct NormalizedDemo {
  std::vector<Vec2> values;
};

/// 14-bit absolute encoder counts to radians.
inline double counts_to_rad(double counts, int bits = 14) {
  return counts * (2.0 * kPi / static_cast<double>(1L << bits));
}

enum class AngleUnit { rad, deg, counts };

namespace detail {

inline AngleUnit angle_column_unit(std::string_view name, std::string_view side) {
  const std::string prefix = "q_" + std::string(side) + "_";
  if (name.substr(0, prefix.size()) != prefix) throw ParseError("unexpected column '" + std::string(name) + "'");
  auto unit = name.substr(prefix.size());
  if (unit == "rad") return AngleUnit::rad;
  if (unit == "deg") return AngleUnit::deg;
  if (unit == "counts") return AngleUnit::counts;
  throw ParseError("unknown angle unit in column '" + std::string(name) + "'");
}

inline double to_rad(double v, AngleUnit unit) {
  switch (unit) {
    case AngleUnit::deg: return v * kPi / 180.0;
    case AngleUnit::counts: return counts_to_rad(v);
    case AngleUnit::rad: break;
  }
  return v;
}

}  // namespace detail

/// Parses trace CSV text. Line numbers in error messages count data rows
/// after the header, starting at 1.
inline MotionTrace parse_trace_csv(std::string_view text, double rate_hz, std::string label = "unlabeled") {
  if (!(rate_hz > 0.0)) throw ValidationError("rate_hz must be positive");
  auto rows = io::lines(text);
  if (rows.empty()) throw ParseError("empty trace file");
  auto header = io::split(rows.front(), ',');
  for (auto& h : header) h = io::trim(h);
  if ((header.size() != 3 && header.size() != 5) || header[0] != "t_s")
    throw ParseError("bad header, expected t_s,q_left_*,q_right_*[,tau_left_nm,tau_right_nm]");
  const AngleUnit unit_l = detail::angle_column_unit(header[1], "left");
  const AngleUnit unit_r = detail::angle_column_unit(header[2], "right");
  if (unit_l != unit_r) throw ParseError("left and right angle columns use different units");
  const bool torque = header.size() == 5;
  if (torque && (header[3] != "tau_left_nm" || header[4] != "tau_right_nm"))
    throw ParseError("bad torque columns, expected tau_left_nm,tau_right_nm");

  MotionTrace trace;
  trace.rate_hz = rate_hz;
  trace.label = std::move(label);
  trace.samples.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const std::string where = "@line " + std::to_string(r);
    if (io::trim(rows[r]).empty()) continue;
    auto fields = io::split(rows[r], ',');
    if (fields.size() != header.size()) throw ParseError("wrong field count " + where);
    double v[5] = {};
    for (std::size_t c = 0; c < fields.size(); ++c)
      if (!io::parse_double(fields[c], v[c])) throw ParseError("malformed number " + where);
    TraceSample s;
    s.t = v[0];
    s.q = Vec2(detail::to_rad(v[1], unit_l), detail::to_rad(v[2], unit_r));
    if (torque) s.tau = Vec2(v[3], v[4]);
    if (!std::isfinite(s.t)) throw ValidationError("non-finite time " + where);
    if (!trace.samples.empty() && !(s.t > trace.samples.back().t))
      throw ValidationError("non-monotonic time " + where);
    if (!is_finite(s.q) || std::abs(s.q.x()) > kPi || std::abs(s.q.y()) > kPi)
      throw ValidationError("angle out of range " + where);
    if (torque && !is_finite(*s.tau)) throw ValidationError("non-finite torque " + where);
    trace.samples.push_back(std::move(s));
  }
  return trace;
}

inline MotionTrace ingest_csv(const std::filesystem::path& path, double rate_hz, std::string label = "unlabeled") {
  return parse_trace_csv(io::read_file(path), rate_hz, std::move(label));
}

/// Serializes with round-trip precision in radians.
inline std::string format_trace_csv(const MotionTrace& trace) {
  std::string out = trace.has_torque() ? "t_s,q_left_rad,q_right_rad,tau_left_nm,tau_right_nm\n"
                                       : "t_s,q_left_rad,q_right_rad\n";
  for (const auto& s : trace.samples) {
    out += io::format_double(s.t) + ',' + io::format_double(s.q.x()) + ',' + io::format_double(s.q.y());
    if (s.tau) out += ',' + io::format_double(s.tau->x()) + ',' + io::format_double(s.tau->y());
    out += '\n';
  }
  return out;
}

inline void write_trace_csv(const std::filesystem::path& path, const MotionTrace& trace) {
  io::write_file_atomic(path, format_trace_csv(trace));
}

// ---------------------------------------------------------------------------
// Segmentation

struct SegmenterConfig {
  double smooth_s = 0.1;       // centered moving-average width
  double onset_speed = 0.3;    // rad/s
  double offset_speed = 0.1;   // rad/s
  double offset_hold_s = 0.2;  // speed must stay below offset this long
};

/// Inclusive sample index range.
struct IndexRange {
  std::size_t first = 0;
  std::size_t last = 0;
  bool operator==(const IndexRange&) const = default;
};

/// Smoothed bilateral speed |dq/dt| per sample.
inline std::vector<double> bilateral_speed(const MotionTrace& trace, double smooth_s) {
  const std::size_t n = trace.size();
  std::vector<double> speed(n, 0.0);
  if (n < 2) return speed;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = i == 0 ? 0 : i - 1;
    const std::size_t b = i + 1 == n ? n - 1 : i + 1;
    const auto& sa = trace.samples[a];
    const auto& sb = trace.samples[b];
    speed[i] = ((sb.q - sa.q) / (sb.t - sa.t)).norm();
  }
  const auto half = static_cast<std::size_t>(std::lround(smooth_s * trace.rate_hz / 2.0));
  if (half == 0) return speed;
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + speed[i];
  std::vector<double> smoothed(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n - 1, i + half);
    smoothed[i] = (prefix[hi + 1] - prefix[lo]) / static_cast<double>(hi - lo + 1);
  }
  return smoothed;
}

/// Hysteresis segmentation on smoothed bilateral speed.
inline std::vector<IndexRange> find_segments(const MotionTrace& trace, const SegmenterConfig& cfg = {}) {
  std::vector<IndexRange> out;
  if (trace.size() < 2) return out;
  const auto speed = bilateral_speed(trace, cfg.smooth_s);
  bool moving = false, quiet = false;
  std::size_t start = 0, quiet_since = 0;
  for (std::size_t i = 0; i < speed.size(); ++i) {
    if (!moving) {
      if (speed[i] > cfg.onset_speed) {
        moving = true;
        start = i;
        quiet = false;
      }
      continue;
    }
    if (speed[i] < cfg.offset_speed) {
      if (!quiet) {
        quiet = true;
        quiet_since = i;
      }
      if (trace.samples[i].t - trace.samples[quiet_since].t >= cfg.offset_hold_s) {
        out.push_back({start, quiet_since});
        moving = false;
        quiet = false;
      }
    } else {
      quiet = false;
    }
  }
  if (moving) out.push_back({start, quiet ? quiet_since : speed.size() - 1});
  return out;
}

inline MotionTrace slice(const MotionTrace& trace, IndexRange r) {
  if (r.first > r.last || r.last >= trace.size()) throw ValidationError("segment range out of bounds");
  MotionTrace out;
  out.rate_hz = trace.rate_hz;
  out.label = trace.label;
  out.samples.assign(trace.samples.begin() + static_cast<std::ptrdiff_t>(r.first),
                     trace.samples.begin() + static_cast<std::ptrdiff_t>(r.last) + 1);
  return out;
}

inline std::vector<MotionTrace> segment(const MotionTrace& trace, const SegmenterConfig& cfg = {}) {
  std::vector<MotionTrace> out;
  for (auto r : find_segments(trace, cfg)) out.push_back(slice(trace, r));
  return out;
}

/// Manual segment file: one `start_index,end_index` pair per line, inclusive.
inline std::vector<IndexRange> parse_segment_file(std::string_view text) {
  std::vector<IndexRange> out;
  std::size_t line_no = 0;
  for (auto line : io::lines(text)) {
    ++line_no;
    line = io::trim(line);
    if (line.empty() || line.front() == '#') continue;
    auto f = io::split(line, ',');
    long a = 0, b = 0;
    if (f.size() != 2 || !io::parse_long(f[0], a) || !io::parse_long(f[1], b) || a < 0 || b < a)
      throw ParseError("bad segment range @line " + std::to_string(line_no));
    out.push_back({static_cast<std::size_t>(a), static_cast<std::size_t>(b)});
  }
  return out;
}

inline std::vector<MotionTrace> segment_manual(const MotionTrace& trace, const std::vector<IndexRange>& ranges) {
  std::vector<MotionTrace> out;
  out.reserve(ranges.size());
  for (auto r : ranges) out.push_back(slice(trace, r));
  return out;
}

// ---------------------------------------------------------------------------
// Time normalization

/// Linear interpolation of the trace angles at time t (clamped to the ends).
inline Vec2 interpolate_angles(const MotionTrace& trace, double t) {
  const auto& s = trace.samples;
  if (t <= s.front().t) return s.front().q;
  if (t >= s.back().t) return s.back().q;
  auto it = std::upper_bound(s.begin(), s.end(), t, [](double v, const TraceSample& x) { return v < x.t; });
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  const double w = (t - lo.t) / (hi.t - lo.t);
  return lo.q + w * (hi.q - lo.q);
}

/// Resamples the first `keep_fraction` of a segment onto the 101-point grid.
inline NormalizedDemo normalize(const MotionTrace& segment, double keep_fraction = 0.5) {
  if (segment.size() < 2) throw ValidationError("segment needs at least 2 samples to normalize");
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw ValidationError("keep_fraction must lie in (0, 1]");
  const double t0 = segment.samples.front().t;
  const double span = keep_fraction * segment.duration();
  NormalizedDemo demo;
  demo.values.resize(kGridSize);
  for (std::size_t n = 0; n < kGridSize; ++n) {
    // Hit the end sample exactly when the whole segment is retained.
    const double t = n + 1 == kGridSize && keep_fraction == 1.0 ? segment.samples.back().t
                                                                : t0 + grid_progress(n) * span;
    demo.values[n] = interpolate_angles(segment, t);
  }
  return demo;
}

/// Views a normalized demo as a trace sampled on its progress grid.
inline MotionTrace as_trace(const NormalizedDemo& demo) {
  MotionTrace t;
  t.rate_hz = static_cast<double>(demo.values.size() - 1);
  t.samples.reserve(demo.values.size());
  for (std::size_t n = 0; n < demo.values.size(); ++n) t.samples.push_back({grid_progress(n, demo.values.size()), demo.values[n], {}});
  return t;
}

/// Resamples a trace onto a uniform clock at `rate_hz` starting at its first sample.
inline MotionTrace resample_uniform(const MotionTrace& trace, double rate_hz) {
  if (trace.size() < 2) throw ValidationError("trace needs at least 2 samples to resample");
  MotionTrace out;
  out.rate_hz = rate_hz;
  out.label = trace.label;
  const double t0 = trace.samples.front().t;
  const auto count = static_cast<std::size_t>(std::floor(trace.duration() * rate_hz + 1e-9)) + 1;
  out.samples.reserve(count);
  const bool torque = trace.has_torque();
  for (std::size_t k = 0; k < count; ++k) {
    const double t = t0 + static_cast<double>(k) / rate_hz;
    TraceSample s{t, interpolate_angles(trace, t), {}};
    if (torque) {
      auto it = std::lower_bound(trace.samples.begin(), trace.samples.end(), t,
                                 [](const TraceSample& x, double v) { return x.t < v; });
      if (it == trace.samples.end()) it = trace.samples.end() - 1;
      s.tau = it->tau;
    }
    out.samples.push_back(std::move(s));
  }
  return out;
}

}  // namespace qpexo
