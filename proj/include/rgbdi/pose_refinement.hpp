#pragma once

#include "rgbdi/common.hpp"
#include "rgbdi/frame.hpp"
#include "rgbdi/geometry.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace rgbdi {

struct RefinementConfig {
  double pitch_range_deg = 1.0;
  double yaw_range_deg = 1.0;
  double step_deg = 0.05;
  int ring_px = 20;

  void validate() const {
    if (!(step_deg > 0) || pitch_range_deg < step_deg || yaw_range_deg < step_deg || ring_px < 1)
      throw std::invalid_argument("invalid refinement config");
  }
};

struct RefinementResult {
  Pose pose;                 // refined camera_from_world
  double pitch_deg = 0;      // chosen offset
  double yaw_deg = 0;
  double error = 0;          // E at the chosen offset
  double initial_error = 0;  // E at zero offset
  bool no_improvement = false;  // every grid cell had an infinite error
};

inline constexpr double kDeg = M_PI / 180.0;

/// Camera-frame rotation offset: pitch about the camera x axis, then yaw about the camera y axis.
inline Eigen::Matrix3d pitch_yaw_rotation(double pitch_deg, double yaw_deg) {
  return (Eigen::AngleAxisd(yaw_deg * kDeg, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(pitch_deg * kDeg, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

/// Rotates the camera about its own center; the camera position stays where it is.
inline Pose apply_pitch_yaw(const Pose& camera_from_world, double pitch_deg, double yaw_deg) {
  return Pose(pitch_yaw_rotation(pitch_deg, yaw_deg), Eigen::Vector3d::Zero()) * camera_from_world;
}

/// Known-pixel band around the mask: mask dilated by `width` minus the mask.
inline Mask ring_region(const Mask& mask, int width) {
  Mask ring = dilate(mask, width);
  for (std::size_t i = 0; i < ring.data().size(); ++i)
    if (mask.data()[i]) ring.data()[i] = 0;
  return ring;
}

/// Mean squared RGB distance between map colors and the image under them, over the points
/// that project into `ring`. Infinity when no point contributes.
inline double photometric_error(const RgbImage& image, const Intrinsics& k, const PointCloud& map,
                                const Pose& camera_from_world, const Mask& ring) {
  if (!map.has_colors()) throw std::invalid_argument("photometric_error: map has no colors");
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const auto proj = project_point(map.points[i], camera_from_world, k);
    if (!proj) continue;
    const int x = round_half_up(proj->u), y = round_half_up(proj->v);
    if (!ring.in_bounds(x, y) || !ring(x, y)) continue;
    const auto c = sample_bilinear(image, proj->u, proj->v);
    if (!c) continue;
    const auto& pc = map.colors[i];
    const Color diff = *c - Color(pc[0], pc[1], pc[2]);
    sum += diff.squaredNorm();
    ++n;
  }
  return n ? sum / double(n) : std::numeric_limits<double>::infinity();
}

inline double photometric_error(const FramePacket& frame, const PointCloud& map, const Pose& pose,
                                const Mask& ring) {
  return photometric_error(frame.rgb, frame.intrinsics, map, pose, ring);
}

/// Map points that can reach the ring under any searched offset and are not hidden behind
/// nearer map points at the initial pose.
inline PointCloud ring_candidates(const FramePacket& frame, const PointCloud& map, const Mask& ring,
                                  const RefinementConfig& cfg) {
  const Intrinsics& k = frame.intrinsics;
  const double max_angle = std::hypot(cfg.pitch_range_deg, cfg.yaw_range_deg) * kDeg;
  const int margin = 2 + static_cast<int>(std::ceil(std::max(k.fx, k.fy) * std::tan(max_angle) * 1.5));
  const Mask reach = dilate(ring, margin);
  const DepthMap zbuf = render_depth(map, frame.camera_from_world, k);

  PointCloud out;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const auto proj = project_point(map.points[i], frame.camera_from_world, k);
    if (!proj) continue;
    const int x = round_half_up(proj->u), y = round_half_up(proj->v);
    if (!reach.in_bounds(x, y) || !reach(x, y)) continue;
    double nearest = proj->z;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx)
        if (zbuf.in_bounds(x + dx, y + dy) && zbuf.valid(x + dx, y + dy))
          nearest = std::min(nearest, zbuf.at(x + dx, y + dy));
    if (proj->z > nearest + std::max(0.1, 0.05 * nearest)) continue;
    out.push_back(map.points[i], map.colors[i]);
  }
  return out;
}

/// Exhaustive pitch x yaw grid search around the current rotation. Ties go to the smaller
/// offset magnitude, then the smaller pitch, then the smaller yaw.
inline RefinementResult refine_rotation(const FramePacket& frame, const PointCloud& map,
                                        const RefinementConfig& cfg = {}) {
  cfg.validate();
  if (!map.has_colors()) throw std::invalid_argument("refine_rotation: map has no colors");
  const Mask ring = ring_region(frame.mask, cfg.ring_px);
  if (count_set(ring) == 0) throw std::invalid_argument("refine_rotation: empty ring region");

  const PointCloud pts = ring_candidates(frame, map, ring, cfg);
  const int np = static_cast<int>(std::llround(cfg.pitch_range_deg / cfg.step_deg));
  const int ny = static_cast<int>(std::llround(cfg.yaw_range_deg / cfg.step_deg));
  const int cols = 2 * ny + 1;
  const std::size_t cells = static_cast<std::size_t>(2 * np + 1) * cols;

  // Offsets rotate about the camera center, so camera-frame points are computed once.
  std::vector<Eigen::Vector3d> cam(pts.size());
  std::vector<Color> col(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    cam[i] = frame.camera_from_world * pts.points[i];
    col[i] = Color(pts.colors[i][0], pts.colors[i][1], pts.colors[i][2]);
  }
  const Intrinsics& k = frame.intrinsics;
  std::vector<double> errors(cells);
  parallel_for(cells, [&](std::size_t c) {
    const double pitch = (static_cast<int>(c / cols) - np) * cfg.step_deg;
    const double yaw = (static_cast<int>(c % cols) - ny) * cfg.step_deg;
    const Eigen::Matrix3d r = pitch_yaw_rotation(pitch, yaw);
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < cam.size(); ++i) {
      const auto proj = project_camera_point(r * cam[i], k);
      if (!proj) continue;
      const int x = round_half_up(proj->u), y = round_half_up(proj->v);
      if (!ring.in_bounds(x, y) || !ring(x, y)) continue;
      const auto s = sample_bilinear(frame.rgb, proj->u, proj->v);
      if (!s) continue;
      sum += (*s - col[i]).squaredNorm();
      ++n;
    }
    errors[c] = n ? sum / double(n) : std::numeric_limits<double>::infinity();
  });

  RefinementResult res;
  res.pose = frame.camera_from_world;
  res.initial_error = errors[static_cast<std::size_t>(np) * cols + ny];
  res.error = res.initial_error;

  // Integer grid offsets keep the tie-break order exact.
  auto better = [](double e, int pi, int yi, double be, int bpi, int byi) {
    if (e != be) return e < be;
    const long m = long(pi) * pi + long(yi) * yi, bm = long(bpi) * bpi + long(byi) * byi;
    if (m != bm) return m < bm;
    if (pi != bpi) return pi < bpi;
    return yi < byi;
  };
  int best_p = 0, best_y = 0;
  double best_e = std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t c = 0; c < cells; ++c) {
    if (!std::isfinite(errors[c])) continue;
    const int pi = static_cast<int>(c / cols) - np, yi = static_cast<int>(c % cols) - ny;
    if (!found || better(errors[c], pi, yi, best_e, best_p, best_y)) {
      best_e = errors[c];
      best_p = pi;
      best_y = yi;
      found = true;
    }
  }
  if (!found) {
    res.no_improvement = true;
    return res;
  }
  res.pitch_deg = best_p * cfg.step_deg;
  res.yaw_deg = best_y * cfg.step_deg;
  res.error = best_e;
  res.pose = apply_pitch_yaw(frame.camera_from_world, res.pitch_deg, res.yaw_deg);
  return res;
}

}  // namespace rgbdi
