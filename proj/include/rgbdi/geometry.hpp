#pragma once

#include "rgbdi/common.hpp"
#include "rgbdi/image.hpp"

#include <Eigen/Geometry>
#include <boost/polygon/voronoi.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rgbdi {

/// Pinhole intrinsics. Pixel centers sit at integer coordinates.
struct Intrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;

  bool valid() const {
    return fx > 0 && fy > 0 && width > 0 && height > 0 && cx >= 0 && cx < width && cy >= 0 &&
           cy < height;
  }
  void validate() const {
    if (!valid()) throw std::invalid_argument("invalid intrinsics");
  }
  bool operator==(const Intrinsics&) const = default;
};

/// Rigid transform. For camera poses it maps world into camera coordinates:
/// X_cam = rotation * X_world + translation.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Pose() = default;
  Pose(const Eigen::Matrix3d& r, const Eigen::Vector3d& t) : rotation(r), translation(t) {}

  static Pose identity() { return {}; }
  static Pose from_quaternion(const Eigen::Quaterniond& q, const Eigen::Vector3d& t) {
    return {q.normalized().toRotationMatrix(), t};
  }

  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return rotation * p + translation; }
  /// Composition: (a * b)(p) = a(b(p)).
  Pose operator*(const Pose& o) const {
    return {rotation * o.rotation, rotation * o.translation + translation};
  }
  Pose inverse() const {
    const Eigen::Matrix3d rt = rotation.transpose();
    return {rt, -rt * translation};
  }
  Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(rotation).normalized(); }

  /// Camera center in world coordinates (for camera-from-world poses).
  Eigen::Vector3d center() const { return -rotation.transpose() * translation; }

  bool valid(double tol = 1e-9) const {
    const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    return ortho < tol && rotation.determinant() > 0 && translation.allFinite();
  }
};

/// Rotation angle between two rotations, in degrees.
inline double rotation_angle_deg(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  const Eigen::AngleAxisd aa(a.transpose() * b);
  return std::abs(aa.angle()) * 180.0 / M_PI;
}

using Rgb8 = std::array<std::uint8_t, 3>;

struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<Rgb8> colors;  // empty, or one per point

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_colors() const { return !colors.empty(); }

  void validate() const {
    if (has_colors() && colors.size() != points.size())
      throw std::invalid_argument("point cloud colors/points length mismatch");
    for (const auto& p : points)
      if (!p.allFinite()) throw std::invalid_argument("non-finite point coordinate");
  }

  void push_back(const Eigen::Vector3d& p) { points.push_back(p); }
  void push_back(const Eigen::Vector3d& p, const Rgb8& c) {
    points.push_back(p);
    colors.push_back(c);
  }

  PointCloud transformed(const Pose& t) const {
    PointCloud out = *this;
    for (auto& p : out.points) p = t * p;
    return out;
  }
};

/// Per-pixel camera-frame depth in meters. Depth <= 0 marks an invalid pixel.
class DepthMap {
public:
  DepthMap() = default;
  DepthMap(int width, int height) : img_(width, height, 1, 0.0) {}

  int width() const { return img_.width(); }
  int height() const { return img_.height(); }
  bool empty() const { return img_.empty(); }
  bool in_bounds(int x, int y) const { return img_.in_bounds(x, y); }

  double& at(int x, int y) { return img_(x, y); }
  double at(int x, int y) const { return img_(x, y); }
  bool valid(int x, int y) const { return img_(x, y) > 0.0; }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (double d : img_.data()) n += d > 0.0;
    return n;
  }
  const std::vector<double>& data() const { return img_.data(); }
  bool operator==(const DepthMap& o) const { return img_ == o.img_; }

private:
  Image<double> img_;
};

inline constexpr double kBehindCameraEps = 1e-6;

struct Projection {
  double u = 0, v = 0;  // subpixel image coordinates
  double z = 0;         // camera-frame depth
};

/// Projects a world point. Returns nullopt when the point is not in front of the camera.
inline std::optional<Projection> project_point(const Eigen::Vector3d& p, const Pose& pose,
                                               const Intrinsics& k) {
  const Eigen::Vector3d c = pose * p;
  if (!(c.z() > kBehindCameraEps)) return std::nullopt;
  return Projection{k.fx * c.x() / c.z() + k.cx, k.fy * c.y() / c.z() + k.cy, c.z()};
}

/// Camera-frame version of project_point.
inline std::optional<Projection> project_camera_point(const Eigen::Vector3d& c, const Intrinsics& k) {
  if (!(c.z() > kBehindCameraEps)) return std::nullopt;
  return Projection{k.fx * c.x() / c.z() + k.cx, k.fy * c.y() / c.z() + k.cy, c.z()};
}

inline Eigen::Vector3d unproject_to_camera(double u, double v, double depth, const Intrinsics& k) {
  if (!(depth > 0.0) || !std::isfinite(depth))
    throw std::invalid_argument("unproject_pixel: depth must be positive");
  return {(u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth};
}

inline Eigen::Vector3d unproject_pixel(double u, double v, double depth, const Pose& pose,
                                       const Intrinsics& k) {
  const Eigen::Vector3d c = unproject_to_camera(u, v, depth, k);
  return pose.rotation.transpose() * (c - pose.translation);
}

/// Point splat z-buffer: every point lands on its nearest pixel, each pixel keeps the
/// smallest depth.
inline DepthMap render_depth(const PointCloud& cloud, const Pose& pose, const Intrinsics& k) {
  DepthMap depth(k.width, k.height);
  for (const auto& p : cloud.points) {
    const auto proj = project_point(p, pose, k);
    if (!proj) continue;
    const int x = round_half_up(proj->u);
    const int y = round_half_up(proj->v);
    if (!depth.in_bounds(x, y)) continue;
    double& d = depth.at(x, y);
    if (d <= 0.0 || proj->z < d) d = proj->z;
  }
  return depth;
}

/// Drops sparse seeds that show through gaps of a nearer surface. A seed is culled when two
/// point-symmetric seeds, at c + o and c - o with |o| up to `radius`, are both clearly nearer
/// (by max(abs_tol, rel_tol * depth)). On a plane inverse depth is affine in the image, so
/// symmetric pairs straddle the center depth and planar seeds, slanted or not, are kept.
inline DepthMap cull_occluded_seeds(const DepthMap& sparse, int radius = 3, double rel_tol = 0.05,
                                    double abs_tol = 0.10) {
  DepthMap out = sparse;
  const int w = sparse.width(), h = sparse.height();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d = sparse.at(x, y);
      if (d <= 0.0) continue;
      const double limit = d - std::max(abs_tol, rel_tol * d);
      auto nearer = [&](int xx, int yy) {
        if (!sparse.in_bounds(xx, yy)) return false;
        const double o = sparse.at(xx, yy);
        return o > 0.0 && o < limit;
      };
      bool occluded = false;
      // Half of the window; the other half is the mirror image.
      for (int dy = 0; dy <= radius && !occluded; ++dy)
        for (int dx = -radius; dx <= radius && !occluded; ++dx) {
          if (dy == 0 && dx <= 0) continue;
          occluded = nearer(x + dx, y + dy) && nearer(x - dx, y - dy);
        }
      if (occluded) out.at(x, y) = 0.0;
    }
  }
  return out;
}

namespace detail {

struct SeedPixel {
  int x, y;
  double depth;
};

inline void rasterize_triangle(const SeedPixel& a, const SeedPixel& b, const SeedPixel& c,
                               DepthMap& out, Image<std::uint8_t>& filled) {
  const double det = double(b.y - c.y) * (a.x - c.x) + double(c.x - b.x) * (a.y - c.y);
  if (det == 0.0) return;
  const int x0 = std::max(0, std::min({a.x, b.x, c.x}));
  const int x1 = std::min(out.width() - 1, std::max({a.x, b.x, c.x}));
  const int y0 = std::max(0, std::min({a.y, b.y, c.y}));
  const int y1 = std::min(out.height() - 1, std::max({a.y, b.y, c.y}));
  constexpr double kEdgeEps = 1e-12;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (filled(x, y)) continue;
      const double l0 = (double(b.y - c.y) * (x - c.x) + double(c.x - b.x) * (y - c.y)) / det;
      const double l1 = (double(c.y - a.y) * (x - c.x) + double(a.x - c.x) * (y - c.y)) / det;
      const double l2 = 1.0 - l0 - l1;
      if (l0 < -kEdgeEps || l1 < -kEdgeEps || l2 < -kEdgeEps) continue;
      out.at(x, y) = l0 * a.depth + l1 * b.depth + l2 * c.depth;
      filled(x, y) = 1;
    }
  }
}

}  // namespace detail

/// Piecewise-linear interpolation of the valid seeds over their Delaunay triangulation.
/// Pixels outside the seed convex hull stay invalid.
inline DepthMap interpolate_depth(const DepthMap& sparse) {
  using boost::polygon::point_data;
  std::vector<detail::SeedPixel> seeds;
  std::vector<point_data<int>> sites;
  for (int y = 0; y < sparse.height(); ++y)
    for (int x = 0; x < sparse.width(); ++x)
      if (sparse.valid(x, y)) {
        seeds.push_back({x, y, sparse.at(x, y)});
        sites.emplace_back(x, y);
      }
  if (seeds.size() < 3)
    throw InsufficientDataError("densify_depth: need at least 3 valid seeds, got " +
                                std::to_string(seeds.size()));

  // Delaunay triangles are the duals of the Voronoi vertices. Integer sites make the
  // construction exact; co-circular sites give a convex polygon that we fan-triangulate.
  boost::polygon::voronoi_diagram<double> vd;
  boost::polygon::construct_voronoi(sites.begin(), sites.end(), &vd);
  if (vd.vertices().empty())
    throw InsufficientDataError("densify_depth: seeds are collinear");

  DepthMap out(sparse.width(), sparse.height());
  Image<std::uint8_t> filled(sparse.width(), sparse.height());
  std::vector<std::size_t> ring;
  for (const auto& vertex : vd.vertices()) {
    ring.clear();
    const auto* start = vertex.incident_edge();
    const auto* e = start;
    do {
      ring.push_back(e->cell()->source_index());
      e = e->rot_next();
    } while (e != start);
    for (std::size_t i = 1; i + 1 < ring.size(); ++i)
      detail::rasterize_triangle(seeds[ring[0]], seeds[ring[i]], seeds[ring[i + 1]], out, filled);
  }
  return out;
}

/// Median over the valid samples of a (2r+1)^2 window, restricted to in-bounds pixels.
/// Invalid pixels stay invalid. Even sample counts average the two middle values.
inline DepthMap median_filter_depth(const DepthMap& in, int radius = 2) {
  DepthMap out(in.width(), in.height());
  std::vector<double> window;
  window.reserve(static_cast<std::size_t>((2 * radius + 1) * (2 * radius + 1)));
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      if (!in.valid(x, y)) continue;
      window.clear();
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (in.in_bounds(xx, yy) && in.valid(xx, yy)) window.push_back(in.at(xx, yy));
        }
      const std::size_t mid = window.size() / 2;
      std::nth_element(window.begin(), window.begin() + mid, window.end());
      double m = window[mid];
      if (window.size() % 2 == 0) {
        const double lower = *std::max_element(window.begin(), window.begin() + mid);
        m = 0.5 * (m + lower);
      }
      out.at(x, y) = m;
    }
  }
  return out;
}

/// Sparse z-buffer depth to dense depth: linear interpolation then a 5x5 median.
inline DepthMap densify_depth(const DepthMap& sparse) {
  return median_filter_depth(interpolate_depth(sparse), 2);
}

}  // namespace rgbdi
