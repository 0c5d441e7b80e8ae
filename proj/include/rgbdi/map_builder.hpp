#pragma once

#include "rgbdi/common.hpp"
#include "rgbdi/frame.hpp"
#include "rgbdi/geometry.hpp"
#include "rgbdi/kdtree.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace rgbdi {

// ---------------------------------------------------------------------------------------------
// Dynamic point removal and stitching

/// Drops the points of a sensor-frame cloud that project onto a masked pixel of `frame`.
/// Points behind the camera or outside the image are kept. Order is preserved.
inline PointCloud remove_dynamic_points(const PointCloud& cloud, const FramePacket& frame,
                                        const Pose& camera_from_sensor = Pose::identity()) {
  PointCloud out;
  out.points.reserve(cloud.size());
  if (cloud.has_colors()) out.colors.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto proj = project_camera_point(camera_from_sensor * cloud.points[i], frame.intrinsics);
    if (proj) {
      const int x = round_half_up(proj->u), y = round_half_up(proj->v);
      if (frame.mask.in_bounds(x, y) && frame.masked(x, y)) continue;
    }
    out.points.push_back(cloud.points[i]);
    if (cloud.has_colors()) out.colors.push_back(cloud.colors[i]);
  }
  return out;
}

/// One representative per occupied voxel: the member nearest to the voxel centroid (lowest
/// input index on exact ties). Output is ordered by voxel coordinate.
inline PointCloud voxel_downsample(const PointCloud& cloud, double voxel) {
  if (voxel <= 0.0 || cloud.empty()) return cloud;
  using Key = std::array<long long, 3>;
  std::vector<Key> keys(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i)
    for (int a = 0; a < 3; ++a)
      keys[i][a] = static_cast<long long>(std::floor(cloud.points[i][a] / voxel));
  std::vector<std::size_t> order(cloud.size());
  std::iota(order.begin(), order.end(), 0);
  // Within a voxel, points go in coordinate order so the result does not depend on input order.
  auto coords = [&](std::size_t i) {
    const auto& p = cloud.points[i];
    return std::array<double, 3>{p.x(), p.y(), p.z()};
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (keys[a] != keys[b]) return keys[a] < keys[b];
    return coords(a) < coords(b);
  });

  PointCloud out;
  for (std::size_t s = 0; s < order.size();) {
    std::size_t e = s;
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    while (e < order.size() && keys[order[e]] == keys[order[s]]) centroid += cloud.points[order[e++]];
    centroid /= double(e - s);
    std::size_t best = order[s];
    double best_d2 = (cloud.points[best] - centroid).squaredNorm();
    for (std::size_t j = s + 1; j < e; ++j) {
      const std::size_t idx = order[j];
      const double d2 = (cloud.points[idx] - centroid).squaredNorm();
      if (d2 < best_d2) {
        best = idx;
        best_d2 = d2;
      }
    }
    if (cloud.has_colors())
      out.push_back(cloud.points[best], cloud.colors[best]);
    else
      out.push_back(cloud.points[best]);
    s = e;
  }
  return out;
}

struct StitchOptions {
  double voxel_size = 0.05;  // meters
};

namespace detail {

inline void require_pose(const CaptureSequence& seq, std::size_t i) {
  if (i >= seq.world_from_sensor.size())
    throw DataError("missing pose for frame " + std::to_string(seq.frames[i].index));
  if (i >= seq.clouds.size())
    throw DataError("missing point cloud for frame " + std::to_string(seq.frames[i].index));
}

}  // namespace detail

/// World-frame background map: dynamic-filtered clouds of every frame, merged and
/// voxel-downsampled. Colors of the input clouds are carried through when present.
inline PointCloud stitch_map(const CaptureSequence& seq, const StitchOptions& opts = {}) {
  PointCloud merged;
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    detail::require_pose(seq, i);
    const PointCloud kept = remove_dynamic_points(seq.clouds[i], seq.frames[i], seq.camera_from_sensor);
    const Pose& to_world = seq.world_from_sensor[i];
    const bool colored = kept.has_colors() && (merged.empty() || merged.has_colors());
    for (std::size_t j = 0; j < kept.size(); ++j) {
      if (colored)
        merged.push_back(to_world * kept.points[j], kept.colors[j]);
      else
        merged.push_back(to_world * kept.points[j]);
    }
    if (!colored) merged.colors.clear();
  }
  return voxel_downsample(merged, opts.voxel_size);
}

/// Like stitch_map, but every point takes its color from the frame that captured it. Points
/// that fall outside that frame's image, or on its mask, are left out.
inline PointCloud stitch_colored_map(const CaptureSequence& seq, const StitchOptions& opts = {}) {
  PointCloud merged;
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    detail::require_pose(seq, i);
    const FramePacket& f = seq.frames[i];
    for (const auto& p : seq.clouds[i].points) {
      const auto proj = project_camera_point(seq.camera_from_sensor * p, f.intrinsics);
      if (!proj) continue;
      const int x = round_half_up(proj->u), y = round_half_up(proj->v);
      if (!f.mask.in_bounds(x, y) || f.masked(x, y)) continue;
      const auto c = sample_bilinear(f.rgb, proj->u, proj->v);
      if (!c) continue;
      merged.push_back(seq.world_from_sensor[i] * p, Rgb8{to_u8((*c)[0]), to_u8((*c)[1]), to_u8((*c)[2])});
    }
  }
  return voxel_downsample(merged, opts.voxel_size);
}

/// Concatenates two clouds and voxel-downsamples the result. Colors survive only if both
/// inputs carry them.
inline PointCloud merge_clouds(const PointCloud& a, const PointCloud& b, double voxel) {
  PointCloud out;
  const bool colored = a.has_colors() && b.has_colors();
  out.points = a.points;
  out.points.insert(out.points.end(), b.points.begin(), b.points.end());
  if (colored) {
    out.colors = a.colors;
    out.colors.insert(out.colors.end(), b.colors.begin(), b.colors.end());
  }
  return voxel_downsample(out, voxel);
}

// ---------------------------------------------------------------------------------------------
// Registration

/// Unit normals from PCA over the k nearest neighbors.
inline std::vector<Eigen::Vector3d> estimate_normals(const PointCloud& cloud, const KdTree& tree,
                                                     int k = 20) {
  std::vector<Eigen::Vector3d> normals(cloud.size(), Eigen::Vector3d::UnitZ());
  parallel_for(cloud.size(), [&](std::size_t i) {
    const auto nn = tree.knn(cloud.points[i], k);
    if (nn.size() < 3) return;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (int j : nn) mean += cloud.points[j];
    mean /= double(nn.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int j : nn) {
      const Eigen::Vector3d d = cloud.points[j] - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    normals[i] = es.eigenvectors().col(0).normalized();
  });
  return normals;
}

struct RegistrationResult {
  Pose transform;               // source -> target
  double rms_residual = 0;      // point-to-plane, meters, over inliers
  double inlier_fraction = 0;
  double initial_rms_residual = 0;
  int iterations = 0;
};

struct IcpOptions {
  int max_iterations = 50;
  double update_tolerance = 1e-6;
  int normal_neighbors = 20;
  double inlier_median_factor = 3.0;
  std::size_t max_source_points = 20000;  // deterministic stride subsampling above this
  double min_normal_eigen_ratio = 1e-3;   // below: geometry cannot pin all six DoF
  double coarse_voxel = 0.5;              // pre-alignment on downsampled clouds, meters; 0 skips it
};

inline constexpr double kIcpMaxInitTranslation = 2.0;  // meters
inline constexpr double kIcpMaxInitRotationDeg = 10.0;

/// Point-to-plane ICP. The returned transform is the best (lowest residual) iterate,
/// including the initial guess, so the residual never exceeds the initial one.
inline RegistrationResult register_cloud(const PointCloud& source, const PointCloud& target,
                                         const Pose& init = Pose::identity(),
                                         const IcpOptions& opts = {}) {
  if (source.size() < 100 || target.size() < 100)
    throw std::invalid_argument("register_cloud: both clouds need at least 100 points");

  const KdTree tree(target.points);
  const auto normals = estimate_normals(target, tree, opts.normal_neighbors);

  Eigen::Matrix3d normal_cov = Eigen::Matrix3d::Zero();
  for (const auto& n : normals) normal_cov += n * n.transpose();
  const Eigen::Vector3d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(normal_cov).eigenvalues();
  if (ev[0] < opts.min_normal_eigen_ratio * ev[2])
    throw RegistrationError("register_cloud: unconstrained registration (target normals span rank < 3)");

  // A first pass on voxel-downsampled clouds keeps larger initial rotations out of the local
  // minima that dense point-to-plane correspondences fall into.
  Pose start = init;
  if (opts.coarse_voxel > 0) {
    const PointCloud cs = voxel_downsample(source, opts.coarse_voxel), ct = voxel_downsample(target, opts.coarse_voxel);
    if (cs.size() >= 100 && ct.size() >= 100) {
      IcpOptions co = opts;
      co.coarse_voxel = 0;
      start = register_cloud(cs, ct, init, co).transform;
    }
  }

  std::vector<Eigen::Vector3d> src;
  const std::size_t stride = std::max<std::size_t>(1, (source.size() + opts.max_source_points - 1) /
                                                          opts.max_source_points);
  for (std::size_t i = 0; i < source.size(); i += stride) src.push_back(source.points[i]);

  struct Corr {
    Eigen::Vector3d p;  // transformed source point
    int target = -1;
    double dist = 0;
  };
  std::vector<Corr> corr(src.size());
  std::vector<double> dists(src.size());

  // Correspondences for `pose`; returns inlier threshold. Fills rms / inlier fraction.
  auto correspond = [&](const Pose& pose, double& rms, double& inlier_frac) {
    parallel_for(src.size(), [&](std::size_t i) {
      Corr& c = corr[i];
      c.p = pose * src[i];
      double d2 = 0;
      c.target = tree.nearest(c.p, &d2);
      c.dist = std::sqrt(d2);
      dists[i] = c.dist;
    });
    std::vector<double> tmp = dists;
    const std::size_t mid = tmp.size() / 2;
    std::nth_element(tmp.begin(), tmp.begin() + mid, tmp.end());
    const double thresh = opts.inlier_median_factor * tmp[mid];
    double sum = 0;
    std::size_t n = 0;
    for (const auto& c : corr) {
      if (c.dist > thresh) continue;
      const double r = normals[c.target].dot(c.p - target.points[c.target]);
      sum += r * r;
      ++n;
    }
    rms = n ? std::sqrt(sum / n) : std::numeric_limits<double>::infinity();
    inlier_frac = double(n) / double(corr.size());
    return thresh;
  };

  RegistrationResult best;
  double rms = 0, frac = 0;
  double thresh = correspond(init, rms, frac);
  best.transform = init;
  best.rms_residual = rms;
  best.inlier_fraction = frac;
  best.initial_rms_residual = rms;
  Pose pose = init;
  if (!(start.rotation == init.rotation && start.translation == init.translation)) {
    pose = start;
    thresh = correspond(pose, rms, frac);
    if (rms < best.rms_residual) {
      best.transform = pose;
      best.rms_residual = rms;
      best.inlier_fraction = frac;
    }
  }

  int iter = 0;
  for (; iter < opts.max_iterations; ++iter) {
    Eigen::Matrix<double, 6, 6> a = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> b = Eigen::Matrix<double, 6, 1>::Zero();
    for (const auto& c : corr) {
      if (c.dist > thresh) continue;
      const Eigen::Vector3d& n = normals[c.target];
      const double r = n.dot(c.p - target.points[c.target]);
      Eigen::Matrix<double, 6, 1> j;
      j.head<3>() = c.p.cross(n);
      j.tail<3>() = n;
      a += j * j.transpose();
      b += j * r;
    }
    const Eigen::Matrix<double, 6, 1> x = a.ldlt().solve(-b);
    if (!x.allFinite()) throw RegistrationError("register_cloud: singular point-to-plane system");
    const Eigen::Vector3d w = x.head<3>();
    const double angle = w.norm();
    const Eigen::Matrix3d dr =
        angle > 0 ? Eigen::AngleAxisd(angle, w / angle).toRotationMatrix() : Eigen::Matrix3d::Identity();
    pose = Pose(dr, x.tail<3>()) * pose;
    // Re-orthonormalize to keep the rotation exact over many updates.
    pose.rotation = Eigen::Quaterniond(pose.rotation).normalized().toRotationMatrix();

    thresh = correspond(pose, rms, frac);
    if (rms < best.rms_residual) {
      best.transform = pose;
      best.rms_residual = rms;
      best.inlier_fraction = frac;
    }
    if (x.norm() < opts.update_tolerance) {
      ++iter;
      break;
    }
  }
  best.iterations = iter;
  return best;
}

/// Fraction of source points with a target point within `radius` after applying `t`.
inline double overlap_fraction(const PointCloud& source, const PointCloud& target, const Pose& t,
                               double radius, std::size_t max_points = 20000) {
  if (source.empty() || target.empty()) return 0.0;
  const KdTree tree(target.points);
  const std::size_t stride = std::max<std::size_t>(1, (source.size() + max_points - 1) / max_points);
  std::size_t n = 0, hit = 0;
  for (std::size_t i = 0; i < source.size(); i += stride, ++n) {
    double d2 = 0;
    tree.nearest(t * source.points[i], &d2);
    hit += d2 <= radius * radius;
  }
  return double(hit) / double(n);
}

struct FuseOptions {
  StitchOptions stitch;
  IcpOptions icp;
  double overlap_radius = 0.15;  // meters
  double min_overlap = 0.5;      // below: registration is reported as failed
  double max_rms_residual = 0.05;
};

struct FuseResult {
  PointCloud merged;
  std::vector<Pose> world_from_sensor;  // corrected trajectory of the extra capture
  RegistrationResult registration;
  double overlap = 0;
};

/// Registers an extra capture into an existing map and merges it. The extra trajectory is
/// corrected by the single rigid transform found for its stitched map.
inline FuseResult fuse_maps(const PointCloud& base, const CaptureSequence& extra,
                            const Pose& init = Pose::identity(), const FuseOptions& opts = {}) {
  const PointCloud extra_map = stitch_map(extra, opts.stitch);
  FuseResult out;
  out.registration = register_cloud(extra_map, base, init, opts.icp);
  const Pose& t = out.registration.transform;
  out.overlap = overlap_fraction(extra_map, base, t, opts.overlap_radius);
  if (out.overlap < opts.min_overlap || out.registration.rms_residual > opts.max_rms_residual)
    throw RegistrationError("fuse_maps: registration failed (overlap " + std::to_string(out.overlap) +
                            ", rms " + std::to_string(out.registration.rms_residual) + " m)");
  out.world_from_sensor.reserve(extra.world_from_sensor.size());
  for (const auto& p : extra.world_from_sensor) out.world_from_sensor.push_back(t * p);
  out.merged = merge_clouds(base, extra_map.transformed(t), opts.stitch.voxel_size);
  return out;
}

}  // namespace rgbdi
