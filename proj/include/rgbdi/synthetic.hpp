#pragma once

#include "rgbdi/common.hpp"
#include "rgbdi/frame.hpp"
#include "rgbdi/geometry.hpp"
#include "rgbdi/image.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace rgbdi {

// ---------------------------------------------------------------------------------------------
// Scene description. World axes follow the camera convention: x right, y down, z forward.

enum class TextureKind { kNoise, kChecker, kStripes, kConstant };

struct Texture {
  TextureKind kind = TextureKind::kNoise;
  double scale = 1.0;  // feature size in meters
  Color color_a{90, 90, 90};
  Color color_b{170, 170, 170};
  std::uint32_t seed = 0;
};

/// Textured parallelogram origin + s * edge_u + t * edge_v, s, t in [0, 1].
struct QuadSurface {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d edge_u = Eigen::Vector3d::UnitX();
  Eigen::Vector3d edge_v = Eigen::Vector3d::UnitZ();
  Texture texture;
};

struct BoxPose {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double yaw_deg = 0;  // about the world y axis
};

struct BoxSurface {
  BoxPose pose;
  Eigen::Vector3d half_extent{0.5, 0.5, 0.5};
  Texture texture;
};

/// Moving box, one pose per frame.
struct OccluderTrack {
  Eigen::Vector3d half_extent{0.9, 0.75, 2.0};
  Texture texture;
  std::vector<BoxPose> poses;
};

/// Camera placement: position plus yaw (about y) and pitch (about x, positive looks up).
struct CameraPlacement {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double yaw_deg = 0;
  double pitch_deg = 0;

  Pose camera_from_world() const {
    const Eigen::Matrix3d world_from_cam =
        (Eigen::AngleAxisd(yaw_deg * M_PI / 180, Eigen::Vector3d::UnitY()) *
         Eigen::AngleAxisd(pitch_deg * M_PI / 180, Eigen::Vector3d::UnitX()))
            .toRotationMatrix();
    return Pose(world_from_cam, position).inverse();
  }
};

struct LidarModel {
  int rings = 40;
  int points_per_ring = 320;
  double vfov_min_deg = -20;  // elevation, negative below the horizon
  double vfov_max_deg = 12;
  double hfov_deg = 0;        // 0: match the camera
  double noise_sigma = 0.01;  // range noise, meters
  double max_range = 80;
};

struct ExposureModel {
  bool enabled = false;
  double gain_min = 0.9, gain_max = 1.1;
  double bias_min = -8, bias_max = 8;
};

struct SceneSpec {
  Intrinsics intrinsics{277, 277, 159.5, 119.5, 320, 240};
  std::vector<QuadSurface> planes;
  std::vector<BoxSurface> boxes;
  std::vector<OccluderTrack> occluders;
  std::vector<CameraPlacement> trajectory;
  LidarModel lidar;
  ExposureModel exposure;
  Color sky{175, 200, 225};
  int supersample = 3;
  int mask_dilate_px = 2;
  std::uint64_t seed = 0;

  int frame_count() const { return static_cast<int>(trajectory.size()); }

  void validate() const {
    if (!intrinsics.valid()) throw ConfigError("scene: invalid intrinsics");
    if (trajectory.empty()) throw ConfigError("scene: empty camera trajectory");
    for (std::size_t k = 0; k < occluders.size(); ++k)
      if (occluders[k].poses.size() != trajectory.size())
        throw ConfigError("scene: occluder " + std::to_string(k) + " track length " +
                          std::to_string(occluders[k].poses.size()) + " differs from frame count " +
                          std::to_string(trajectory.size()));
    if (supersample < 1) throw ConfigError("scene: supersample must be >= 1");
    if (mask_dilate_px < 0) throw ConfigError("scene: mask_dilate_px must be >= 0");
    if (lidar.rings < 1 || lidar.points_per_ring < 1) throw ConfigError("scene: invalid lidar model");
  }
};

// ---------------------------------------------------------------------------------------------
// Procedural textures

namespace detail {

inline double lattice(std::int64_t ix, std::int64_t iy, std::uint32_t seed) {
  std::uint64_t h = static_cast<std::uint64_t>(ix) * 0x9E3779B97F4A7C15ull ^
                    (static_cast<std::uint64_t>(iy) + 0x632BE59BD9B4E019ull) * 0xC2B2AE3D27D4EB4Full ^
                    (static_cast<std::uint64_t>(seed) << 17);
  h ^= h >> 31;
  h *= 0xBF58476D1CE4E5B9ull;
  h ^= h >> 29;
  h *= 0x94D049BB133111EBull;
  h ^= h >> 32;
  return double(h & 0xFFFFFF) / double(0xFFFFFF);
}

inline double value_noise(double x, double y, std::uint32_t seed) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  const double tx = x - fx, ty = y - fy;
  auto fade = [](double t) { return t * t * t * (t * (t * 6 - 15) + 10); };
  const double sx = fade(tx), sy = fade(ty);
  const double a = lattice(ix, iy, seed), b = lattice(ix + 1, iy, seed);
  const double c = lattice(ix, iy + 1, seed), d = lattice(ix + 1, iy + 1, seed);
  return (a + (b - a) * sx) * (1 - sy) + (c + (d - c) * sx) * sy;
}

}  // namespace detail

inline Color texture_color(const Texture& t, double s, double u) {
  const double x = s / t.scale, y = u / t.scale;
  double m = 0;
  switch (t.kind) {
    case TextureKind::kConstant: m = 0; break;
    case TextureKind::kChecker: m = ((static_cast<long long>(std::floor(x)) + static_cast<long long>(std::floor(y))) & 1) ? 1.0 : 0.0; break;
    case TextureKind::kStripes: m = 0.5 + 0.5 * std::sin(2 * M_PI * x); break;
    case TextureKind::kNoise: {
      double amp = 0.55, freq = 1.0, norm = 0;
      for (int o = 0; o < 3; ++o) {
        m += amp * detail::value_noise(x * freq, y * freq, t.seed + 101u * o);
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
      }
      m /= norm;
      m = std::clamp((m - 0.5) * 1.6 + 0.5, 0.0, 1.0);
      break;
    }
  }
  return t.color_a + m * (t.color_b - t.color_a);
}

// ---------------------------------------------------------------------------------------------
// Ray casting

struct RayHit {
  double t = std::numeric_limits<double>::infinity();
  int object = -1;  // static objects 0.., occluders kOccluderIdBase + k
  Color color = Color::Zero();
};

inline constexpr int kOccluderIdBase = 1000;

namespace detail {

inline bool hit_quad(const QuadSurface& q, const Eigen::Vector3d& o, const Eigen::Vector3d& d, double& t,
                     double& s, double& u) {
  const Eigen::Vector3d n = q.edge_u.cross(q.edge_v);
  const double den = n.dot(d);
  if (std::abs(den) < 1e-12) return false;
  t = n.dot(q.origin - o) / den;
  if (t <= 1e-6) return false;
  const Eigen::Vector3d rel = o + t * d - q.origin;
  // Solve rel = a * edge_u + b * edge_v.
  const double uu = q.edge_u.squaredNorm(), vv = q.edge_v.squaredNorm(), uv = q.edge_u.dot(q.edge_v);
  const double ru = rel.dot(q.edge_u), rv = rel.dot(q.edge_v);
  const double det = uu * vv - uv * uv;
  const double a = (ru * vv - rv * uv) / det, b = (rv * uu - ru * uv) / det;
  if (a < 0 || a > 1 || b < 0 || b > 1) return false;
  s = a * q.edge_u.norm();
  u = b * q.edge_v.norm();
  return true;
}

inline Eigen::Matrix3d yaw_matrix(double yaw_deg) {
  return Eigen::AngleAxisd(yaw_deg * M_PI / 180, Eigen::Vector3d::UnitY()).toRotationMatrix();
}

/// Slab test in the box frame; texture coordinates are the two in-face local coordinates.
inline bool hit_box(const BoxPose& pose, const Eigen::Vector3d& half, const Eigen::Vector3d& o,
                    const Eigen::Vector3d& d, double& t, double& s, double& u) {
  const Eigen::Matrix3d r = yaw_matrix(pose.yaw_deg);
  const Eigen::Vector3d lo = r.transpose() * (o - pose.center);
  const Eigen::Vector3d ld = r.transpose() * d;
  double tmin = -std::numeric_limits<double>::infinity(), tmax = std::numeric_limits<double>::infinity();
  int axis = -1;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(ld[a]) < 1e-15) {
      if (lo[a] < -half[a] || lo[a] > half[a]) return false;
      continue;
    }
    double t0 = (-half[a] - lo[a]) / ld[a], t1 = (half[a] - lo[a]) / ld[a];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > tmin) {
      tmin = t0;
      axis = a;
    }
    tmax = std::min(tmax, t1);
  }
  if (tmin > tmax || tmin <= 1e-6 || axis < 0) return false;
  t = tmin;
  const Eigen::Vector3d p = lo + t * ld + half;
  const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
  s = p[a1];
  u = p[a2];
  return true;
}

inline bool inside_box(const BoxPose& pose, const Eigen::Vector3d& half, const Eigen::Vector3d& p) {
  const Eigen::Vector3d l = yaw_matrix(pose.yaw_deg).transpose() * (p - pose.center);
  return (l.cwiseAbs().array() < half.array()).all();
}

}  // namespace detail

/// Nearest hit along a ray at frame `frame`. Occluders are skipped when `with_occluders` is false.
inline RayHit cast_ray(const SceneSpec& scene, int frame, const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                       bool with_occluders) {
  RayHit best;
  double t = 0, s = 0, u = 0;
  for (std::size_t i = 0; i < scene.planes.size(); ++i)
    if (detail::hit_quad(scene.planes[i], o, d, t, s, u) && t < best.t) {
      best.t = t;
      best.object = static_cast<int>(i);
      best.color = texture_color(scene.planes[i].texture, s, u);
    }
  for (std::size_t i = 0; i < scene.boxes.size(); ++i) {
    const auto& b = scene.boxes[i];
    if (detail::hit_box(b.pose, b.half_extent, o, d, t, s, u) && t < best.t) {
      best.t = t;
      best.object = static_cast<int>(scene.planes.size() + i);
      best.color = texture_color(b.texture, s, u);
    }
  }
  if (with_occluders)
    for (std::size_t k = 0; k < scene.occluders.size(); ++k) {
      const auto& oc = scene.occluders[k];
      if (detail::hit_box(oc.poses[frame], oc.half_extent, o, d, t, s, u) && t < best.t) {
        best.t = t;
        best.object = kOccluderIdBase + static_cast<int>(k);
        best.color = texture_color(oc.texture, s, u);
      }
    }
  return best;
}

struct RenderedFrame {
  RgbImage rgb;
  DepthMap depth;   // center-ray camera z
  Mask occluder;    // center ray hits an occluder first
};

inline RenderedFrame render_view(const SceneSpec& scene, int frame, bool with_occluders) {
  const Intrinsics& k = scene.intrinsics;
  const Pose pose = scene.trajectory[frame].camera_from_world();
  const Eigen::Matrix3d world_from_cam = pose.rotation.transpose();
  const Eigen::Vector3d origin = scene.trajectory[frame].position;
  RenderedFrame out{RgbImage(k.width, k.height, 3), DepthMap(k.width, k.height), Mask(k.width, k.height)};
  const int ss = scene.supersample;
  parallel_for(static_cast<std::size_t>(k.height), [&](std::size_t yi) {
    const int y = static_cast<int>(yi);
    for (int x = 0; x < k.width; ++x) {
      Color acc = Color::Zero();
      for (int sy = 0; sy < ss; ++sy)
        for (int sx = 0; sx < ss; ++sx) {
          const double px = x + (sx + 0.5) / ss - 0.5, py = y + (sy + 0.5) / ss - 0.5;
          const Eigen::Vector3d dir = world_from_cam * Eigen::Vector3d((px - k.cx) / k.fx, (py - k.cy) / k.fy, 1.0);
          const RayHit h = cast_ray(scene, frame, origin, dir, with_occluders);
          acc += h.object >= 0 ? h.color : scene.sky;
        }
      set_pixel(out.rgb, x, y, acc / double(ss * ss));
      const Eigen::Vector3d dir = world_from_cam * Eigen::Vector3d((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      const RayHit h = cast_ray(scene, frame, origin, dir, with_occluders);
      if (h.object >= 0) out.depth.at(x, y) = h.t;  // camera-frame direction has unit z
      out.occluder(x, y) = h.object >= kOccluderIdBase;
    }
  });
  return out;
}

// ---------------------------------------------------------------------------------------------
// Capture generation

struct SyntheticCapture {
  CaptureSequence sequence;                 // images include occluders and exposure
  std::vector<RgbImage> ground_truth;       // same views without occluders, same exposure
  std::vector<DepthMap> background_depth;   // center-ray depth without occluders
  std::vector<DepthMap> scene_depth;        // with occluders
  std::vector<Mask> occluder_masks;         // undilated
  std::vector<std::vector<int>> point_object_ids;
  std::vector<double> gains, biases;
};

inline double camera_hfov_deg(const Intrinsics& k) {
  return (std::atan(k.cx / k.fx) + std::atan((k.width - 1 - k.cx) / k.fx)) * 180 / M_PI;
}

/// Lidar sweep from the camera center, points in the camera (sensor) frame.
inline PointCloud simulate_lidar(const SceneSpec& scene, int frame, std::vector<int>& ids) {
  const LidarModel& l = scene.lidar;
  const Intrinsics& k = scene.intrinsics;
  const double hfov = (l.hfov_deg > 0 ? l.hfov_deg : camera_hfov_deg(k)) * M_PI / 180;
  const double az_center = (std::atan(k.cx / k.fx) - std::atan((k.width - 1 - k.cx) / k.fx)) * -0.5;
  const Pose pose = scene.trajectory[frame].camera_from_world();
  const Eigen::Matrix3d world_from_cam = pose.rotation.transpose();
  const Eigen::Vector3d origin = scene.trajectory[frame].position;
  std::mt19937_64 rng(scene.seed * 0x9E3779B97F4A7C15ull + 7919ull * (frame + 1));
  std::normal_distribution<double> noise(0.0, l.noise_sigma);

  PointCloud cloud;
  ids.clear();
  for (int r = 0; r < l.rings; ++r) {
    const double el = (l.rings == 1 ? l.vfov_min_deg
                                    : l.vfov_min_deg + (l.vfov_max_deg - l.vfov_min_deg) * r / (l.rings - 1)) *
                      M_PI / 180;
    for (int j = 0; j < l.points_per_ring; ++j) {
      const double az = az_center - hfov / 2 + hfov * (j + 0.5) / l.points_per_ring;
      const Eigen::Vector3d dir_cam(std::cos(el) * std::sin(az), -std::sin(el), std::cos(el) * std::cos(az));
      const RayHit h = cast_ray(scene, frame, origin, world_from_cam * dir_cam, true);
      const double n = l.noise_sigma > 0 ? noise(rng) : 0.0;
      if (h.object < 0 || h.t > l.max_range) continue;
      // Stored at float precision, which is what the PLY files hold.
      cloud.push_back((dir_cam * (h.t + n)).cast<float>().cast<double>());
      ids.push_back(h.object);
    }
  }
  return cloud;
}

inline SyntheticCapture render_sequence(const SceneSpec& scene) {
  scene.validate();
  const int n = scene.frame_count();
  for (int f = 0; f < n; ++f) {
    const Eigen::Vector3d c = scene.trajectory[f].position;
    for (const auto& b : scene.boxes)
      if (detail::inside_box(b.pose, b.half_extent, c))
        throw ConfigError("scene: camera " + std::to_string(f) + " is inside a static box");
    for (const auto& o : scene.occluders)
      if (detail::inside_box(o.poses[f], o.half_extent, c))
        throw ConfigError("scene: camera " + std::to_string(f) + " is inside an occluder");
  }

  SyntheticCapture cap;
  cap.sequence.frames.resize(n);
  cap.sequence.clouds.resize(n);
  cap.point_object_ids.resize(n);
  std::mt19937_64 rng(scene.seed ^ 0xD1B54A32D192ED03ull);
  std::uniform_real_distribution<double> gain(scene.exposure.gain_min, scene.exposure.gain_max);
  std::uniform_real_distribution<double> bias(scene.exposure.bias_min, scene.exposure.bias_max);

  for (int f = 0; f < n; ++f) {
    const double g = scene.exposure.enabled ? gain(rng) : 1.0;
    const double b = scene.exposure.enabled ? bias(rng) : 0.0;
    cap.gains.push_back(g);
    cap.biases.push_back(b);
    auto expose = [&](RgbImage& img) {
      if (!scene.exposure.enabled) return;
      for (auto& v : img.data()) v = to_u8(g * v + b);
    };

    RenderedFrame with = render_view(scene, f, true);
    RenderedFrame without = render_view(scene, f, false);
    expose(with.rgb);
    expose(without.rgb);

    FramePacket& fp = cap.sequence.frames[f];
    fp.index = f;
    fp.rgb = std::move(with.rgb);
    fp.intrinsics = scene.intrinsics;
    // Quaternion form, so that the poses.txt round trip is exact.
    const Pose cfw = scene.trajectory[f].camera_from_world();
    const Pose wfs = Pose::from_quaternion(cfw.inverse().quaternion(), cfw.inverse().translation);
    fp.camera_from_world = wfs.inverse();
    fp.mask = dilate(with.occluder, scene.mask_dilate_px);
    cap.occluder_masks.push_back(with.occluder);
    cap.ground_truth.push_back(std::move(without.rgb));
    cap.background_depth.push_back(std::move(without.depth));
    cap.scene_depth.push_back(std::move(with.depth));
    cap.sequence.clouds[f] = simulate_lidar(scene, f, cap.point_object_ids[f]);
    cap.sequence.world_from_sensor.push_back(wfs);
  }
  return cap;
}

/// Fraction of masked pixels whose ground-truth background point shows, unmasked and not
/// hidden by static geometry, in at least one other frame.
inline double background_visibility(const SyntheticCapture& cap) {
  const auto& frames = cap.sequence.frames;
  std::size_t total = 0, seen = 0;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const FramePacket& ft = frames[t];
    for (int y = 0; y < ft.height(); ++y)
      for (int x = 0; x < ft.width(); ++x) {
        if (!ft.masked(x, y)) continue;
        ++total;
        const double d = cap.background_depth[t].at(x, y);
        if (d <= 0) continue;
        const Eigen::Vector3d p = unproject_pixel(x, y, d, ft.camera_from_world, ft.intrinsics);
        for (std::size_t s = 0; s < frames.size(); ++s) {
          if (s == t) continue;
          const auto proj = project_point(p, frames[s].camera_from_world, frames[s].intrinsics);
          if (!proj) continue;
          const int u = round_half_up(proj->u), v = round_half_up(proj->v);
          if (!frames[s].mask.in_bounds(u, v) || frames[s].masked(u, v)) continue;
          const double ds = cap.background_depth[s].at(u, v);
          if (ds <= 0 || std::abs(ds - proj->z) > std::max(0.05, 0.02 * ds)) continue;
          ++seen;
          break;
        }
      }
  }
  return total ? double(seen) / double(total) : 1.0;
}

// ---------------------------------------------------------------------------------------------
// Scene presets

struct StreetOptions {
  int frames = 20;
  int width = 320, height = 240;
  bool exposure = false;
  double speed = 0.35;  // camera meters per frame
};

namespace detail {

inline Texture noise_texture(std::mt19937_64& rng, Color a, Color b, double scale) {
  std::uniform_real_distribution<double> jitter(-12, 12);
  Texture t;
  t.kind = TextureKind::kNoise;
  t.scale = scale;
  t.color_a = a + Color(jitter(rng), jitter(rng), jitter(rng));
  t.color_b = b + Color(jitter(rng), jitter(rng), jitter(rng));
  t.seed = static_cast<std::uint32_t>(rng());
  return t;
}

inline Intrinsics default_intrinsics(int w, int h) {
  const double f = 0.866 * w;  // ~60 degree horizontal field of view
  return {f, f, (w - 1) / 2.0, (h - 1) / 2.0, w, h};
}

/// Ground, two side walls, far wall and a few static boxes.
inline void add_street_geometry(SceneSpec& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0, 1);
  QuadSurface ground;
  ground.origin = {-7, 1.5, -10};
  ground.edge_u = {14, 0, 0};
  ground.edge_v = {0, 0, 70};
  ground.texture = noise_texture(rng, {70, 72, 75}, {150, 145, 140}, 0.45 + 0.2 * u01(rng));
  s.planes.push_back(ground);

  QuadSurface left;
  left.origin = {-5.5, -5, -10};
  left.edge_u = {0, 0, 70};
  left.edge_v = {0, 6.5, 0};
  left.texture = noise_texture(rng, {120, 70, 55}, {200, 160, 120}, 0.5 + 0.3 * u01(rng));
  s.planes.push_back(left);

  QuadSurface right = left;
  right.origin = {5.5, -5, -10};
  right.texture = noise_texture(rng, {60, 90, 120}, {170, 190, 210}, 0.5 + 0.3 * u01(rng));
  s.planes.push_back(right);

  QuadSurface far;
  far.origin = {-7, -7, 45};
  far.edge_u = {14, 0, 0};
  far.edge_v = {0, 8.5, 0};
  far.texture = noise_texture(rng, {80, 110, 70}, {190, 200, 150}, 0.8 + 0.4 * u01(rng));
  s.planes.push_back(far);

  for (int i = 0; i < 2; ++i) {
    BoxSurface b;
    const double side = i == 0 ? -1 : 1;
    b.half_extent = {0.6, 0.8 + 0.4 * u01(rng), 0.8 + 0.6 * u01(rng)};
    b.pose.center = {side * (4.6 - 0.2 * u01(rng)), 1.5 - b.half_extent.y(), 20 + 12 * u01(rng)};
    b.texture = noise_texture(rng, {150, 120, 40}, {230, 210, 120}, 0.3 + 0.2 * u01(rng));
    s.boxes.push_back(b);
  }
}

inline std::vector<CameraPlacement> straight_trajectory(int frames, Eigen::Vector3d start, double speed,
                                                        double pitch_deg) {
  std::vector<CameraPlacement> traj;
  for (int f = 0; f < frames; ++f) traj.push_back({start + Eigen::Vector3d(0, 0, speed * f), 0.0, pitch_deg});
  return traj;
}

}  // namespace detail

/// Forward-moving camera down a street with one vehicle-sized box crossing in front of it.
/// Every occluded background point shows up in some other frame.
inline SceneSpec street_scene(std::uint64_t seed, const StreetOptions& opt = {}) {
  std::mt19937_64 rng(seed * 7777 + 17);
  std::uniform_real_distribution<double> u01(0, 1);
  SceneSpec s;
  s.seed = seed;
  s.intrinsics = detail::default_intrinsics(opt.width, opt.height);
  s.exposure.enabled = opt.exposure;
  detail::add_street_geometry(s, rng);
  s.trajectory = detail::straight_trajectory(opt.frames, {0.3 * (u01(rng) - 0.5), 0, 0}, opt.speed, -4.0);

  OccluderTrack car;
  car.half_extent = {0.9, 0.7 + 0.1 * u01(rng), 1.9 + 0.3 * u01(rng)};
  car.texture = detail::noise_texture(rng, {160, 30, 30}, {230, 90, 80}, 0.4);
  const double dir = u01(rng) < 0.5 ? -1.0 : 1.0;
  const double z0 = 11 + 3 * u01(rng);
  const double travel = 14.0 + 4 * u01(rng);  // about 0.8 m per frame, a city-speed car at 10 Hz
  for (int f = 0; f < opt.frames; ++f) {
    const double a = opt.frames > 1 ? double(f) / (opt.frames - 1) : 0.0;
    BoxPose p;
    p.center = {dir * (-travel / 2 + travel * a), 1.5 - car.half_extent.y(), z0 + 0.15 * opt.speed * f};
    p.yaw_deg = 90;  // driving across the street
    car.poses.push_back(p);
  }
  s.occluders.push_back(car);
  return s;
}

/// Two captures of one street. The first (`persistent`) follows a vehicle that stays ahead of
/// the camera for the whole clip; the second (`clear`) drives a laterally offset path with a
/// crossing vehicle elsewhere. `clear` poses live in a world frame offset by `odometry_offset`.
struct DualCapture {
  SceneSpec persistent;
  SceneSpec clear;
  Pose odometry_offset;  // clear-capture world <- true world
};

inline DualCapture dual_street_scene(std::uint64_t seed, const StreetOptions& opt = {}) {
  std::mt19937_64 rng(seed * 9173 + 5);
  std::uniform_real_distribution<double> u01(0, 1);
  DualCapture dc;
  SceneSpec base;
  base.seed = seed;
  base.intrinsics = detail::default_intrinsics(opt.width, opt.height);
  base.exposure.enabled = opt.exposure;
  detail::add_street_geometry(base, rng);

  dc.persistent = base;
  dc.persistent.trajectory = detail::straight_trajectory(opt.frames, {0, 0, 0}, opt.speed, -4.0);
  OccluderTrack lead;
  lead.half_extent = {0.95, 0.8, 2.2};
  lead.texture = detail::noise_texture(rng, {30, 40, 140}, {90, 110, 220}, 0.4);
  for (int f = 0; f < opt.frames; ++f)
    lead.poses.push_back({Eigen::Vector3d(0.2, 1.5 - lead.half_extent.y(), 9.0 + opt.speed * f), 0.0});
  dc.persistent.occluders.push_back(lead);

  dc.clear = base;
  dc.clear.seed = seed + 1000;
  dc.clear.trajectory = detail::straight_trajectory(opt.frames, {-1.0, 0, 2.0}, opt.speed, -4.0);
  OccluderTrack crossing;
  crossing.half_extent = {0.9, 0.7, 2.0};
  crossing.texture = detail::noise_texture(rng, {40, 140, 40}, {120, 220, 120}, 0.4);
  for (int f = 0; f < opt.frames; ++f)
    crossing.poses.push_back({Eigen::Vector3d(-4.6 + 0.05 * f, 1.5 - crossing.half_extent.y(), 6.0 + 0.4 * f), 0.0});
  dc.clear.occluders.push_back(crossing);

  dc.odometry_offset = Pose(Eigen::AngleAxisd(1.5 * M_PI / 180, Eigen::Vector3d(0.2, 1, 0.1).normalized()).toRotationMatrix(),
                            Eigen::Vector3d(0.25, -0.05, 0.2));
  return dc;
}

/// Re-expresses a capture's trajectory in another world frame: world' = offset * world.
inline void apply_odometry_offset(CaptureSequence& seq, const Pose& offset) {
  for (auto& p : seq.world_from_sensor) p = offset * p;
  seq.sync_camera_poses();
}

// ---------------------------------------------------------------------------------------------
// Metrics

struct MetricsReport {
  double mae = 0;
  double rmse = 0;
  double psnr = 0;  // +inf when the error is zero
  double ssim = 1;
  std::size_t pixels = 0;
};

namespace detail {

inline std::array<double, 121> ssim_kernel() {
  std::array<double, 121> k{};
  double sum = 0;
  for (int dy = -5; dy <= 5; ++dy)
    for (int dx = -5; dx <= 5; ++dx) {
      const double v = std::exp(-(dx * dx + dy * dy) / (2 * 1.5 * 1.5));
      k[(dy + 5) * 11 + (dx + 5)] = v;
      sum += v;
    }
  for (double& v : k) v /= sum;
  return k;
}

/// SSIM at one center for one channel; the window is truncated at the image border and its
/// weights renormalized.
inline double ssim_at(const RgbImage& a, const RgbImage& b, int x, int y, int c, const std::array<double, 121>& k) {
  constexpr double c1 = (0.01 * 255) * (0.01 * 255), c2 = (0.03 * 255) * (0.03 * 255);
  double w = 0, ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
  for (int dy = -5; dy <= 5; ++dy)
    for (int dx = -5; dx <= 5; ++dx) {
      const int xx = x + dx, yy = y + dy;
      if (!a.in_bounds(xx, yy)) continue;
      const double kw = k[(dy + 5) * 11 + (dx + 5)];
      const double va = a(xx, yy, c), vb = b(xx, yy, c);
      w += kw;
      ma += kw * va;
      mb += kw * vb;
      saa += kw * va * va;
      sbb += kw * vb * vb;
      sab += kw * va * vb;
    }
  ma /= w;
  mb /= w;
  const double va = saa / w - ma * ma, vb = sbb / w - mb * mb, cov = sab / w - ma * mb;
  return ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

}  // namespace detail

/// MAE / RMSE / PSNR over all channels of the masked pixels; SSIM (11x11 Gaussian window,
/// sigma 1.5, K1 0.01, K2 0.03) averaged over masked window centers and channels.
inline MetricsReport evaluate(const std::vector<RgbImage>& results, const std::vector<RgbImage>& truth,
                              const std::vector<Mask>& masks) {
  if (results.size() != truth.size() || results.size() != masks.size())
    throw std::invalid_argument("evaluate: frame count mismatch");
  const auto kernel = detail::ssim_kernel();
  double abs_sum = 0, sq_sum = 0, ssim_sum = 0;
  std::size_t pixels = 0;
  for (std::size_t f = 0; f < results.size(); ++f) {
    const RgbImage& a = results[f];
    const RgbImage& b = truth[f];
    const Mask& m = masks[f];
    if (!a.same_shape(b) || !a.same_shape(m) || a.channels() != 3 || b.channels() != 3)
      throw std::invalid_argument("evaluate: dimension mismatch in frame " + std::to_string(f));
    for (int y = 0; y < a.height(); ++y)
      for (int x = 0; x < a.width(); ++x) {
        if (!m(x, y)) continue;
        ++pixels;
        for (int c = 0; c < 3; ++c) {
          const double e = double(a(x, y, c)) - double(b(x, y, c));
          abs_sum += std::abs(e);
          sq_sum += e * e;
          ssim_sum += detail::ssim_at(a, b, x, y, c, kernel);
        }
      }
  }
  if (pixels == 0) throw std::invalid_argument("evaluate: empty mask");
  MetricsReport r;
  r.pixels = pixels;
  const double n = 3.0 * double(pixels);
  r.mae = abs_sum / n;
  const double mse = sq_sum / n;
  r.rmse = std::sqrt(mse);
  r.psnr = mse > 0 ? 10.0 * std::log10(255.0 * 255.0 / mse) : std::numeric_limits<double>::infinity();
  r.ssim = ssim_sum / n;
  return r;
}

/// Aligned text table with the columns MAE, RMSE, PSNR, SSIM.
inline std::string format_metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::size_t name_w = 6;
  for (const auto& r : rows) name_w = std::max(name_w, r.first.size());
  std::ostringstream os;
  os << std::left << std::setw(int(name_w)) << "Method" << std::right << std::setw(10) << "MAE" << std::setw(10)
     << "RMSE" << std::setw(10) << "PSNR" << std::setw(10) << "SSIM" << "\n";
  os << std::fixed << std::setprecision(3);
  for (const auto& [name, m] : rows) {
    os << std::left << std::setw(int(name_w)) << name << std::right << std::setw(10) << m.mae << std::setw(10)
       << m.rmse << std::setw(10);
    if (std::isinf(m.psnr))
      os << "inf";
    else
      os << m.psnr;
    os << std::setw(10) << m.ssim << "\n";
  }
  return os.str();
}

}  // namespace rgbdi
