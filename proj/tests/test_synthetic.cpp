#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace rgbdi;
using namespace rgbdi::testing;

namespace {

/// Checkerboard plane at z = 5 facing a camera at the origin, two frames.
SceneSpec plane_scene(int frames = 2) {
  SceneSpec s;
  s.intrinsics = {80, 80, 31.5, 23.5, 64, 48};
  QuadSurface q;
  q.origin = {-10, -10, 5};
  q.edge_u = {20, 0, 0};
  q.edge_v = {0, 20, 0};
  q.texture = {TextureKind::kChecker, 0.5, {30, 30, 30}, {220, 220, 220}, 0};
  s.planes.push_back(q);
  s.trajectory.assign(frames, CameraPlacement{});
  s.lidar.rings = 8;
  s.lidar.points_per_ring = 40;
  s.lidar.noise_sigma = 0;
  s.seed = 5;
  return s;
}

OccluderTrack red_box(int frames) {
  OccluderTrack o;
  o.half_extent = {0.5, 0.4, 0.3};
  o.texture = {TextureKind::kConstant, 1.0, {255, 0, 0}, {255, 0, 0}, 0};
  o.poses.assign(frames, BoxPose{{0.3, 0.1, 2.5}, 0});
  return o;
}

// Masks and RGB frames share one image type.
std::vector<RgbImage> one(const RgbImage& a) { return {a}; }

}  // namespace

TEST(Render, NoOccludersMatchesGroundTruth) {
  const SyntheticCapture cap = render_sequence(plane_scene());
  for (std::size_t f = 0; f < cap.ground_truth.size(); ++f) {
    EXPECT_EQ(cap.sequence.frames[f].rgb.data(), cap.ground_truth[f].data());
    EXPECT_EQ(count_set(cap.sequence.frames[f].mask), 0u);
  }
}

TEST(Render, FrontoParallelPlaneDepthIsFive) {
  const SyntheticCapture cap = render_sequence(plane_scene(1));
  const DepthMap& d = cap.background_depth[0];
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x) EXPECT_NEAR(d.at(x, y), 5.0, 1e-9);
}

TEST(Render, OccluderMaskIsWhereBoxRaysHitFirst) {
  SceneSpec s = plane_scene(1);
  s.occluders.push_back(red_box(1));
  s.supersample = 1;
  s.mask_dilate_px = 0;
  const SyntheticCapture cap = render_sequence(s);
  const RgbImage& img = cap.sequence.frames[0].rgb;
  const Mask& m = cap.occluder_masks[0];
  ASSERT_GT(count_set(m), 0u);
  // The box is painted pure red and the plane is gray, so thresholding recovers the mask.
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x) {
      const bool red = img(x, y, 0) == 255 && img(x, y, 1) == 0 && img(x, y, 2) == 0;
      EXPECT_EQ(bool(m(x, y)), red) << x << "," << y;
    }
  EXPECT_EQ(cap.sequence.frames[0].mask.data(), m.data());
}

TEST(Render, MaskDilationCoversOccluder) {
  SceneSpec s = plane_scene(1);
  s.occluders.push_back(red_box(1));
  s.mask_dilate_px = 2;
  const SyntheticCapture cap = render_sequence(s);
  EXPECT_EQ(cap.sequence.frames[0].mask.data(), dilate(cap.occluder_masks[0], 2).data());
}

TEST(Render, LidarPointsLieOnTheirObjects) {
  SceneSpec s = plane_scene(1);
  s.occluders.push_back(red_box(1));
  const SyntheticCapture cap = render_sequence(s);
  const PointCloud& c = cap.sequence.clouds[0];
  ASSERT_EQ(c.size(), cap.point_object_ids[0].size());
  std::size_t plane = 0, box = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (cap.point_object_ids[0][i] == 0) {
      EXPECT_NEAR(c.points[i].z(), 5.0, 1e-5);
      ++plane;
    } else {
      EXPECT_EQ(cap.point_object_ids[0][i], kOccluderIdBase);
      EXPECT_LE(std::abs(c.points[i].x() - 0.3), 0.5 + 1e-5);
      ++box;
    }
  }
  EXPECT_GT(plane, 0u);
  EXPECT_GT(box, 0u);
}

TEST(Render, Deterministic) {
  const SceneSpec s = street_scene(4, {3, 64, 48, true, 0.35});
  const SyntheticCapture a = render_sequence(s), b = render_sequence(s);
  for (int f = 0; f < 3; ++f) {
    EXPECT_EQ(a.sequence.frames[f].rgb.data(), b.sequence.frames[f].rgb.data());
    EXPECT_EQ(a.sequence.clouds[f].points, b.sequence.clouds[f].points);
    EXPECT_EQ(a.gains[f], b.gains[f]);
  }
}

TEST(Render, ExposureWithinModelRange) {
  const SyntheticCapture cap = render_sequence(street_scene(2, {6, 48, 36, true, 0.35}));
  for (std::size_t f = 0; f < cap.gains.size(); ++f) {
    EXPECT_GE(cap.gains[f], 0.9);
    EXPECT_LE(cap.gains[f], 1.1);
    EXPECT_GE(cap.biases[f], -8.0);
    EXPECT_LE(cap.biases[f], 8.0);
  }
}

TEST(Render, CameraInsideGeometryIsRejected) {
  SceneSpec s = plane_scene(1);
  BoxSurface b;
  b.pose.center = {0, 0, 0.2};
  s.boxes.push_back(b);
  EXPECT_THROW(render_sequence(s), ConfigError);
  s.boxes.clear();
  s.occluders.push_back(red_box(1));
  s.occluders[0].poses[0].center = Eigen::Vector3d::Zero();
  EXPECT_THROW(render_sequence(s), ConfigError);
}

TEST(Render, TrackLengthMismatchIsRejected) {
  SceneSpec s = plane_scene(3);
  s.occluders.push_back(red_box(2));
  EXPECT_THROW(s.validate(), ConfigError);
  s = plane_scene(1);
  s.trajectory.clear();
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Render, StreetPresetIsMostlyRecoverable) {
  const SyntheticCapture cap = render_sequence(street_scene(1, {6, 80, 60, false, 0.35}));
  std::size_t masked = 0;
  for (const auto& f : cap.sequence.frames) masked += count_set(f.mask);
  EXPECT_GT(masked, 0u);
  EXPECT_GT(background_visibility(cap), 0.5);
  EXPECT_NO_THROW(cap.sequence.validate());
}

TEST(Metrics, IdenticalImages) {
  const RgbImage a = textured_image(20, 16);
  const MetricsReport r = evaluate(one(a), one(a), one(Mask(20, 16, 1, 1)));
  EXPECT_EQ(r.mae, 0.0);
  EXPECT_EQ(r.rmse, 0.0);
  EXPECT_TRUE(std::isinf(r.psnr));
  EXPECT_DOUBLE_EQ(r.ssim, 1.0);
  EXPECT_EQ(r.pixels, 320u);
}

TEST(Metrics, InvertedBlackAndWhiteGivesZeroPsnr) {
  const MetricsReport r = evaluate(one(RgbImage(8, 8, 3, 0)), one(RgbImage(8, 8, 3, 255)), one(Mask(8, 8, 1, 1)));
  EXPECT_EQ(r.mae, 255.0);
  EXPECT_EQ(r.psnr, 0.0);
}

TEST(Metrics, TwoPixelExample) {
  RgbImage a(4, 4, 3, 0), b(4, 4, 3, 0);
  for (int c = 0; c < 3; ++c) b(2, 1, c) = 255;
  Mask m(4, 4);
  m(1, 1) = m(2, 1) = 1;
  const MetricsReport r = evaluate(one(a), one(b), one(m));
  EXPECT_DOUBLE_EQ(r.mae, 127.5);
  EXPECT_NEAR(r.rmse, 180.312, 5e-4);
  EXPECT_DOUBLE_EQ(r.rmse, 255.0 / std::sqrt(2.0));
}

TEST(Metrics, MaeNeverAboveRmseAndSsimSymmetric) {
  std::mt19937 rng(12);
  for (int i = 0; i < 50; ++i) {
    const RgbImage a = textured_image(16, 12, rng()), b = textured_image(16, 12, rng(), 2.0);
    Mask m(16, 12);
    fill_rect(m, 2, 2, 14, 10);
    const MetricsReport ab = evaluate(one(a), one(b), one(m)), ba = evaluate(one(b), one(a), one(m));
    EXPECT_LE(ab.mae, ab.rmse);
    EXPECT_NEAR(ab.ssim, ba.ssim, 1e-9);
    EXPECT_GE(ab.ssim, -1.0);
    EXPECT_LE(ab.ssim, 1.0);
  }
}

TEST(Metrics, PsnrDecreasesWithGrowingError) {
  const RgbImage truth = textured_image(16, 16);
  const Mask m(16, 16, 1, 1);
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 5; ++k) {
    RgbImage r = truth;
    for (int y = 0; y < 16; y += 2)
      for (int x = 0; x < 2 * k; ++x) r(x, y, 0) = to_u8(r(x, y, 0) + 20.0);
    const double p = evaluate(one(r), one(truth), one(m)).psnr;
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(Metrics, ErrorsOnEmptyMaskOrMismatch) {
  const RgbImage a(8, 8, 3);
  EXPECT_THROW(evaluate(one(a), one(a), one(Mask(8, 8))), std::invalid_argument);
  EXPECT_THROW(evaluate(one(a), one(RgbImage(8, 9, 3)), one(Mask(8, 8, 1, 1))), std::invalid_argument);
  EXPECT_THROW(evaluate(one(a), {}, one(Mask(8, 8, 1, 1))), std::invalid_argument);
}

TEST(Metrics, TableHasFixedColumnOrder) {
  MetricsReport r{1.5, 2.25, std::numeric_limits<double>::infinity(), 0.9, 10};
  const std::string t = format_metrics_table({{"ours", r}});
  EXPECT_LT(t.find("MAE"), t.find("RMSE"));
  EXPECT_LT(t.find("RMSE"), t.find("PSNR"));
  EXPECT_LT(t.find("PSNR"), t.find("SSIM"));
  EXPECT_NE(t.find("2.250"), std::string::npos);
  EXPECT_NE(t.find("inf"), std::string::npos);
}
