#include "test_util.hpp"

#include <gtest/gtest.h>

#include <map>
#include <random>

using namespace rgbdi;
using namespace rgbdi::testing;

namespace {

/// Corner of a room with a ball in it: enough curvature and orientations to pin all six DoF.
PointCloud room_cloud(std::uint32_t seed, int n = 4000) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0, 4), a(0, 2 * M_PI), b(-1, 1);
  PointCloud c;
  for (int i = 0; i < n; ++i) {
    switch (i % 4) {
      case 0: c.push_back({u(rng), 0, u(rng)}); break;           // floor
      case 1: c.push_back({0, u(rng), u(rng)}); break;           // wall
      case 2: c.push_back({u(rng), u(rng), 0}); break;           // wall
      default: {
        const double phi = a(rng), z = b(rng), r = std::sqrt(1 - z * z);
        c.push_back(Eigen::Vector3d(2, 1.2, 2) + 0.8 * Eigen::Vector3d(r * std::cos(phi), r * std::sin(phi), z));
      }
    }
  }
  return c;
}

Pose random_pose(std::mt19937& rng, double trans, double deg) {
  std::normal_distribution<double> g(0, 1);
  const Eigen::Vector3d axis = Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized();
  const Eigen::Vector3d dir = Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized();
  return Pose(Eigen::AngleAxisd(deg * M_PI / 180, axis).toRotationMatrix(), dir * trans);
}

FramePacket blank_frame(int w = 64, int h = 48) {
  FramePacket f;
  f.rgb = RgbImage(w, h, 3);
  f.mask = Mask(w, h);
  f.intrinsics = small_intrinsics(w, h);
  return f;
}

}  // namespace

TEST(RemoveDynamic, EmptyMaskKeepsEverything) {
  const PointCloud c = room_cloud(1, 500).transformed(Pose(Eigen::Matrix3d::Identity(), {-2, -2, 1}));
  const PointCloud out = remove_dynamic_points(c, blank_frame());
  EXPECT_EQ(out.points, c.points);
}

TEST(RemoveDynamic, FullMaskKeepsOnlyOutOfViewPoints) {
  FramePacket f = blank_frame();
  fill_rect(f.mask, 0, 0, 64, 48);
  PointCloud c;
  c.push_back({0, 0, 2});      // in view
  c.push_back({0, 0, -2});     // behind
  c.push_back({100, 0, 2});    // outside the image
  c.push_back({0.1, 0.1, 3});  // in view
  const PointCloud out = remove_dynamic_points(c, f);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out.points[0], Eigen::Vector3d(0, 0, -2));
  EXPECT_EQ(out.points[1], Eigen::Vector3d(100, 0, 2));
}

TEST(RemoveDynamic, IdempotentAndOrderPreserving) {
  FramePacket f = blank_frame();
  fill_rect(f.mask, 10, 10, 40, 30);
  PointCloud c = room_cloud(2, 2000).transformed(Pose(Eigen::Matrix3d::Identity(), {-2, -2, 1}));
  for (std::size_t i = 0; i < c.size(); ++i) c.colors.push_back({std::uint8_t(i % 256), 0, 0});
  const PointCloud once = remove_dynamic_points(c, f);
  const PointCloud twice = remove_dynamic_points(once, f);
  EXPECT_EQ(once.points, twice.points);
  EXPECT_EQ(once.colors, twice.colors);
  EXPECT_LT(once.size(), c.size());
  // Survivors keep their relative order.
  std::size_t j = 0;
  for (std::size_t i = 0; i < c.size() && j < once.size(); ++i)
    if (c.points[i] == once.points[j]) ++j;
  EXPECT_EQ(j, once.size());
}

TEST(RemoveDynamic, SyntheticOccluderPointsRemoved) {
  StreetOptions so;
  so.frames = 3;
  so.width = 160;
  so.height = 120;
  const SyntheticCapture cap = render_sequence(street_scene(4, so));
  std::size_t occ = 0, bg = 0, bg_kept = 0;
  for (std::size_t f = 0; f < cap.sequence.size(); ++f) {
    const auto& frame = cap.sequence.frames[f];
    const PointCloud& cloud = cap.sequence.clouds[f];
    const PointCloud kept = remove_dynamic_points(cloud, frame);
    std::map<std::tuple<double, double, double>, int> kept_set;
    for (const auto& p : kept.points) kept_set[{p.x(), p.y(), p.z()}]++;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const bool survived = kept_set.count({cloud.points[i].x(), cloud.points[i].y(), cloud.points[i].z()}) > 0;
      if (cap.point_object_ids[f][i] >= kOccluderIdBase) {
        ++occ;
        EXPECT_FALSE(survived);
      } else {
        ++bg;
        bg_kept += survived;
      }
    }
  }
  EXPECT_GT(occ, 0u);
  // The mask is dilated by a couple of pixels, so a thin band of background goes with the car.
  EXPECT_GT(double(bg_kept) / double(bg), 0.95);
}

TEST(VoxelDownsample, OneRepresentativeNearestCentroid) {
  PointCloud c;
  c.push_back({0.01, 0.01, 0.01});
  c.push_back({0.05, 0.05, 0.05});
  c.push_back({0.09, 0.09, 0.09});
  c.push_back({0.15, 0.0, 0.0});
  const PointCloud d = voxel_downsample(c, 0.1);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.points[0], Eigen::Vector3d(0.05, 0.05, 0.05));
  EXPECT_EQ(d.points[1], Eigen::Vector3d(0.15, 0.0, 0.0));
  EXPECT_EQ(voxel_downsample(c, 0.0).size(), 4u);
}

TEST(VoxelDownsample, NoTwoPointsShareAVoxel) {
  const PointCloud d = voxel_downsample(room_cloud(3), 0.1);
  std::set<std::array<long long, 3>> keys;
  for (const auto& p : d.points) {
    std::array<long long, 3> k;
    for (int a = 0; a < 3; ++a) k[a] = static_cast<long long>(std::floor(p[a] / 0.1));
    EXPECT_TRUE(keys.insert(k).second);
  }
}

TEST(StitchMap, SingleFrameAtIdentity) {
  CaptureSequence seq;
  seq.frames.push_back(blank_frame());
  fill_rect(seq.frames[0].mask, 20, 20, 30, 30);
  seq.clouds.push_back(room_cloud(4, 1000).transformed(Pose(Eigen::Matrix3d::Identity(), {-2, -2, 1})));
  seq.world_from_sensor.push_back(Pose::identity());
  seq.sync_camera_poses();
  const PointCloud expect = voxel_downsample(remove_dynamic_points(seq.clouds[0], seq.frames[0]), 0.05);
  EXPECT_EQ(stitch_map(seq).points, expect.points);
}

TEST(StitchMap, TwoFramesOfAPlaneStayOnThePlane) {
  // World plane z = 6. Each frame sees it from its own pose; points are given in the sensor frame.
  CaptureSequence seq;
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-2, 2);
  const std::vector<Pose> wfs{Pose::identity(),
                              Pose(Eigen::AngleAxisd(0.05, Eigen::Vector3d::UnitY()).toRotationMatrix(), {0.3, 0, 1})};
  for (int f = 0; f < 2; ++f) {
    FramePacket fr = blank_frame();
    fr.index = f;
    seq.frames.push_back(fr);
    PointCloud c;
    for (int i = 0; i < 500; ++i) c.push_back(wfs[f].inverse() * Eigen::Vector3d(u(rng), u(rng), 6.0));
    seq.clouds.push_back(c);
    seq.world_from_sensor.push_back(wfs[f]);
  }
  seq.sync_camera_poses();
  StitchOptions o;
  o.voxel_size = 0;
  const PointCloud m = stitch_map(seq, o);
  EXPECT_EQ(m.size(), 1000u);
  for (const auto& p : m.points) EXPECT_NEAR(p.z(), 6.0, 1e-6);
}

TEST(StitchMap, MissingPoseNamesTheFrame) {
  CaptureSequence seq;
  for (int f = 0; f < 3; ++f) {
    FramePacket fr = blank_frame();
    fr.index = f + 7;
    seq.frames.push_back(fr);
    seq.clouds.push_back(room_cloud(f, 100));
  }
  seq.world_from_sensor.assign(2, Pose::identity());
  try {
    stitch_map(seq);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("frame 9"), std::string::npos) << e.what();
  }
}

TEST(StitchMap, InvariantUnderFramePermutation) {
  CaptureSequence a, b;
  std::mt19937 rng(6);
  for (int f = 0; f < 3; ++f) {
    FramePacket fr = blank_frame();
    fr.index = f;
    a.frames.push_back(fr);
    a.clouds.push_back(room_cloud(10 + f, 800));
    a.world_from_sensor.push_back(random_pose(rng, 0.5, 3));
  }
  for (int f : {2, 0, 1}) {
    b.frames.push_back(a.frames[f]);
    b.clouds.push_back(a.clouds[f]);
    b.world_from_sensor.push_back(a.world_from_sensor[f]);
  }
  StitchOptions o;
  o.voxel_size = 0.2;
  const PointCloud ma = stitch_map(a, o), mb = stitch_map(b, o);
  ASSERT_EQ(ma.size(), mb.size());
  // Same occupied voxels; the representative is the one nearest the voxel centroid either way.
  for (std::size_t i = 0; i < ma.size(); ++i) EXPECT_LT((ma.points[i] - mb.points[i]).norm(), 1e-9);
}

TEST(KdTree, MatchesBruteForce) {
  const PointCloud c = room_cloud(7, 3000);
  const KdTree tree(c.points);
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> u(-1, 5);
  for (int q = 0; q < 200; ++q) {
    const Eigen::Vector3d p(u(rng), u(rng), u(rng));
    std::vector<std::pair<double, int>> all;
    for (std::size_t i = 0; i < c.size(); ++i) all.push_back({(c.points[i] - p).squaredNorm(), int(i)});
    std::sort(all.begin(), all.end());
    double d2 = 0;
    EXPECT_EQ(tree.nearest(p, &d2), all[0].second);
    EXPECT_DOUBLE_EQ(d2, all[0].first);
    const auto k = tree.knn(p, 10);
    ASSERT_EQ(k.size(), 10u);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(k[i], all[i].second);
  }
  EXPECT_EQ(KdTree({}).nearest({0, 0, 0}), -1);
}

TEST(Register, IdentityOnSelf) {
  const PointCloud c = room_cloud(9);
  const RegistrationResult r = register_cloud(c, c);
  EXPECT_LT(r.rms_residual, 1e-9);
  EXPECT_LT(r.transform.translation.norm(), 1e-9);
  EXPECT_LT(rotation_angle_deg(r.transform.rotation, Eigen::Matrix3d::Identity()), 1e-6);
  EXPECT_DOUBLE_EQ(r.inlier_fraction, 1.0);
}

TEST(Register, RecoversKnownTransform) {
  const PointCloud src = room_cloud(10);
  const Pose truth(Eigen::AngleAxisd(5 * M_PI / 180, Eigen::Vector3d(1, 2, 0.5).normalized()).toRotationMatrix(),
                   Eigen::Vector3d(0.3, -0.3, 0.2).normalized() * 0.5);
  const RegistrationResult r = register_cloud(src, src.transformed(truth));
  EXPECT_LT((r.transform.translation - truth.translation).norm(), 1e-3);
  EXPECT_LT(rotation_angle_deg(r.transform.rotation, truth.rotation), 0.05);
  EXPECT_LE(r.rms_residual, r.initial_rms_residual);
  EXPECT_GE(r.inlier_fraction, 0.0);
  EXPECT_LE(r.inlier_fraction, 1.0);
}

TEST(Register, SinglePlaneIsUnconstrained) {
  PointCloud plane;
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(0, 4);
  for (int i = 0; i < 1000; ++i) plane.push_back({u(rng), u(rng), 2.0});
  EXPECT_THROW(register_cloud(plane, plane), RegistrationError);
}

TEST(Register, TooFewPoints) {
  const PointCloud small = room_cloud(12, 50), big = room_cloud(12, 500);
  EXPECT_THROW(register_cloud(small, big), std::invalid_argument);
  EXPECT_THROW(register_cloud(big, small), std::invalid_argument);
}

TEST(Register, ResidualNeverAboveInitial) {
  std::mt19937 rng(13);
  const PointCloud src = room_cloud(14, 2000);
  const PointCloud tgt = room_cloud(15, 2000);  // same surfaces, different samples
  for (int i = 0; i < 5; ++i) {
    const RegistrationResult r = register_cloud(src, tgt, random_pose(rng, 0.3, 3));
    EXPECT_LE(r.rms_residual, r.initial_rms_residual);
  }
}

TEST(Register, NormalsArePlaneNormals) {
  PointCloud c;
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) c.push_back({0.1 * x, 0.1 * y, 1.0});
  const KdTree tree(c.points);
  for (const auto& n : estimate_normals(c, tree, 20)) EXPECT_NEAR(std::abs(n.z()), 1.0, 1e-9);
}

namespace {

CaptureSequence small_street(std::uint64_t seed) {
  StreetOptions so;
  so.frames = 4;
  so.width = 160;
  so.height = 120;
  return render_sequence(street_scene(seed, so)).sequence;
}

}  // namespace

TEST(Fuse, SelfFusionKeepsPoses) {
  const CaptureSequence seq = small_street(21);
  const PointCloud base = stitch_map(seq);
  const FuseResult r = fuse_maps(base, seq);
  ASSERT_EQ(r.world_from_sensor.size(), seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    EXPECT_LT((r.world_from_sensor[i].translation - seq.world_from_sensor[i].translation).norm(), 1e-3);
    EXPECT_LT(rotation_angle_deg(r.world_from_sensor[i].rotation, seq.world_from_sensor[i].rotation), 1e-3);
  }
  EXPECT_GT(r.overlap, 0.99);
  EXPECT_LE(r.merged.size(), base.size() + base.size() / 100);
}

TEST(Fuse, OffsetBeyondBasinFails) {
  const CaptureSequence seq = small_street(22);
  const PointCloud base = stitch_map(seq);
  const Pose far(Eigen::AngleAxisd(40 * M_PI / 180, Eigen::Vector3d::UnitY()).toRotationMatrix(), {15, 0, 20});
  EXPECT_THROW(fuse_maps(base, seq, far), RegistrationError);
}

TEST(Fuse, RecoversOdometryOffset) {
  StreetOptions so;
  so.frames = 6;
  so.width = 160;
  so.height = 120;
  const DualCapture dc = dual_street_scene(3, so);
  const CaptureSequence a = render_sequence(dc.persistent).sequence;
  CaptureSequence b = render_sequence(dc.clear).sequence;
  const std::vector<Pose> truth = b.world_from_sensor;
  apply_odometry_offset(b, dc.odometry_offset);
  const FuseResult r = fuse_maps(stitch_map(a), b);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    EXPECT_LT((r.world_from_sensor[i].translation - truth[i].translation).norm(), 0.02);
    EXPECT_LT(rotation_angle_deg(r.world_from_sensor[i].rotation, truth[i].rotation), 0.2);
  }
}
