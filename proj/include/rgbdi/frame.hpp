#pragma once

#include "rgbdi/geometry.hpp"
#include "rgbdi/image.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rgbdi {

/// Provenance sentinels. Non-negative values are source frame ids.
inline constexpr std::int32_t kNotMasked = -1;
inline constexpr std::int32_t kBlank = -2;

/// One camera frame plus everything the pipeline derives for it.
struct FramePacket {
  int index = 0;
  RgbImage rgb;                 // 3 channels
  Pose camera_from_world;       // world -> camera
  Intrinsics intrinsics;
  Mask mask;                    // 1 = inpaint
  DepthMap depth;               // dense, filled by the pipeline
  Image<std::int32_t> provenance;  // filled by the pipeline

  int width() const { return rgb.width(); }
  int height() const { return rgb.height(); }
  bool masked(int x, int y) const { return mask(x, y) != 0; }

  void validate() const {
    if (rgb.channels() != 3) throw DataError("frame " + std::to_string(index) + ": image must be RGB");
    if (!mask.same_shape(rgb))
      throw DataError("frame " + std::to_string(index) + ": mask dimensions differ from image");
    if (!depth.empty() && (depth.width() != rgb.width() || depth.height() != rgb.height()))
      throw DataError("frame " + std::to_string(index) + ": depth dimensions differ from image");
    for (auto v : mask.data())
      if (v > 1) throw DataError("frame " + std::to_string(index) + ": mask is not binary");
    if (rgb.width() != intrinsics.width || rgb.height() != intrinsics.height)
      throw DataError("frame " + std::to_string(index) + ": image size differs from intrinsics");
  }
};

/// An ordered capture: frames, raw sensor clouds and sensor trajectories.
struct CaptureSequence {
  std::vector<FramePacket> frames;
  std::vector<PointCloud> clouds;          // sensor frame, one per frame
  std::vector<Pose> world_from_sensor;     // one per frame
  Pose camera_from_sensor;                 // fixed extrinsic calibration

  std::size_t size() const { return frames.size(); }

  /// Camera pose implied by the sensor trajectory and the extrinsic.
  Pose camera_from_world(std::size_t i) const {
    return camera_from_sensor * world_from_sensor.at(i).inverse();
  }

  /// Re-derives every frame's camera pose from the sensor trajectory.
  void sync_camera_poses() {
    for (std::size_t i = 0; i < frames.size() && i < world_from_sensor.size(); ++i)
      frames[i].camera_from_world = camera_from_world(i);
  }

  void validate() const {
    for (std::size_t i = 1; i < frames.size(); ++i)
      if (frames[i].index <= frames[i - 1].index)
        throw DataError("frame indices must be strictly increasing (frame " +
                        std::to_string(frames[i].index) + ")");
    if (world_from_sensor.size() != frames.size())
      throw DataError("pose count (" + std::to_string(world_from_sensor.size()) +
                      ") differs from frame count (" + std::to_string(frames.size()) + ")");
    if (!clouds.empty() && clouds.size() != frames.size())
      throw DataError("cloud count differs from frame count");
    for (const auto& f : frames) f.validate();
  }
};

}  // namespace rgbdi
