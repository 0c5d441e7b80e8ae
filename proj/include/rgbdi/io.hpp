#pragma once

#include "rgbdi/common.hpp"
#include "rgbdi/frame.hpp"
#include "rgbdi/geometry.hpp"
#include "rgbdi/image.hpp"
#include "rgbdi/synthetic.hpp"

#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace rgbdi {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------------------------
// PNG

inline std::string frame_name(int index, const char* ext = ".png") {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d%s", index, ext);
  return buf;
}

inline void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

inline void write_png(const fs::path& path, const cv::Mat& m) {
  ensure_parent(path);
  if (!cv::imwrite(path.string(), m, {cv::IMWRITE_PNG_COMPRESSION, 6}))
    throw DataError("cannot write " + path.string());
}

inline void write_rgb_png(const fs::path& path, const RgbImage& img) {
  cv::Mat m(img.height(), img.width(), CV_8UC3);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      auto* px = m.ptr<std::uint8_t>(y) + 3 * x;
      px[0] = img(x, y, 2);
      px[1] = img(x, y, 1);
      px[2] = img(x, y, 0);
    }
  write_png(path, m);
}

inline RgbImage read_rgb_png(const fs::path& path) {
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw DataError("cannot read image " + path.string());
  RgbImage img(m.cols, m.rows, 3);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) {
      const auto* px = m.ptr<std::uint8_t>(y) + 3 * x;
      img(x, y, 0) = px[2];
      img(x, y, 1) = px[1];
      img(x, y, 2) = px[0];
    }
  return img;
}

/// Binary masks are stored as 0 / 255.
inline void write_mask_png(const fs::path& path, const Mask& mask) {
  cv::Mat m(mask.height(), mask.width(), CV_8UC1);
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) m.at<std::uint8_t>(y, x) = mask(x, y) ? 255 : 0;
  write_png(path, m);
}

/// Reads a 0/255 (or 0/1) mask; anything else is rejected.
inline Mask read_mask_png(const fs::path& path) {
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw DataError("cannot read mask " + path.string());
  if (m.depth() != CV_8U || m.channels() != 1) throw DataError("mask is not 8-bit single channel: " + path.string());
  Mask out(m.cols, m.rows);
  bool has255 = false, has1 = false;
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) {
      const std::uint8_t v = m.at<std::uint8_t>(y, x);
      if (v != 0 && v != 1 && v != 255)
        throw DataError("non-binary mask value " + std::to_string(v) + " in " + path.string());
      has255 |= v == 255;
      has1 |= v == 1;
      out(x, y) = v ? 1 : 0;
    }
  if (has255 && has1) throw DataError("non-binary mask (mixes 1 and 255) in " + path.string());
  return out;
}

/// 16-bit depth PNG, value = round(depth / scale); 0 marks invalid.
inline void write_depth_png(const fs::path& path, const DepthMap& d, double scale = 0.001) {
  cv::Mat m(d.height(), d.width(), CV_16UC1);
  for (int y = 0; y < d.height(); ++y)
    for (int x = 0; x < d.width(); ++x) {
      const double v = d.valid(x, y) ? std::round(d.at(x, y) / scale) : 0.0;
      m.at<std::uint16_t>(y, x) = static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
    }
  write_png(path, m);
}

inline DepthMap read_depth_png(const fs::path& path, double scale = 0.001) {
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty() || m.depth() != CV_16U) throw DataError("cannot read 16-bit depth " + path.string());
  DepthMap d(m.cols, m.rows);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) d.at(x, y) = m.at<std::uint16_t>(y, x) * scale;
  return d;
}

// ---------------------------------------------------------------------------------------------
// PLY: vertex element with x, y, z (float or double) and optional red, green, blue (uchar).

enum class PlyFormat { kAscii, kBinaryLittleEndian };

inline void write_ply(const fs::path& path, const PointCloud& cloud, PlyFormat format = PlyFormat::kBinaryLittleEndian) {
  ensure_parent(path);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << "ply\nformat " << (format == PlyFormat::kAscii ? "ascii" : "binary_little_endian") << " 1.0\n";
  os << "element vertex " << cloud.size() << "\n";
  os << "property float x\nproperty float y\nproperty float z\n";
  if (cloud.has_colors()) os << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  os << "end_header\n";
  static_assert(std::endian::native == std::endian::little, "binary PLY writer assumes a little-endian host");
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const float xyz[3] = {float(cloud.points[i].x()), float(cloud.points[i].y()), float(cloud.points[i].z())};
    if (format == PlyFormat::kAscii) {
      os << std::setprecision(9) << xyz[0] << ' ' << xyz[1] << ' ' << xyz[2];
      if (cloud.has_colors())
        os << ' ' << int(cloud.colors[i][0]) << ' ' << int(cloud.colors[i][1]) << ' ' << int(cloud.colors[i][2]);
      os << '\n';
    } else {
      os.write(reinterpret_cast<const char*>(xyz), sizeof xyz);
      if (cloud.has_colors()) os.write(reinterpret_cast<const char*>(cloud.colors[i].data()), 3);
    }
  }
  if (!os) throw DataError("write failed: " + path.string());
}

namespace detail {

inline int ply_type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" || t == "float32") return 4;
  if (t == "double" || t == "float64") return 8;
  return 0;
}

inline double ply_read_binary(const char* p, const std::string& t) {
  auto get = [p]<typename T>(T) {
    T v;
    std::memcpy(&v, p, sizeof v);
    return static_cast<double>(v);
  };
  if (t == "char" || t == "int8") return get(std::int8_t{});
  if (t == "uchar" || t == "uint8") return get(std::uint8_t{});
  if (t == "short" || t == "int16") return get(std::int16_t{});
  if (t == "ushort" || t == "uint16") return get(std::uint16_t{});
  if (t == "int" || t == "int32") return get(std::int32_t{});
  if (t == "uint" || t == "uint32") return get(std::uint32_t{});
  if (t == "float" || t == "float32") return get(float{});
  return get(double{});
}

}  // namespace detail

inline PointCloud read_ply(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != "ply" && line != "ply\r") throw DataError("not a PLY file: " + path.string());

  struct Prop {
    std::string type, name;
  };
  PlyFormat format = PlyFormat::kAscii;
  std::size_t count = 0;
  std::vector<Prop> props;
  bool in_vertex = false, seen_vertex = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") {
      std::string f;
      ls >> f;
      if (f == "ascii")
        format = PlyFormat::kAscii;
      else if (f == "binary_little_endian")
        format = PlyFormat::kBinaryLittleEndian;
      else
        throw DataError("unsupported PLY format '" + f + "': " + path.string());
    } else if (kw == "element") {
      std::string name;
      std::size_t n = 0;
      ls >> name >> n;
      in_vertex = name == "vertex" && !seen_vertex;
      if (in_vertex) {
        count = n;
        seen_vertex = true;
      } else if (!seen_vertex) {
        throw DataError("PLY elements before 'vertex' are not supported: " + path.string());
      }
    } else if (kw == "property" && in_vertex) {
      Prop p;
      ls >> p.type;
      if (p.type == "list") throw DataError("list property in PLY vertex element: " + path.string());
      ls >> p.name;
      if (detail::ply_type_size(p.type) == 0) throw DataError("unknown PLY type '" + p.type + "': " + path.string());
      props.push_back(p);
    } else if (kw == "end_header") {
      break;
    }
  }
  if (!seen_vertex) throw DataError("PLY without vertex element: " + path.string());
  int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
  for (int i = 0; i < int(props.size()); ++i) {
    const auto& n = props[i].name;
    if (n == "x") ix = i;
    if (n == "y") iy = i;
    if (n == "z") iz = i;
    if (n == "red") ir = i;
    if (n == "green") ig = i;
    if (n == "blue") ib = i;
  }
  if (ix < 0 || iy < 0 || iz < 0) throw DataError("PLY vertex lacks x/y/z: " + path.string());
  const bool colored = ir >= 0 && ig >= 0 && ib >= 0;

  PointCloud cloud;
  cloud.points.reserve(count);
  if (colored) cloud.colors.reserve(count);
  std::vector<double> vals(props.size());
  std::size_t stride = 0;
  std::vector<std::size_t> offs;
  for (const auto& p : props) {
    offs.push_back(stride);
    stride += detail::ply_type_size(p.type);
  }
  std::vector<char> buf(stride);
  for (std::size_t v = 0; v < count; ++v) {
    if (format == PlyFormat::kAscii) {
      for (std::size_t i = 0; i < props.size(); ++i) {
        if (!(is >> vals[i])) throw DataError("truncated PLY at vertex " + std::to_string(v) + ": " + path.string());
        // Text is only a carrier; the stored value is the declared type.
        if (props[i].type == "float" || props[i].type == "float32") vals[i] = static_cast<float>(vals[i]);
      }
    } else {
      if (!is.read(buf.data(), static_cast<std::streamsize>(stride)))
        throw DataError("truncated PLY at vertex " + std::to_string(v) + ": " + path.string());
      for (std::size_t i = 0; i < props.size(); ++i) vals[i] = detail::ply_read_binary(buf.data() + offs[i], props[i].type);
    }
    cloud.points.emplace_back(vals[ix], vals[iy], vals[iz]);
    if (colored)
      cloud.colors.push_back({static_cast<std::uint8_t>(vals[ir]), static_cast<std::uint8_t>(vals[ig]),
                              static_cast<std::uint8_t>(vals[ib])});
  }
  return cloud;
}

// ---------------------------------------------------------------------------------------------
// poses.txt: one line per frame, "index tx ty tz qx qy qz qw", world-from-sensor. Lines
// starting with '#' are comments.

struct PoseRecord {
  int index = 0;
  Pose world_from_sensor;
};

inline std::string format_pose_line(int index, const Pose& p) {
  const Eigen::Quaterniond q = p.quaternion();
  std::ostringstream os;
  os << std::setprecision(17) << index << ' ' << p.translation.x() << ' ' << p.translation.y() << ' '
     << p.translation.z() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << q.w();
  return os.str();
}

inline void write_poses(const fs::path& path, const std::vector<int>& indices, const std::vector<Pose>& poses) {
  ensure_parent(path);
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << "# index tx ty tz qx qy qz qw (world from sensor)\n";
  for (std::size_t i = 0; i < poses.size(); ++i) os << format_pose_line(indices[i], poses[i]) << "\n";
}

inline std::vector<PoseRecord> read_poses(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  std::vector<PoseRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    PoseRecord r;
    double t[3], q[4];
    if (!(ls >> r.index >> t[0] >> t[1] >> t[2] >> q[0] >> q[1] >> q[2] >> q[3]))
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed pose line");
    const Eigen::Quaterniond qq(q[3], q[0], q[1], q[2]);
    if (!(std::abs(qq.norm() - 1.0) < 1e-3))
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": quaternion is not unit length");
    r.world_from_sensor = Pose::from_quaternion(qq, Eigen::Vector3d(t[0], t[1], t[2]));
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// JSON helpers

namespace detail {

inline json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& path, const json& j) {
  ensure_parent(path);
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

inline json pose_to_json(const Pose& p) {
  const auto q = p.quaternion();
  return {{"translation", {p.translation.x(), p.translation.y(), p.translation.z()}},
          {"quaternion", {q.x(), q.y(), q.z(), q.w()}}};
}

inline Pose pose_from_json(const json& j) {
  const auto t = j.at("translation").get<std::vector<double>>();
  const auto q = j.at("quaternion").get<std::vector<double>>();
  if (t.size() != 3 || q.size() != 4) throw DataError("pose needs 3 translation and 4 quaternion values");
  return Pose::from_quaternion(Eigen::Quaterniond(q[3], q[0], q[1], q[2]), {t[0], t[1], t[2]});
}

}  // namespace detail

inline json intrinsics_to_json(const Intrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

inline Intrinsics intrinsics_from_json(const json& j) {
  Intrinsics k;
  try {
    k.fx = j.at("fx").get<double>();
    k.fy = j.at("fy").get<double>();
    k.cx = j.at("cx").get<double>();
    k.cy = j.at("cy").get<double>();
    k.width = j.at("width").get<int>();
    k.height = j.at("height").get<int>();
  } catch (const json::exception& e) {
    throw DataError(std::string("intrinsics: ") + e.what());
  }
  if (!k.valid()) throw DataError("intrinsics: invalid values");
  return k;
}

// ---------------------------------------------------------------------------------------------
// Dataset layout
//
//   images/%06d.png   masks/%06d.png   clouds/%06d.ply   poses.txt   intrinsics.json
//   dataset.json      (optional) gt/%06d.png, depth/%06d.png
//
// intrinsics.json may carry "camera_from_sensor" {translation, quaternion}; default identity.

inline constexpr double kDepthScale = 0.001;  // meters per unit in 16-bit depth PNGs

struct DatasetWriteOptions {
  PlyFormat ply = PlyFormat::kBinaryLittleEndian;
  const std::vector<RgbImage>* ground_truth = nullptr;
  const std::vector<DepthMap>* depth = nullptr;
};

inline void write_dataset(const fs::path& root, const CaptureSequence& seq, const DatasetWriteOptions& opt = {}) {
  seq.validate();
  if (seq.frames.empty()) throw DataError("write_dataset: empty sequence");
  fs::create_directories(root);
  std::vector<int> indices;
  for (const auto& f : seq.frames) indices.push_back(f.index);
  write_poses(root / "poses.txt", indices, seq.world_from_sensor);
  json k = intrinsics_to_json(seq.frames.front().intrinsics);
  k["camera_from_sensor"] = detail::pose_to_json(seq.camera_from_sensor);
  detail::write_json(root / "intrinsics.json", k);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const auto& f = seq.frames[i];
    write_rgb_png(root / "images" / frame_name(f.index), f.rgb);
    write_mask_png(root / "masks" / frame_name(f.index), f.mask);
    if (i < seq.clouds.size()) write_ply(root / "clouds" / frame_name(f.index, ".ply"), seq.clouds[i], opt.ply);
    if (opt.ground_truth) write_rgb_png(root / "gt" / frame_name(f.index), opt.ground_truth->at(i));
    if (opt.depth) write_depth_png(root / "depth" / frame_name(f.index), opt.depth->at(i), kDepthScale);
  }
  detail::write_json(root / "dataset.json", {{"frames", seq.frames.size()},
                                             {"depth_scale", kDepthScale},
                                             {"has_ground_truth", opt.ground_truth != nullptr},
                                             {"has_depth", opt.depth != nullptr}});
}

/// Loads and validates a dataset directory. Missing files, size mismatches and non-binary
/// masks are reported with the frame index.
inline CaptureSequence load_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("dataset directory not found: " + root.string());
  for (const char* f : {"poses.txt", "intrinsics.json"})
    if (!fs::exists(root / f)) throw DataError("dataset " + root.string() + ": missing " + f);
  const json kj = detail::read_json(root / "intrinsics.json");
  const Intrinsics k = intrinsics_from_json(kj);
  CaptureSequence seq;
  if (kj.contains("camera_from_sensor")) seq.camera_from_sensor = detail::pose_from_json(kj["camera_from_sensor"]);

  const auto records = read_poses(root / "poses.txt");
  if (records.empty()) throw DataError("dataset " + root.string() + ": no frames in poses.txt");
  for (std::size_t i = 1; i < records.size(); ++i)
    if (records[i].index <= records[i - 1].index)
      throw DataError("frame " + std::to_string(records[i].index) + ": poses.txt indices must increase");

  seq.frames.resize(records.size());
  seq.clouds.resize(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int idx = records[i].index;
    const std::string tag = "frame " + std::to_string(idx) + ": ";
    const fs::path img = root / "images" / frame_name(idx);
    const fs::path msk = root / "masks" / frame_name(idx);
    const fs::path cld = root / "clouds" / frame_name(idx, ".ply");
    for (const auto& p : {img, msk, cld})
      if (!fs::exists(p)) throw DataError(tag + "missing " + fs::relative(p, root).string());
    FramePacket& f = seq.frames[i];
    f.index = idx;
    f.intrinsics = k;
    try {
      f.rgb = read_rgb_png(img);
      f.mask = read_mask_png(msk);
      seq.clouds[i] = read_ply(cld);
    } catch (const DataError& e) {
      throw DataError(tag + e.what());
    }
    if (f.rgb.width() != k.width || f.rgb.height() != k.height)
      throw DataError(tag + "image size " + std::to_string(f.rgb.width()) + "x" + std::to_string(f.rgb.height()) +
                      " differs from intrinsics");
    if (!f.mask.same_shape(f.rgb)) throw DataError(tag + "mask dimensions differ from image");
    seq.world_from_sensor.push_back(records[i].world_from_sensor);
  }
  seq.sync_camera_poses();
  seq.validate();
  return seq;
}

/// Ground-truth frames under gt/, aligned with the dataset's frames; empty when absent.
inline std::vector<RgbImage> load_ground_truth(const fs::path& root, const CaptureSequence& seq) {
  std::vector<RgbImage> gt;
  if (!fs::is_directory(root / "gt")) return gt;
  for (const auto& f : seq.frames) {
    const fs::path p = root / "gt" / frame_name(f.index);
    if (!fs::exists(p)) throw DataError("frame " + std::to_string(f.index) + ": missing gt/" + frame_name(f.index));
    gt.push_back(read_rgb_png(p));
    if (!gt.back().same_shape(f.rgb))
      throw DataError("frame " + std::to_string(f.index) + ": ground truth size differs from image");
  }
  return gt;
}

/// Writes a synthetic capture in the dataset layout, with gt/ and depth/.
inline void write_synthetic_dataset(const fs::path& root, const SyntheticCapture& cap) {
  DatasetWriteOptions opt;
  opt.ground_truth = &cap.ground_truth;
  opt.depth = &cap.background_depth;
  write_dataset(root, cap.sequence, opt);
}

// ---------------------------------------------------------------------------------------------
// Scene specification JSON

namespace detail {

/// Rejects keys of `j` outside `allowed`.
inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

inline Eigen::Vector3d vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(where + ": expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline Texture parse_texture(const json& j, const std::string& where) {
  check_keys(j, {"kind", "scale", "color_a", "color_b", "seed"}, where);
  Texture t;
  const std::string kind = j.value("kind", "noise");
  if (kind == "noise")
    t.kind = TextureKind::kNoise;
  else if (kind == "checker")
    t.kind = TextureKind::kChecker;
  else if (kind == "stripes")
    t.kind = TextureKind::kStripes;
  else if (kind == "constant")
    t.kind = TextureKind::kConstant;
  else
    throw ConfigError(where + ": unknown texture kind '" + kind + "'");
  t.scale = j.value("scale", 1.0);
  if (!(t.scale > 0)) throw ConfigError(where + ": texture scale must be positive");
  if (j.contains("color_a")) t.color_a = vec3(j["color_a"], where + ".color_a");
  if (j.contains("color_b")) t.color_b = vec3(j["color_b"], where + ".color_b");
  t.seed = j.value("seed", 0u);
  return t;
}

inline BoxPose parse_box_pose(const json& j, const std::string& where) {
  check_keys(j, {"center", "yaw_deg"}, where);
  return {vec3(j.at("center"), where + ".center"), j.value("yaw_deg", 0.0)};
}

inline CameraPlacement parse_placement(const json& j, const std::string& where) {
  check_keys(j, {"position", "yaw_deg", "pitch_deg"}, where);
  return {vec3(j.at("position"), where + ".position"), j.value("yaw_deg", 0.0), j.value("pitch_deg", 0.0)};
}

}  // namespace detail

/// Parses a scene document; the schema lives in docs/scene_schema.json.
inline SceneSpec parse_scene_spec(const json& j) {
  using namespace detail;
  try {
    check_keys(j, {"intrinsics", "width", "height", "hfov_deg", "frames", "planes", "boxes", "occluders",
                   "trajectory", "lidar", "exposure", "sky", "supersample", "mask_dilate_px", "seed"},
               "scene");
    SceneSpec s;
    if (j.contains("intrinsics")) {
      try {
        s.intrinsics = intrinsics_from_json(j["intrinsics"]);
      } catch (const DataError& e) {
        throw ConfigError(std::string("scene.") + e.what());
      }
    } else {
      const int w = j.value("width", 320), h = j.value("height", 240);
      const double hfov = j.value("hfov_deg", 60.0);
      if (w <= 0 || h <= 0 || !(hfov > 0 && hfov < 179)) throw ConfigError("scene: invalid width/height/hfov_deg");
      const double f = (w / 2.0) / std::tan(hfov * M_PI / 360);
      s.intrinsics = {f, f, (w - 1) / 2.0, (h - 1) / 2.0, w, h};
    }
    if (j.contains("planes"))
      for (std::size_t i = 0; i < j["planes"].size(); ++i) {
        const json& p = j["planes"][i];
        const std::string w = "scene.planes[" + std::to_string(i) + "]";
        check_keys(p, {"origin", "edge_u", "edge_v", "texture"}, w);
        QuadSurface q;
        q.origin = vec3(p.at("origin"), w + ".origin");
        q.edge_u = vec3(p.at("edge_u"), w + ".edge_u");
        q.edge_v = vec3(p.at("edge_v"), w + ".edge_v");
        if (p.contains("texture")) q.texture = parse_texture(p["texture"], w + ".texture");
        if (q.edge_u.cross(q.edge_v).norm() < 1e-12) throw ConfigError(w + ": degenerate plane edges");
        s.planes.push_back(q);
      }
    if (j.contains("boxes"))
      for (std::size_t i = 0; i < j["boxes"].size(); ++i) {
        const json& b = j["boxes"][i];
        const std::string w = "scene.boxes[" + std::to_string(i) + "]";
        check_keys(b, {"center", "yaw_deg", "half_extent", "texture"}, w);
        BoxSurface box;
        box.pose = {vec3(b.at("center"), w + ".center"), b.value("yaw_deg", 0.0)};
        box.half_extent = vec3(b.at("half_extent"), w + ".half_extent");
        if (b.contains("texture")) box.texture = parse_texture(b["texture"], w + ".texture");
        s.boxes.push_back(box);
      }

    // Trajectory: explicit list of placements, or {"start", "end"} interpolated over "frames".
    if (!j.contains("trajectory")) throw ConfigError("scene: missing trajectory");
    const json& tj = j["trajectory"];
    if (tj.is_array()) {
      for (std::size_t i = 0; i < tj.size(); ++i)
        s.trajectory.push_back(parse_placement(tj[i], "scene.trajectory[" + std::to_string(i) + "]"));
    } else {
      check_keys(tj, {"start", "end"}, "scene.trajectory");
      const int n = j.value("frames", 20);
      if (n < 1) throw ConfigError("scene.frames must be >= 1");
      const CameraPlacement a = parse_placement(tj.at("start"), "scene.trajectory.start");
      const CameraPlacement b = tj.contains("end") ? parse_placement(tj["end"], "scene.trajectory.end") : a;
      for (int f = 0; f < n; ++f) {
        const double t = n > 1 ? double(f) / (n - 1) : 0.0;
        s.trajectory.push_back({a.position + t * (b.position - a.position), a.yaw_deg + t * (b.yaw_deg - a.yaw_deg),
                                a.pitch_deg + t * (b.pitch_deg - a.pitch_deg)});
      }
    }
    const int frames = s.frame_count();

    if (j.contains("occluders"))
      for (std::size_t i = 0; i < j["occluders"].size(); ++i) {
        const json& o = j["occluders"][i];
        const std::string w = "scene.occluders[" + std::to_string(i) + "]";
        check_keys(o, {"half_extent", "texture", "poses", "start", "end"}, w);
        OccluderTrack tr;
        tr.half_extent = vec3(o.at("half_extent"), w + ".half_extent");
        if (o.contains("texture")) tr.texture = parse_texture(o["texture"], w + ".texture");
        if (o.contains("poses")) {
          for (std::size_t k = 0; k < o["poses"].size(); ++k)
            tr.poses.push_back(parse_box_pose(o["poses"][k], w + ".poses[" + std::to_string(k) + "]"));
        } else {
          const BoxPose a = parse_box_pose(o.at("start"), w + ".start");
          const BoxPose b = o.contains("end") ? parse_box_pose(o["end"], w + ".end") : a;
          for (int f = 0; f < frames; ++f) {
            const double t = frames > 1 ? double(f) / (frames - 1) : 0.0;
            tr.poses.push_back({a.center + t * (b.center - a.center), a.yaw_deg + t * (b.yaw_deg - a.yaw_deg)});
          }
        }
        s.occluders.push_back(tr);
      }
    if (j.contains("lidar")) {
      const json& l = j["lidar"];
      check_keys(l, {"rings", "points_per_ring", "vfov_min_deg", "vfov_max_deg", "hfov_deg", "noise_sigma", "max_range"},
                 "scene.lidar");
      s.lidar.rings = l.value("rings", s.lidar.rings);
      s.lidar.points_per_ring = l.value("points_per_ring", s.lidar.points_per_ring);
      s.lidar.vfov_min_deg = l.value("vfov_min_deg", s.lidar.vfov_min_deg);
      s.lidar.vfov_max_deg = l.value("vfov_max_deg", s.lidar.vfov_max_deg);
      s.lidar.hfov_deg = l.value("hfov_deg", s.lidar.hfov_deg);
      s.lidar.noise_sigma = l.value("noise_sigma", s.lidar.noise_sigma);
      s.lidar.max_range = l.value("max_range", s.lidar.max_range);
    }
    if (j.contains("exposure")) {
      const json& e = j["exposure"];
      check_keys(e, {"enabled", "gain", "bias"}, "scene.exposure");
      s.exposure.enabled = e.value("enabled", true);
      if (e.contains("gain")) {
        const auto g = e["gain"].get<std::vector<double>>();
        if (g.size() != 2 || g[0] > g[1]) throw ConfigError("scene.exposure.gain: expected [min, max]");
        s.exposure.gain_min = g[0];
        s.exposure.gain_max = g[1];
      }
      if (e.contains("bias")) {
        const auto b = e["bias"].get<std::vector<double>>();
        if (b.size() != 2 || b[0] > b[1]) throw ConfigError("scene.exposure.bias: expected [min, max]");
        s.exposure.bias_min = b[0];
        s.exposure.bias_max = b[1];
      }
    }
    if (j.contains("sky")) s.sky = vec3(j["sky"], "scene.sky");
    s.supersample = j.value("supersample", s.supersample);
    s.mask_dilate_px = j.value("mask_dilate_px", s.mask_dilate_px);
    s.seed = j.value("seed", std::uint64_t{0});
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scene: ") + e.what());
  }
}

inline SceneSpec load_scene_spec(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open scene file " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_scene_spec(j);
}

// ---------------------------------------------------------------------------------------------
// Metrics output

inline json metrics_to_json(const MetricsReport& m) {
  json j = {{"mae", m.mae}, {"rmse", m.rmse}, {"ssim", m.ssim}, {"pixels", m.pixels}};
  if (std::isinf(m.psnr))
    j["psnr"] = "inf";
  else
    j["psnr"] = m.psnr;
  return j;
}

}  // namespace rgbdi
