#pragma once

#include "rgbdi/bp.hpp"
#include "rgbdi/color_sampling.hpp"
#include "rgbdi/common.hpp"
#include "rgbdi/frame.hpp"
#include "rgbdi/geometry.hpp"
#include "rgbdi/io.hpp"
#include "rgbdi/map_builder.hpp"
#include "rgbdi/poisson.hpp"
#include "rgbdi/pose_refinement.hpp"
#include "rgbdi/synthetic.hpp"
#include "rgbdi/temporal.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rgbdi {

// ---------------------------------------------------------------------------------------------
// Configuration

/// Guidance across provenance seams: zero, or the mean of the two donors' own gradients over
/// the pair. Either way no exposure step between donors enters the guidance.
enum class SeamGradient { kZero, kSource };

inline const char* seam_gradient_name(SeamGradient s) { return s == SeamGradient::kZero ? "zero" : "source"; }

inline SeamGradient parse_seam_gradient(const std::string& s) {
  if (s == "zero") return SeamGradient::kZero;
  if (s == "source") return SeamGradient::kSource;
  throw ConfigError("config: harmonize.seam_gradient must be \"zero\" or \"source\", got \"" + s + "\"");
}

struct PipelineConfig {
  std::vector<fs::path> videos;  // first is the target, the rest are fused in
  fs::path output_dir;
  std::uint64_t seed = 0;

  StitchOptions map;
  bool refine_enabled = true;
  RefinementConfig refine;
  SamplingOptions sample;
  bool bp_enabled = true;
  BpOptions bp;
  double bp_alpha = 10.0;
  bool bp_center_fallback = true;  // per component, keep the all-center labeling when its energy is lower
  bool harmonize_enabled = true;
  bool boundary_gradient = true;  // donor gradient across the mask boundary instead of zero
  SeamGradient seam_gradient = SeamGradient::kSource;
  PoissonOptions poisson;
  std::optional<bool> fuse_enabled;  // unset: on when there is more than one video
  FuseOptions fuse;
  bool temporal_enabled = true;
  SmoothingConfig temporal;
  FlowOptions flow;

  bool debug_composite = false;  // pre-harmonization composite under composite/
  bool debug_depth = false;      // 16-bit dense depth under depth/
  bool debug_flow = false;       // .flo files under flow/

  bool fusing() const { return fuse_enabled.value_or(videos.size() > 1); }

  /// Stage names in execution order, as recorded in the manifest.
  std::vector<std::string> stages() const {
    std::vector<std::string> s{"map"};
    if (fusing()) s.push_back("fuse");
    if (refine_enabled) s.push_back("refine");
    s.push_back("depth");
    s.push_back("sample");
    if (bp_enabled) s.push_back("bp");
    if (harmonize_enabled) s.push_back("harmonize");
    if (temporal_enabled) s.push_back("temporal");
    return s;
  }

  void validate(bool check_paths = true) const {
    if (videos.empty()) throw ConfigError("config: 'videos' needs at least one dataset path");
    if (check_paths)
      for (const auto& v : videos)
        if (!fs::is_directory(v)) throw ConfigError("config: dataset path does not exist: " + v.string());
    if (fuse_enabled && *fuse_enabled && videos.size() < 2)
      throw ConfigError("config: fuse.enabled needs at least two videos");
    if (fuse_enabled && !*fuse_enabled && videos.size() > 1)
      throw ConfigError("config: extra videos are only used by fusion; set fuse.enabled or drop them");
    try {
      refine.validate();
      sample.validate();
      temporal.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    if (!(map.voxel_size >= 0)) throw ConfigError("config: map.voxel_size must be >= 0");
    if (bp.iterations < 0) throw ConfigError("config: bp.iterations must be >= 0");
    if (!(bp_alpha >= 0)) throw ConfigError("config: bp.alpha must be >= 0");
    if (!(poisson.tolerance > 0) || !(poisson.max_iter_factor > 0))
      throw ConfigError("config: poisson.tol and poisson.max_iter_factor must be positive");
  }
};

namespace detail {

/// Nested objects become dotted keys; arrays and scalars are leaves.
inline void flatten_json(const json& j, const std::string& prefix, std::map<std::string, json>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object())
      flatten_json(*it, key, out);
    else if (!out.emplace(key, *it).second)
      throw ConfigError("config: duplicate key '" + key + "'");
  }
}

}  // namespace detail

/// Parses a config document. Keys may be nested ({"bp": {"alpha": 5}}) or dotted
/// ({"bp.alpha": 5}). Unknown keys are rejected. Relative video and output paths resolve
/// against `base_dir`.
inline PipelineConfig parse_pipeline_config(const json& j, const fs::path& base_dir = {}) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  std::map<std::string, json> kv;
  detail::flatten_json(j, "", kv);
  PipelineConfig c;
  auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  try {
    for (const auto& [key, v] : kv) {
      if (key == "videos") {
        if (!v.is_array()) throw ConfigError("config: 'videos' must be an array of paths");
        for (const auto& p : v) c.videos.push_back(resolve(p.get<std::string>()));
      } else if (key == "output_dir") {
        c.output_dir = resolve(v.get<std::string>());
      } else if (key == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else if (key == "map.voxel_size") {
        c.map.voxel_size = v.get<double>();
      } else if (key == "refine.enabled") {
        c.refine_enabled = v.get<bool>();
      } else if (key == "refine.pitch_range_deg") {
        c.refine.pitch_range_deg = v.get<double>();
      } else if (key == "refine.yaw_range_deg") {
        c.refine.yaw_range_deg = v.get<double>();
      } else if (key == "refine.step_deg") {
        c.refine.step_deg = v.get<double>();
      } else if (key == "refine.ring_px") {
        c.refine.ring_px = v.get<int>();
      } else if (key == "sample.window_n") {
        c.sample.window_n = v.get<int>();
      } else if (key == "sample.depth_tol_m") {
        c.sample.depth_tol_m = v.get<double>();
      } else if (key == "sample.depth_tol_rel") {
        c.sample.depth_tol_rel = v.get<double>();
      } else if (key == "bp.enabled") {
        c.bp_enabled = v.get<bool>();
      } else if (key == "bp.iterations") {
        c.bp.iterations = v.get<int>();
      } else if (key == "bp.alpha") {
        c.bp_alpha = v.get<double>();
      } else if (key == "bp.center_fallback") {
        c.bp_center_fallback = v.get<bool>();
      } else if (key == "harmonize.enabled") {
        c.harmonize_enabled = v.get<bool>();
      } else if (key == "harmonize.boundary_gradient") {
        c.boundary_gradient = v.get<bool>();
      } else if (key == "harmonize.seam_gradient") {
        c.seam_gradient = parse_seam_gradient(v.get<std::string>());
      } else if (key == "poisson.tol") {
        c.poisson.tolerance = v.get<double>();
      } else if (key == "poisson.max_iter_factor") {
        c.poisson.max_iter_factor = v.get<double>();
      } else if (key == "fuse.enabled") {
        c.fuse_enabled = v.get<bool>();
      } else if (key == "fuse.overlap_radius") {
        c.fuse.overlap_radius = v.get<double>();
      } else if (key == "fuse.min_overlap") {
        c.fuse.min_overlap = v.get<double>();
      } else if (key == "fuse.max_rms") {
        c.fuse.max_rms_residual = v.get<double>();
      } else if (key == "temporal.enabled") {
        c.temporal_enabled = v.get<bool>();
      } else if (key == "temporal.radius") {
        c.temporal.radius = v.get<int>();
      } else if (key == "temporal.min_samples") {
        c.temporal.min_samples = v.get<int>();
      } else if (key == "debug.composite") {
        c.debug_composite = v.get<bool>();
      } else if (key == "debug.depth") {
        c.debug_depth = v.get<bool>();
      } else if (key == "debug.flow") {
        c.debug_flow = v.get<bool>();
      } else {
        throw ConfigError("config: unknown key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: wrong value type: ") + e.what());
  }
  c.fuse.stitch = c.map;
  return c;
}

inline PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  PipelineConfig c = parse_pipeline_config(j, path.parent_path());
  c.validate();
  return c;
}

/// Canonical form: every parameter with its effective value, paths as given.
inline json config_to_json(const PipelineConfig& c) {
  json videos = json::array();
  for (const auto& v : c.videos) videos.push_back(v.generic_string());
  return {{"videos", videos},
          {"output_dir", c.output_dir.generic_string()},
          {"seed", c.seed},
          {"map", {{"voxel_size", c.map.voxel_size}}},
          {"refine",
           {{"enabled", c.refine_enabled},
            {"pitch_range_deg", c.refine.pitch_range_deg},
            {"yaw_range_deg", c.refine.yaw_range_deg},
            {"step_deg", c.refine.step_deg},
            {"ring_px", c.refine.ring_px}}},
          {"sample",
           {{"window_n", c.sample.window_n}, {"depth_tol_m", c.sample.depth_tol_m}, {"depth_tol_rel", c.sample.depth_tol_rel}}},
          {"bp", {{"enabled", c.bp_enabled}, {"iterations", c.bp.iterations}, {"alpha", c.bp_alpha}, {"center_fallback", c.bp_center_fallback}}},
          {"harmonize", {{"enabled", c.harmonize_enabled}, {"boundary_gradient", c.boundary_gradient}, {"seam_gradient", seam_gradient_name(c.seam_gradient)}}},
          {"poisson", {{"tol", c.poisson.tolerance}, {"max_iter_factor", c.poisson.max_iter_factor}}},
          {"fuse",
           {{"enabled", c.fusing()},
            {"overlap_radius", c.fuse.overlap_radius},
            {"min_overlap", c.fuse.min_overlap},
            {"max_rms", c.fuse.max_rms_residual}}},
          {"temporal", {{"enabled", c.temporal_enabled}, {"radius", c.temporal.radius}, {"min_samples", c.temporal.min_samples}}},
          {"debug", {{"composite", c.debug_composite}, {"depth", c.debug_depth}, {"flow", c.debug_flow}}}};
}

/// 64-bit FNV-1a, hex.
inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------------------------
// Provenance rendering

/// Black outside the mask, magenta for blank pixels, a fixed hue per source id otherwise.
inline RgbImage provenance_image(const Image<std::int32_t>& prov) {
  RgbImage out(prov.width(), prov.height(), 3);
  for (int y = 0; y < prov.height(); ++y)
    for (int x = 0; x < prov.width(); ++x) {
      const std::int32_t id = prov(x, y);
      Color c(0, 0, 0);
      if (id == kBlank) {
        c = {255, 0, 255};
      } else if (id >= 0) {
        const double h = std::fmod(id * 0.618033988749895, 1.0) * 6.0;
        const int sector = static_cast<int>(h);
        const double f = h - sector;
        const double v = 230, lo = 40, mid_up = lo + (v - lo) * f, mid_dn = v - (v - lo) * f;
        switch (sector) {
          case 0: c = {v, mid_up, lo}; break;
          case 1: c = {mid_dn, v, lo}; break;
          case 2: c = {lo, v, mid_up}; break;
          case 3: c = {lo, mid_dn, v}; break;
          case 4: c = {mid_up, lo, v}; break;
          default: c = {v, lo, mid_dn}; break;
        }
      }
      set_pixel(out, x, y, c);
    }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Per-frame inpainting

struct FrameInpaintResult {
  RgbImage composite;                // raw chosen colors, blank pixels black
  RgbImage output;                   // after harmonization (or the composite)
  Image<std::int32_t> provenance;
  std::size_t masked = 0;
  std::size_t blank = 0;
  std::size_t blank_own = 0;         // masked pixels with no source in the target's own video
};

/// Replaces zero guidance with within-donor gradients. At the mask boundary (`boundary`) the
/// pair gets the donor's color minus the donor's color at the warped outside neighbor; across
/// seams (`seams`) it gets the mean of that difference taken in each of the two donors. Pairs
/// whose neighbor does not warp into the donor keep their guidance.
inline void add_donor_guidance(GuidanceField& g, const FramePacket& target, const ColorImage& colors,
                               const Image<std::int32_t>& provenance,
                               const std::vector<Eigen::Vector2i>& offsets, std::span<const SourceView> order,
                               bool boundary, bool seams) {
  std::map<int, const FramePacket*> by_id;
  for (const auto& s : order) by_id[s.id] = s.frame;
  const int w = target.width();
  auto off = [&](int x, int y) { return offsets[static_cast<std::size_t>(y) * w + x]; };
  for (int y = 0; y < target.height(); ++y)
    for (int x = 0; x < w; ++x) {
      const int a = provenance(x, y);
      if (!target.masked(x, y) || a < 0) continue;
      for (int d = 0; d < 4; ++d) {
        const int qx = x + kDx[d], qy = y + kDy[d];
        if (!target.mask.in_bounds(qx, qy)) continue;
        if (!target.masked(qx, qy)) {
          if (!boundary) continue;
          const auto e = expected_neighbor_color(target, x, y, d, *by_id.at(a), off(x, y));
          if (e) set_pair_guidance(g, x, y, d, pixel_color(colors, x, y) - *e);
          continue;
        }
        // Each masked pair once, from its left or top pixel.
        const int b = provenance(qx, qy);
        if (!seams || (d != kRight && d != kBottom) || b < 0 || b == a) continue;
        const auto ea = expected_neighbor_color(target, x, y, d, *by_id.at(a), off(x, y));
        const auto eb = expected_neighbor_color(target, qx, qy, opposite(d), *by_id.at(b), off(qx, qy));
        Color v = Color::Zero();
        int n = 0;
        if (ea) v += pixel_color(colors, x, y) - *ea, ++n;
        if (eb) v += *eb - pixel_color(colors, qx, qy), ++n;
        if (n) set_pair_guidance(g, x, y, d, v / n);
      }
    }
}

struct InpaintStageOptions {
  SamplingOptions sample;
  bool bp_enabled = true;
  BpOptions bp;
  double bp_alpha = 10.0;
  bool bp_center_fallback = true;  // per component, keep the all-center labeling when its energy is lower
  bool harmonize_enabled = true;
  bool boundary_gradient = true;  // donor gradient across the mask boundary instead of zero
  SeamGradient seam_gradient = SeamGradient::kSource;
  PoissonOptions poisson;
};

/// Candidate sampling, label selection and harmonization for one frame whose depth is set.
/// Source ids below `own_count` belong to the target's own video.
inline FrameInpaintResult inpaint_frame(const FramePacket& target, std::span<const SourceView> order,
                                        int own_count, const InpaintStageOptions& o,
                                        std::map<std::string, double>* timings = nullptr) {
  using clock = std::chrono::steady_clock;
  auto tick = [&](const char* stage, clock::time_point since) {
    if (timings) (*timings)[stage] += std::chrono::duration<double>(clock::now() - since).count();
  };
  const int w = target.width(), h = target.height();
  FrameInpaintResult r;
  r.provenance = Image<std::int32_t>(w, h, 1, kNotMasked);
  ColorImage colors(w, h, 3);
  for (std::size_t i = 0; i < colors.data().size(); ++i) colors.data()[i] = target.rgb.data()[i];

  std::vector<Eigen::Vector2i> offsets(static_cast<std::size_t>(w) * h, Eigen::Vector2i::Zero());
  auto t0 = clock::now();
  const auto candidates = sample_candidates(target, order, o.sample);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!target.masked(x, y)) continue;
      ++r.masked;
      const auto& c = candidates[static_cast<std::size_t>(y) * w + x];
      if (!c.valid) {
        ++r.blank;
        ++r.blank_own;
        r.provenance(x, y) = kBlank;
        set_pixel(colors, x, y, Color::Zero());
        continue;
      }
      if (c.source >= own_count) ++r.blank_own;
      r.provenance(x, y) = c.source;
      set_pixel(colors, x, y, c.color);
    }
  tick("sample", t0);

  if (o.bp_enabled) {
    t0 = clock::now();
    const LabelSpace space = build_label_space(target, candidates, order, o.sample);
    const MrfBuild mrf = build_mrf(space, target, o.bp_alpha);
    Labeling lab = solve_map_bp(mrf.problem, o.bp);
    if (o.bp_center_fallback) {
      std::vector<int> center(lab.labels.size(), 0);
      for (int i = 0; i < mrf.problem.size(); ++i) {
        const auto& offs = space.pixels[mrf.node_pixel[i]].offsets;
        center[i] = static_cast<int>(std::find(offs.begin(), offs.end(), Eigen::Vector2i(0, 0)) - offs.begin());
      }
      lab = keep_lower_energy(mrf.problem, std::move(lab), center);
    }
    for (int i = 0; i < mrf.problem.size(); ++i) {
      const PixelLabels& px = space.pixels[mrf.node_pixel[i]];
      set_pixel(colors, px.x, px.y, px.labels[lab.labels[i]].self);
      offsets[static_cast<std::size_t>(px.y) * w + px.x] = px.offsets[lab.labels[i]];
    }
    tick("bp", t0);
  }

  r.composite = RgbImage(w, h, 3);
  for (std::size_t i = 0; i < colors.data().size(); ++i) r.composite.data()[i] = to_u8(colors.data()[i]);

  if (o.harmonize_enabled && r.masked > 0) {
    t0 = clock::now();
    GuidanceField g = build_guidance_field(colors, r.provenance, target.mask);
    if (o.boundary_gradient || o.seam_gradient == SeamGradient::kSource)
      add_donor_guidance(g, target, colors, r.provenance, offsets, order, o.boundary_gradient,
                         o.seam_gradient == SeamGradient::kSource);
    const PoissonSolution sol = solve_poisson(g, colors, target.mask, o.poisson);
    r.output = sol.to_rgb();
    tick("harmonize", t0);
  } else {
    r.output = r.composite;
  }
  // Unmasked pixels are passed through bit for bit.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (!target.masked(x, y))
        for (int c = 0; c < 3; ++c) r.output(x, y, c) = target.rgb(x, y, c);
  return r;
}

// ---------------------------------------------------------------------------------------------
// Whole pipeline

struct PipelineResult {
  std::vector<RgbImage> frames;
  std::vector<Image<std::int32_t>> provenance;
  std::vector<RgbImage> composites;
  std::optional<MetricsReport> metrics;
  double blank_fraction_before = 0;  // own video only
  double blank_fraction_after = 0;   // all registered videos
  std::vector<RegistrationResult> registrations;
  json manifest;
};

namespace detail {

/// Runs `fn`, prefixing any error with the stage and frame while keeping its type.
template <typename Fn>
void with_context(const std::string& stage, int frame, Fn&& fn) {
  const std::string where = "stage '" + stage + "'" + (frame >= 0 ? ", frame " + std::to_string(frame) : "") + ": ";
  try {
    fn();
  } catch (const ConfigError& e) {
    throw ConfigError(where + e.what());
  } catch (const DataError& e) {
    throw DataError(where + e.what());
  } catch (const InsufficientDataError& e) {
    throw InsufficientDataError(where + e.what());
  } catch (const RegistrationError& e) {
    throw RegistrationError(where + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(where + e.what());
  } catch (const InstanceTooLargeError& e) {
    throw InstanceTooLargeError(where + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(where + e.what());
  }
}

}  // namespace detail

/// Runs every enabled stage on in-memory captures. `captures[0]` is the target video; the
/// others are fused into its map when fusion is on. Ground truth, when given, yields metrics.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, std::vector<CaptureSequence> captures,
                                   const std::vector<RgbImage>& ground_truth = {}) {
  using clock = std::chrono::steady_clock;
  cfg.validate(false);
  if (captures.empty() || captures[0].frames.empty()) throw DataError("run_pipeline: empty target video");
  if (!cfg.fusing()) captures.resize(1);
  std::map<std::string, double> timings;
  auto timed = [&](const std::string& stage, auto&& fn) {
    const auto t0 = clock::now();
    fn();
    timings[stage] += std::chrono::duration<double>(clock::now() - t0).count();
  };

  CaptureSequence& target = captures[0];
  const int n = static_cast<int>(target.frames.size());
  PipelineResult res;

  PointCloud geometry, colored;
  timed("map", [&] {
    detail::with_context("map", -1, [&] {
      target.validate();
      geometry = stitch_map(target, cfg.map);
      colored = stitch_colored_map(target, cfg.map);
    });
  });

  if (cfg.fusing()) {
    timed("fuse", [&] {
      for (std::size_t k = 1; k < captures.size(); ++k)
        detail::with_context("fuse", -1, [&] {
          captures[k].validate();
          FuseOptions fo = cfg.fuse;
          fo.stitch = cfg.map;
          FuseResult fr = fuse_maps(geometry, captures[k], Pose::identity(), fo);
          captures[k].world_from_sensor = fr.world_from_sensor;
          captures[k].sync_camera_poses();
          geometry = std::move(fr.merged);
          res.registrations.push_back(fr.registration);
        });
    });
  }

  if (cfg.refine_enabled) {
    timed("refine", [&] {
      for (int t = 0; t < n; ++t) {
        FramePacket& f = target.frames[t];
        if (count_set(f.mask) == 0) continue;
        detail::with_context("refine", f.index, [&] {
          const RefinementResult rr = refine_rotation(f, colored, cfg.refine);
          f.camera_from_world = rr.pose;
        });
      }
    });
  }

  timed("depth", [&] {
    for (auto& cap : captures)
      for (auto& f : cap.frames)
        detail::with_context("depth", f.index, [&] {
          f.depth = densify_depth(cull_occluded_seeds(render_depth(geometry, f.camera_from_world, f.intrinsics)));
        });
  });

  std::vector<std::vector<FramePacket>> extras;
  std::vector<int> bases;
  int next_id = n;
  for (std::size_t k = 1; k < captures.size(); ++k) {
    extras.push_back(captures[k].frames);
    bases.push_back(next_id);
    next_id += static_cast<int>(captures[k].frames.size());
  }

  InpaintStageOptions io;
  io.sample = cfg.sample;
  io.bp_enabled = cfg.bp_enabled;
  io.bp = cfg.bp;
  io.bp_alpha = cfg.bp_alpha;
  io.bp_center_fallback = cfg.bp_center_fallback;
  io.harmonize_enabled = cfg.harmonize_enabled;
  io.boundary_gradient = cfg.boundary_gradient;
  io.seam_gradient = cfg.seam_gradient;
  io.poisson = cfg.poisson;

  std::size_t masked = 0, blank = 0, blank_own = 0;
  std::vector<Mask> masks;
  for (int t = 0; t < n; ++t) {
    const FramePacket& f = target.frames[t];
    masks.push_back(f.mask);
    const auto order = source_scan_order(target.frames, t, extras, bases);
    FrameInpaintResult fr;
    detail::with_context("inpaint", f.index, [&] { fr = inpaint_frame(f, order, n, io, &timings); });
    masked += fr.masked;
    blank += fr.blank;
    blank_own += fr.blank_own;
    res.frames.push_back(std::move(fr.output));
    res.provenance.push_back(std::move(fr.provenance));
    res.composites.push_back(std::move(fr.composite));
  }
  res.blank_fraction_after = masked ? double(blank) / double(masked) : 0.0;
  res.blank_fraction_before = masked ? double(blank_own) / double(masked) : 0.0;

  FlowSet flows;
  if (cfg.temporal_enabled) {
    timed("temporal", [&] {
      detail::with_context("temporal", -1, [&] {
        flows = compute_flows(res.frames, cfg.flow);
        res.frames = temporal_smooth(res.frames, masks, flows, cfg.temporal);
      });
    });
  }

  if (!ground_truth.empty()) {
    if (ground_truth.size() != res.frames.size()) throw DataError("ground truth frame count differs from video");
    if (masked > 0) res.metrics = evaluate(res.frames, ground_truth, masks);
  }

  json t = json::object();
  for (const auto& [k, v] : timings) t[k] = v;
  json regs = json::array();
  for (const auto& r : res.registrations)
    regs.push_back({{"rms_residual", r.rms_residual},
                    {"inlier_fraction", r.inlier_fraction},
                    {"iterations", r.iterations},
                    {"transform", detail::pose_to_json(r.transform)}});
  res.manifest = {{"config_hash", fnv1a_hex(config_to_json(cfg).dump())},
                  {"seed", cfg.seed},
                  {"stages", cfg.stages()},
                  {"frames", n},
                  {"masked_pixels", masked},
                  {"blank_fraction", {{"before_fusion", res.blank_fraction_before}, {"after_fusion", res.blank_fraction_after}}},
                  {"registrations", regs},
                  {"timings_s", t}};

  if (!cfg.output_dir.empty()) {
    const fs::path& out = cfg.output_dir;
    for (int i = 0; i < n; ++i) {
      const int idx = target.frames[i].index;
      write_rgb_png(out / "frames" / frame_name(idx), res.frames[i]);
      write_rgb_png(out / "provenance" / frame_name(idx), provenance_image(res.provenance[i]));
      if (cfg.debug_composite) write_rgb_png(out / "composite" / frame_name(idx), res.composites[i]);
      if (cfg.debug_depth) write_depth_png(out / "depth" / frame_name(idx), target.frames[i].depth, kDepthScale);
      if (cfg.debug_flow && cfg.temporal_enabled && i + 1 < n)
        {
        fs::create_directories(out / "flow");
        write_flo((out / "flow" / frame_name(idx, ".flo")).string(), flows.forward[i]);
      }
    }
    if (res.metrics) {
      detail::write_json(out / "metrics.json", metrics_to_json(*res.metrics));
      std::ofstream(out / "metrics.txt") << format_metrics_table({{"inpainted", *res.metrics}});
    }
    detail::write_json(out / "manifest.json", res.manifest);
    detail::write_json(out / "config.json", config_to_json(cfg));
  }
  return res;
}

/// Loads every video named by the config and runs the pipeline on them.
inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  std::vector<CaptureSequence> captures;
  for (const auto& v : cfg.videos) captures.push_back(load_dataset(v));
  const auto gt = load_ground_truth(cfg.videos.front(), captures.front());
  return run_pipeline(cfg, std::move(captures), gt);
}

}  // namespace rgbdi
