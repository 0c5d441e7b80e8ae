#pragma once

#include "rgbdi/bp.hpp"
#include "rgbdi/common.hpp"
#include "rgbdi/frame.hpp"
#include "rgbdi/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <vector>

namespace rgbdi {

struct SamplingOptions {
  int window_n = 3;           // odd
  double depth_tol_m = 0.05;  // occlusion check: max(depth_tol_m, depth_tol_rel * depth)
  double depth_tol_rel = 0.02;

  void validate() const {
    if (window_n < 1 || window_n % 2 == 0) throw std::invalid_argument("sample.window_n must be odd and >= 1");
    if (depth_tol_m < 0 || depth_tol_rel < 0) throw std::invalid_argument("negative depth tolerance");
  }
};

enum class WarpStatus { kOk, kInvalidDepth, kBehindCamera, kOutOfBounds };

struct WarpResult {
  WarpStatus status = WarpStatus::kInvalidDepth;
  double u = 0, v = 0;  // source subpixel coordinates
  double depth = 0;     // source camera depth of the warped point
  bool ok() const { return status == WarpStatus::kOk; }
};

/// Moves target pixel (u, v) at camera depth `depth` into the source camera.
inline WarpResult warp_point(const FramePacket& target, double u, double v, double depth,
                             const FramePacket& source) {
  WarpResult r;
  if (!(depth > 0.0)) return r;
  const Eigen::Vector3d world = unproject_pixel(u, v, depth, target.camera_from_world, target.intrinsics);
  const auto proj = project_point(world, source.camera_from_world, source.intrinsics);
  if (!proj) {
    r.status = WarpStatus::kBehindCamera;
    return r;
  }
  r.u = proj->u;
  r.v = proj->v;
  r.depth = proj->z;
  r.status = bilinear_in_bounds(source.rgb, r.u, r.v) ? WarpStatus::kOk : WarpStatus::kOutOfBounds;
  return r;
}

/// Warps an integer target pixel using the target's dense depth.
inline WarpResult warp_pixel(const FramePacket& target, int u, int v, const FramePacket& source) {
  if (!target.depth.in_bounds(u, v) || !target.depth.valid(u, v)) return {};
  return warp_point(target, u, v, target.depth.at(u, v), source);
}

/// A frame that may donate colors, with the id written into provenance maps.
struct SourceView {
  int id = 0;
  const FramePacket* frame = nullptr;
};

/// Scan order for target frame `t` of `own`: t+1 ... end, then t-1 ... start. Frames of other
/// captures follow, nearest camera center first (ties by id). Own frames use their position
/// as id; extra capture k starts at `extra_id_base[k]`.
inline std::vector<SourceView> source_scan_order(std::span<const FramePacket> own, std::size_t t,
                                                 std::span<const std::vector<FramePacket>> extras = {},
                                                 std::span<const int> extra_id_base = {}) {
  std::vector<SourceView> order;
  for (std::size_t s = t + 1; s < own.size(); ++s) order.push_back({int(s), &own[s]});
  for (std::size_t s = t; s-- > 0;) order.push_back({int(s), &own[s]});

  const Eigen::Vector3d c = own[t].camera_from_world.center();
  std::vector<std::pair<double, SourceView>> rest;
  int base = static_cast<int>(own.size());
  for (std::size_t k = 0; k < extras.size(); ++k) {
    if (k < extra_id_base.size()) base = extra_id_base[k];
    for (std::size_t s = 0; s < extras[k].size(); ++s) {
      const FramePacket& f = extras[k][s];
      rest.push_back({(f.camera_from_world.center() - c).norm(), {base + int(s), &f}});
    }
    base += static_cast<int>(extras[k].size());
  }
  std::stable_sort(rest.begin(), rest.end(), [](const auto& a, const auto& b) {
    return a.first < b.first || (a.first == b.first && a.second.id < b.second.id);
  });
  for (const auto& r : rest) order.push_back(r.second);
  return order;
}

struct CandidateSample {
  int source = kBlank;  // source frame id
  double u = 0, v = 0;  // source subpixel coordinates
  Color color = Color::Zero();
  double depth = 0;     // source camera depth of the warped point
  bool valid = false;
};

namespace detail {

/// Rounded pixel and every bilinear tap must lie outside the source mask.
inline bool footprint_unmasked(const FramePacket& s, double u, double v) {
  const int x0 = static_cast<int>(std::floor(u)), y0 = static_cast<int>(std::floor(v));
  for (int dy = 0; dy <= 1; ++dy)
    for (int dx = 0; dx <= 1; ++dx) {
      const int x = std::min(x0 + dx, s.width() - 1), y = std::min(y0 + dy, s.height() - 1);
      if (s.masked(x, y)) return false;
    }
  return true;
}

/// Agreement of the warped depth with the source depth at the rounded pixel or, when all four
/// taps are valid, at the bilinear subpixel position. On grazing surfaces rounding alone is off
/// by up to half a pixel of depth slope.
inline bool depth_consistent(const FramePacket& s, const WarpResult& w, const SamplingOptions& o) {
  const DepthMap& d = s.depth;
  if (d.empty()) return false;
  auto agrees = [&](double ds) { return std::abs(w.depth - ds) <= std::max(o.depth_tol_m, o.depth_tol_rel * ds); };
  const int x = round_half_up(w.u), y = round_half_up(w.v);
  if (d.in_bounds(x, y) && d.valid(x, y) && agrees(d.at(x, y))) return true;
  const int x0 = static_cast<int>(std::floor(w.u)), y0 = static_cast<int>(std::floor(w.v));
  const int x1 = std::min(x0 + 1, d.width() - 1), y1 = std::min(y0 + 1, d.height() - 1);
  if (!d.in_bounds(x0, y0) || !d.valid(x0, y0) || !d.valid(x1, y0) || !d.valid(x0, y1) || !d.valid(x1, y1))
    return false;
  const double fx = w.u - x0, fy = w.v - y0;
  return agrees((1 - fy) * ((1 - fx) * d.at(x0, y0) + fx * d.at(x1, y0)) +
                fy * ((1 - fx) * d.at(x0, y1) + fx * d.at(x1, y1)));
}

}  // namespace detail

/// First source in `order` where the pixel warps in-bounds, off the source mask, and agrees
/// with the source depth (not occluded there).
inline CandidateSample sample_candidate(const FramePacket& target, int u, int v,
                                        std::span<const SourceView> order,
                                        const SamplingOptions& opts = {}) {
  CandidateSample out;
  if (!target.depth.in_bounds(u, v) || !target.depth.valid(u, v)) return out;
  for (const auto& src : order) {
    const FramePacket& s = *src.frame;
    const WarpResult w = warp_pixel(target, u, v, s);
    if (!w.ok()) continue;
    if (!detail::footprint_unmasked(s, w.u, w.v)) continue;
    if (!detail::depth_consistent(s, w, opts)) continue;
    out.source = src.id;
    out.u = w.u;
    out.v = w.v;
    out.depth = w.depth;
    out.color = *sample_bilinear(s.rgb, w.u, w.v);
    out.valid = true;
    return out;
  }
  return out;
}

/// Candidates for every masked pixel of `target`, row-major; unmasked entries stay invalid.
inline std::vector<CandidateSample> sample_candidates(const FramePacket& target,
                                                      std::span<const SourceView> order,
                                                      const SamplingOptions& opts = {}) {
  const int w = target.width();
  std::vector<CandidateSample> out(target.rgb.pixel_count());
  parallel_for(static_cast<std::size_t>(target.height()), [&](std::size_t y) {
    for (int x = 0; x < w; ++x)
      if (target.masked(x, int(y))) out[y * w + x] = sample_candidate(target, x, int(y), order, opts);
  });
  return out;
}

/// Candidate colors and expected-neighbor colors for one masked pixel.
struct PixelLabels {
  int x = 0, y = 0;
  int source = kBlank;
  std::vector<LabelColors> labels;
  std::vector<Eigen::Vector2i> offsets;  // window offset of each label
};

struct LabelSpace {
  int width = 0, height = 0;
  std::vector<PixelLabels> pixels;  // one per masked pixel, row-major
};

/// Window offsets ordered center first, then by squared radius, then row-major.
inline std::vector<Eigen::Vector2i> window_offsets(int n) {
  const int r = n / 2;
  std::vector<Eigen::Vector2i> offs;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) offs.emplace_back(dx, dy);
  std::stable_sort(offs.begin(), offs.end(),
                   [](const auto& a, const auto& b) { return a.squaredNorm() < b.squaredNorm(); });
  return offs;
}

/// For each masked pixel, the n x n window of source colors around its candidate. Each
/// label's expected neighbor colors come from warping that neighbor into the same source with
/// its own depth and applying the label's window offset. Window cells that leave the source
/// image or touch its mask are dropped; invalid candidates give empty label sets.
inline LabelSpace build_label_space(const FramePacket& target,
                                    const std::vector<CandidateSample>& candidates,
                                    std::span<const SourceView> sources, const SamplingOptions& opts = {}) {
  opts.validate();
  std::map<int, const FramePacket*> by_id;
  for (const auto& s : sources) by_id[s.id] = s.frame;
  const auto offsets = window_offsets(opts.window_n);

  LabelSpace space;
  space.width = target.width();
  space.height = target.height();
  for (int y = 0; y < target.height(); ++y)
    for (int x = 0; x < target.width(); ++x)
      if (target.masked(x, y)) space.pixels.push_back({x, y});

  parallel_for(space.pixels.size(), [&](std::size_t i) {
    PixelLabels& px = space.pixels[i];
    const CandidateSample& cand = candidates[static_cast<std::size_t>(px.y) * target.width() + px.x];
    if (!cand.valid) return;
    const auto it = by_id.find(cand.source);
    if (it == by_id.end()) return;
    const FramePacket& s = *it->second;
    px.source = cand.source;

    // Neighbor warps are shared by all labels of this pixel.
    std::array<std::optional<WarpResult>, 4> nwarp;
    for (int d = 0; d < 4; ++d) {
      const int nx = px.x + kDx[d], ny = px.y + kDy[d];
      if (!target.depth.in_bounds(nx, ny)) continue;
      const WarpResult w = warp_pixel(target, nx, ny, s);
      if (w.ok()) nwarp[d] = w;
    }

    for (const auto& o : offsets) {
      const double lu = cand.u + o.x(), lv = cand.v + o.y();
      if (!bilinear_in_bounds(s.rgb, lu, lv) || !detail::footprint_unmasked(s, lu, lv)) continue;
      LabelColors lc;
      lc.self = *sample_bilinear(s.rgb, lu, lv);
      for (int d = 0; d < 4; ++d) {
        const double eu = nwarp[d] ? nwarp[d]->u + o.x() : lu + kDx[d];
        const double ev = nwarp[d] ? nwarp[d]->v + o.y() : lv + kDy[d];
        lc.expected[d] = sample_bilinear_clamped(s.rgb, eu, ev);
      }
      px.labels.push_back(lc);
      px.offsets.push_back(o);
    }
    if (px.labels.empty()) px.source = kBlank;
  });
  return space;
}

/// Color the source shows at the 4-neighbor of target pixel (x, y) in direction d, after warping
/// that neighbor with its own depth and applying the window offset. Empty when the neighbor does
/// not warp into the source.
inline std::optional<Color> expected_neighbor_color(const FramePacket& target, int x, int y, int d,
                                                    const FramePacket& source,
                                                    const Eigen::Vector2i& offset = Eigen::Vector2i::Zero()) {
  const WarpResult w = warp_pixel(target, x + kDx[d], y + kDy[d], source);
  if (!w.ok()) return std::nullopt;
  return sample_bilinear_clamped(source.rgb, w.u + offset.x(), w.v + offset.y());
}

/// MRF over the masked pixels that have labels. `node_pixel[i]` indexes `space.pixels`.
struct MrfBuild {
  MrfProblem problem;
  std::vector<std::size_t> node_pixel;
};

inline MrfBuild build_mrf(const LabelSpace& space, const FramePacket& target, double alpha) {
  std::vector<MrfNode> nodes;
  MrfBuild out;
  for (std::size_t i = 0; i < space.pixels.size(); ++i) {
    const PixelLabels& px = space.pixels[i];
    if (px.labels.empty()) continue;
    MrfNode n;
    n.x = px.x;
    n.y = px.y;
    n.labels = px.labels;
    for (int d = 0; d < 4; ++d) {
      const int qx = px.x + kDx[d], qy = px.y + kDy[d];
      if (target.rgb.in_bounds(qx, qy) && !target.masked(qx, qy)) n.boundary[d] = pixel_color(target.rgb, qx, qy);
    }
    nodes.push_back(std::move(n));
    out.node_pixel.push_back(i);
  }
  out.problem = MrfProblem(std::move(nodes), alpha);
  return out;
}

}  // namespace rgbdi
