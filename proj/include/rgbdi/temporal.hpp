#pragma once

#include "rgbdi/common.hpp"
#include "rgbdi/image.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

namespace rgbdi {

/// Dense displacement field: pixel (x, y) of image a corresponds to (x + u, y + v) in image b.
struct FlowField {
  int width = 0, height = 0;
  std::vector<Eigen::Vector2f> flow;
  std::vector<std::uint8_t> valid;

  FlowField() = default;
  FlowField(int w, int h) : width(w), height(h), flow(std::size_t(w) * h, Eigen::Vector2f::Zero()), valid(std::size_t(w) * h, 0) {}

  std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  const Eigen::Vector2f& at(int x, int y) const { return flow[idx(x, y)]; }
  bool is_valid(int x, int y) const { return valid[idx(x, y)] != 0; }
  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto v : valid) n += v;
    return n;
  }
};

struct FlowOptions {
  int levels = 3;
  int block = 8;
  int radius = 4;            // search radius per level, pixels
  double min_variance = 4.0; // block intensity variance below this has no usable texture
  double max_ssd_ratio = 0.5;  // best mean SSD must stay under this fraction of block variance...
  double max_ssd_floor = 25.0; // ...or under this absolute mean squared difference
};

namespace detail {

using Gray = Image<float>;

inline Gray to_gray(const RgbImage& img) {
  Gray g(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      g(x, y) = 0.299f * img(x, y, 0) + 0.587f * img(x, y, 1) + 0.114f * img(x, y, 2);
  return g;
}

inline Gray downsample(const Gray& g) {
  const int w = std::max(1, g.width() / 2), h = std::max(1, g.height() / 2);
  Gray out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float s = 0;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx)
          s += g(std::min(2 * x + dx, g.width() - 1), std::min(2 * y + dy, g.height() - 1));
      out(x, y) = s * 0.25f;
    }
  return out;
}

inline float clamped(const Gray& g, int x, int y) {
  return g(std::clamp(x, 0, g.width() - 1), std::clamp(y, 0, g.height() - 1));
}

struct BlockFlow {
  int cols = 0, rows = 0, stride = 1;
  std::vector<Eigen::Vector2f> flow;
  std::vector<std::uint8_t> valid;
};

/// Block matching on one pyramid level. Block centers lie on a grid of spacing block/2.
inline BlockFlow match_level(const Gray& a, const Gray& b, const BlockFlow* coarse, const FlowOptions& o) {
  BlockFlow bf;
  bf.stride = std::max(1, o.block / 2);
  bf.cols = (a.width() + bf.stride - 1) / bf.stride;
  bf.rows = (a.height() + bf.stride - 1) / bf.stride;
  bf.flow.assign(std::size_t(bf.cols) * bf.rows, Eigen::Vector2f::Zero());
  bf.valid.assign(bf.flow.size(), 0);
  const int half = o.block / 2;

  parallel_for(static_cast<std::size_t>(bf.rows), [&](std::size_t row) {
    for (int col = 0; col < bf.cols; ++col) {
      const int cx = col * bf.stride + bf.stride / 2, cy = int(row) * bf.stride + bf.stride / 2;
      // Prediction from the coarser level.
      Eigen::Vector2f pred = Eigen::Vector2f::Zero();
      if (coarse) {
        const int ccol = std::clamp((cx / 2) / coarse->stride, 0, coarse->cols - 1);
        const int crow = std::clamp((cy / 2) / coarse->stride, 0, coarse->rows - 1);
        pred = 2.0f * coarse->flow[std::size_t(crow) * coarse->cols + ccol];
      }
      const int px = static_cast<int>(std::lround(pred.x())), py = static_cast<int>(std::lround(pred.y()));

      double mean = 0, sq = 0;
      int count = 0;
      for (int y = cy - half; y < cy + half; ++y)
        for (int x = cx - half; x < cx + half; ++x) {
          const double v = clamped(a, x, y);
          mean += v;
          sq += v * v;
          ++count;
        }
      mean /= count;
      const double var = sq / count - mean * mean;

      const int r = o.radius, span = 2 * r + 1;
      std::vector<double> ssd(std::size_t(span) * span);
      double best = std::numeric_limits<double>::infinity();
      int bdx = 0, bdy = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          double s = 0;
          for (int y = cy - half; y < cy + half; ++y)
            for (int x = cx - half; x < cx + half; ++x) {
              const double d = clamped(a, x, y) - clamped(b, x + px + dx, y + py + dy);
              s += d * d;
            }
          ssd[std::size_t(dy + r) * span + (dx + r)] = s;
          const int m = dx * dx + dy * dy, bm = bdx * bdx + bdy * bdy;
          if (s < best || (s == best && m < bm)) {
            best = s;
            bdx = dx;
            bdy = dy;
          }
        }
      // Parabolic subpixel refinement along each axis. An exact match stays on the integer shift.
      auto refine = [](double l, double c, double rr) {
        const double den = l - 2 * c + rr;
        if (den <= 0) return 0.0;
        return std::clamp(0.5 * (l - rr) / den, -0.5, 0.5);
      };
      double sx = 0, sy = 0;
      if (best > 0 && std::abs(bdx) < r)
        sx = refine(ssd[std::size_t(bdy + r) * span + (bdx + r - 1)], best, ssd[std::size_t(bdy + r) * span + (bdx + r + 1)]);
      if (best > 0 && std::abs(bdy) < r)
        sy = refine(ssd[std::size_t(bdy + r - 1) * span + (bdx + r)], best, ssd[std::size_t(bdy + r + 1) * span + (bdx + r)]);

      const std::size_t k = row * bf.cols + col;
      bf.flow[k] = Eigen::Vector2f(float(px + bdx + sx), float(py + bdy + sy));
      const double mean_ssd = best / count;
      bf.valid[k] = var >= o.min_variance && mean_ssd <= std::max(o.max_ssd_floor, o.max_ssd_ratio * var);
    }
  });
  return bf;
}

}  // namespace detail

/// Pyramidal block-matching flow from a to b.
inline FlowField compute_flow(const RgbImage& a, const RgbImage& b, const FlowOptions& opts = {}) {
  if (!a.same_shape(b)) throw std::invalid_argument("compute_flow: image dimensions differ");
  std::vector<detail::Gray> pa{detail::to_gray(a)}, pb{detail::to_gray(b)};
  for (int l = 1; l < opts.levels; ++l) {
    pa.push_back(detail::downsample(pa.back()));
    pb.push_back(detail::downsample(pb.back()));
  }
  detail::BlockFlow coarse;
  bool have_coarse = false;
  for (int l = opts.levels - 1; l >= 0; --l) {
    coarse = detail::match_level(pa[l], pb[l], have_coarse ? &coarse : nullptr, opts);
    have_coarse = true;
  }
  // Per-pixel flow: bilinear between the valid block centers around the pixel; validity
  // follows the block that contains it.
  FlowField out(a.width(), a.height());
  const int st = coarse.stride;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      const int col = std::min(x / st, coarse.cols - 1);
      const int row = std::min(y / st, coarse.rows - 1);
      const std::size_t own = std::size_t(row) * coarse.cols + col;
      out.valid[out.idx(x, y)] = coarse.valid[own];
      if (!coarse.valid[own]) continue;
      const double gx = std::clamp((x - st / 2) / double(st), 0.0, double(coarse.cols - 1));
      const double gy = std::clamp((y - st / 2) / double(st), 0.0, double(coarse.rows - 1));
      const int c0 = std::min(int(gx), coarse.cols - 1), r0 = std::min(int(gy), coarse.rows - 1);
      const int c1 = std::min(c0 + 1, coarse.cols - 1), r1 = std::min(r0 + 1, coarse.rows - 1);
      const double ax = gx - c0, ay = gy - r0;
      Eigen::Vector2d acc = Eigen::Vector2d::Zero();
      double wsum = 0;
      const int cs[2] = {c0, c1}, rs[2] = {r0, r1};
      const double wx[2] = {1 - ax, ax}, wy[2] = {1 - ay, ay};
      for (int j = 0; j < 2; ++j)
        for (int i = 0; i < 2; ++i) {
          const std::size_t k = std::size_t(rs[j]) * coarse.cols + cs[i];
          const double w = wx[i] * wy[j];
          if (w <= 0 || !coarse.valid[k]) continue;
          acc += w * coarse.flow[k].cast<double>();
          wsum += w;
        }
      out.flow[out.idx(x, y)] = wsum > 0 ? Eigen::Vector2f((acc / wsum).cast<float>()) : coarse.flow[own];
    }
  return out;
}

/// Flow vector at a subpixel position: bilinear over the valid taps. Nullopt when the
/// nearest pixel is invalid or the position leaves the field.
inline std::optional<Eigen::Vector2f> sample_flow(const FlowField& f, double x, double y) {
  if (!(x >= 0 && y >= 0 && x <= f.width - 1 && y <= f.height - 1)) return std::nullopt;
  if (!f.is_valid(round_half_up(x), round_half_up(y))) return std::nullopt;
  const int x0 = std::min(int(std::floor(x)), f.width - 1), y0 = std::min(int(std::floor(y)), f.height - 1);
  const int x1 = std::min(x0 + 1, f.width - 1), y1 = std::min(y0 + 1, f.height - 1);
  const double ax = x - x0, ay = y - y0;
  Eigen::Vector2d acc = Eigen::Vector2d::Zero();
  double wsum = 0;
  const int xs[2] = {x0, x1}, ys[2] = {y0, y1};
  const double wx[2] = {1 - ax, ax}, wy[2] = {1 - ay, ay};
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 2; ++i) {
      const double w = wx[i] * wy[j];
      if (w <= 0 || !f.is_valid(xs[i], ys[j])) continue;
      acc += w * f.at(xs[i], ys[j]).cast<double>();
      wsum += w;
    }
  if (wsum <= 0) return std::nullopt;
  return (acc / wsum).cast<float>();
}

struct SmoothingConfig {
  int radius = 2;
  int min_samples = 2;

  void validate() const {
    if (radius < 1 || min_samples < 1 || min_samples > 2 * radius + 1)
      throw std::invalid_argument("invalid temporal smoothing config");
  }
};

/// forward[t]: flow t -> t+1 (size n-1). backward[t]: flow t -> t-1 (backward[0] unused).
struct FlowSet {
  std::vector<FlowField> forward;
  std::vector<FlowField> backward;
};

inline FlowSet compute_flows(const std::vector<RgbImage>& frames, const FlowOptions& opts = {}) {
  FlowSet fs;
  const std::size_t n = frames.size();
  fs.forward.resize(n ? n - 1 : 0);
  fs.backward.resize(n);
  for (std::size_t t = 0; t + 1 < n; ++t) {
    fs.forward[t] = compute_flow(frames[t], frames[t + 1], opts);
    fs.backward[t + 1] = compute_flow(frames[t + 1], frames[t], opts);
  }
  return fs;
}

/// Replaces every masked pixel with the mean of its own color and the colors reached by
/// chaining flow up to `radius` frames either way. Fewer than `min_samples` samples keeps the
/// original. Pixels outside the masks are copied unchanged.
inline std::vector<RgbImage> temporal_smooth(const std::vector<RgbImage>& frames, const std::vector<Mask>& masks,
                                             const FlowSet& flows, const SmoothingConfig& cfg = {}) {
  cfg.validate();
  const int n = static_cast<int>(frames.size());
  if (masks.size() != frames.size()) throw std::invalid_argument("temporal_smooth: masks/frames mismatch");
  std::vector<RgbImage> out = frames;
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t ti) {
    const int t = static_cast<int>(ti);
    const RgbImage& img = frames[t];
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) {
        if (!masks[t](x, y)) continue;
        Color sum = pixel_color(img, x, y);
        int count = 1;
        for (int dir : {1, -1}) {
          double px = x, py = y;
          for (int k = 1; k <= cfg.radius; ++k) {
            const int from = t + dir * (k - 1), to = t + dir * k;
            if (to < 0 || to >= n) break;
            const FlowField& f = dir > 0 ? flows.forward[from] : flows.backward[from];
            if (f.width != img.width() || f.height != img.height()) break;
            const auto v = sample_flow(f, px, py);
            if (!v) break;
            px += (*v).x();
            py += (*v).y();
            const auto c = sample_bilinear(frames[to], px, py);
            if (!c) break;
            sum += *c;
            ++count;
          }
        }
        if (count < cfg.min_samples) continue;
        set_pixel(out[t], x, y, sum / double(count));
      }
  });
  return out;
}

inline std::vector<RgbImage> temporal_smooth(const std::vector<RgbImage>& frames, const std::vector<Mask>& masks,
                                             const SmoothingConfig& cfg = {}, const FlowOptions& fopts = {}) {
  return temporal_smooth(frames, masks, compute_flows(frames, fopts), cfg);
}

// ---------------------------------------------------------------------------------------------
// Middlebury .flo: "PIEH" float magic 202021.25, int32 width, int32 height, then u,v float32
// pairs row-major. Values above 1e9 mark unknown flow.

inline constexpr float kFloMagic = 202021.25f;
inline constexpr float kFloUnknown = 1e10f;

inline void write_flo(const std::string& path, const FlowField& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path);
  const std::int32_t w = f.width, h = f.height;
  os.write(reinterpret_cast<const char*>(&kFloMagic), 4);
  os.write(reinterpret_cast<const char*>(&w), 4);
  os.write(reinterpret_cast<const char*>(&h), 4);
  for (std::size_t i = 0; i < f.flow.size(); ++i) {
    const float uv[2] = {f.valid[i] ? f.flow[i].x() : kFloUnknown, f.valid[i] ? f.flow[i].y() : kFloUnknown};
    os.write(reinterpret_cast<const char*>(uv), 8);
  }
  if (!os) throw DataError("failed writing " + path);
}

inline FlowField read_flo(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  float magic = 0;
  std::int32_t w = 0, h = 0;
  is.read(reinterpret_cast<char*>(&magic), 4);
  is.read(reinterpret_cast<char*>(&w), 4);
  is.read(reinterpret_cast<char*>(&h), 4);
  if (!is || magic != kFloMagic) throw DataError(path + ": not a .flo file");
  if (w <= 0 || h <= 0 || w > 100000 || h > 100000) throw DataError(path + ": bad .flo dimensions");
  FlowField f(w, h);
  for (std::size_t i = 0; i < f.flow.size(); ++i) {
    float uv[2];
    is.read(reinterpret_cast<char*>(uv), 8);
    if (!is) throw DataError(path + ": truncated .flo data");
    const bool ok = std::isfinite(uv[0]) && std::isfinite(uv[1]) && std::abs(uv[0]) <= 1e9f && std::abs(uv[1]) <= 1e9f;
    f.valid[i] = ok;
    f.flow[i] = ok ? Eigen::Vector2f(uv[0], uv[1]) : Eigen::Vector2f::Zero();
  }
  return f;
}

}  // namespace rgbdi
