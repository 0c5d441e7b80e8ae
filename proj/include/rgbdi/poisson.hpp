#pragma once

#include "rgbdi/common.hpp"
#include "rgbdi/frame.hpp"
#include "rgbdi/image.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace rgbdi {

/// Desired forward differences per channel: gx(x, y) targets f(x+1, y) - f(x, y) and gy(x, y)
/// targets f(x, y+1) - f(x, y). Only pairs touching the mask are read by the solver.
struct GuidanceField {
  ColorImage gx, gy;
  Image<std::int32_t> provenance;

  int width() const { return gx.width(); }
  int height() const { return gx.height(); }

  static GuidanceField zeros(int w, int h) {
    return {ColorImage(w, h, 3, 0.0), ColorImage(w, h, 3, 0.0), Image<std::int32_t>(w, h, 1, kNotMasked)};
  }
};

/// Guidance from the BP composite: plain forward differences between masked pixels that share
/// a source frame; zero across provenance seams, at blank pixels and across the mask boundary.
inline GuidanceField build_guidance_field(const ColorImage& colors, const Image<std::int32_t>& provenance,
                                          const Mask& mask) {
  const int w = colors.width(), h = colors.height();
  GuidanceField g = GuidanceField::zeros(w, h);
  g.provenance = provenance;
  auto same_source = [&](int x0, int y0, int x1, int y1) {
    if (!mask(x0, y0) || !mask(x1, y1)) return false;
    const auto a = provenance(x0, y0), b = provenance(x1, y1);
    return a >= 0 && a == b;
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        if (x + 1 < w && same_source(x, y, x + 1, y)) g.gx(x, y, c) = colors(x + 1, y, c) - colors(x, y, c);
        if (y + 1 < h && same_source(x, y, x, y + 1)) g.gy(x, y, c) = colors(x, y + 1, c) - colors(x, y, c);
      }
  return g;
}

/// Sets the guidance of the pair between masked pixel (x, y) and its neighbor in direction d to
/// `diff`, the desired f(x, y) - f(neighbor), per channel.
inline void set_pair_guidance(GuidanceField& g, int x, int y, int d, const Color& diff) {
  const int qx = x + kDx[d], qy = y + kDy[d];
  for (int c = 0; c < 3; ++c) switch (d) {
      case kLeft: g.gx(qx, qy, c) = diff[c]; break;
      case kRight: g.gx(x, y, c) = -diff[c]; break;
      case kTop: g.gy(qx, qy, c) = diff[c]; break;
      default: g.gy(x, y, c) = -diff[c]; break;
    }
}

/// Guidance equal to the gradient of a complete image, over every pair touching the mask.
inline GuidanceField gradient_guidance(const ColorImage& img) {
  const int w = img.width(), h = img.height();
  GuidanceField g = GuidanceField::zeros(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        if (x + 1 < w) g.gx(x, y, c) = img(x + 1, y, c) - img(x, y, c);
        if (y + 1 < h) g.gy(x, y, c) = img(x, y + 1, c) - img(x, y, c);
      }
  return g;
}

struct PoissonOptions {
  double tolerance = 1e-8;      // relative residual
  double max_iter_factor = 10;  // iterations <= factor * |mask|
};

struct PoissonSolution {
  ColorImage colors;  // full frame; masked pixels hold the unclamped solution
  double residual = 0;       // worst relative residual across channels
  int iterations = 0;        // most iterations used by any channel
  std::size_t border_pixels = 0;  // masked pixels on the image border (reflective boundary)

  /// Final 8-bit frame, clamped after the solve.
  RgbImage to_rgb() const {
    RgbImage out(colors.width(), colors.height(), 3);
    for (std::size_t i = 0; i < colors.data().size(); ++i) out.data()[i] = to_u8(colors.data()[i]);
    return out;
  }
};

namespace detail {

/// Row-major index of masked pixels, -1 elsewhere.
inline std::vector<int> mask_index(const Mask& mask, std::vector<std::pair<int, int>>& pixels) {
  std::vector<int> idx(mask.pixel_count(), -1);
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask(x, y)) {
        idx[static_cast<std::size_t>(y) * mask.width() + x] = static_cast<int>(pixels.size());
        pixels.emplace_back(x, y);
      }
  return idx;
}

}  // namespace detail

/// Divergence form of the guided Poisson system for one channel: for every masked p,
///   sum_{q in N(p)} (f_p - f_q) = sum_{q in N(p)} v_pq,  v_pq = desired f_p - f_q,
/// with known pixels moved to the right-hand side. Neighbors outside the image are dropped,
/// which is the reflective (zero-flux) boundary.
struct PoissonSystem {
  std::vector<std::pair<int, int>> pixels;
  std::vector<int> index;
  std::vector<std::array<int, 4>> nbr;  // masked neighbor index, -1 known, -2 outside image
  std::vector<double> diag;
  int width = 0;

  explicit PoissonSystem(const Mask& mask) : width(mask.width()) {
    index = detail::mask_index(mask, pixels);
    nbr.resize(pixels.size());
    diag.assign(pixels.size(), 0.0);
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      const auto [x, y] = pixels[i];
      for (int d = 0; d < 4; ++d) {
        const int qx = x + kDx[d], qy = y + kDy[d];
        if (!mask.in_bounds(qx, qy)) {
          nbr[i][d] = -2;
          continue;
        }
        diag[i] += 1.0;
        nbr[i][d] = index[static_cast<std::size_t>(qy) * width + qx];
      }
    }
  }

  std::size_t size() const { return pixels.size(); }

  void apply(const std::vector<double>& f, std::vector<double>& out) const {
    for (std::size_t i = 0; i < size(); ++i) {
      double v = diag[i] * f[i];
      for (int d = 0; d < 4; ++d)
        if (nbr[i][d] >= 0) v -= f[nbr[i][d]];
      out[i] = v;
    }
  }

  std::vector<double> rhs(const GuidanceField& g, const ColorImage& known, int c) const {
    std::vector<double> b(size(), 0.0);
    for (std::size_t i = 0; i < size(); ++i) {
      const auto [x, y] = pixels[i];
      double v = 0;
      for (int d = 0; d < 4; ++d) {
        if (nbr[i][d] == -2) continue;
        const int qx = x + kDx[d], qy = y + kDy[d];
        // desired f_p - f_q
        double guide = 0;
        switch (d) {
          case kLeft: guide = g.gx(qx, qy, c); break;
          case kRight: guide = -g.gx(x, y, c); break;
          case kTop: guide = g.gy(qx, qy, c); break;
          default: guide = -g.gy(x, y, c); break;
        }
        v += guide;
        if (nbr[i][d] == -1) v += known(qx, qy, c);
      }
      b[i] = v;
    }
    return b;
  }
};

/// Max-norm of A f - b for one channel of a solution.
inline double poisson_residual_max(const Mask& mask, const GuidanceField& g, const ColorImage& known,
                                   const ColorImage& solution) {
  const PoissonSystem sys(mask);
  double worst = 0;
  std::vector<double> f(sys.size()), af(sys.size());
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < sys.size(); ++i) f[i] = solution(sys.pixels[i].first, sys.pixels[i].second, c);
    sys.apply(f, af);
    const auto b = sys.rhs(g, known, c);
    for (std::size_t i = 0; i < sys.size(); ++i) worst = std::max(worst, std::abs(af[i] - b[i]));
  }
  return worst;
}

/// Guided Poisson fill of the masked region of `known` (Dirichlet values from the unmasked
/// neighbors), per channel, by Jacobi-preconditioned conjugate gradients.
inline PoissonSolution solve_poisson(const GuidanceField& g, const ColorImage& known, const Mask& mask,
                                     const PoissonOptions& opts = {}) {
  const PoissonSystem sys(mask);
  PoissonSolution out;
  out.colors = known;
  const std::size_t n = sys.size();
  if (n == 0) return out;

  // Every connected masked component needs at least one known neighbor.
  std::vector<int> component(n, -1);
  int components = 0;
  {
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < n; ++s) {
      if (component[s] >= 0) continue;
      bool anchored = false;
      stack.assign(1, s);
      component[s] = components;
      while (!stack.empty()) {
        const std::size_t i = stack.back();
        stack.pop_back();
        for (int d = 0; d < 4; ++d) {
          const int q = sys.nbr[i][d];
          if (q == -1) anchored = true;
          if (q >= 0 && component[q] < 0) {
            component[q] = components;
            stack.push_back(static_cast<std::size_t>(q));
          }
        }
      }
      if (!anchored)
        throw NumericalError("solve_poisson: masked region with no known boundary pixel");
      ++components;
    }
  }
  for (const auto& [x, y] : sys.pixels)
    if (x == 0 || y == 0 || x == mask.width() - 1 || y == mask.height() - 1) ++out.border_pixels;

  const int max_iter = std::max(1, static_cast<int>(opts.max_iter_factor * double(n)));
  std::vector<double> f(n), r(n), z(n), p(n), ap(n);
  for (int c = 0; c < 3; ++c) {
    const auto b = sys.rhs(g, known, c);
    double bnorm = 0;
    for (double v : b) bnorm += v * v;
    bnorm = std::sqrt(bnorm);

    // Start each component at the mean of its Dirichlet values.
    std::vector<double> sum(components, 0.0), cnt(components, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (int d = 0; d < 4; ++d)
        if (sys.nbr[i][d] == -1) {
          sum[component[i]] += known(sys.pixels[i].first + kDx[d], sys.pixels[i].second + kDy[d], c);
          cnt[component[i]] += 1;
        }
    for (std::size_t i = 0; i < n; ++i) f[i] = bnorm > 0 ? sum[component[i]] / cnt[component[i]] : 0.0;
    sys.apply(f, ap);
    double rnorm = 0;
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = b[i] - ap[i];
      rnorm += r[i] * r[i];
    }
    rnorm = std::sqrt(rnorm);
    int it = 0;
    if (bnorm > 0 && rnorm > opts.tolerance * bnorm) {
      for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / sys.diag[i];
      p = z;
      double rz = 0;
      for (std::size_t i = 0; i < n; ++i) rz += r[i] * z[i];
      while (rnorm > opts.tolerance * bnorm && it < max_iter) {
        sys.apply(p, ap);
        double pap = 0;
        for (std::size_t i = 0; i < n; ++i) pap += p[i] * ap[i];
        const double alpha = rz / pap;
        rnorm = 0;
        for (std::size_t i = 0; i < n; ++i) {
          f[i] += alpha * p[i];
          r[i] -= alpha * ap[i];
          rnorm += r[i] * r[i];
        }
        rnorm = std::sqrt(rnorm);
        ++it;
        double rz_next = 0;
        for (std::size_t i = 0; i < n; ++i) {
          z[i] = r[i] / sys.diag[i];
          rz_next += r[i] * z[i];
        }
        const double beta = rz_next / rz;
        rz = rz_next;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
      }
      if (!(rnorm <= opts.tolerance * bnorm))
        throw NumericalError("solve_poisson: conjugate gradients did not converge (relative residual " +
                             std::to_string(rnorm / bnorm) + ")");
    }
    out.residual = std::max(out.residual, bnorm > 0 ? rnorm / bnorm : 0.0);
    out.iterations = std::max(out.iterations, it);
    for (std::size_t i = 0; i < n; ++i) out.colors(sys.pixels[i].first, sys.pixels[i].second, c) = f[i];
  }
  return out;
}

inline PoissonSolution solve_poisson(const GuidanceField& g, const FramePacket& frame,
                                     const PoissonOptions& opts = {}) {
  ColorImage known(frame.width(), frame.height(), 3);
  for (std::size_t i = 0; i < known.data().size(); ++i) known.data()[i] = frame.rgb.data()[i];
  return solve_poisson(g, known, frame.mask, opts);
}

}  // namespace rgbdi
