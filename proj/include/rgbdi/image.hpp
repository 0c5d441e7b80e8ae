#pragma once

#include <Eigen/Core>

#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace rgbdi {

using Color = Eigen::Vector3d;

/// Row-major interleaved image with a runtime channel count.
template <typename T>
class Image {
public:
  Image() = default;
  Image(int width, int height, int channels = 1, T fill = T{})
      : width_(width), height_(height), channels_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, fill) {
    if (width < 0 || height < 0 || channels < 1) throw std::invalid_argument("bad image dimensions");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  template <typename U>
  bool same_shape(const Image<U>& o) const { return width_ == o.width() && height_ == o.height(); }

  T& operator()(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  const T& operator()(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Image& o) const {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_ && data_ == o.data_;
  }

private:
  std::size_t index(int x, int y, int c) const {
    assert(in_bounds(x, y) && c >= 0 && c < channels_);
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<T> data_;
};

using RgbImage = Image<std::uint8_t>;   // 3 channels, 8 bit
using Mask = Image<std::uint8_t>;       // 1 channel, values 0 / 1
using ColorImage = Image<double>;       // 3 channels, unclamped

inline Color pixel_color(const RgbImage& img, int x, int y) {
  return {double(img(x, y, 0)), double(img(x, y, 1)), double(img(x, y, 2))};
}

inline Color pixel_color(const ColorImage& img, int x, int y) {
  return {img(x, y, 0), img(x, y, 1), img(x, y, 2)};
}

inline void set_pixel(ColorImage& img, int x, int y, const Color& c) {
  for (int k = 0; k < 3; ++k) img(x, y, k) = c[k];
}

inline std::uint8_t to_u8(double v) {
  if (!(v > 0.0)) return 0;
  if (v >= 255.0) return 255;
  return static_cast<std::uint8_t>(std::lround(v));
}

inline void set_pixel(RgbImage& img, int x, int y, const Color& c) {
  for (int k = 0; k < 3; ++k) img(x, y, k) = to_u8(c[k]);
}

/// Color distance used throughout the MRF: L1 over the three channels.
inline double l1(const Color& a, const Color& b) { return (a - b).cwiseAbs().sum(); }

/// True when a bilinear lookup at (x, y) stays inside the pixel-center lattice.
template <typename T>
bool bilinear_in_bounds(const Image<T>& img, double x, double y) {
  return x >= 0.0 && y >= 0.0 && x <= img.width() - 1 && y <= img.height() - 1;
}

/// Bilinear color lookup with pixel centers at integer coordinates.
template <typename T>
std::optional<Color> sample_bilinear(const Image<T>& img, double x, double y) {
  if (!bilinear_in_bounds(img, x, y)) return std::nullopt;
  const int x0 = std::min(static_cast<int>(std::floor(x)), img.width() - 1);
  const int y0 = std::min(static_cast<int>(std::floor(y)), img.height() - 1);
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double ax = x - x0;
  const double ay = y - y0;
  Color out;
  for (int c = 0; c < 3; ++c) {
    const double top = (1.0 - ax) * img(x0, y0, c) + ax * img(x1, y0, c);
    const double bot = (1.0 - ax) * img(x0, y1, c) + ax * img(x1, y1, c);
    out[c] = (1.0 - ay) * top + ay * bot;
  }
  return out;
}

/// Same as sample_bilinear, clamping the query into the image first.
template <typename T>
Color sample_bilinear_clamped(const Image<T>& img, double x, double y) {
  x = std::clamp(x, 0.0, double(img.width() - 1));
  y = std::clamp(y, 0.0, double(img.height() - 1));
  return *sample_bilinear(img, x, y);
}

/// Nearest-integer pixel with ties rounding half-up.
inline int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

inline std::size_t count_set(const Mask& m) {
  std::size_t n = 0;
  for (auto v : m.data()) n += v != 0;
  return n;
}

/// Box (Chebyshev) dilation by `radius` pixels.
inline Mask dilate(const Mask& m, int radius) {
  if (radius <= 0) return m;
  const int w = m.width(), h = m.height();
  // Separable: rows then columns.
  Mask rows(w, h);
  for (int y = 0; y < h; ++y) {
    int last = -1000000;
    for (int x = 0; x < w; ++x) {
      if (m(x, y)) last = x;
      if (x - last <= radius) rows(x, y) = 1;
    }
    last = 1000000;
    for (int x = w - 1; x >= 0; --x) {
      if (m(x, y)) last = x;
      if (last - x <= radius) rows(x, y) = 1;
    }
  }
  Mask out(w, h);
  for (int x = 0; x < w; ++x) {
    int last = -1000000;
    for (int y = 0; y < h; ++y) {
      if (rows(x, y)) last = y;
      if (y - last <= radius) out(x, y) = 1;
    }
    last = 1000000;
    for (int y = h - 1; y >= 0; --y) {
      if (rows(x, y)) last = y;
      if (last - y <= radius) out(x, y) = 1;
    }
  }
  return out;
}

/// Neighbor directions in the order left, right, top, bottom.
enum Dir : int { kLeft = 0, kRight = 1, kTop = 2, kBottom = 3 };
inline constexpr std::array<int, 4> kDx{-1, 1, 0, 0};
inline constexpr std::array<int, 4> kDy{0, 0, -1, 1};
inline constexpr int opposite(int d) { return d ^ 1; }

}  // namespace rgbdi
