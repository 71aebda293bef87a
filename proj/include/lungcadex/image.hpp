#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lungcadex {

/// Axis-aligned pixel rectangle, half-open: columns [x0, x1), rows [y0, y1).
struct BBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long area() const { return width() > 0 && height() > 0 ? long(width()) * height() : 0; }
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

BBox intersect(const BBox& a, const BBox& b);
double iou(const BBox& a, const BBox& b);

/// Row-major single-channel float image.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, float fill = 0.0f) : height(h), width(w), pixels(std::size_t(h) * w, fill) {}

  float& at(int y, int x) { return pixels[std::size_t(y) * width + x]; }
  float at(int y, int x) const { return pixels[std::size_t(y) * width + x]; }
  bool empty() const { return pixels.empty(); }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Row-major binary mask, one byte per pixel (0 or 1).
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int h, int w) : height(h), width(w), bits(std::size_t(h) * w, 0) {}

  std::uint8_t& at(int y, int x) { return bits[std::size_t(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return bits[std::size_t(y) * width + x]; }
  long count() const;
  /// Tight half-open bounding box of the positive pixels; zero-area box when empty.
  BBox bounding_box() const;

  friend bool operator==(const Mask&, const Mask&) = default;
};

/// Crop with the rectangle clipped to the image.
Image crop(const Image& image, const BBox& box);

/// Bilinear resampling with corner alignment: output corners sample input corners exactly.
Image resize_bilinear(const Image& image, int out_height, int out_width);

/// Interpolation taps for one axis of a corner-aligned bilinear resize.
struct LinearTaps {
  std::vector<int> lo;
  std::vector<int> hi;
  std::vector<float> frac;
};
LinearTaps bilinear_taps(int in_size, int out_size);

/// Run-length text encoding "H W start len start len ..." over the row-major pixels.
std::string encode_rle(const Mask& mask);
Mask decode_rle(const std::string& text);

/// 8-connected components of a mask; each component is returned as its own mask.
std::vector<Mask> connected_components(const Mask& mask);

}  // namespace lungcadex
