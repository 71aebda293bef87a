#include "lungcadex/image.hpp"

#include <algorithm>
#include <sstream>
#include <string>

#include "lungcadex/errors.hpp"

namespace lungcadex {

BBox intersect(const BBox& a, const BBox& b) {
  return BBox{std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1), std::min(a.y1, b.y1)};
}

double iou(const BBox& a, const BBox& b) {
  const long inter = intersect(a, b).area();
  const long uni = a.area() + b.area() - inter;
  return uni > 0 ? double(inter) / double(uni) : 0.0;
}

long Mask::count() const {
  return static_cast<long>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

BBox Mask::bounding_box() const {
  BBox box{width, height, 0, 0};
  bool any = false;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (at(y, x) == 0) continue;
      any = true;
      box.x0 = std::min(box.x0, x);
      box.y0 = std::min(box.y0, y);
      box.x1 = std::max(box.x1, x + 1);
      box.y1 = std::max(box.y1, y + 1);
    }
  }
  return any ? box : BBox{};
}

Image crop(const Image& image, const BBox& box) {
  const BBox clipped = intersect(box, BBox{0, 0, image.width, image.height});
  if (clipped.area() == 0) throw InputError("crop rectangle does not intersect the image");
  Image out(clipped.height(), clipped.width());
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) out.at(y, x) = image.at(clipped.y0 + y, clipped.x0 + x);
  }
  return out;
}

LinearTaps bilinear_taps(int in_size, int out_size) {
  LinearTaps taps;
  taps.lo.resize(out_size);
  taps.hi.resize(out_size);
  taps.frac.resize(out_size);
  const double scale = out_size > 1 ? double(in_size - 1) / double(out_size - 1) : 0.0;
  for (int i = 0; i < out_size; ++i) {
    const double src = i * scale;
    int lo = static_cast<int>(src);
    lo = std::clamp(lo, 0, in_size - 1);
    const int hi = std::min(lo + 1, in_size - 1);
    taps.lo[i] = lo;
    taps.hi[i] = hi;
    taps.frac[i] = static_cast<float>(src - lo);
  }
  return taps;
}

Image resize_bilinear(const Image& image, int out_height, int out_width) {
  if (image.empty() || out_height <= 0 || out_width <= 0) throw InputError("resize of an empty image");
  if (image.height == out_height && image.width == out_width) return image;
  const LinearTaps ty = bilinear_taps(image.height, out_height);
  const LinearTaps tx = bilinear_taps(image.width, out_width);
  Image out(out_height, out_width);
  for (int y = 0; y < out_height; ++y) {
    const float fy = ty.frac[y];
    for (int x = 0; x < out_width; ++x) {
      const float fx = tx.frac[x];
      const float top = image.at(ty.lo[y], tx.lo[x]) * (1 - fx) + image.at(ty.lo[y], tx.hi[x]) * fx;
      const float bottom = image.at(ty.hi[y], tx.lo[x]) * (1 - fx) + image.at(ty.hi[y], tx.hi[x]) * fx;
      out.at(y, x) = top * (1 - fy) + bottom * fy;
    }
  }
  return out;
}

std::string encode_rle(const Mask& mask) {
  std::ostringstream out;
  out << mask.height << ' ' << mask.width;
  const std::size_t n = mask.bits.size();
  std::size_t i = 0;
  while (i < n) {
    if (mask.bits[i] == 0) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && mask.bits[j] != 0) ++j;
    out << ' ' << i << ' ' << (j - i);
    i = j;
  }
  return out.str();
}

Mask decode_rle(const std::string& text) {
  std::istringstream in(text);
  long h = 0;
  long w = 0;
  if (!(in >> h >> w) || h <= 0 || w <= 0) throw SchemaError("RLE mask lacks a valid 'H W' header");
  Mask mask(static_cast<int>(h), static_cast<int>(w));
  long start = 0;
  long length = 0;
  long previous_end = 0;
  while (in >> start) {
    if (!(in >> length)) throw SchemaError("RLE mask has an unpaired run start");
    if (start < previous_end || length <= 0 || start + length > h * w) {
      throw SchemaError("RLE mask run out of order or out of bounds");
    }
    std::fill_n(mask.bits.begin() + start, length, std::uint8_t{1});
    previous_end = start + length;
  }
  if (!in.eof()) throw SchemaError("RLE mask contains non-numeric text");
  return mask;
}

std::vector<Mask> connected_components(const Mask& mask) {
  std::vector<int> label(mask.bits.size(), -1);
  std::vector<Mask> components;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const std::size_t seed = std::size_t(y) * mask.width + x;
      if (mask.bits[seed] == 0 || label[seed] >= 0) continue;
      const int id = static_cast<int>(components.size());
      Mask component(mask.height, mask.width);
      label[seed] = id;
      stack.assign(1, {y, x});
      while (!stack.empty()) {
        const auto [cy, cx] = stack.back();
        stack.pop_back();
        component.at(cy, cx) = 1;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = cy + dy;
            const int nx = cx + dx;
            if (ny < 0 || nx < 0 || ny >= mask.height || nx >= mask.width) continue;
            const std::size_t k = std::size_t(ny) * mask.width + nx;
            if (mask.bits[k] == 0 || label[k] >= 0) continue;
            label[k] = id;
            stack.emplace_back(ny, nx);
          }
        }
      }
      components.push_back(std::move(component));
    }
  }
  return components;
}

}  // namespace lungcadex
