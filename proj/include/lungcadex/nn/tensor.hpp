#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

namespace lungcadex::nn {

using Shape = std::vector<int>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major float32 array. Matrices are {rows, cols}; feature maps are {C, H, W}.
struct Tensor {
  Shape shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(Shape s, float fill = 0.0f) : shape(std::move(s)), data(shape_size(shape), fill) {}
  Tensor(Shape s, std::vector<float> values);

  std::size_t size() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int axis) const { return shape.at(static_cast<std::size_t>(axis)); }
  int rows() const { return shape.at(0); }
  int cols() const { return shape.at(1); }

  float& operator[](std::size_t i) { return data[i]; }
  float operator[](std::size_t i) const { return data[i]; }
  float& at(int r, int c) { return data[std::size_t(r) * shape[1] + c]; }
  float at(int r, int c) const { return data[std::size_t(r) * shape[1] + c]; }

  void fill(float value) { std::fill(data.begin(), data.end(), value); }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

}  // namespace lungcadex::nn
