#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fuad {

inline constexpr int kLevels = 3;

struct Shape3 {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
           static_cast<std::size_t>(width);
  }
  std::size_t plane() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

std::string to_string(const Shape3& shape);

// Dense channel-major [C x H x W] array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape3 shape, double fill = 0.0) : shape_(shape), data_(shape.size(), fill) {}
  Tensor(Shape3 shape, std::vector<double> data);

  const Shape3& shape() const { return shape_; }
  int channels() const { return shape_.channels; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  std::size_t size() const { return data_.size(); }

  double& at(int c, int h, int w) { return data_[index(c, h, w)]; }
  double at(int c, int h, int w) const { return data_[index(c, h, w)]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  std::span<double> channel(int c) { return {data_.data() + c * shape_.plane(), shape_.plane()}; }
  std::span<const double> channel(int c) const { return {data_.data() + c * shape_.plane(), shape_.plane()}; }

  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t index(int c, int h, int w) const {
    return (static_cast<std::size_t>(c) * shape_.height + h) * shape_.width + w;
  }

  Shape3 shape_;
  std::vector<double> data_;
};

// A 2-D field [H x W], used for masks and anomaly maps.
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  Grid() = default;
  Grid(int h, int w, double fill = 0.0)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

  double& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  friend bool operator==(const Grid&, const Grid&) = default;
};

// Multi-level feature maps exchanged between teacher and students. Level l
// has strictly smaller spatial size than level l-1.
struct FeaturePyramid {
  std::vector<Tensor> levels;

  const Tensor& operator[](std::size_t l) const { return levels[l]; }
  Tensor& operator[](std::size_t l) { return levels[l]; }
  std::size_t size() const { return levels.size(); }

  friend bool operator==(const FeaturePyramid&, const FeaturePyramid&) = default;
};

// Throws InputError when the pyramid breaks the level-count, spatial-ordering
// or finiteness contract.
void validate_pyramid(const FeaturePyramid& pyramid);

// Throws InputError unless the two pyramids agree level-by-level.
void require_same_shapes(const FeaturePyramid& a, const FeaturePyramid& b, const char* context);

std::vector<Shape3> shapes_of(const FeaturePyramid& pyramid);

}  // namespace fuad
