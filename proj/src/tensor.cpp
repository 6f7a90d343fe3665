#include "fuad/tensor.hpp"

#include <cmath>
#include <utility>

#include "fuad/error.hpp"
#include "fuad/seed.hpp"

namespace fuad {

std::string to_string(const Shape3& shape) {
  return "(" + std::to_string(shape.channels) + "," + std::to_string(shape.height) + "," +
         std::to_string(shape.width) + ")";
}

Tensor::Tensor(Shape3 shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size()) {
    throw InputError("tensor data size " + std::to_string(data_.size()) + " does not match shape " +
                     to_string(shape_));
  }
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void validate_pyramid(const FeaturePyramid& pyramid) {
  if (pyramid.size() != static_cast<std::size_t>(kLevels)) {
    throw InputError("feature pyramid must have " + std::to_string(kLevels) + " levels, got " +
                     std::to_string(pyramid.size()));
  }
  for (std::size_t l = 0; l < pyramid.size(); ++l) {
    if (!pyramid[l].all_finite()) throw InputError("feature pyramid level " + std::to_string(l) + " is not finite");
    if (l > 0 && (pyramid[l].height() >= pyramid[l - 1].height() || pyramid[l].width() >= pyramid[l - 1].width())) {
      throw InputError("feature pyramid spatial sizes must strictly decrease");
    }
  }
}

void require_same_shapes(const FeaturePyramid& a, const FeaturePyramid& b, const char* context) {
  if (a.size() != b.size()) {
    throw InputError(std::string(context) + ": pyramid level counts differ");
  }
  for (std::size_t l = 0; l < a.size(); ++l) {
    if (a[l].shape() != b[l].shape()) {
      throw InputError(std::string(context) + ": level " + std::to_string(l) + " shape " + to_string(a[l].shape()) +
                       " vs " + to_string(b[l].shape()));
    }
  }
}

std::vector<Shape3> shapes_of(const FeaturePyramid& pyramid) {
  std::vector<Shape3> out;
  out.reserve(pyramid.size());
  for (const auto& level : pyramid.levels) out.push_back(level.shape());
  return out;
}

std::uint64_t fnv1a64(std::string_view text, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = splitmix64(base ^ fnv1a64(tag));
  h = splitmix64(h ^ a);
  return splitmix64(h ^ (b * 0x9e3779b97f4a7c15ULL));
}

}  // namespace fuad
