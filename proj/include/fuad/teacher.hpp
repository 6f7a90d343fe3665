#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "fuad/layers.hpp"
#include "fuad/model_config.hpp"
#include "fuad/tensor.hpp"

namespace fuad {

// Anything that maps an image to a feature pyramid can stand in for the
// teacher, e.g. an external pretrained backbone for real-data runs.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual FeaturePyramid extract(const Tensor& image) const = 0;
  virtual Shape3 input_shape() const = 0;
  virtual std::array<Shape3, kLevels> level_shapes() const = 0;
  // Hash of everything that determines the extractor's output.
  virtual std::uint64_t parameter_hash() const = 0;
};

// Frozen, randomly initialised three-stage convolutional encoder. Each stage
// is a strided convolution followed by the configured nonlinearity; the
// activated stage outputs are the pyramid levels.
class TeacherNet final : public FeatureExtractor {
 public:
  TeacherNet(const ModelConfig& config, std::uint64_t seed);

  FeaturePyramid extract(const Tensor& image) const override;
  Shape3 input_shape() const override { return config_.input_shape(); }
  std::array<Shape3, kLevels> level_shapes() const override { return config_.level_shapes(); }
  std::uint64_t parameter_hash() const override;

  const ModelConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  std::span<const double> parameters() const { return params_; }

 private:
  ModelConfig config_;
  std::uint64_t seed_;
  std::array<ConvGeometry, kLevels> stages_{};
  std::array<std::size_t, kLevels> offsets_{};
  std::vector<double> params_;
};

TeacherNet build_teacher(const ModelConfig& config, std::uint64_t seed);

FeaturePyramid teacher_forward(const FeatureExtractor& teacher, const Tensor& image);
std::vector<FeaturePyramid> teacher_forward(const FeatureExtractor& teacher, std::span<const Tensor> images);

std::uint64_t hash_values(std::span<const double> values);

}  // namespace fuad
