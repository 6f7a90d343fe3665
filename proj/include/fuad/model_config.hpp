#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "fuad/tensor.hpp"

namespace fuad {

enum class Nonlinearity { relu, leaky_relu, tanh, elu };

std::string to_string(Nonlinearity n);
Nonlinearity parse_nonlinearity(const std::string& text);

// How the student brings the two shallow levels to the deepest resolution
// before the bottleneck: block averaging, or lossless space-to-depth.
enum class Fusion { pool, unshuffle };

std::string to_string(Fusion f);
Fusion parse_fusion(const std::string& text);

// Decoder upsampling: nearest-neighbour then a 3x3 convolution, or a 3x3
// convolution to f*f times the channels followed by depth-to-space.
enum class Upsampling { nearest, shuffle };

std::string to_string(Upsampling u);
Upsampling parse_upsampling(const std::string& text);

// Architecture shared by the teacher and every student built against it.
// Level l has channels level_channels[l] at spatial size image_size / level_strides[l].
struct ModelConfig {
  int input_channels = 3;
  int image_size = 32;
  std::array<int, kLevels> level_channels{16, 32, 64};
  std::array<int, kLevels> level_strides{2, 4, 8};
  Nonlinearity nonlinearity = Nonlinearity::leaky_relu;
  int bottleneck_width = 32;
  // Spatial reduction applied by the bottleneck relative to the deepest level.
  int bottleneck_stride = 2;
  Fusion fusion = Fusion::unshuffle;
  Upsampling upsampling = Upsampling::shuffle;

  // Throws ConfigError naming the offending field.
  void validate() const;

  Shape3 input_shape() const { return {input_channels, image_size, image_size}; }
  std::array<Shape3, kLevels> level_shapes() const;
  // Ratio between the stride of level l and level l-1 (level 0 relative to the input).
  int stage_factor(int level) const;

  // Canonical text form; the digest is a hash of it.
  std::string canonical() const;
  std::string digest() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace fuad
