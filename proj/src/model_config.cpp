#include "fuad/model_config.hpp"

#include <cstdio>

#include "fuad/error.hpp"
#include "fuad/seed.hpp"

namespace fuad {

std::string to_string(Nonlinearity n) {
  switch (n) {
    case Nonlinearity::relu: return "relu";
    case Nonlinearity::leaky_relu: return "leaky_relu";
    case Nonlinearity::tanh: return "tanh";
    case Nonlinearity::elu: return "elu";
  }
  return "unknown";
}

Nonlinearity parse_nonlinearity(const std::string& text) {
  if (text == "relu") return Nonlinearity::relu;
  if (text == "leaky_relu") return Nonlinearity::leaky_relu;
  if (text == "tanh") return Nonlinearity::tanh;
  if (text == "elu") return Nonlinearity::elu;
  throw ConfigError("model.nonlinearity: unknown value '" + text + "'");
}

std::string to_string(Fusion f) { return f == Fusion::pool ? "pool" : "unshuffle"; }

Fusion parse_fusion(const std::string& text) {
  if (text == "pool") return Fusion::pool;
  if (text == "unshuffle") return Fusion::unshuffle;
  throw ConfigError("model.fusion: unknown value '" + text + "'");
}

std::string to_string(Upsampling u) { return u == Upsampling::nearest ? "nearest" : "shuffle"; }

Upsampling parse_upsampling(const std::string& text) {
  if (text == "nearest") return Upsampling::nearest;
  if (text == "shuffle") return Upsampling::shuffle;
  throw ConfigError("model.upsampling: unknown value '" + text + "'");
}

void ModelConfig::validate() const {
  if (input_channels < 1) throw ConfigError("model.input_channels must be >= 1");
  if (image_size < 4) throw ConfigError("model.image_size must be >= 4");
  if (bottleneck_width < 1) throw ConfigError("model.bottleneck_width must be >= 1");
  if (bottleneck_stride < 1) throw ConfigError("model.bottleneck_stride must be >= 1");
  int prev = 1;
  for (int l = 0; l < kLevels; ++l) {
    if (level_channels[l] < 1) throw ConfigError("model.channels: level " + std::to_string(l) + " must be >= 1");
    const int s = level_strides[l];
    if (s <= prev || s % prev != 0) {
      throw ConfigError("model.strides: each stride must be a strict multiple of the previous");
    }
    if (image_size % s != 0) {
      throw ConfigError("model.strides: stride " + std::to_string(s) + " does not divide image size " +
                        std::to_string(image_size));
    }
    prev = s;
  }
  if ((image_size / level_strides[kLevels - 1]) % bottleneck_stride != 0) {
    throw ConfigError("model.bottleneck_stride does not divide the deepest level size");
  }
}

std::array<Shape3, kLevels> ModelConfig::level_shapes() const {
  std::array<Shape3, kLevels> out{};
  for (int l = 0; l < kLevels; ++l) {
    out[l] = {level_channels[l], image_size / level_strides[l], image_size / level_strides[l]};
  }
  return out;
}

int ModelConfig::stage_factor(int level) const {
  return level == 0 ? level_strides[0] : level_strides[level] / level_strides[level - 1];
}

std::string ModelConfig::canonical() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "in=%d;size=%d;ch=%d,%d,%d;st=%d,%d,%d;act=%s;bw=%d;bs=%d;fu=%s;up=%s", input_channels,
                image_size, level_channels[0], level_channels[1], level_channels[2], level_strides[0],
                level_strides[1], level_strides[2], to_string(nonlinearity).c_str(), bottleneck_width,
                bottleneck_stride, to_string(fusion).c_str(), to_string(upsampling).c_str());
  return buf;
}

std::string ModelConfig::digest() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(canonical())));
  return buf;
}

}  // namespace fuad
