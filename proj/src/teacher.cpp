#include "fuad/teacher.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "fuad/error.hpp"
#include "fuad/seed.hpp"

namespace fuad {

namespace {

// Inputs live in [0,1]; the encoder sees them centred and scaled.
constexpr double kInputMean = 0.5;
constexpr double kInputScale = 4.0;

}  // namespace

TeacherNet::TeacherNet(const ModelConfig& config, std::uint64_t seed) : config_(config), seed_(seed) {
  config_.validate();
  int in_ch = config_.input_channels;
  std::size_t total = 0;
  for (int l = 0; l < kLevels; ++l) {
    const int factor = config_.stage_factor(l);
    stages_[l] = ConvGeometry{in_ch, config_.level_channels[l], 2 * factor - 1, factor};
    offsets_[l] = total;
    total += stages_[l].param_count();
    in_ch = config_.level_channels[l];
  }
  params_.assign(total, 0.0);
  Rng rng(derive_seed(seed, "teacher"));
  for (int l = 0; l < kLevels; ++l) {
    const auto& g = stages_[l];
    const double fan_in = static_cast<double>(g.in_channels) * g.kernel * g.kernel;
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (std::size_t i = 0; i < g.weight_count(); ++i) params_[offsets_[l] + i] = dist(rng);
    for (int o = 0; o < g.out_channels; ++o) {
      params_[offsets_[l] + g.weight_count() + o] = 0.1 * dist(rng);
    }
  }
}

FeaturePyramid TeacherNet::extract(const Tensor& image) const {
  if (image.shape() != config_.input_shape()) {
    throw InputError("teacher_forward: image shape " + to_string(image.shape()) + " does not match " +
                     to_string(config_.input_shape()));
  }
  Tensor x = image;
  for (double& v : x.values()) v = (v - kInputMean) * kInputScale;
  FeaturePyramid out;
  out.levels.reserve(kLevels);
  for (int l = 0; l < kLevels; ++l) {
    const auto& g = stages_[l];
    std::span<const double> block(params_.data() + offsets_[l], g.param_count());
    Tensor y = conv2d_forward(g, block, x);
    activate_inplace(config_.nonlinearity, y);
    out.levels.push_back(y);
    x = std::move(y);
  }
  return out;
}

std::uint64_t TeacherNet::parameter_hash() const {
  return hash_values(params_) ^ fnv1a64(config_.canonical());
}

TeacherNet build_teacher(const ModelConfig& config, std::uint64_t seed) { return TeacherNet(config, seed); }

FeaturePyramid teacher_forward(const FeatureExtractor& teacher, const Tensor& image) { return teacher.extract(image); }

std::vector<FeaturePyramid> teacher_forward(const FeatureExtractor& teacher, std::span<const Tensor> images) {
  std::vector<FeaturePyramid> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(teacher.extract(img));
  return out;
}

std::uint64_t hash_values(std::span<const double> values) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : values) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace fuad
