#include "fuad/student.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "fuad/error.hpp"
#include "fuad/seed.hpp"

namespace fuad {

namespace {

void make_block(const std::string& name, const ConvGeometry& g, std::size_t& offset, std::vector<ParamBlock>& out) {
  ParamBlock w{name + ".weight", {g.out_channels, g.in_channels, g.kernel, g.kernel}, offset, g.weight_count()};
  ParamBlock b{name + ".bias", {g.out_channels}, offset + g.weight_count(), static_cast<std::size_t>(g.out_channels)};
  out.push_back(w);
  out.push_back(b);
  offset += g.param_count();
}

}  // namespace

StudentArch::StudentArch(const ModelConfig& config) : config_(config) {
  config_.validate();
  const auto& ch = config_.level_channels;
  int fused_channels = ch[0] + ch[1] + ch[2];
  if (config_.fusion == Fusion::unshuffle) {
    const int f0 = config_.level_strides[2] / config_.level_strides[0];
    const int f1 = config_.level_strides[2] / config_.level_strides[1];
    fused_channels = ch[0] * f0 * f0 + ch[1] * f1 * f1 + ch[2];
  }
  bottleneck_ = ConvGeometry{fused_channels, config_.bottleneck_width, 3, config_.bottleneck_stride};
  const bool shuffle = config_.upsampling == Upsampling::shuffle;
  for (int l = 0; l < kLevels; ++l) {
    const int in = l + 1 < kLevels ? ch[l + 1] : config_.bottleneck_width;
    const int f = upsample_factor(l);
    decoder_[l] = ConvGeometry{in, shuffle ? ch[l] * f * f : ch[l], 3, 1};
  }

  std::size_t offset = 0;
  make_block("bottleneck", bottleneck_, offset, blocks_);
  make_block("decoder3", decoder_[2], offset, blocks_);
  make_block("decoder2", decoder_[1], offset, blocks_);
  make_block("decoder1", decoder_[0], offset, blocks_);
  parameter_count_ = offset;
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64("student:" + config_.canonical())));
  layout_digest_ = buf;
}

// Block indices: weight/bias pairs in the order bottleneck, decoder3, decoder2,
// decoder1. A conv's full parameter span starts at its weight block.
namespace {
constexpr std::size_t kBottleneckBlock = 0;
constexpr std::size_t kDecoderBlock[kLevels] = {6, 4, 2};
}  // namespace

StudentParams StudentArch::init_params(std::uint64_t seed) const {
  StudentParams p{std::vector<double>(parameter_count_, 0.0), layout_digest_};
  Rng rng(derive_seed(seed, "student"));
  for (std::size_t i = 0; i < blocks_.size(); i += 2) {
    const auto& w = blocks_[i];
    const double fan_in = static_cast<double>(w.shape[1] * w.shape[2] * w.shape[3]);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (std::size_t k = 0; k < w.count; ++k) p.values[w.offset + k] = dist(rng);
  }
  return p;
}

void StudentArch::check_params(const StudentParams& params) const {
  if (params.layout_digest != layout_digest_ || params.values.size() != parameter_count_) {
    throw StateError("student parameters (layout " + params.layout_digest + ", " +
                     std::to_string(params.values.size()) + " values) do not match architecture (layout " +
                     layout_digest_ + ", " + std::to_string(parameter_count_) + " values)");
  }
}

FeaturePyramid StudentArch::forward(const FeaturePyramid& input, const StudentParams& params, StudentTape* tape) const {
  check_params(params);
  const auto shapes = config_.level_shapes();
  if (input.size() != static_cast<std::size_t>(kLevels)) throw InputError("student_forward: pyramid must have 3 levels");
  for (int l = 0; l < kLevels; ++l) {
    if (input[l].shape() != shapes[l]) {
      throw InputError("student_forward: level " + std::to_string(l) + " shape " + to_string(input[l].shape()) +
                       " does not match " + to_string(shapes[l]));
    }
  }
  const int pool0 = config_.level_strides[2] / config_.level_strides[0];
  const int pool1 = config_.level_strides[2] / config_.level_strides[1];
  const bool pool = config_.fusion == Fusion::pool;
  const Tensor p0 = pool ? avg_pool(input[0], pool0) : space_to_depth(input[0], pool0);
  const Tensor p1 = pool ? avg_pool(input[1], pool1) : space_to_depth(input[1], pool1);
  const Tensor* parts[] = {&p0, &p1, &input[2]};
  const Tensor fused = concat_channels(parts);

  auto span_of = [&](std::size_t weight_block, const ConvGeometry& g) {
    return std::span<const double>(params.values.data() + blocks_[weight_block].offset, g.param_count());
  };

  Tensor pre = conv2d_forward(bottleneck_, span_of(kBottleneckBlock, bottleneck_), fused,
                              tape ? &tape->bottleneck : nullptr);
  const bool shuffle = config_.upsampling == Upsampling::shuffle;
  Tensor x = activate(config_.nonlinearity, pre);

  FeaturePyramid out;
  out.levels.resize(kLevels);
  for (int l = kLevels - 1; l >= 0; --l) {
    const int f = upsample_factor(l);
    if (!shuffle) x = upsample_nearest(x, f);
    out[l] = conv2d_forward(decoder_[l], span_of(kDecoderBlock[l], decoder_[l]), x,
                            tape ? &tape->decoder[l] : nullptr);
    if (shuffle) out[l] = depth_to_space(out[l], f);
    if (l > 0) x = activate(config_.nonlinearity, out[l]);
  }
  if (tape != nullptr) {
    tape->level0_shape = input[0].shape();
    tape->level1_shape = input[1].shape();
    tape->bottleneck_pre = std::move(pre);
    for (int l = 0; l < kLevels; ++l) tape->outputs[l] = out[l];
  }
  return out;
}

void StudentArch::backward(const StudentTape& tape, const StudentParams& params, const FeaturePyramid& grad_outputs,
                           std::span<double> grad) const {
  if (grad.size() != parameter_count_) throw StateError("student backward: gradient buffer has the wrong size");
  auto span_of = [&](std::size_t weight_block, const ConvGeometry& g) {
    return std::span<const double>(params.values.data() + blocks_[weight_block].offset, g.param_count());
  };
  auto grad_of = [&](std::size_t weight_block, const ConvGeometry& g) {
    return std::span<double>(grad.data() + blocks_[weight_block].offset, g.param_count());
  };

  const bool shuffle = config_.upsampling == Upsampling::shuffle;
  Tensor g_out = grad_outputs[0];
  for (int l = 0; l < kLevels; ++l) {
    const int f = upsample_factor(l);
    if (shuffle) g_out = space_to_depth(g_out, f);
    Tensor g_in = conv2d_backward(decoder_[l], span_of(kDecoderBlock[l], decoder_[l]), tape.decoder[l], g_out,
                                  grad_of(kDecoderBlock[l], decoder_[l]), true);
    Tensor g_act = shuffle ? std::move(g_in) : upsample_nearest_backward(g_in, f);
    if (l + 1 < kLevels) {
      Tensor g_pre = activation_backward(config_.nonlinearity, tape.outputs[l + 1], g_act);
      g_out = grad_outputs[l + 1];
      auto dst = g_out.values();
      auto src = g_pre.values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    } else {
      Tensor g_pre = activation_backward(config_.nonlinearity, tape.bottleneck_pre, g_act);
      conv2d_backward(bottleneck_, span_of(kBottleneckBlock, bottleneck_), tape.bottleneck, g_pre,
                      grad_of(kBottleneckBlock, bottleneck_), false);
    }
  }
}

int StudentArch::upsample_factor(int level) const {
  return level + 1 < kLevels ? config_.stage_factor(level + 1) : config_.bottleneck_stride;
}

StudentNet::StudentNet(const ModelConfig& config, std::uint64_t init_seed)
    : arch_(config), init_seed_(init_seed), params_(arch_.init_params(init_seed)) {}

void StudentNet::load_params(const StudentParams& params) {
  arch_.check_params(params);
  params_ = params;
}

FeaturePyramid student_forward(const StudentArch& arch, const FeaturePyramid& input, const StudentParams& params) {
  return arch.forward(input, params);
}

}  // namespace fuad
