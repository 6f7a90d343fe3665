#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "fuad/datagen.hpp"
#include "fuad/model_config.hpp"
#include "fuad/tensor.hpp"

namespace fuad::fixtures {

// 1-channel 16x16 config small enough for finite differences (279 student
// parameters with pool fusion and nearest upsampling).
inline ModelConfig micro_config(Nonlinearity n = Nonlinearity::tanh, Fusion fusion = Fusion::pool,
                                Upsampling up = Upsampling::nearest) {
  ModelConfig c;
  c.input_channels = 1;
  c.image_size = 16;
  c.level_channels = {2, 2, 3};
  c.level_strides = {2, 4, 8};
  c.bottleneck_width = 2;
  c.bottleneck_stride = 2;
  c.nonlinearity = n;
  c.fusion = fusion;
  c.upsampling = up;
  return c;
}

inline Tensor random_tensor(Shape3 shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline FeaturePyramid random_pyramid(const std::array<Shape3, kLevels>& shapes, std::mt19937_64& rng) {
  FeaturePyramid p;
  for (const auto& s : shapes) p.levels.push_back(random_tensor(s, rng));
  return p;
}

// Pyramid whose every location holds `v` (length = channels of each level).
inline FeaturePyramid constant_pyramid(const std::array<Shape3, kLevels>& shapes, double value) {
  FeaturePyramid p;
  for (const auto& s : shapes) p.levels.emplace_back(s, value);
  return p;
}

inline GenSpec small_gen(std::uint64_t seed = 7) {
  GenSpec g;
  g.n_train_normal = 40;
  g.n_test_normal = 12;
  g.n_anomalous_pool = 16;
  g.seed = seed;
  return g;
}

}  // namespace fuad::fixtures

#include "fuad/losses.hpp"
#include "fuad/student.hpp"
#include "fuad/teacher.hpp"

namespace fuad::fixtures {

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t parameters = 0;
};

// Central differences of layer_cos_loss(target, student(teacher(image))) with
// respect to every student parameter, against the analytic backward pass.
// Relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheck gradient_check(const ModelConfig& config, std::uint64_t seed, double h = 1e-5,
                                double floor = 1e-8) {
  std::mt19937_64 rng(seed);
  const TeacherNet teacher = build_teacher(config, seed + 1);
  const StudentArch arch(config);
  StudentParams params = arch.init_params(seed + 2);
  const FeaturePyramid input = teacher_forward(teacher, random_tensor(config.input_shape(), rng, 0.0, 1.0));
  const FeaturePyramid target = random_pyramid(config.level_shapes(), rng);

  StudentTape tape;
  const FeaturePyramid out = arch.forward(input, params, &tape);
  FeaturePyramid grad_out = zeros_like(out);
  layer_cos_loss_grad(target, out, 1.0, grad_out);
  std::vector<double> analytic(arch.parameter_count(), 0.0);
  arch.backward(tape, params, grad_out, analytic);

  GradCheck result;
  result.parameters = arch.parameter_count();
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    const double keep = params.values[i];
    params.values[i] = keep + h;
    const double up = layer_cos_loss(target, arch.forward(input, params)).total;
    params.values[i] = keep - h;
    const double down = layer_cos_loss(target, arch.forward(input, params)).total;
    params.values[i] = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double rel = std::abs(analytic[i] - numeric) / std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    result.max_rel_error = std::max(result.max_rel_error, rel);
  }
  return result;
}

// n near-copies of one random image (pixel noise 0.02).
inline std::vector<ImageSample> micro_samples(const ModelConfig& cfg, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<ImageSample> out;
  const Tensor base = fixtures::random_tensor(cfg.input_shape(), rng, 0.2, 0.8);
  for (int i = 0; i < n; ++i) {
    ImageSample s;
    s.id = "m" + std::to_string(i);
    s.pixels = base;
    for (double& v : s.pixels.values()) v = std::clamp(v + std::normal_distribution<double>(0, 0.02)(rng), 0.0, 1.0);
    s.mask = Grid(cfg.image_size, cfg.image_size);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace fuad::fixtures
