#pragma once

#include <array>
#include <cstddef>
#include <span>

#include "fuad/tensor.hpp"

namespace fuad {

// Vectors with norm below this have cosine 0 against anything.
inline constexpr double kNormEpsilon = 1e-8;

double cos_sim(std::span<const double> a, std::span<const double> b);

// Cosine of two whole levels treated as flat vectors.
double flattened_cos(const Tensor& a, const Tensor& b);

// Per-location cosine along the channel axis, [H x W].
Grid location_cos(const Tensor& a, const Tensor& b);

struct LossReport {
  std::array<double, kLevels> layer_terms{};
  double total = 0.0;
  std::size_t step = 0;
};

// Sum over levels of mean over (h,w) of 1 - cos(target, student).
LossReport layer_cos_loss(const FeaturePyramid& target, const FeaturePyramid& student);

// Same loss scaled by weight; adds weight * d(loss)/d(student) into grad.
LossReport layer_cos_loss_grad(const FeaturePyramid& target, const FeaturePyramid& student, double weight,
                               FeaturePyramid& grad);

// Sum over levels of mean over (h,w) of cos(a, b).
double mean_location_cos(const FeaturePyramid& a, const FeaturePyramid& b);

FeaturePyramid zeros_like(const FeaturePyramid& p);

}  // namespace fuad
