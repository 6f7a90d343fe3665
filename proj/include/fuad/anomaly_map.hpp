#pragma once

#include "fuad/tensor.hpp"

namespace fuad {

struct AnomalyMap {
  Grid values;  // non-negative, image resolution
  double image_score = 0.0;  // max of values
};

// Half-pixel-centre bilinear resampling with edge clamping.
Grid bilinear_resize(const Grid& in, int out_height, int out_width);

// Separable Gaussian, kernel truncated at radius ceil(4 sigma), mirror
// ("reflect", edge sample repeated) boundary. sigma <= 0 returns the input.
Grid gaussian_smooth(const Grid& in, double sigma);

// Sum over levels of the per-location 1 - cos field, each level upsampled
// bilinearly to out_size x out_size. No smoothing.
Grid fused_distance_field(const FeaturePyramid& teacher, const FeaturePyramid& student, int out_size);

// fused_distance_field followed by Gaussian smoothing; score = max.
AnomalyMap anomaly_map(const FeaturePyramid& teacher, const FeaturePyramid& student, int out_size,
                       double smooth_sigma = 4.0);

double grid_max(const Grid& g);

}  // namespace fuad
