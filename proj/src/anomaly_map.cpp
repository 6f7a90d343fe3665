#include "fuad/anomaly_map.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "fuad/error.hpp"
#include "fuad/losses.hpp"

namespace fuad {

namespace {

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

}  // namespace

Grid bilinear_resize(const Grid& in, int out_h, int out_w) {
  Grid out(out_h, out_w);
  const double sy = static_cast<double>(in.height) / out_h;
  const double sx = static_cast<double>(in.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(in.height - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, in.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(in.width - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, in.width - 1);
      const double wx = fx - x0;
      out.at(y, x) = (1 - wy) * ((1 - wx) * in.at(y0, x0) + wx * in.at(y0, x1)) +
                     wy * ((1 - wx) * in.at(y1, x0) + wx * in.at(y1, x1));
    }
  }
  return out;
}

Grid gaussian_smooth(const Grid& in, double sigma) {
  if (sigma <= 0.0) return in;
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  Grid tmp(in.height, in.width);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * in.at(y, reflect_index(x + i, in.width));
      tmp.at(y, x) = acc;
    }
  }
  Grid out(in.height, in.width);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp.at(reflect_index(y + i, in.height), x);
      out.at(y, x) = std::max(acc, 0.0);
    }
  }
  return out;
}

Grid fused_distance_field(const FeaturePyramid& teacher, const FeaturePyramid& student, int out_size) {
  require_same_shapes(teacher, student, "anomaly_map");
  Grid total(out_size, out_size);
  for (std::size_t l = 0; l < teacher.size(); ++l) {
    Grid d = location_cos(teacher[l], student[l]);
    for (double& v : d.values) v = std::max(0.0, 1.0 - v);
    const Grid up = bilinear_resize(d, out_size, out_size);
    for (std::size_t i = 0; i < total.values.size(); ++i) total.values[i] += up.values[i];
  }
  return total;
}

AnomalyMap anomaly_map(const FeaturePyramid& teacher, const FeaturePyramid& student, int out_size,
                       double smooth_sigma) {
  AnomalyMap m{gaussian_smooth(fused_distance_field(teacher, student, out_size), smooth_sigma), 0.0};
  m.image_score = grid_max(m.values);
  return m;
}

double grid_max(const Grid& g) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : g.values) m = std::max(m, v);
  return m;
}

}  // namespace fuad
