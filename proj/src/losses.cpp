#include "fuad/losses.hpp"

#include <cmath>
#include <vector>

#include "fuad/error.hpp"

namespace fuad {

double cos_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw InputError("cos_sim: length mismatch " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < kNormEpsilon || nb < kNormEpsilon) return 0.0;
  return dot / (na * nb);
}

double flattened_cos(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw InputError("flattened_cos: shape mismatch");
  return cos_sim(a.values(), b.values());
}

namespace {

struct LocationStats {
  std::vector<double> dot, na, nb;
};

LocationStats location_stats(const Tensor& a, const Tensor& b) {
  const std::size_t plane = a.shape().plane();
  LocationStats s{std::vector<double>(plane, 0.0), std::vector<double>(plane, 0.0), std::vector<double>(plane, 0.0)};
  for (int c = 0; c < a.channels(); ++c) {
    auto ca = a.channel(c);
    auto cb = b.channel(c);
    for (std::size_t p = 0; p < plane; ++p) {
      s.dot[p] += ca[p] * cb[p];
      s.na[p] += ca[p] * ca[p];
      s.nb[p] += cb[p] * cb[p];
    }
  }
  for (std::size_t p = 0; p < plane; ++p) {
    s.na[p] = std::sqrt(s.na[p]);
    s.nb[p] = std::sqrt(s.nb[p]);
  }
  return s;
}

}  // namespace

Grid location_cos(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw InputError("location_cos: shape mismatch");
  const auto s = location_stats(a, b);
  Grid g(a.height(), a.width());
  for (std::size_t p = 0; p < g.values.size(); ++p) {
    g.values[p] = (s.na[p] < kNormEpsilon || s.nb[p] < kNormEpsilon) ? 0.0 : s.dot[p] / (s.na[p] * s.nb[p]);
  }
  return g;
}

LossReport layer_cos_loss(const FeaturePyramid& target, const FeaturePyramid& student) {
  require_same_shapes(target, student, "layer_cos_loss");
  LossReport r;
  for (std::size_t l = 0; l < target.size(); ++l) {
    const Grid cos = location_cos(target[l], student[l]);
    double sum = 0.0;
    for (double v : cos.values) sum += 1.0 - v;
    r.layer_terms[l] = sum / static_cast<double>(cos.values.size());
    r.total += r.layer_terms[l];
  }
  return r;
}

LossReport layer_cos_loss_grad(const FeaturePyramid& target, const FeaturePyramid& student, double weight,
                               FeaturePyramid& grad) {
  require_same_shapes(target, student, "layer_cos_loss_grad");
  require_same_shapes(student, grad, "layer_cos_loss_grad");
  LossReport r;
  for (std::size_t l = 0; l < target.size(); ++l) {
    const Tensor& t = target[l];
    const Tensor& s = student[l];
    Tensor& g = grad[l];
    const auto st = location_stats(t, s);
    const std::size_t plane = t.shape().plane();
    const double scale = weight / static_cast<double>(plane);
    std::vector<double> coef_t(plane, 0.0), coef_s(plane, 0.0);
    double sum = 0.0;
    for (std::size_t p = 0; p < plane; ++p) {
      if (st.na[p] < kNormEpsilon || st.nb[p] < kNormEpsilon) {
        sum += 1.0;
        continue;
      }
      const double inv = 1.0 / (st.na[p] * st.nb[p]);
      const double cos = st.dot[p] * inv;
      sum += 1.0 - cos;
      // d(1 - cos)/ds = -(t / (|t||s|) - cos * s / |s|^2)
      coef_t[p] = -scale * inv;
      coef_s[p] = scale * cos / (st.nb[p] * st.nb[p]);
    }
    for (int c = 0; c < t.channels(); ++c) {
      auto ct = t.channel(c);
      auto cs = s.channel(c);
      auto cg = g.channel(c);
      for (std::size_t p = 0; p < plane; ++p) cg[p] += coef_t[p] * ct[p] + coef_s[p] * cs[p];
    }
    r.layer_terms[l] = weight * sum / static_cast<double>(plane);
    r.total += r.layer_terms[l];
  }
  return r;
}

double mean_location_cos(const FeaturePyramid& a, const FeaturePyramid& b) {
  require_same_shapes(a, b, "mean_location_cos");
  double total = 0.0;
  for (std::size_t l = 0; l < a.size(); ++l) {
    const Grid cos = location_cos(a[l], b[l]);
    double sum = 0.0;
    for (double v : cos.values) sum += v;
    total += sum / static_cast<double>(cos.values.size());
  }
  return total;
}

FeaturePyramid zeros_like(const FeaturePyramid& p) {
  FeaturePyramid z;
  z.levels.reserve(p.size());
  for (const auto& l : p.levels) z.levels.emplace_back(l.shape());
  return z;
}

}  // namespace fuad
