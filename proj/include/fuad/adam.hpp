#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fuad {

struct AdamConfig {
  double learning_rate = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adaptive moment estimation with bias correction.
class Adam {
 public:
  Adam(std::size_t parameter_count, AdamConfig config);

  void step(std::span<double> params, std::span<const double> grads);
  // Clears both moment estimates and the step counter.
  void reset();

  std::size_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t steps_ = 0;
};

}  // namespace fuad
