#pragma once

#include <Eigen/Core>
#include <span>

#include "fuad/model_config.hpp"
#include "fuad/tensor.hpp"

namespace fuad {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Square convolution with zero padding kernel/2.
struct ConvGeometry {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;

  int padding() const { return kernel / 2; }
  Shape3 output_shape(const Shape3& in) const;
  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
  }
  std::size_t param_count() const { return weight_count() + static_cast<std::size_t>(out_channels); }
};

// Values kept from the forward pass that the backward pass needs.
struct ConvTape {
  RowMatrix columns;
  Shape3 input_shape;
};

// weights: [out x in x k x k] row-major, then bias [out].
Tensor conv2d_forward(const ConvGeometry& g, std::span<const double> params, const Tensor& input,
                      ConvTape* tape = nullptr);

// Accumulates into grad_params and returns the gradient w.r.t. the input
// (empty tensor when want_input_grad is false).
Tensor conv2d_backward(const ConvGeometry& g, std::span<const double> params, const ConvTape& tape,
                       const Tensor& grad_output, std::span<double> grad_params, bool want_input_grad);

void activate_inplace(Nonlinearity n, Tensor& t);
Tensor activate(Nonlinearity n, const Tensor& pre);
// grad_output * f'(pre)
Tensor activation_backward(Nonlinearity n, const Tensor& pre, const Tensor& grad_output);

Tensor avg_pool(const Tensor& input, int factor);
Tensor avg_pool_backward(const Tensor& grad_output, int factor);

// Moves each factor x factor block into channels: (C,H,W) -> (C*f*f, H/f, W/f).
// Output channel c*f*f + dy*f + dx holds input (c, y*f+dy, x*f+dx).
Tensor space_to_depth(const Tensor& input, int factor);
// Inverse of space_to_depth; also its adjoint, so each is the other's backward.
Tensor depth_to_space(const Tensor& input, int factor);
Tensor upsample_nearest(const Tensor& input, int factor);
Tensor upsample_nearest_backward(const Tensor& grad_output, int factor);

Tensor concat_channels(std::span<const Tensor* const> parts);

}  // namespace fuad
