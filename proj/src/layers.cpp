#include "fuad/layers.hpp"

#include <cmath>

#include "fuad/error.hpp"

namespace fuad {

namespace {

constexpr double kLeakySlope = 0.1;

using ConstRowMap = Eigen::Map<const RowMatrix>;

void im2col(const ConvGeometry& g, const Tensor& in, const Shape3& out, RowMatrix& cols) {
  const int k = g.kernel;
  const int pad = g.padding();
  cols.resize(static_cast<Eigen::Index>(g.in_channels) * k * k, static_cast<Eigen::Index>(out.plane()));
  for (int c = 0; c < g.in_channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols.row((c * k + ky) * k + kx).data();
        for (int oy = 0; oy < out.height; ++oy) {
          const int iy = oy * g.stride + ky - pad;
          double* dst = row + static_cast<std::size_t>(oy) * out.width;
          if (iy < 0 || iy >= in.height()) {
            for (int ox = 0; ox < out.width; ++ox) dst[ox] = 0.0;
            continue;
          }
          for (int ox = 0; ox < out.width; ++ox) {
            const int ix = ox * g.stride + kx - pad;
            dst[ox] = (ix < 0 || ix >= in.width()) ? 0.0 : in.at(c, iy, ix);
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const RowMatrix& cols, const Shape3& out, Tensor& in_grad) {
  const int k = g.kernel;
  const int pad = g.padding();
  for (int c = 0; c < g.in_channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = cols.row((c * k + ky) * k + kx).data();
        for (int oy = 0; oy < out.height; ++oy) {
          const int iy = oy * g.stride + ky - pad;
          if (iy < 0 || iy >= in_grad.height()) continue;
          const double* src = row + static_cast<std::size_t>(oy) * out.width;
          for (int ox = 0; ox < out.width; ++ox) {
            const int ix = ox * g.stride + kx - pad;
            if (ix >= 0 && ix < in_grad.width()) in_grad.at(c, iy, ix) += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Shape3 ConvGeometry::output_shape(const Shape3& in) const {
  const int pad = padding();
  return {out_channels, (in.height + 2 * pad - kernel) / stride + 1, (in.width + 2 * pad - kernel) / stride + 1};
}

Tensor conv2d_forward(const ConvGeometry& g, std::span<const double> params, const Tensor& input, ConvTape* tape) {
  if (input.channels() != g.in_channels) {
    throw InputError("conv2d: expected " + std::to_string(g.in_channels) + " input channels, got " +
                     std::to_string(input.channels()));
  }
  if (params.size() != g.param_count()) throw InputError("conv2d: parameter block has the wrong size");
  const Shape3 out_shape = g.output_shape(input.shape());
  RowMatrix local;
  RowMatrix& cols = tape != nullptr ? tape->columns : local;
  im2col(g, input, out_shape, cols);
  if (tape != nullptr) tape->input_shape = input.shape();

  // Products run on Eigen-owned (aligned) copies: Eigen's vectorised paths
  // peel according to the runtime address, so working in place on
  // std::vector storage would make the summation order, and hence the last
  // bits, depend on where the allocator put the buffer.
  const auto inner = static_cast<Eigen::Index>(g.in_channels) * g.kernel * g.kernel;
  const RowMatrix weight = ConstRowMap(params.data(), g.out_channels, inner);
  RowMatrix result;
  result.noalias() = weight * cols;
  Tensor out(out_shape);
  const double* bias = params.data() + g.weight_count();
  const auto plane = static_cast<std::size_t>(out_shape.plane());
  for (int o = 0; o < g.out_channels; ++o) {
    const double* src = result.row(o).data();
    double* dst = out.data() + static_cast<std::size_t>(o) * plane;
    for (std::size_t p = 0; p < plane; ++p) dst[p] = src[p] + bias[o];
  }
  return out;
}

Tensor conv2d_backward(const ConvGeometry& g, std::span<const double> params, const ConvTape& tape,
                       const Tensor& grad_output, std::span<double> grad_params, bool want_input_grad) {
  const auto inner = static_cast<Eigen::Index>(g.in_channels) * g.kernel * g.kernel;
  const auto plane = static_cast<Eigen::Index>(grad_output.shape().plane());
  const RowMatrix weight = ConstRowMap(params.data(), g.out_channels, inner);
  const RowMatrix dout = ConstRowMap(grad_output.data(), g.out_channels, plane);
  RowMatrix dweight;
  dweight.noalias() = dout * tape.columns.transpose();
  const double* dw = dweight.data();
  for (std::size_t i = 0; i < g.weight_count(); ++i) grad_params[i] += dw[i];
  double* dbias = grad_params.data() + g.weight_count();
  for (int o = 0; o < g.out_channels; ++o) {
    const double* row = dout.row(o).data();
    double sum = 0.0;
    for (Eigen::Index p = 0; p < plane; ++p) sum += row[p];
    dbias[o] += sum;
  }

  if (!want_input_grad) return {};
  RowMatrix dcols = weight.transpose() * dout;
  Tensor din(tape.input_shape);
  col2im(g, dcols, grad_output.shape(), din);
  return din;
}

void activate_inplace(Nonlinearity n, Tensor& t) {
  for (double& v : t.values()) {
    switch (n) {
      case Nonlinearity::relu: v = v > 0.0 ? v : 0.0; break;
      case Nonlinearity::leaky_relu: v = v > 0.0 ? v : kLeakySlope * v; break;
      case Nonlinearity::tanh: v = std::tanh(v); break;
      case Nonlinearity::elu: v = v > 0.0 ? v : std::expm1(v); break;
    }
  }
}

Tensor activate(Nonlinearity n, const Tensor& pre) {
  Tensor out = pre;
  activate_inplace(n, out);
  return out;
}

Tensor activation_backward(Nonlinearity n, const Tensor& pre, const Tensor& grad_output) {
  Tensor out(pre.shape());
  auto x = pre.values();
  auto g = grad_output.values();
  auto o = out.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d = 1.0;
    switch (n) {
      case Nonlinearity::relu: d = x[i] > 0.0 ? 1.0 : 0.0; break;
      case Nonlinearity::leaky_relu: d = x[i] > 0.0 ? 1.0 : kLeakySlope; break;
      case Nonlinearity::tanh: {
        const double t = std::tanh(x[i]);
        d = 1.0 - t * t;
        break;
      }
      case Nonlinearity::elu: d = x[i] > 0.0 ? 1.0 : std::exp(x[i]); break;
    }
    o[i] = g[i] * d;
  }
  return out;
}

Tensor avg_pool(const Tensor& input, int factor) {
  if (factor == 1) return input;
  Tensor out({input.channels(), input.height() / factor, input.width() / factor});
  const double scale = 1.0 / (factor * factor);
  for (int c = 0; c < input.channels(); ++c) {
    for (int y = 0; y < input.height(); ++y) {
      for (int x = 0; x < input.width(); ++x) out.at(c, y / factor, x / factor) += input.at(c, y, x) * scale;
    }
  }
  return out;
}

Tensor avg_pool_backward(const Tensor& grad_output, int factor) {
  if (factor == 1) return grad_output;
  Tensor out({grad_output.channels(), grad_output.height() * factor, grad_output.width() * factor});
  const double scale = 1.0 / (factor * factor);
  for (int c = 0; c < out.channels(); ++c) {
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) out.at(c, y, x) = grad_output.at(c, y / factor, x / factor) * scale;
    }
  }
  return out;
}

Tensor space_to_depth(const Tensor& input, int factor) {
  if (factor == 1) return input;
  const int f2 = factor * factor;
  Tensor out({input.channels() * f2, input.height() / factor, input.width() / factor});
  for (int c = 0; c < input.channels(); ++c) {
    for (int y = 0; y < input.height(); ++y) {
      for (int x = 0; x < input.width(); ++x) {
        out.at(c * f2 + (y % factor) * factor + x % factor, y / factor, x / factor) = input.at(c, y, x);
      }
    }
  }
  return out;
}

Tensor depth_to_space(const Tensor& input, int factor) {
  if (factor == 1) return input;
  const int f2 = factor * factor;
  if (input.channels() % f2 != 0) throw InputError("depth_to_space: channels not divisible by factor^2");
  Tensor out({input.channels() / f2, input.height() * factor, input.width() * factor});
  for (int c = 0; c < out.channels(); ++c) {
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) {
        out.at(c, y, x) = input.at(c * f2 + (y % factor) * factor + x % factor, y / factor, x / factor);
      }
    }
  }
  return out;
}

Tensor upsample_nearest(const Tensor& input, int factor) {
  if (factor == 1) return input;
  Tensor out({input.channels(), input.height() * factor, input.width() * factor});
  for (int c = 0; c < out.channels(); ++c) {
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) out.at(c, y, x) = input.at(c, y / factor, x / factor);
    }
  }
  return out;
}

Tensor upsample_nearest_backward(const Tensor& grad_output, int factor) {
  if (factor == 1) return grad_output;
  Tensor out({grad_output.channels(), grad_output.height() / factor, grad_output.width() / factor});
  for (int c = 0; c < grad_output.channels(); ++c) {
    for (int y = 0; y < grad_output.height(); ++y) {
      for (int x = 0; x < grad_output.width(); ++x) out.at(c, y / factor, x / factor) += grad_output.at(c, y, x);
    }
  }
  return out;
}

Tensor concat_channels(std::span<const Tensor* const> parts) {
  int channels = 0;
  for (const Tensor* p : parts) {
    if (p->height() != parts[0]->height() || p->width() != parts[0]->width()) {
      throw InputError("concat_channels: spatial sizes differ");
    }
    channels += p->channels();
  }
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(channels) * parts[0]->shape().plane());
  for (const Tensor* p : parts) data.insert(data.end(), p->values().begin(), p->values().end());
  return Tensor({channels, parts[0]->height(), parts[0]->width()}, std::move(data));
}

}  // namespace fuad
