#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fuad/layers.hpp"
#include "fuad/model_config.hpp"
#include "fuad/tensor.hpp"

namespace fuad {

// Flat trainable parameter vector. Copies are deep, so a cloned set can be
// trained without touching the original.
struct StudentParams {
  std::vector<double> values;
  std::string layout_digest;

  friend bool operator==(const StudentParams&, const StudentParams&) = default;
};

struct ParamBlock {
  std::string name;
  std::vector<std::int64_t> shape;
  std::size_t offset = 0;
  std::size_t count = 0;
};

// Intermediate values recorded by a forward pass for backpropagation.
struct StudentTape {
  Shape3 level0_shape;
  Shape3 level1_shape;
  ConvTape bottleneck;
  Tensor bottleneck_pre;
  std::array<ConvTape, kLevels> decoder;
  std::array<Tensor, kLevels> outputs;
};

// Student architecture: a one-class bottleneck that brings the two shallow
// levels to the deepest resolution (config.fusion), concatenates all three and
// compresses them with one strided convolution; then a decoder of three
// upsampling convolution blocks (config.upsampling) that rebuilds the pyramid
// deepest-first.
// The architecture owns no parameters; they are passed explicitly.
class StudentArch {
 public:
  explicit StudentArch(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  std::size_t parameter_count() const { return parameter_count_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  const std::string& layout_digest() const { return layout_digest_; }

  StudentParams init_params(std::uint64_t seed) const;

  // Throws InputError on a pyramid that does not match the teacher contract,
  // StateError on a parameter set built for another layout.
  FeaturePyramid forward(const FeaturePyramid& input, const StudentParams& params, StudentTape* tape = nullptr) const;

  // Accumulates d(loss)/d(params) into grad given d(loss)/d(outputs).
  void backward(const StudentTape& tape, const StudentParams& params, const FeaturePyramid& grad_outputs,
                std::span<double> grad) const;

  void check_params(const StudentParams& params) const;

 private:
  // Resolution ratio between decoder block `level`'s output and its input.
  int upsample_factor(int level) const;

  ModelConfig config_;
  ConvGeometry bottleneck_{};
  std::array<ConvGeometry, kLevels> decoder_{};
  std::vector<ParamBlock> blocks_;
  std::size_t parameter_count_ = 0;
  std::string layout_digest_;
};

// A student with its own parameter set.
class StudentNet {
 public:
  StudentNet(const ModelConfig& config, std::uint64_t init_seed);

  const StudentArch& arch() const { return arch_; }
  std::uint64_t init_seed() const { return init_seed_; }
  const StudentParams& params() const { return params_; }
  StudentParams& mutable_params() { return params_; }

  StudentParams clone_params() const { return params_; }
  void load_params(const StudentParams& params);

  FeaturePyramid forward(const FeaturePyramid& input) const { return arch_.forward(input, params_); }

 private:
  StudentArch arch_;
  std::uint64_t init_seed_;
  StudentParams params_;
};

FeaturePyramid student_forward(const StudentArch& arch, const FeaturePyramid& input, const StudentParams& params);

}  // namespace fuad
