#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "fuad/adam.hpp"
#include "fuad/checkpoint.hpp"
#include "fuad/datagen.hpp"
#include "fuad/error.hpp"
#include "fuad/layers.hpp"
#include "fuad/losses.hpp"
#include "fuad/student.hpp"
#include "fuad/teacher.hpp"
#include "fuad/trainer.hpp"
#include "support.hpp"

using namespace fuad;
using fuad::fixtures::random_tensor;

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double rel_err(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8}); }

}  // namespace

TEST(Teacher, DefaultLevelShapes) {
  const TeacherNet t = build_teacher(ModelConfig{}, 1);
  const auto shapes = t.level_shapes();
  EXPECT_EQ(shapes[0], (Shape3{16, 16, 16}));
  EXPECT_EQ(shapes[1], (Shape3{32, 8, 8}));
  EXPECT_EQ(shapes[2], (Shape3{64, 4, 4}));
  const FeaturePyramid p = teacher_forward(t, Tensor({3, 32, 32}, 0.0));
  for (int l = 0; l < kLevels; ++l) {
    EXPECT_EQ(p[l].shape(), shapes[l]);
    EXPECT_TRUE(p[l].all_finite());
  }
}

TEST(Teacher, SeedDeterminesParameters) {
  const TeacherNet a = build_teacher(ModelConfig{}, 4), b = build_teacher(ModelConfig{}, 4), c = build_teacher(ModelConfig{}, 5);
  EXPECT_TRUE(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
  EXPECT_EQ(a.parameter_hash(), b.parameter_hash());
  EXPECT_NE(a.parameter_hash(), c.parameter_hash());
}

TEST(Teacher, ConfigAndInputErrors) {
  ModelConfig bad;
  bad.image_size = 30;
  EXPECT_THROW(build_teacher(bad, 1), ConfigError);
  const TeacherNet t = build_teacher(ModelConfig{}, 1);
  EXPECT_THROW(teacher_forward(t, Tensor({3, 16, 16})), InputError);
  EXPECT_THROW(teacher_forward(t, Tensor({1, 32, 32})), InputError);
}

TEST(Teacher, BatchPreservesOrder) {
  const TeacherNet t = build_teacher(ModelConfig{}, 1);
  std::mt19937_64 rng(3);
  std::vector<Tensor> images;
  for (int i = 0; i < 4; ++i) images.push_back(random_tensor({3, 32, 32}, rng, 0.0, 1.0));
  const auto batch = teacher_forward(t, std::span<const Tensor>(images));
  ASSERT_EQ(batch.size(), 4u);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(batch[i], teacher_forward(t, images[i]));
}

TEST(Teacher, NormalPairsMoreSimilarThanNormalAnomalousPairs) {
  GenSpec spec;
  spec.n_train_normal = 101;
  spec.n_test_normal = 0;
  spec.n_anomalous_pool = 100;
  spec.defect.contrast = 0.3;
  const Corpus c = generate_corpus(spec);
  const TeacherNet t = build_teacher(ModelConfig{}, 3);
  double nn = 0.0, na = 0.0;
  for (int i = 0; i < 100; ++i) {
    const FeaturePyramid a = teacher_forward(t, c.train_normals[i].pixels);
    nn += mean_location_cos(a, teacher_forward(t, c.train_normals[i + 1].pixels));
    na += mean_location_cos(a, teacher_forward(t, c.anomalies[i].pixels));
  }
  EXPECT_GE(nn / 100.0, na / 100.0);
}

TEST(Teacher, ShiftByOneStrideShiftsLevelOneFeatures) {
  GenSpec spec = fixtures::small_gen(12);
  const Tensor img = generate_corpus(spec).train_normals[0].pixels;
  Tensor shifted(img.shape());
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) shifted.at(c, y, x) = img.at(c, y, std::max(0, x - 2));
    }
  }
  const TeacherNet t = build_teacher(ModelConfig{}, 3);
  const Tensor a = teacher_forward(t, img)[0], b = teacher_forward(t, shifted)[0];
  std::vector<double> u, v;
  for (int c = 0; c < a.channels(); ++c) {
    for (int y = 1; y < a.height() - 1; ++y) {
      for (int x = 2; x < a.width() - 1; ++x) {
        u.push_back(a.at(c, y, x - 1));
        v.push_back(b.at(c, y, x));
      }
    }
  }
  const double n = static_cast<double>(u.size());
  double mu = 0, mv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) mu += u[i] / n, mv += v[i] / n;
  double suv = 0, suu = 0, svv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    suv += (u[i] - mu) * (v[i] - mv);
    suu += (u[i] - mu) * (u[i] - mu);
    svv += (v[i] - mv) * (v[i] - mv);
  }
  EXPECT_GT(suv / std::sqrt(suu * svv), 0.95);
}

TEST(Student, OutputShapesMatchTeacherDefault) {
  const ModelConfig cfg;
  const StudentNet s(cfg, 2);
  EXPECT_GT(s.arch().parameter_count(), 0u);
  const FeaturePyramid in = teacher_forward(build_teacher(cfg, 1), Tensor({3, 32, 32}, 0.5));
  const FeaturePyramid out = s.forward(in);
  for (int l = 0; l < kLevels; ++l) EXPECT_EQ(out[l].shape(), in[l].shape());
  EXPECT_EQ(out, s.forward(in));
}

// Property: the shape contract over random valid configs.
TEST(Student, ShapeContractOverRandomConfigs) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 40; ++trial) {
    ModelConfig cfg;
    cfg.input_channels = 1 + static_cast<int>(rng() % 3);
    const int base = 1 << (1 + rng() % 2);  // stride of level 0: 2 or 4
    cfg.level_strides = {base, base * 2, base * 4};
    cfg.image_size = base * 4 * (2 + static_cast<int>(rng() % 2)) * 2;
    for (auto& ch : cfg.level_channels) ch = 1 + static_cast<int>(rng() % 6);
    cfg.bottleneck_width = 1 + static_cast<int>(rng() % 8);
    cfg.bottleneck_stride = 1 + static_cast<int>(rng() % 2);
    cfg.fusion = rng() % 2 ? Fusion::pool : Fusion::unshuffle;
    cfg.upsampling = rng() % 2 ? Upsampling::nearest : Upsampling::shuffle;
    cfg.nonlinearity = static_cast<Nonlinearity>(rng() % 4);
    ASSERT_NO_THROW(cfg.validate()) << cfg.canonical();
    const TeacherNet t = build_teacher(cfg, trial);
    const StudentArch arch(cfg);
    const FeaturePyramid in = teacher_forward(t, random_tensor(cfg.input_shape(), rng, 0.0, 1.0));
    const FeaturePyramid out = arch.forward(in, arch.init_params(trial));
    for (int l = 0; l < kLevels; ++l) EXPECT_EQ(out[l].shape(), in[l].shape()) << cfg.canonical();
  }
}

TEST(Student, ShapeMismatchIsInputError) {
  const StudentArch arch(ModelConfig{});
  std::mt19937_64 rng(1);
  FeaturePyramid p = fixtures::random_pyramid(ModelConfig{}.level_shapes(), rng);
  p.levels[1] = Tensor({32, 4, 4});
  EXPECT_THROW(arch.forward(p, arch.init_params(1)), InputError);
  p.levels.pop_back();
  EXPECT_THROW(arch.forward(p, arch.init_params(1)), InputError);
}

TEST(Student, CloneIsDeepAndLoadRestoresOutputs) {
  const ModelConfig cfg = fixtures::micro_config();
  StudentNet s(cfg, 9);
  const FeaturePyramid in = teacher_forward(build_teacher(cfg, 1), Tensor(cfg.input_shape(), 0.3));
  const FeaturePyramid before = s.forward(in);
  StudentParams copy = s.clone_params();
  for (double& v : copy.values) v += 0.5;
  EXPECT_EQ(s.forward(in), before);
  StudentNet other(cfg, 10);
  other.load_params(s.clone_params());
  EXPECT_EQ(other.forward(in), before);

  StudentParams wrong = copy;
  wrong.values.pop_back();
  EXPECT_THROW(other.load_params(wrong), StateError);
  const StudentNet big(ModelConfig{}, 1);
  EXPECT_THROW(other.load_params(big.clone_params()), StateError);
}

TEST(Checkpoint, RoundTripGivesIdenticalOutputs) {
  const ModelConfig cfg = fixtures::micro_config(Nonlinearity::leaky_relu, Fusion::unshuffle, Upsampling::shuffle);
  const StudentArch arch(cfg);
  const StudentParams params = arch.init_params(33);
  const auto path = std::filesystem::temp_directory_path() / "fuad_test_ckpt.bin";
  save_checkpoint(path, arch, params, 33);
  const StudentParams back = load_checkpoint(path, arch);
  EXPECT_EQ(back, params);
  const FeaturePyramid in = teacher_forward(build_teacher(cfg, 1), Tensor(cfg.input_shape(), 0.7));
  EXPECT_EQ(arch.forward(in, back), arch.forward(in, params));

  const ArrayContainer c = read_container(path);
  EXPECT_EQ(c.version, kContainerVersion);
  EXPECT_EQ(c.seed, 33u);

  ModelConfig other = cfg;
  other.bottleneck_width = 3;
  EXPECT_THROW(load_checkpoint(path, StudentArch(other)), StateError);
}

TEST(Teacher, UnchangedByTraining) {
  const ModelConfig cfg = fixtures::micro_config();
  const TeacherNet t = build_teacher(cfg, 2);
  const std::uint64_t before = t.parameter_hash();
  GenSpec g = fixtures::small_gen(2);
  std::vector<ImageSample> samples;
  std::mt19937_64 rng(4);
  for (int i = 0; i < 4; ++i) {
    ImageSample s;
    s.id = "s" + std::to_string(i);
    s.pixels = random_tensor(cfg.input_shape(), rng, 0.0, 1.0);
    s.mask = Grid(16, 16);
    samples.push_back(s);
  }
  const StudentArch arch(cfg);
  TrainSettings ts;
  ts.epochs = 2;
  ts.batch_size = 2;
  train_rd(TrainView(&samples), t, arch, arch.init_params(1), ts);
  EXPECT_EQ(t.parameter_hash(), before);
}

// Finite-difference checks, one per trainable layer type.
TEST(GradientCheck, ConvolutionParamsAndInput) {
  std::mt19937_64 rng(5);
  for (int stride : {1, 2}) {
    const ConvGeometry g{3, 4, 3, stride};
    const Tensor input = random_tensor({3, 6, 6}, rng);
    std::vector<double> params(g.param_count());
    for (double& v : params) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    ConvTape tape;
    const Tensor out = conv2d_forward(g, params, input, &tape);
    const Tensor w = random_tensor(out.shape(), rng);  // loss = <w, out>
    std::vector<double> grad(params.size(), 0.0);
    const Tensor gin = conv2d_backward(g, params, tape, w, grad, true);
    const double h = 1e-6;
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params;
      p[i] += h;
      const double up = dot(w.values(), conv2d_forward(g, p, input).values());
      p[i] -= 2 * h;
      const double down = dot(w.values(), conv2d_forward(g, p, input).values());
      EXPECT_LE(rel_err(grad[i], (up - down) / (2 * h)), 1e-4) << "param " << i;
    }
    for (std::size_t i = 0; i < input.size(); ++i) {
      Tensor x = input;
      x.values()[i] += h;
      const double up = dot(w.values(), conv2d_forward(g, params, x).values());
      x.values()[i] -= 2 * h;
      const double down = dot(w.values(), conv2d_forward(g, params, x).values());
      EXPECT_LE(rel_err(gin.values()[i], (up - down) / (2 * h)), 1e-4) << "input " << i;
    }
  }
}

TEST(GradientCheck, Activations) {
  std::mt19937_64 rng(6);
  for (Nonlinearity n : {Nonlinearity::relu, Nonlinearity::leaky_relu, Nonlinearity::tanh, Nonlinearity::elu}) {
    Tensor pre = random_tensor({2, 3, 3}, rng);
    for (double& v : pre.values()) {
      if (std::abs(v) < 1e-3) v = 0.5;  // keep away from the kink
    }
    const Tensor ones(pre.shape(), 1.0);
    const Tensor g = activation_backward(n, pre, ones);
    for (std::size_t i = 0; i < pre.size(); ++i) {
      Tensor a = pre, b = pre;
      a.values()[i] += 1e-6;
      b.values()[i] -= 1e-6;
      const double numeric = (activate(n, a).values()[i] - activate(n, b).values()[i]) / 2e-6;
      EXPECT_LE(rel_err(g.values()[i], numeric), 1e-4) << to_string(n);
    }
  }
}

TEST(GradientCheck, ResamplingOperatorsAreAdjoint) {
  // Backward of a linear map is its adjoint: <A x, y> = <x, A^T y>.
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor({3, 8, 8}, rng);
  const Tensor y4 = random_tensor({3, 4, 4}, rng), y16 = random_tensor({3, 16, 16}, rng),
               y12 = random_tensor({12, 4, 4}, rng);
  EXPECT_NEAR(dot(avg_pool(x, 2).values(), y4.values()), dot(x.values(), avg_pool_backward(y4, 2).values()), 1e-12);
  EXPECT_NEAR(dot(upsample_nearest(x, 2).values(), y16.values()),
              dot(x.values(), upsample_nearest_backward(y16, 2).values()), 1e-12);
  EXPECT_NEAR(dot(space_to_depth(x, 2).values(), y12.values()), dot(x.values(), depth_to_space(y12, 2).values()),
              1e-12);
  EXPECT_EQ(depth_to_space(space_to_depth(x, 2), 2), x);
  EXPECT_EQ(space_to_depth(x, 2).at(1 * 4 + 1 * 2 + 0, 2, 3), x.at(1, 2 * 2 + 1, 3 * 2 + 0));
  EXPECT_THROW(depth_to_space(Tensor({3, 2, 2}), 2), InputError);
}

TEST(GradientCheck, CosLossWrtStudentFeatures) {
  std::mt19937_64 rng(8);
  const auto shapes = fixtures::micro_config().level_shapes();
  const FeaturePyramid t = fixtures::random_pyramid(shapes, rng);
  FeaturePyramid s = fixtures::random_pyramid(shapes, rng);
  FeaturePyramid g = zeros_like(s);
  layer_cos_loss_grad(t, s, 1.0, g);
  for (int l = 0; l < kLevels; ++l) {
    for (std::size_t i = 0; i < s[l].size(); i += 3) {
      FeaturePyramid a = s, b = s;
      a[l].values()[i] += 1e-6;
      b[l].values()[i] -= 1e-6;
      const double numeric = (layer_cos_loss(t, a).total - layer_cos_loss(t, b).total) / 2e-6;
      EXPECT_LE(rel_err(g[l].values()[i], numeric), 1e-4);
    }
  }
}

TEST(GradientCheck, WholeStudentMicroConfig) {
  for (int seed = 0; seed < 5; ++seed) {
    const auto r = fixtures::gradient_check(fixtures::micro_config(), seed);
    EXPECT_LE(r.parameters, 500u);
    EXPECT_LE(r.max_rel_error, 1e-4) << "seed " << seed;
  }
}

// The composed network is checked for every fusion/upsampling variant with
// smooth nonlinearities; 1 - cos is badly conditioned near small feature
// norms, so the whole-network bound is looser than the per-layer one.
TEST(GradientCheck, WholeStudentVariants) {
  for (Nonlinearity n : {Nonlinearity::tanh, Nonlinearity::elu}) {
    for (Fusion f : {Fusion::pool, Fusion::unshuffle}) {
      for (Upsampling u : {Upsampling::nearest, Upsampling::shuffle}) {
        for (int seed = 0; seed < 3; ++seed) {
          const auto r = fixtures::gradient_check(fixtures::micro_config(n, f, u), seed);
          EXPECT_LE(r.max_rel_error, 1e-3) << to_string(n) << " " << to_string(f) << " " << to_string(u);
        }
      }
    }
  }
}

TEST(Adam, FirstStepMovesByLearningRateTimesSign) {
  Adam adam(3, AdamConfig{});
  std::vector<double> p{1.0, 1.0, 1.0};
  const std::vector<double> g{0.5, -2.0, 1e-3};
  adam.step(p, g);
  for (int i = 0; i < 3; ++i) {
    const double expected = 1.0 - 0.005 * g[i] / (std::abs(g[i]) + 1e-8);
    EXPECT_NEAR(p[i], expected, 1e-12);
  }
  EXPECT_EQ(adam.steps(), 1u);
  adam.reset();
  EXPECT_EQ(adam.steps(), 0u);
}
