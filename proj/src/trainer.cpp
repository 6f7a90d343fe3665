#include "fuad/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "fuad/error.hpp"
#include "fuad/seed.hpp"

namespace fuad {

FeatureBank extract_features(const FeatureExtractor& teacher, const TrainView& view) {
  FeatureBank bank;
  bank.ids.reserve(view.size());
  bank.features.reserve(view.size());
  for (std::size_t i = 0; i < view.size(); ++i) {
    bank.ids.push_back(view.id(i));
    bank.features.push_back(teacher.extract(view.pixels(i)));
  }
  return bank;
}

FeatureBank extract_features(const FeatureExtractor& teacher, const std::vector<ImageSample>& samples) {
  FeatureBank bank;
  for (const auto& s : samples) {
    bank.ids.push_back(s.id);
    bank.features.push_back(teacher.extract(s.pixels));
  }
  return bank;
}

std::vector<std::size_t> pass_order(std::vector<std::size_t> members, std::uint64_t seed, std::size_t epoch,
                                    std::size_t stream) {
  std::sort(members.begin(), members.end());
  Rng rng(derive_seed(seed, "pass", epoch, stream));
  std::shuffle(members.begin(), members.end(), rng);
  return members;
}

namespace {

LossReport accumulate(const StudentArch& arch, const StudentParams& params, std::span<const StepSample> batch,
                      std::vector<double>* grad) {
  LossReport report;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  StudentTape tape;
  for (const auto& sample : batch) {
    const FeaturePyramid out = arch.forward(*sample.input, params, grad ? &tape : nullptr);
    FeaturePyramid g = zeros_like(out);
    for (const auto& target : sample.targets) {
      if (target.weight == 0.0) continue;
      const LossReport r = layer_cos_loss_grad(*target.features, out, target.weight * inv_batch, g);
      for (int l = 0; l < kLevels; ++l) report.layer_terms[l] += r.layer_terms[l];
      report.total += r.total;
    }
    if (grad) arch.backward(tape, params, g, *grad);
  }
  return report;
}

}  // namespace

LossReport train_step(const StudentArch& arch, StudentParams& params, Adam& adam, std::span<const StepSample> batch,
                      std::size_t step_index) {
  if (batch.empty()) throw StateError("train_step: empty batch");
  std::vector<double> grad(arch.parameter_count(), 0.0);
  LossReport report = accumulate(arch, params, batch, &grad);
  report.step = step_index;
  bool finite = std::isfinite(report.total);
  for (std::size_t i = 0; finite && i < grad.size(); ++i) finite = std::isfinite(grad[i]);
  if (!finite) {
    throw TrainingError("non-finite loss at step " + std::to_string(step_index), step_index, params.values);
  }
  adam.step(params.values, grad);
  return report;
}

LossReport batch_loss(const StudentArch& arch, const StudentParams& params, std::span<const StepSample> batch) {
  return accumulate(arch, params, batch, nullptr);
}

RdResult train_rd(const FeatureBank& bank, const StudentArch& arch, StudentParams init, const TrainSettings& settings,
                  const StepObserver& observer, const RdEpochObserver& epoch_observer) {
  if (settings.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  arch.check_params(init);
  RdResult result{std::move(init), {}, {}};
  Adam adam(arch.parameter_count(), settings.adam);
  std::vector<std::size_t> all(bank.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  std::size_t step = 0;
  for (int epoch = 0; epoch < settings.epochs; ++epoch) {
    const auto order = pass_order(all, settings.seed, static_cast<std::size_t>(epoch), 0);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += settings.batch_size) {
      const std::size_t end = std::min(order.size(), start + settings.batch_size);
      std::vector<StepSample> batch;
      for (std::size_t k = start; k < end; ++k) {
        const auto* f = &bank.features[order[k]];
        batch.push_back({f, {{f, 1.0}}});
      }
      const LossReport r = train_step(arch, result.params, adam, batch, step++);
      if (observer) observer(r);
      result.history.push_back(r);
      sum += r.total;
      ++batches;
    }
    result.epoch_mean_loss.push_back(batches ? sum / batches : 0.0);
    if (epoch_observer) epoch_observer(epoch, result.epoch_mean_loss.back(), result.params);
  }
  return result;
}

RdResult train_rd(const TrainView& view, const FeatureExtractor& teacher, const StudentArch& arch, StudentParams init,
                  const TrainSettings& settings) {
  return train_rd(extract_features(teacher, view), arch, std::move(init), settings);
}

ScoredSet score_dataset(const FeatureBank& bank, const StudentArch& arch, const StudentParams& params, int out_size,
                        double smooth_sigma) {
  ScoredSet out;
  out.maps.reserve(bank.size());
  for (const auto& f : bank.features) {
    out.maps.push_back(anomaly_map(f, arch.forward(f, params), out_size, smooth_sigma));
    out.scores.push_back(out.maps.back().image_score);
  }
  return out;
}

ScoredSet score_dataset(const std::vector<ImageSample>& samples, const FeatureExtractor& teacher,
                        const StudentArch& arch, const StudentParams& params, double smooth_sigma) {
  return score_dataset(extract_features(teacher, samples), arch, params, teacher.input_shape().height, smooth_sigma);
}

}  // namespace fuad
