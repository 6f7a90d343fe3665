#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fuad/adam.hpp"
#include "fuad/anomaly_map.hpp"
#include "fuad/datagen.hpp"
#include "fuad/losses.hpp"
#include "fuad/student.hpp"
#include "fuad/teacher.hpp"

namespace fuad {

// Teacher features of a fixed list of images, computed once. The teacher is
// frozen, so caching them changes nothing but cost.
struct FeatureBank {
  std::vector<std::string> ids;
  std::vector<FeaturePyramid> features;

  std::size_t size() const { return features.size(); }
};

FeatureBank extract_features(const FeatureExtractor& teacher, const TrainView& view);
FeatureBank extract_features(const FeatureExtractor& teacher, const std::vector<ImageSample>& samples);

struct TrainSettings {
  int epochs = 20;
  int batch_size = 8;
  AdamConfig adam;
  std::uint64_t seed = 0;
};

// Visiting order of `members` (bank indices) for one pass: sorted, then
// shuffled by a stream derived from (seed, epoch, stream). Trainers that use
// the same (seed, epoch, stream) on the same members see identical batches.
std::vector<std::size_t> pass_order(std::vector<std::size_t> members, std::uint64_t seed, std::size_t epoch,
                                    std::size_t stream);

struct LossTarget {
  const FeaturePyramid* features = nullptr;
  double weight = 1.0;
};

struct StepSample {
  const FeaturePyramid* input = nullptr;
  std::vector<LossTarget> targets;
};

// One optimiser step on the mean over the batch of the weighted sum of
// layer_cos_loss terms. Targets are constants: no gradient reaches whatever
// produced them. Zero-weight targets are skipped. Throws TrainingError (with
// the parameters from before the step) on a non-finite loss.
LossReport train_step(const StudentArch& arch, StudentParams& params, Adam& adam, std::span<const StepSample> batch,
                      std::size_t step_index);

// Value-only counterpart of train_step's loss.
LossReport batch_loss(const StudentArch& arch, const StudentParams& params, std::span<const StepSample> batch);

struct RdResult {
  StudentParams params;
  std::vector<LossReport> history;  // one entry per optimiser step
  std::vector<double> epoch_mean_loss;
};

using StepObserver = std::function<void(const LossReport&)>;
// Called after every epoch with its index, mean loss and the parameters.
using RdEpochObserver = std::function<void(int, double, const StudentParams&)>;

// Plain reverse distillation: minimise the mean layer_cos_loss between
// teacher features and the student's reconstruction of them.
RdResult train_rd(const FeatureBank& bank, const StudentArch& arch, StudentParams init, const TrainSettings& settings,
                  const StepObserver& observer = {}, const RdEpochObserver& epoch_observer = {});
RdResult train_rd(const TrainView& view, const FeatureExtractor& teacher, const StudentArch& arch, StudentParams init,
                  const TrainSettings& settings);

struct ScoredSet {
  std::vector<AnomalyMap> maps;
  std::vector<double> scores;
};

ScoredSet score_dataset(const FeatureBank& bank, const StudentArch& arch, const StudentParams& params, int out_size,
                        double smooth_sigma);
ScoredSet score_dataset(const std::vector<ImageSample>& samples, const FeatureExtractor& teacher,
                        const StudentArch& arch, const StudentParams& params, double smooth_sigma);

}  // namespace fuad
