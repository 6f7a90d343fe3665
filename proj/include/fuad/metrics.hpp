#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fuad/datagen.hpp"
#include "fuad/student.hpp"
#include "fuad/teacher.hpp"
#include "fuad/tensor.hpp"

namespace fuad {

// Area under the ROC curve by trapezoidal integration over distinct score
// thresholds. Accumulated in integer units, so the result is bit-identical
// to the Mann-Whitney pair count (ties count one half).
// Throws MetricError unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

// roc_auc over the pooled pixels of all maps.
double pixel_auc(std::span<const Grid> maps, std::span<const Grid> masks);

// 8-connected components of the nonzero pixels; returns the component count
// and writes a label per pixel (-1 for background).
int label_regions(const Grid& mask, std::vector<int>& labels);

struct ProOptions {
  double fpr_limit = 0.3;
  // Thresholds are all distinct scores when there are at most this many,
  // otherwise this many evenly spaced order statistics of the pooled scores.
  int n_thresholds = 200;
};

// Per-region overlap: mean over ground-truth regions of the covered fraction,
// integrated against the false-positive rate on normal pixels from 0 to
// fpr_limit and divided by fpr_limit.
double pro(std::span<const Grid> maps, std::span<const Grid> masks, ProOptions options = {});

struct PixelCounts {
  std::size_t n_normal = 0;
  std::size_t n_anomalous = 0;
};

struct MetricsReport {
  double i_auc = 0.0;
  double p_auc = 0.0;
  double pro = 0.0;
  Setting setting = Setting::no_overlap;
  std::size_t n_test_normal = 0;
  std::size_t n_test_anomalous = 0;
  double pro_fpr_limit = 0.3;
  // AUC of training-set image scores against the hidden injected labels.
  std::optional<double> train_auc;
};

std::string format_metrics(std::span<const MetricsReport> reports);
std::vector<MetricsReport> parse_metrics(const std::string& text);
void write_metrics(const std::filesystem::path& path, std::span<const MetricsReport> reports);
std::vector<MetricsReport> read_metrics(const std::filesystem::path& path);

struct EvalOptions {
  double smooth_sigma = 4.0;
  ProOptions pro;
};

// Scores the split's test set (and its training set, for train_auc).
MetricsReport evaluate(const FuadSplit& split, const FeatureExtractor& teacher, const StudentArch& arch,
                       const StudentParams& params, const EvalOptions& options = {});

}  // namespace fuad
