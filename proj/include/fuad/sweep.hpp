#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "fuad/metrics.hpp"
#include "fuad/run_config.hpp"

namespace fuad {

// One swept config key and the values it takes.
struct SweepAxis {
  std::string key;
  std::vector<std::string> values;
};

struct SweepCell {
  std::vector<std::string> values;  // aligned with the axes
  std::vector<RunConfig> replicates;
  std::vector<std::filesystem::path> dirs;
};

// Cartesian product of the axes (first axis slowest); no axes gives the base
// config as a single cell. Replicate seeds derive from (base seeds, axis
// values, replicate index); the train.algorithm axis is left out of the
// derivation so algorithms compared in one sweep see the same data.
std::vector<SweepCell> expand_sweep(const RunConfig& base, const std::vector<SweepAxis>& axes, int replicates,
                                    const std::filesystem::path& root);

struct MetricSummary {
  double mean = 0.0;
  double median = 0.0;
};

struct SweepRow {
  std::vector<std::string> values;
  int completed = 0;
  int failed = 0;
  std::vector<std::string> errors;
  // Indexed by setting, then metric: i_auc, p_auc, pro, train_auc.
  std::vector<Setting> settings;
  std::vector<std::array<MetricSummary, 4>> metrics;
};

struct SweepTable {
  std::vector<std::string> axis_keys;
  std::vector<SweepRow> rows;
};

// Runs every replicate whose directory lacks metrics.txt; a failing replicate
// is recorded in its row and the sweep carries on.
using CellProgress = std::function<void(const std::filesystem::path&, const std::string& status)>;
SweepTable run_sweep(const RunConfig& base, const std::vector<SweepAxis>& axes, int replicates,
                     const std::filesystem::path& root, const CellProgress& progress = {});

std::string format_sweep_table(const SweepTable& table);

double median_of(std::vector<double> values);

}  // namespace fuad
