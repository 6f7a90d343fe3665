#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fuad/pipeline.hpp"
#include "fuad/tensor.hpp"

namespace fuad {

// Interleaved 8-bit RGB, row-major.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  std::uint8_t at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

// Map pixels at or above half of the map's range (min-max normalised).
// A constant map highlights nothing.
Grid overlay_highlight(const Grid& map);

// Three tiles side by side: input, ground-truth mask, and the input with the
// highlighted region tinted by map intensity. Pixels outside the highlight
// are copied from the input tile unchanged.
RgbImage overlay_panel(const Tensor& image, const Grid& mask, const Grid& map);

// Parsed telemetry.log: one key/value map per epoch line.
using TelemetryRows = std::vector<std::map<std::string, std::string>>;
TelemetryRows read_telemetry(const RunRecord& run);

struct PlotOptions {
  int histogram_bins = 20;
  // Test sample ids to draw overlays for; when empty the first
  // `overlay_count` anomalous test samples of the first setting are used.
  std::vector<std::string> overlay_ids;
  int overlay_count = 2;
};

// (a) score histograms per run on shared axes, (b) overlay panels,
// (c) metric vs r_noise per setting, (d) per-epoch loss and schedule curves.
// Every .png has a .tsv twin holding the plotted numbers. Returns all files
// written, in a stable order.
std::vector<std::filesystem::path> emit_plots(const std::vector<RunRecord>& runs,
                                              const std::filesystem::path& out_dir, const PlotOptions& options = {});

// One row per run and setting.
std::string runs_table(const std::vector<RunRecord>& runs);

}  // namespace fuad
