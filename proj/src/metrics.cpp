#include "fuad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fuad/error.hpp"
#include "fuad/trainer.hpp"

namespace fuad {

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw MetricError("roc_auc: scores and labels differ in length");
  std::int64_t positives = 0, negatives = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw MetricError("roc_auc: labels must be 0 or 1");
    (l ? positives : negatives)++;
  }
  if (positives == 0 || negatives == 0) throw MetricError("roc_auc: undefined with a single class");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::int64_t tp = 0, fp = 0, twice_area = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    std::int64_t dtp = 0, dfp = 0;
    for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] ? dtp : dfp)++;
    twice_area += dfp * (2 * tp + dtp);
    tp += dtp;
    fp += dfp;
  }
  return static_cast<double>(twice_area) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

namespace {

void check_maps(std::span<const Grid> maps, std::span<const Grid> masks) {
  if (maps.size() != masks.size()) throw MetricError("map and mask counts differ");
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].height != masks[i].height || maps[i].width != masks[i].width) {
      throw MetricError("map " + std::to_string(i) + " does not match its mask shape");
    }
  }
}

}  // namespace

double pixel_auc(std::span<const Grid> maps, std::span<const Grid> masks) {
  check_maps(maps, masks);
  std::vector<double> scores;
  std::vector<int> labels;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    scores.insert(scores.end(), maps[i].values.begin(), maps[i].values.end());
    for (double m : masks[i].values) labels.push_back(m > 0.0 ? 1 : 0);
  }
  return roc_auc(scores, labels);
}

int label_regions(const Grid& mask, std::vector<int>& labels) {
  const int h = mask.height, w = mask.width;
  std::vector<int> parent(static_cast<std::size_t>(h) * w);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  auto fg = [&](int y, int x) { return y >= 0 && y < h && x >= 0 && x < w && mask.at(y, x) > 0.0; };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!fg(y, x)) continue;
      // Already-visited 8-neighbours: W, NW, N, NE.
      const int ny[] = {0, -1, -1, -1};
      const int nx[] = {-1, -1, 0, 1};
      for (int k = 0; k < 4; ++k) {
        if (fg(y + ny[k], x + nx[k])) {
          const int a = find(y * w + x), b = find((y + ny[k]) * w + x + nx[k]);
          if (a != b) parent[std::max(a, b)] = std::min(a, b);
        }
      }
    }
  }
  labels.assign(parent.size(), -1);
  std::vector<int> remap(parent.size(), -1);
  int count = 0;
  for (int i = 0; i < h * w; ++i) {
    if (mask.values[i] <= 0.0) continue;
    const int root = find(i);
    if (remap[root] < 0) remap[root] = count++;
    labels[i] = remap[root];
  }
  return count;
}

double pro(std::span<const Grid> maps, std::span<const Grid> masks, ProOptions options) {
  check_maps(maps, masks);
  if (options.fpr_limit <= 0.0 || options.fpr_limit > 1.0) throw MetricError("pro: fpr_limit must lie in (0, 1]");
  if (options.n_thresholds < 2) throw MetricError("pro: need at least two thresholds");

  struct Pixel {
    double score;
    int region;  // global region id, -1 for normal
  };
  std::vector<Pixel> pixels;
  std::vector<std::size_t> region_size;
  std::size_t n_normal = 0;
  std::vector<int> labels;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const int offset = static_cast<int>(region_size.size());
    const int n = label_regions(masks[i], labels);
    region_size.resize(region_size.size() + static_cast<std::size_t>(n), 0);
    for (std::size_t p = 0; p < labels.size(); ++p) {
      const int r = labels[p] < 0 ? -1 : labels[p] + offset;
      if (r >= 0) {
        region_size[r]++;
      } else {
        ++n_normal;
      }
      pixels.push_back({maps[i].values[p], r});
    }
  }
  if (region_size.empty()) throw MetricError("pro: no anomalous regions");
  if (n_normal == 0) throw MetricError("pro: no normal pixels");

  std::sort(pixels.begin(), pixels.end(), [](const Pixel& a, const Pixel& b) { return a.score > b.score; });

  // Thresholds, descending.
  std::vector<double> thresholds;
  {
    std::vector<double> distinct;
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      if (i == 0 || pixels[i].score != pixels[i - 1].score) distinct.push_back(pixels[i].score);
    }
    if (distinct.size() <= static_cast<std::size_t>(options.n_thresholds)) {
      thresholds = std::move(distinct);
    } else {
      const std::size_t m = pixels.size();
      for (int j = 0; j < options.n_thresholds; ++j) {
        const auto idx = static_cast<std::size_t>(
            std::llround(static_cast<double>(j) * static_cast<double>(m - 1) / (options.n_thresholds - 1)));
        const double t = pixels[idx].score;
        if (thresholds.empty() || t != thresholds.back()) thresholds.push_back(t);
      }
    }
  }

  const double n_regions = static_cast<double>(region_size.size());
  std::vector<double> fpr{0.0}, overlap{0.0};
  std::size_t cursor = 0, false_positives = 0;
  double overlap_sum = 0.0;
  for (double t : thresholds) {
    for (; cursor < pixels.size() && pixels[cursor].score >= t; ++cursor) {
      const int r = pixels[cursor].region;
      if (r < 0) {
        ++false_positives;
      } else {
        overlap_sum += 1.0 / static_cast<double>(region_size[r]);
      }
    }
    fpr.push_back(static_cast<double>(false_positives) / static_cast<double>(n_normal));
    overlap.push_back(overlap_sum / n_regions);
  }

  const double limit = options.fpr_limit;
  double area = 0.0;
  for (std::size_t i = 1; i < fpr.size(); ++i) {
    if (fpr[i] <= limit) {
      area += 0.5 * (fpr[i] - fpr[i - 1]) * (overlap[i] + overlap[i - 1]);
      continue;
    }
    const double frac = (limit - fpr[i - 1]) / (fpr[i] - fpr[i - 1]);
    const double at_limit = overlap[i - 1] + frac * (overlap[i] - overlap[i - 1]);
    area += 0.5 * (limit - fpr[i - 1]) * (overlap[i - 1] + at_limit);
    break;
  }
  return std::clamp(area / limit, 0.0, 1.0);
}

std::string format_metrics(std::span<const MetricsReport> reports) {
  std::string out;
  char buf[128];
  for (const auto& r : reports) {
    out += "[report]\n";
    out += "setting=" + to_string(r.setting) + "\n";
    std::snprintf(buf, sizeof(buf), "i_auc=%.10f\np_auc=%.10f\npro=%.10f\npro_fpr_limit=%.4f\n", r.i_auc, r.p_auc,
                  r.pro, r.pro_fpr_limit);
    out += buf;
    out += "n_test_normal=" + std::to_string(r.n_test_normal) + "\n";
    out += "n_test_anomalous=" + std::to_string(r.n_test_anomalous) + "\n";
    if (r.train_auc) {
      std::snprintf(buf, sizeof(buf), "train_auc=%.10f\n", *r.train_auc);
      out += buf;
    }
  }
  return out;
}

std::vector<MetricsReport> parse_metrics(const std::string& text) {
  std::vector<MetricsReport> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line == "[report]") {
      out.emplace_back();
      continue;
    }
    if (out.empty()) throw ReportError("metrics: field before the first [report] header");
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ReportError("metrics: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    auto& r = out.back();
    if (key == "setting") r.setting = parse_setting(value);
    else if (key == "i_auc") r.i_auc = std::stod(value);
    else if (key == "p_auc") r.p_auc = std::stod(value);
    else if (key == "pro") r.pro = std::stod(value);
    else if (key == "pro_fpr_limit") r.pro_fpr_limit = std::stod(value);
    else if (key == "n_test_normal") r.n_test_normal = std::stoul(value);
    else if (key == "n_test_anomalous") r.n_test_anomalous = std::stoul(value);
    else if (key == "train_auc") r.train_auc = std::stod(value);
    else throw ReportError("metrics: unknown field '" + key + "'");
  }
  return out;
}

void write_metrics(const std::filesystem::path& path, std::span<const MetricsReport> reports) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ReportError("cannot write metrics: " + path.string());
  out << format_metrics(reports);
}

std::vector<MetricsReport> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ReportError("cannot read metrics: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_metrics(ss.str());
}

MetricsReport evaluate(const FuadSplit& split, const FeatureExtractor& teacher, const StudentArch& arch,
                       const StudentParams& params, const EvalOptions& options) {
  const auto& test = split.test();
  const ScoredSet scored = score_dataset(test, teacher, arch, params, options.smooth_sigma);
  MetricsReport r;
  r.setting = split.setting();
  r.pro_fpr_limit = options.pro.fpr_limit;
  std::vector<int> labels;
  std::vector<Grid> maps, masks;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const bool anomalous = test[i].label == Label::anomalous;
    labels.push_back(anomalous ? 1 : 0);
    (anomalous ? r.n_test_anomalous : r.n_test_normal)++;
    maps.push_back(scored.maps[i].values);
    masks.push_back(test[i].mask);
  }
  r.i_auc = roc_auc(scored.scores, labels);
  r.p_auc = pixel_auc(maps, masks);
  r.pro = pro(maps, masks, options.pro);

  const auto truth = split.eval_only();
  std::vector<int> train_labels;
  bool both = false;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    train_labels.push_back(truth.label(i) == Label::anomalous ? 1 : 0);
    both = both || train_labels.back() != train_labels.front();
  }
  if (both) {
    const FeatureBank bank = extract_features(teacher, split.train_view());
    const ScoredSet train_scored =
        score_dataset(bank, arch, params, teacher.input_shape().height, options.smooth_sigma);
    r.train_auc = roc_auc(train_scored.scores, train_labels);
  }
  return r;
}

}  // namespace fuad
