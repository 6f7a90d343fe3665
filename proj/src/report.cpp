#include "fuad/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "fuad/anomaly_map.hpp"
#include "fuad/checkpoint.hpp"
#include "fuad/error.hpp"
#include "fuad/sweep.hpp"

namespace fuad {

namespace fs = std::filesystem;

Grid overlay_highlight(const Grid& map) {
  Grid out(map.height, map.width, 0.0);
  if (map.values.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(map.values.begin(), map.values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return out;
  for (std::size_t i = 0; i < map.values.size(); ++i) out.values[i] = (map.values[i] - lo) / (hi - lo) >= 0.5 ? 1.0 : 0.0;
  return out;
}

namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

RgbImage overlay_panel(const Tensor& image, const Grid& mask, const Grid& map) {
  const int h = image.height(), w = image.width();
  if (mask.height != h || mask.width != w || map.height != h || map.width != w) {
    throw InputError("overlay: image " + to_string(image.shape()) + " does not match mask/map size");
  }
  RgbImage out;
  out.width = 3 * w;
  out.height = h;
  out.data.assign(static_cast<std::size_t>(out.width) * h * 3, 0);
  const Grid hl = overlay_highlight(map);
  double lo = map.values.empty() ? 0.0 : *std::min_element(map.values.begin(), map.values.end());
  double hi = map.values.empty() ? 0.0 : *std::max_element(map.values.begin(), map.values.end());
  auto put = [&](int y, int x, const std::array<std::uint8_t, 3>& px) {
    std::copy(px.begin(), px.end(), out.data.begin() + (static_cast<std::ptrdiff_t>(y) * out.width + x) * 3);
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::array<std::uint8_t, 3> in{};
      for (int c = 0; c < 3; ++c) in[c] = to_byte(image.at(image.channels() == 3 ? c : 0, y, x));
      put(y, x, in);
      const std::uint8_t m = mask.at(y, x) > 0.0 ? 255 : 0;
      put(y, w + x, {m, m, m});
      std::array<std::uint8_t, 3> ov = in;
      if (hl.at(y, x) > 0.0) {
        const double v = hi > lo ? (map.at(y, x) - lo) / (hi - lo) : 1.0;
        const std::array<double, 3> tint{255.0, 255.0 * (1.0 - v), 0.0};
        for (int c = 0; c < 3; ++c) ov[c] = static_cast<std::uint8_t>(std::lround(0.4 * in[c] + 0.6 * tint[c]));
        if (ov == in) ov[2] = static_cast<std::uint8_t>(255 - in[2]);
      }
      put(y, 2 * w + x, ov);
    }
  }
  return out;
}

TelemetryRows read_telemetry(const RunRecord& run) {
  if (run.telemetry_path.empty() || !fs::exists(run.telemetry_path)) {
    throw ReportError("run " + run.run_id + ": telemetry file missing (" + run.telemetry_path.string() + ")");
  }
  std::ifstream in(run.telemetry_path);
  TelemetryRows rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::map<std::string, std::string> row;
    std::istringstream fields(line);
    std::string field;
    while (std::getline(fields, field, '\t')) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw ReportError("run " + run.run_id + ": malformed telemetry field '" + field + "'");
      row[field.substr(0, eq)] = field.substr(eq + 1);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

struct ScoreRow {
  std::string split, setting, id;
  bool anomalous = false;
  double score = 0.0;
};

std::vector<ScoreRow> read_scores(const RunRecord& run) {
  std::ifstream in(run.dir / "scores.tsv");
  if (!in) throw ReportError("run " + run.run_id + ": scores.tsv missing");
  std::vector<ScoreRow> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream f(line);
    ScoreRow r;
    std::string label, score;
    std::getline(f, r.split, '\t');
    std::getline(f, r.setting, '\t');
    std::getline(f, r.id, '\t');
    std::getline(f, label, '\t');
    std::getline(f, score, '\t');
    r.anomalous = label == "anomalous";
    r.score = std::stod(score);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ReportError("cannot write " + path.string());
  out << text;
}

void write_mat(const fs::path& path, const cv::Mat& bgr) {
  if (!cv::imwrite(path.string(), bgr)) throw ReportError("cannot write " + path.string());
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string safe_name(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  }
  return s;
}

const cv::Scalar kPalette[] = {{200, 80, 30}, {40, 40, 220}, {40, 160, 40}, {160, 40, 160}, {0, 140, 220}, {120, 120, 120}};

struct Series {
  std::string name;
  std::vector<double> x, y;
};

// Line chart into a region of canvas.
void draw_chart(cv::Mat& canvas, cv::Rect area, const std::string& title, const std::vector<Series>& series) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : s.y) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1e-9 + std::abs(y0) * 0.05;
  const cv::Rect plot(area.x + 60, area.y + 24, area.width - 80, area.height - 48);
  cv::rectangle(canvas, plot, {0, 0, 0}, 1);
  cv::putText(canvas, title, {area.x + 60, area.y + 16}, cv::FONT_HERSHEY_SIMPLEX, 0.45, {0, 0, 0}, 1, cv::LINE_AA);
  auto tick = [&](const std::string& text, cv::Point at) {
    cv::putText(canvas, text, at, cv::FONT_HERSHEY_SIMPLEX, 0.35, {60, 60, 60}, 1, cv::LINE_AA);
  };
  tick(fmt(y1), {area.x + 2, plot.y + 8});
  tick(fmt(y0), {area.x + 2, plot.y + plot.height});
  tick(fmt(x0), {plot.x, plot.y + plot.height + 14});
  tick(fmt(x1), {plot.x + plot.width - 30, plot.y + plot.height + 14});
  auto px = [&](double x, double y) {
    return cv::Point(plot.x + static_cast<int>(std::lround((x - x0) / (x1 - x0) * plot.width)),
                     plot.y + plot.height - static_cast<int>(std::lround((y - y0) / (y1 - y0) * plot.height)));
  };
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const cv::Scalar color = kPalette[i % std::size(kPalette)];
    for (std::size_t j = 0; j < s.x.size(); ++j) {
      cv::circle(canvas, px(s.x[j], s.y[j]), 2, color, cv::FILLED);
      if (j > 0) cv::line(canvas, px(s.x[j - 1], s.y[j - 1]), px(s.x[j], s.y[j]), color, 1, cv::LINE_AA);
    }
    cv::putText(canvas, s.name, {plot.x + plot.width - 150, plot.y + 14 + 14 * static_cast<int>(i)},
                cv::FONT_HERSHEY_SIMPLEX, 0.4, color, 1, cv::LINE_AA);
  }
}

struct HistAxes {
  double lo = 0.0, hi = 1.0;
  int bins = 20;
  long count_max = 1;
};

int bin_of(double v, const HistAxes& ax) {
  const int b = static_cast<int>((v - ax.lo) / (ax.hi - ax.lo) * ax.bins);
  return std::clamp(b, 0, ax.bins - 1);
}

// Panel name -> per-bin counts for normal and anomalous.
using Histogram = std::vector<std::pair<std::string, std::vector<std::array<long, 2>>>>;

Histogram histogram(const std::vector<ScoreRow>& rows, const HistAxes& ax) {
  Histogram out;
  for (const auto& r : rows) {
    const std::string panel = r.split == "train" ? "train" : "test." + r.setting;
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.first == panel; });
    if (it == out.end()) {
      out.emplace_back(panel, std::vector<std::array<long, 2>>(ax.bins, {0, 0}));
      it = std::prev(out.end());
    }
    ++it->second[bin_of(r.score, ax)][r.anomalous ? 1 : 0];
  }
  return out;
}

void draw_histogram(const fs::path& png, const std::string& title, const Histogram& hist, const HistAxes& ax) {
  const int panel_h = 180, width = 520;
  cv::Mat canvas(panel_h * static_cast<int>(std::max<std::size_t>(hist.size(), 1)), width, CV_8UC3,
                 cv::Scalar(255, 255, 255));
  for (std::size_t p = 0; p < hist.size(); ++p) {
    const cv::Rect plot(60, static_cast<int>(p) * panel_h + 24, width - 80, panel_h - 48);
    cv::rectangle(canvas, plot, {0, 0, 0}, 1);
    cv::putText(canvas, title + " " + hist[p].first, {60, plot.y - 8}, cv::FONT_HERSHEY_SIMPLEX, 0.45, {0, 0, 0}, 1,
                cv::LINE_AA);
    cv::putText(canvas, fmt(ax.lo), {plot.x, plot.y + plot.height + 14}, cv::FONT_HERSHEY_SIMPLEX, 0.35, {60, 60, 60});
    cv::putText(canvas, fmt(ax.hi), {plot.x + plot.width - 40, plot.y + plot.height + 14}, cv::FONT_HERSHEY_SIMPLEX,
                0.35, {60, 60, 60});
    cv::putText(canvas, std::to_string(ax.count_max), {4, plot.y + 10}, cv::FONT_HERSHEY_SIMPLEX, 0.35, {60, 60, 60});
    const double bw = static_cast<double>(plot.width) / ax.bins;
    for (int b = 0; b < ax.bins; ++b) {
      for (int cls = 0; cls < 2; ++cls) {
        const long n = hist[p].second[b][cls];
        if (n == 0) continue;
        const int bar_h = static_cast<int>(std::lround(static_cast<double>(n) / ax.count_max * plot.height));
        const int left = plot.x + static_cast<int>(b * bw + cls * bw / 2);
        cv::rectangle(canvas, cv::Rect(left, plot.y + plot.height - bar_h, std::max(1, static_cast<int>(bw / 2)), bar_h),
                      cls ? cv::Scalar(40, 40, 220) : cv::Scalar(40, 160, 40), cv::FILLED);
      }
    }
  }
  write_mat(png, canvas);
}

cv::Mat to_bgr(const RgbImage& img, int scale) {
  cv::Mat m(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) m.at<cv::Vec3b>(y, x) = {img.at(y, x, 2), img.at(y, x, 1), img.at(y, x, 0)};
  }
  cv::Mat big;
  cv::resize(m, big, {}, scale, scale, cv::INTER_NEAREST);
  return big;
}

const ImageSample* find_test_sample(const RunConfig& config, const Corpus& corpus, const std::string& id,
                                    std::vector<FuadSplit>& keep) {
  for (Setting s : config.settings) {
    keep.push_back(make_split(config, corpus, s));
    for (const auto& sample : keep.back().test()) {
      if (sample.id == id) return &sample;
    }
  }
  return nullptr;
}

double median_metric(std::vector<double> v) { return median_of(std::move(v)); }

}  // namespace

std::vector<fs::path> emit_plots(const std::vector<RunRecord>& runs, const fs::path& out_dir,
                                 const PlotOptions& options) {
  if (options.histogram_bins < 1) throw ConfigError("report: histogram_bins must be >= 1");
  fs::create_directories(out_dir);
  std::vector<fs::path> written;

  // Telemetry first so a broken run fails before anything is drawn.
  std::vector<TelemetryRows> telemetry;
  std::vector<RunConfig> configs;
  for (const auto& run : runs) {
    telemetry.push_back(read_telemetry(run));
    configs.push_back(load_run_config(run.dir / "config.cfg"));
  }

  // (a) histograms on shared axes
  std::vector<std::vector<ScoreRow>> scores;
  HistAxes ax;
  ax.bins = options.histogram_bins;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& run : runs) {
    scores.push_back(read_scores(run));
    for (const auto& r : scores.back()) lo = std::min(lo, r.score), hi = std::max(hi, r.score);
  }
  if (std::isfinite(lo)) {
    ax.lo = lo;
    ax.hi = hi > lo ? hi : lo + 1.0;
  }
  std::vector<Histogram> hists;
  for (const auto& s : scores) {
    hists.push_back(histogram(s, ax));
    for (const auto& [panel, bins] : hists.back()) {
      for (const auto& b : bins) ax.count_max = std::max({ax.count_max, b[0], b[1]});
    }
  }
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const std::string stem = "histogram_" + safe_name(runs[i].run_id);
    draw_histogram(out_dir / (stem + ".png"), to_string(configs[i].algorithm), hists[i], ax);
    std::string tsv = "panel\tbin\tlo\thi\tnormal\tanomalous\n";
    for (const auto& [panel, bins] : hists[i]) {
      for (int b = 0; b < ax.bins; ++b) {
        const double w = (ax.hi - ax.lo) / ax.bins;
        tsv += panel + "\t" + std::to_string(b) + "\t" + fmt(ax.lo + b * w) + "\t" + fmt(ax.lo + (b + 1) * w) + "\t" +
               std::to_string(bins[b][0]) + "\t" + std::to_string(bins[b][1]) + "\n";
      }
    }
    write_text(out_dir / (stem + ".tsv"), tsv);
    written.push_back(out_dir / (stem + ".png"));
    written.push_back(out_dir / (stem + ".tsv"));
  }
  if (!runs.empty()) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "score_lo\tscore_hi\tbins\tcount_max\n%.10g\t%.10g\t%d\t%ld\n", ax.lo, ax.hi, ax.bins,
                  ax.count_max);
    write_text(out_dir / "histogram_axes.tsv", buf);
    written.push_back(out_dir / "histogram_axes.tsv");
  }

  // (b) overlays
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const RunConfig& config = configs[i];
    const Corpus corpus = prepare_corpus(config);
    std::vector<std::string> ids = options.overlay_ids;
    std::vector<FuadSplit> keep;
    if (ids.empty()) {
      const FuadSplit first = make_split(config, corpus, config.settings.front());
      for (const auto& s : first.test()) {
        if (s.label == Label::anomalous && static_cast<int>(ids.size()) < options.overlay_count) ids.push_back(s.id);
      }
    }
    if (ids.empty()) continue;
    const TeacherNet teacher = build_teacher(config.model, config.teacher_seed);
    const StudentArch arch(config.model);
    const StudentParams params = load_checkpoint(runs[i].dir / "checkpoints" / "final.ckpt", arch);
    for (const auto& id : ids) {
      const ImageSample* sample = find_test_sample(config, corpus, id, keep);
      if (sample == nullptr) throw ReportError("run " + runs[i].run_id + ": no test sample with id '" + id + "'");
      const FeaturePyramid t = teacher_forward(teacher, sample->pixels);
      const AnomalyMap map = anomaly_map(t, student_forward(arch, t, params), sample->pixels.height(),
                                         config.eval.smooth_sigma);
      const std::string stem = "overlay_" + safe_name(runs[i].run_id) + "_" + safe_name(id);
      write_mat(out_dir / (stem + ".png"), to_bgr(overlay_panel(sample->pixels, sample->mask, map.values), 4));
      const Grid hl = overlay_highlight(map.values);
      std::string tsv = "y\tx\tmask\tmap\thighlight\n";
      for (int y = 0; y < map.values.height; ++y) {
        for (int x = 0; x < map.values.width; ++x) {
          tsv += std::to_string(y) + "\t" + std::to_string(x) + "\t" + fmt(sample->mask.at(y, x)) + "\t" +
                 fmt(map.values.at(y, x)) + "\t" + fmt(hl.at(y, x)) + "\n";
        }
      }
      write_text(out_dir / (stem + ".tsv"), tsv);
      written.push_back(out_dir / (stem + ".png"));
      written.push_back(out_dir / (stem + ".tsv"));
    }
  }

  // (c) metric vs r_noise, one chart per setting
  std::vector<Setting> settings;
  for (const auto& run : runs) {
    for (const auto& rep : run.reports) {
      if (std::find(settings.begin(), settings.end(), rep.setting) == settings.end()) settings.push_back(rep.setting);
    }
  }
  static const char* kMetrics[3] = {"i_auc", "p_auc", "pro"};
  for (Setting setting : settings) {
    // (algorithm, metric) -> r_noise -> values
    std::map<std::pair<std::string, int>, std::map<double, std::vector<double>>> points;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      for (const auto& rep : runs[i].reports) {
        if (rep.setting != setting) continue;
        const double v[3] = {rep.i_auc, rep.p_auc, rep.pro};
        for (int m = 0; m < 3; ++m) points[{to_string(configs[i].algorithm), m}][configs[i].r_noise].push_back(v[m]);
      }
    }
    std::vector<Series> series;
    std::string tsv = "algorithm\tmetric\tr_noise\tmedian\tn\n";
    for (const auto& [key, by_r] : points) {
      Series s;
      s.name = key.first + " " + kMetrics[key.second];
      for (const auto& [r, vals] : by_r) {
        s.x.push_back(r);
        s.y.push_back(median_metric(vals));
        tsv += key.first + "\t" + kMetrics[key.second] + "\t" + fmt(r) + "\t" + fmt(s.y.back()) + "\t" +
               std::to_string(vals.size()) + "\n";
      }
      series.push_back(std::move(s));
    }
    cv::Mat canvas(360, 560, CV_8UC3, cv::Scalar(255, 255, 255));
    draw_chart(canvas, {0, 0, 560, 360}, "metric vs r_noise (" + to_string(setting) + ")", series);
    const std::string stem = "metric_vs_rnoise_" + to_string(setting);
    write_mat(out_dir / (stem + ".png"), canvas);
    write_text(out_dir / (stem + ".tsv"), tsv);
    written.push_back(out_dir / (stem + ".png"));
    written.push_back(out_dir / (stem + ".tsv"));
  }

  // (d) per-epoch loss and schedule curves
  for (std::size_t i = 0; i < runs.size(); ++i) {
    static const char* kColumns[] = {"loss", "domain_loss", "cross_loss", "hc_loss", "r", "lambda", "K"};
    std::vector<Series> loss, sched, k;
    std::string tsv = "epoch";
    for (const char* c : kColumns) tsv += std::string("\t") + c;
    tsv += "\n";
    for (const char* c : kColumns) {
      Series s;
      s.name = c;
      for (const auto& row : telemetry[i]) {
        const auto it = row.find(c);
        if (it == row.end()) continue;
        s.x.push_back(std::stod(row.at("epoch")));
        s.y.push_back(std::stod(it->second));
      }
      if (s.x.empty()) continue;
      const std::string name = c;
      (name == "r" || name == "lambda" ? sched : name == "K" ? k : loss).push_back(std::move(s));
    }
    for (const auto& row : telemetry[i]) {
      tsv += row.count("epoch") ? row.at("epoch") : "-";
      for (const char* c : kColumns) tsv += "\t" + (row.count(c) ? row.at(c) : std::string("-"));
      tsv += "\n";
    }
    const int panels = 1 + (sched.empty() ? 0 : 1) + (k.empty() ? 0 : 1);
    cv::Mat canvas(240 * panels, 560, CV_8UC3, cv::Scalar(255, 255, 255));
    int p = 0;
    draw_chart(canvas, {0, 240 * p++, 560, 240}, runs[i].run_id + " loss", loss);
    if (!sched.empty()) draw_chart(canvas, {0, 240 * p++, 560, 240}, "r(e), lambda(e)", sched);
    if (!k.empty()) draw_chart(canvas, {0, 240 * p++, 560, 240}, "K(e)", k);
    const std::string stem = "curves_" + safe_name(runs[i].run_id);
    write_mat(out_dir / (stem + ".png"), canvas);
    write_text(out_dir / (stem + ".tsv"), tsv);
    written.push_back(out_dir / (stem + ".png"));
    written.push_back(out_dir / (stem + ".tsv"));
  }
  return written;
}

std::string runs_table(const std::vector<RunRecord>& runs) {
  std::string out = "run_id\talgorithm\tr_noise\tsetting\ti_auc\tp_auc\tpro\ttrain_auc\twall_seconds\n";
  for (const auto& run : runs) {
    const RunConfig config = load_run_config(run.dir / "config.cfg");
    for (const auto& rep : run.reports) {
      char buf[256];
      std::snprintf(buf, sizeof(buf), "\t%.4f\t%.4f\t%.4f\t%s\t%.1f\n", rep.i_auc, rep.p_auc, rep.pro,
                    rep.train_auc ? fmt(*rep.train_auc).c_str() : "-", run.wall_seconds);
      out += run.run_id + "\t" + to_string(config.algorithm) + "\t" + fmt(config.r_noise) + "\t" +
             to_string(rep.setting) + buf;
    }
  }
  return out;
}

}  // namespace fuad
