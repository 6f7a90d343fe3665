#include "fuad/sweep.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "fuad/error.hpp"
#include "fuad/pipeline.hpp"
#include "fuad/seed.hpp"

namespace fuad {

double median_of(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<SweepCell> expand_sweep(const RunConfig& base, const std::vector<SweepAxis>& axes, int replicates,
                                    const std::filesystem::path& root) {
  if (replicates < 1) throw ConfigError("sweep: replicates must be >= 1");
  for (const auto& axis : axes) {
    if (axis.values.empty()) throw ConfigError("sweep: axis '" + axis.key + "' has no values");
    RunConfig probe = base;
    probe.set(axis.key, axis.values.front());
  }
  std::size_t cells = 1;
  for (const auto& axis : axes) cells *= axis.values.size();

  std::vector<SweepCell> out;
  for (std::size_t c = 0; c < cells; ++c) {
    SweepCell cell;
    std::size_t rest = c;
    std::vector<std::size_t> pick(axes.size());
    for (std::size_t a = axes.size(); a-- > 0;) {
      pick[a] = rest % axes[a].values.size();
      rest /= axes[a].values.size();
    }
    std::string seed_key, dir_name;
    RunConfig cfg = base;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const std::string& v = axes[a].values[pick[a]];
      cell.values.push_back(v);
      cfg.set(axes[a].key, v);
      if (axes[a].key != "train.algorithm") seed_key += axes[a].key + "=" + v + ";";
      dir_name += (dir_name.empty() ? "" : "__") + axes[a].key + "=" + v;
    }
    if (dir_name.empty()) dir_name = "base";
    for (char& ch : dir_name) {
      if (ch == ':' || ch == ',' || ch == '/') ch = '_';
    }
    for (int r = 0; r < replicates; ++r) {
      RunConfig rep = cfg;
      const auto u = static_cast<std::uint64_t>(r);
      rep.gen.seed = derive_seed(base.gen.seed, "sweep.gen:" + seed_key, u);
      rep.split_seed = derive_seed(base.split_seed, "sweep.split:" + seed_key, u);
      rep.teacher_seed = derive_seed(base.teacher_seed, "sweep.teacher:" + seed_key, u);
      rep.init_seed = derive_seed(base.init_seed, "sweep.init:" + seed_key, u);
      rep.train_seed = derive_seed(base.train_seed, "sweep.train:" + seed_key, u);
      cell.replicates.push_back(rep);
      cell.dirs.push_back(root / dir_name / ("rep_" + std::to_string(r)));
    }
    out.push_back(std::move(cell));
  }
  return out;
}

SweepTable run_sweep(const RunConfig& base, const std::vector<SweepAxis>& axes, int replicates,
                     const std::filesystem::path& root, const CellProgress& progress) {
  SweepTable table;
  for (const auto& axis : axes) table.axis_keys.push_back(axis.key);
  for (const auto& cell : expand_sweep(base, axes, replicates, root)) {
    SweepRow row;
    row.values = cell.values;
    row.settings = base.settings;
    std::vector<std::array<std::vector<double>, 4>> samples(row.settings.size());
    for (std::size_t r = 0; r < cell.replicates.size(); ++r) {
      const auto& dir = cell.dirs[r];
      std::vector<MetricsReport> reports;
      try {
        if (std::filesystem::exists(dir / "metrics.txt")) {
          reports = read_metrics(dir / "metrics.txt");
          if (progress) progress(dir, "cached");
        } else {
          reports = execute_run(cell.replicates[r], dir).reports;
          if (progress) progress(dir, "done");
        }
      } catch (const Error& e) {
        ++row.failed;
        row.errors.push_back(dir.string() + ": " + e.what());
        std::ofstream(dir.parent_path() / (dir.filename().string() + ".failed")) << e.what() << "\n";
        if (progress) progress(dir, std::string("failed: ") + e.what());
        continue;
      }
      ++row.completed;
      for (std::size_t s = 0; s < row.settings.size(); ++s) {
        for (const auto& rep : reports) {
          if (rep.setting != row.settings[s]) continue;
          samples[s][0].push_back(rep.i_auc);
          samples[s][1].push_back(rep.p_auc);
          samples[s][2].push_back(rep.pro);
          if (rep.train_auc) samples[s][3].push_back(*rep.train_auc);
        }
      }
    }
    for (const auto& per_setting : samples) {
      std::array<MetricSummary, 4> m{};
      for (int k = 0; k < 4; ++k) {
        const auto& v = per_setting[k];
        if (v.empty()) continue;
        m[k].mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        m[k].median = median_of(v);
      }
      row.metrics.push_back(m);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string format_sweep_table(const SweepTable& table) {
  static const char* kNames[4] = {"i_auc", "p_auc", "pro", "train_auc"};
  std::string out;
  for (const auto& key : table.axis_keys) out += key + "\t";
  out += "completed\tfailed";
  if (!table.rows.empty()) {
    for (Setting s : table.rows.front().settings) {
      for (const char* name : kNames) {
        out += "\t" + to_string(s) + "." + name + ".mean\t" + to_string(s) + "." + name + ".median";
      }
    }
  }
  out += "\n";
  char buf[64];
  for (const auto& row : table.rows) {
    for (const auto& v : row.values) out += v + "\t";
    out += std::to_string(row.completed) + "\t" + std::to_string(row.failed);
    for (const auto& m : row.metrics) {
      for (const auto& summary : m) {
        std::snprintf(buf, sizeof(buf), "\t%.4f\t%.4f", summary.mean, summary.median);
        out += buf;
      }
    }
    out += "\n";
  }
  return out;
}

}  // namespace fuad
