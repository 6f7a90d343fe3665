// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fuad/cdd.hpp"
#include "fuad/error.hpp"
#include "fuad/metrics.hpp"
#include "fuad/pipeline.hpp"
#include "fuad/run_config.hpp"
#include "fuad/sweep.hpp"
#include "fuad/trainer.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace fuad;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome schedules() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double E = 999.0, e = i;
    const double x = e / E;
    worst = std::max(worst, std::fabs(r_schedule(e, E, 0.5) - std::min(x, 0.5)));
    const double lam = i == 0 ? 0.0 : i == 999 ? 1.0 : 1.0 / (1.0 + std::exp(4.0 * std::log((1 - x) / x)));
    worst = std::max(worst, std::fabs(lambda_schedule(e, E, 4) - lam));
  }
  worst = std::max({worst, std::fabs(lambda_schedule(100, 200, 4) - 0.5), std::fabs(lambda_schedule(0, 200, 4)),
                    std::fabs(lambda_schedule(200, 200, 4) - 1.0), std::fabs(lambda_schedule(50, 200, 4) - 1.0 / 82)});
  const double t = seconds_since(t0);
  return {worst <= 1e-12 && t < 1.0, fmt("max abs error %.3g, %.3f s", worst, t)};
}

Outcome domains() {
  const auto t0 = Clock::now();
  ConfidenceTable conf;
  for (int i = 0; i < 100; ++i) {
    conf.ids.push_back(fmt("s%03d", i));
    conf.confidence.push_back(i < 10 ? -1.0 - 0.01 * i : 1.0 + 0.01 * i);  // first 10 are the anomalies
  }
  double sum = 0.0;
  int count = 0;
  bool valid = true;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const DomainPartition p = construct_domains(conf, 0.5, 2, derive_seed(2024, "acceptance.domains", seed));
    try {
      validate_partition(p, 100);
    } catch (const StateError&) {
      valid = false;
    }
    for (int d = 0; d < p.k(); ++d) {
      const auto dom = p.domain(d);
      valid = valid && dom.size() == p.high_conf.size() + p.low_subsets[d].size();
      sum += static_cast<double>(std::count_if(dom.begin(), dom.end(), [](std::size_t i) { return i < 10; })) /
             static_cast<double>(dom.size());
      ++count;
    }
  }
  const double mean = sum / count;
  const double t = seconds_since(t0);
  return {valid && mean < 0.08 && t < 5.0, fmt("mean domain anomaly ratio %.4f, invariants %s, %.2f s", mean,
                                              valid ? "hold" : "BROKEN", t)};
}

Outcome gradients() {
  const auto t0 = Clock::now();
  const ModelConfig cfg = fixtures::micro_config();
  double worst = 0.0;
  std::size_t params = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto r = fixtures::gradient_check(cfg, seed);
    worst = std::max(worst, r.max_rel_error);
    params = r.parameters;
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-4 && params <= 500 && t < 30.0,
          fmt("%zu parameters, worst relative error %.3g over 20 seeds, %.2f s", params, worst, t)};
}

Outcome metric_oracles() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(77);
  int auc_mismatch = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 499;
    const int levels = 1 + static_cast<int>(rng() % 30);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % levels) / 7.0;
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 0;
    y[1] = 1;
    auc_mismatch += roc_auc(s, y) != oracles::pairwise_auc(s, y);
  }
  double pro_err = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int size = 4 + trial % 13;
    std::vector<Grid> maps, masks;
    for (int k = 0; k < 1 + trial % 3; ++k) {
      Grid mask(size, size), map(size, size);
      // A couple of rectangles per mask, then noisy scores that favour them.
      for (int r = 0; r < 2; ++r) {
        const int y0 = rng() % size, x0 = rng() % size;
        const int h = 1 + rng() % std::max(1, size / 3), w = 1 + rng() % std::max(1, size / 3);
        for (int y = y0; y < std::min(size, y0 + h); ++y) {
          for (int x = x0; x < std::min(size, x0 + w); ++x) mask.at(y, x) = 1.0;
        }
      }
      for (std::size_t i = 0; i < map.values.size(); ++i) {
        map.values[i] = 0.5 * mask.values[i] + std::uniform_real_distribution<double>(0, 1)(rng);
      }
      masks.push_back(mask);
      maps.push_back(map);
    }
    masks[0].values[0] = 1.0;
    masks[0].values[1] = 0.0;
    const double v = pro(maps, masks, ProOptions{0.3, 1 << 20});
    pro_err = std::max(pro_err, std::fabs(v - oracles::pro(maps, masks, 0.3)));
  }
  const double t = seconds_since(t0);
  return {auc_mismatch == 0 && pro_err <= 1e-6 && t < 30.0,
          fmt("AUC mismatches %d/100, PRO max error %.3g over 20 cases, %.2f s", auc_mismatch, pro_err, t)};
}

Outcome collapse() {
  const auto t0 = Clock::now();
  RunConfig c;
  const Corpus corpus = prepare_corpus(c);
  const FuadSplit split = make_split(c, corpus, Setting::overlap);
  const TeacherNet teacher = build_teacher(c.model, c.teacher_seed);
  const StudentArch arch(c.model);
  const FeatureBank bank = extract_features(teacher, split.train_view());
  const StudentParams init = arch.init_params(c.init_seed);

  CddSchedules s;
  s.epochs = 1;
  s.k_schedule = {{1.0, 1}};
  s.r_normal = 0.0;
  s.sigma_noise = 0.0;
  s.lambda_mode = LambdaMode::zero;
  s.strategy = Strategy::all;
  TrainSettings ts = c.train_settings();
  CddPasses passes{3, 1, 1};
  const CddResult cdd = run_cdd(bank, arch, init, s, ts, passes);
  ts.epochs = passes.domain;
  const RdResult rd = train_rd(bank, arch, init, ts);
  const auto& steps = cdd.domain_history.at(0).at(0);
  double worst = steps.size() == rd.history.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(steps.size(), rd.history.size()); ++i) {
    worst = std::max(worst, std::fabs(steps[i].total - rd.history[i].total));
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-8 && steps.size() >= 50 && t < 60.0,
          fmt("%zu steps, max |loss difference| %.3g, %.1f s", steps.size(), worst, t)};
}

Outcome affinity() {
  const auto t0 = Clock::now();
  const std::array<Shape3, kLevels> shapes{Shape3{8, 8, 8}, Shape3{16, 4, 4}, Shape3{32, 2, 2}};
  std::mt19937_64 rng(91);
  int agree = 0, invariant = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + static_cast<int>(rng() % 4);
    const int own = static_cast<int>(rng() % k);
    const FeaturePyramid glob = fixtures::random_pyramid(shapes, rng);
    std::vector<FeaturePyramid> feats;
    for (int h = 0; h < k; ++h) feats.push_back(fixtures::random_pyramid(shapes, rng));
    std::vector<const FeaturePyramid*> ptrs;
    for (int h = 0; h < k; ++h) ptrs.push_back(h == own ? nullptr : &feats[h]);
    const int chosen = affinity_select(ptrs, glob, Strategy::consensual, own).chosen;
    agree += chosen == oracles::affinity_argmax(ptrs, glob);
    for (int h = 0; h < k; ++h) {
      const double scale = std::exp(std::uniform_real_distribution<double>(-6, 6)(rng));
      for (auto& l : feats[h].levels) {
        for (double& v : l.values()) v *= scale;
      }
    }
    invariant += affinity_select(ptrs, glob, Strategy::consensual, own).chosen == chosen;
  }
  const double t = seconds_since(t0);
  return {agree == 100 && invariant == 100 && t < 10.0,
          fmt("brute force agrees %d/100, rescale-invariant %d/100, %.2f s", agree, invariant, t)};
}

struct BenchRun {
  double i_auc_overlap = 0, p_auc_no_overlap = 0, train_auc = 0;
};

BenchRun bench_metrics(const fs::path& dir) {
  BenchRun b;
  for (const auto& r : read_metrics(dir / "metrics.txt")) {
    if (r.setting == Setting::overlap) b.i_auc_overlap = r.i_auc;
    if (r.setting == Setting::no_overlap) b.p_auc_no_overlap = r.p_auc;
    if (r.train_auc) b.train_auc = *r.train_auc;
  }
  return b;
}

struct Benchmark {
  bool ok = false;
  std::string error;
  std::vector<BenchRun> rd, cdd;
  std::vector<SweepCell> cells;
  double seconds = 0;
};

// Criterion 7 runs, shared with 8 and 9: each seed trains RD and CDD once and
// evaluates both settings.
Benchmark run_benchmark(const fs::path& root) {
  Benchmark b;
  const auto t0 = Clock::now();
  const RunConfig base;
  const std::vector<SweepAxis> axes{{"train.algorithm", {"rd", "cdd"}}};
  const SweepTable table = run_sweep(base, axes, 5, root, [](const fs::path& d, const std::string& s) {
    std::fprintf(stderr, "  %s: %s\n", d.c_str(), s.c_str());
  });
  b.seconds = seconds_since(t0);
  b.cells = expand_sweep(base, axes, 5, root);
  for (const auto& row : table.rows) {
    if (row.failed) {
      b.error = "failed replicates: " + (row.errors.empty() ? std::string("?") : row.errors.front());
      return b;
    }
  }
  for (const auto& d : b.cells[0].dirs) b.rd.push_back(bench_metrics(d));
  for (const auto& d : b.cells[1].dirs) b.cdd.push_back(bench_metrics(d));
  b.ok = true;
  return b;
}

double median_field(const std::vector<BenchRun>& runs, double BenchRun::*field) {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(r.*field);
  return median_of(v);
}

Outcome directional(const Benchmark& b) {
  if (!b.ok) return {false, b.error};
  const double rd = median_field(b.rd, &BenchRun::i_auc_overlap);
  const double cdd = median_field(b.cdd, &BenchRun::i_auc_overlap);
  int wins = 0;
  std::string per_seed;
  for (std::size_t i = 0; i < b.rd.size(); ++i) {
    wins += b.cdd[i].train_auc > b.rd[i].train_auc;
    per_seed += fmt(" %.3f/%.3f", b.cdd[i].train_auc, b.rd[i].train_auc);
  }
  const bool pass = cdd >= rd + 0.05 && wins >= 4 && b.seconds <= 900.0;
  return {pass, fmt("median Overlap I-AUC CDD %.4f vs RD %.4f (need +0.05); train AUC CDD>RD in %d/5 seeds "
                    "(cdd/rd:%s); %.0f s",
                    cdd, rd, wins, per_seed.c_str(), b.seconds)};
}

Outcome no_overlap(const Benchmark& b) {
  if (!b.ok) return {false, b.error};
  const double rd = median_field(b.rd, &BenchRun::p_auc_no_overlap);
  const double cdd = median_field(b.cdd, &BenchRun::p_auc_no_overlap);
  return {cdd >= rd - 0.01, fmt("median No-Overlap P-AUC CDD %.4f vs RD %.4f (need >= RD - 0.01)", cdd, rd)};
}

Outcome determinism(const Benchmark& b, const fs::path& root) {
  if (!b.ok) return {false, b.error};
  const auto t0 = Clock::now();
  const RunConfig& config = b.cells[1].replicates[0];
  const fs::path again = root / "repeat";
  fs::remove_all(again);
  execute_run(config, again);
  const std::string first = slurp(b.cells[1].dirs[0] / "metrics.txt");
  const std::string second = slurp(again / "metrics.txt");
  return {!first.empty() && first == second,
          fmt("repeated cdd replicate 0: metrics files %s (%zu bytes), %.0f s", first == second ? "identical" : "DIFFER",
              first.size(), seconds_since(t0))};
}

Outcome strategy_sweep(const fs::path& root) {
  const auto t0 = Clock::now();
  RunConfig base;
  base.set("cdd.k_schedule", "3");
  const std::vector<SweepAxis> axes{{"cdd.strategy", {"consensual", "next", "all"}}};
  SweepTable table;
  try {
    table = run_sweep(base, axes, 3, root, [](const fs::path& d, const std::string& s) {
      std::fprintf(stderr, "  %s: %s\n", d.c_str(), s.c_str());
    });
  } catch (const Error& e) {
    return {false, e.what()};
  }
  const double t = seconds_since(t0);
  const std::string text = format_sweep_table(table);
  std::ofstream(root / "sweep.tsv") << text;
  bool consensual_ok = false;
  std::string summary;
  for (const auto& row : table.rows) {
    bool valid = row.failed == 0 && row.completed == 3;
    for (const auto& per_setting : row.metrics) {
      for (const auto& m : per_setting) valid = valid && m.median >= 0.0 && m.median <= 1.0;
    }
    if (row.values[0] == "consensual") consensual_ok = valid;
    double overlap_iauc = 0.0;
    for (std::size_t s = 0; s < row.settings.size(); ++s) {
      if (row.settings[s] == Setting::overlap) overlap_iauc = row.metrics[s][0].median;
    }
    summary += fmt(" %s=%.3f", row.values[0].c_str(), overlap_iauc);
  }
  const bool pass = table.rows.size() == 3 && consensual_ok && t <= 1200.0;
  return {pass, fmt("%zu rows, median Overlap I-AUC%s; consensual %s; %.0f s", table.rows.size(), summary.c_str(),
                    consensual_ok ? "valid" : "INVALID", t)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work_dir = "acceptance_runs";
  app.add_option("--work-dir", work_dir, "Scratch directory for end-to-end runs (wiped first)");
  bool quick = false;
  app.add_flag("--skip-end-to-end", quick, "Only run criteria 1-6");
  CLI11_PARSE(app, argc, argv);
  const fs::path root(work_dir);
  fs::remove_all(root);
  fs::create_directories(root);

  int failures = 0;
  auto report = [&](int n, const char* name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %2d %-28s %s  %s\n", n, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "schedule-exactness", schedules);
  report(2, "domain-construction", domains);
  report(3, "gradient-correctness", gradients);
  report(4, "metric-oracles", metric_oracles);
  report(5, "cdd-rd-collapse", collapse);
  report(6, "affinity-selection", affinity);
  if (quick) return failures ? 1 : 0;

  const Benchmark bench = run_benchmark(root / "benchmark");
  report(7, "overlap-directional", [&] { return directional(bench); });
  report(8, "no-overlap-non-regression", [&] { return no_overlap(bench); });
  report(9, "determinism", [&] { return determinism(bench, root); });
  report(10, "strategy-ablation", [&] { return strategy_sweep(root / "strategy"); });
  std::printf("%d of 10 criteria failed\n", failures);
  return failures ? 1 : 0;
}
