#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "fuad/error.hpp"
#include "fuad/pipeline.hpp"
#include "fuad/report.hpp"
#include "fuad/run_config.hpp"
#include "fuad/sweep.hpp"

using namespace fuad;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fuad_test_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A run that finishes in well under a second.
RunConfig tiny_config() {
  RunConfig c;
  for (const auto& [k, v] : std::map<std::string, std::string>{{"gen.n_train_normal", "16"},
                                                               {"gen.n_test_normal", "4"},
                                                               {"gen.n_anomalous_pool", "8"},
                                                               {"model.channels.1", "4"},
                                                               {"model.channels.2", "8"},
                                                               {"model.channels.3", "8"},
                                                               {"model.bottleneck_width", "8"},
                                                               {"train.epochs", "2"},
                                                               {"cdd.domain_passes", "1"},
                                                               {"cdd.cross_passes", "1"},
                                                               {"cdd.hc_passes", "1"}}) {
    c.set(k, v);
  }
  return c;
}

struct Exec {
  int status;
  std::string out;
};

Exec cli(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "cli_output.txt";
  const std::string cmd = std::string(FUADLAB_CLI) + " " + args + " > " + out.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out)};
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) {
    if (!l.empty()) out.push_back(l);
  }
  return out;
}

}  // namespace

TEST(RunConfig, CanonicalRoundTripAndStableDigest) {
  RunConfig c = tiny_config();
  c.set("cdd.strategy", "next");
  c.set("split.r_noise", "0.05");
  const std::string text = c.canonical();
  const RunConfig back = parse_run_config(text);
  EXPECT_EQ(back.canonical(), text);
  EXPECT_EQ(back.digest(), c.digest());

  std::vector<std::string> lines = lines_of(text);
  std::mt19937_64 rng(3);
  std::shuffle(lines.begin(), lines.end(), rng);
  std::string shuffled = "# reordered\n";
  for (const auto& l : lines) shuffled += l + "\n";
  EXPECT_EQ(parse_run_config(shuffled).digest(), c.digest());

  RunConfig other = c;
  other.set("train.seed", "99");
  EXPECT_NE(other.digest(), c.digest());
}

TEST(RunConfig, DefaultsAndMirrors) {
  const RunConfig c;
  EXPECT_EQ(c.adam.learning_rate, 0.005);
  EXPECT_EQ(c.batch_size, 8);
  RunConfig d;
  d.set("train.epochs", "7");
  EXPECT_EQ(d.schedules().epochs, 7);
  EXPECT_EQ(d.train_settings().epochs, 7);
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  RunConfig c;
  try {
    c.set("train.bogus", "1");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.bogus"), std::string::npos);
  }
  EXPECT_THROW(c.set("train.epochs", "many"), ConfigError);
  EXPECT_THROW(c.set("cdd.strategy", "random"), ConfigError);
  EXPECT_THROW(c.set("train.algorithm", "gan"), ConfigError);
  EXPECT_THROW(parse_run_config("train.epochs\n"), ConfigError);
  EXPECT_THROW(parse_run_config("nope=1\n"), ConfigError);
}

TEST(RunConfig, KScheduleText) {
  const auto eq = parse_k_schedule("2,3,3,2");
  ASSERT_EQ(eq.size(), 4u);
  for (const auto& p : eq) EXPECT_DOUBLE_EQ(p.fraction, 0.25);
  EXPECT_EQ(eq[1].k, 3);
  const auto two = parse_k_schedule("0.5:2,0.5:3");
  EXPECT_EQ(two[1].k, 3);
  EXPECT_EQ(parse_k_schedule(format_k_schedule(two)).size(), 2u);
  EXPECT_THROW(parse_k_schedule(""), ConfigError);
  EXPECT_THROW(parse_k_schedule("a,b"), ConfigError);
}

TEST(ExpandSweep, EmptyAxesGiveTheBaseCell) {
  const auto cells = expand_sweep(tiny_config(), {}, 3, "/tmp/x");
  ASSERT_EQ(cells.size(), 1u);
  EXPECT_EQ(cells[0].replicates.size(), 3u);
  EXPECT_EQ(cells[0].replicates[0].model, tiny_config().model);
}

TEST(ExpandSweep, GridArithmeticAndSeeds) {
  const std::vector<SweepAxis> axes{{"train.algorithm", {"rd", "cdd"}}, {"split.r_noise", {"0.05", "0.1"}}};
  const auto cells = expand_sweep(tiny_config(), axes, 3, "/tmp/x");
  ASSERT_EQ(cells.size(), 4u);
  EXPECT_EQ(cells[0].values, (std::vector<std::string>{"rd", "0.05"}));
  EXPECT_EQ(cells[1].values, (std::vector<std::string>{"rd", "0.1"}));
  EXPECT_EQ(cells[2].values, (std::vector<std::string>{"cdd", "0.05"}));
  std::set<fs::path> dirs;
  for (const auto& c : cells) {
    ASSERT_EQ(c.replicates.size(), 3u);
    dirs.insert(c.dirs.begin(), c.dirs.end());
  }
  EXPECT_EQ(dirs.size(), 12u);
  for (int r = 0; r < 3; ++r) {
    const RunConfig& rd = cells[0].replicates[r];
    const RunConfig& cdd = cells[2].replicates[r];
    EXPECT_EQ(rd.algorithm, Algorithm::rd);
    EXPECT_EQ(cdd.algorithm, Algorithm::cdd);
    EXPECT_EQ(rd.gen.seed, cdd.gen.seed);
    EXPECT_EQ(rd.split_seed, cdd.split_seed);
    EXPECT_EQ(rd.init_seed, cdd.init_seed);
    EXPECT_EQ(rd.train_seed, cdd.train_seed);
    EXPECT_NE(rd.gen.seed, cells[1].replicates[r].gen.seed);
  }
  EXPECT_NE(cells[0].replicates[0].gen.seed, cells[0].replicates[1].gen.seed);
  EXPECT_THROW(expand_sweep(tiny_config(), axes, 0, "/tmp/x"), ConfigError);
  EXPECT_THROW(expand_sweep(tiny_config(), {{"no.such", {"1"}}}, 1, "/tmp/x"), ConfigError);
  EXPECT_THROW(expand_sweep(tiny_config(), {{"split.r_noise", {}}}, 1, "/tmp/x"), ConfigError);
}

TEST(RunSweep, AggregatesRecordsFailuresAndRestarts) {
  const fs::path root = scratch("sweep");
  // r_noise 0.9 needs far more anomalies than the pool holds.
  const std::vector<SweepAxis> axes{{"train.algorithm", {"rd", "cdd"}}, {"split.r_noise", {"0.1", "0.9"}}};
  std::map<std::string, int> status;
  auto count = [&](const fs::path&, const std::string& s) { status[s.substr(0, s.find(':'))]++; };
  const SweepTable t = run_sweep(tiny_config(), axes, 3, root, count);
  EXPECT_EQ(status["done"], 6);
  EXPECT_EQ(status["failed"], 6);
  ASSERT_EQ(t.rows.size(), 4u);
  EXPECT_EQ(t.axis_keys, (std::vector<std::string>{"train.algorithm", "split.r_noise"}));
  for (const auto& row : t.rows) {
    if (row.values[1] == "0.9") {
      EXPECT_EQ(row.failed, 3);
      EXPECT_EQ(row.completed, 0);
      EXPECT_FALSE(row.errors.empty());
    } else {
      EXPECT_EQ(row.completed, 3);
      ASSERT_EQ(row.settings.size(), 2u);
      for (const auto& m : row.metrics) {
        for (const auto& s : m) {
          EXPECT_GE(s.median, 0.0);
          EXPECT_LE(s.median, 1.0);
        }
      }
    }
  }
  const std::string table = format_sweep_table(t);
  EXPECT_EQ(lines_of(table).size(), 5u);

  const auto cells = expand_sweep(tiny_config(), axes, 3, root);
  const fs::path victim = cells[2].dirs[1];
  const std::string before = slurp(victim / "metrics.txt");
  ASSERT_FALSE(before.empty());
  fs::remove_all(victim);
  status.clear();
  const SweepTable again = run_sweep(tiny_config(), axes, 3, root, count);
  EXPECT_EQ(status["done"], 1);
  EXPECT_EQ(status["cached"], 5);
  EXPECT_EQ(slurp(victim / "metrics.txt"), before);
  EXPECT_EQ(format_sweep_table(again), table);
  fs::remove_all(root);
}

TEST(MedianOf, Examples) {
  EXPECT_EQ(median_of({3, 1, 2}), 2.0);
  EXPECT_EQ(median_of({4, 1, 2, 3}), 2.5);
}

class Reports : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = scratch("reports");
    RunConfig rd = tiny_config();
    rd.set("train.algorithm", "rd");
    RunConfig cdd = tiny_config();
    cdd.set("train.epochs", "4");
    runs_ = new std::vector<RunRecord>{execute_run(rd, root_ / "rd"), execute_run(cdd, root_ / "cdd")};
  }
  static void TearDownTestSuite() {
    delete runs_;
    fs::remove_all(root_);
  }
  static inline fs::path root_;
  static inline std::vector<RunRecord>* runs_ = nullptr;
};

TEST_F(Reports, RunDirectoryLayout) {
  for (const char* f : {"config.cfg", "telemetry.log", "metrics.txt", "scores.tsv", "run.txt"}) {
    EXPECT_TRUE(fs::exists(root_ / "cdd" / f)) << f;
  }
  EXPECT_TRUE(fs::exists(root_ / "cdd" / "checkpoints" / "final.ckpt"));
  const RunRecord back = read_run_record(root_ / "cdd");
  EXPECT_EQ(back.config_digest, (*runs_)[1].config_digest);
  EXPECT_EQ(back.reports.size(), 2u);
}

TEST_F(Reports, HistogramsCurvesAndTwins) {
  const fs::path out = root_ / "plots";
  const auto files = emit_plots(*runs_, out);
  int histograms = 0;
  for (const auto& f : files) {
    EXPECT_TRUE(fs::exists(f)) << f;
    const std::string name = f.filename().string();
    if (f.extension() == ".png") {
      EXPECT_TRUE(fs::exists(fs::path(f).replace_extension(".tsv"))) << f;
      if (name.rfind("histogram_", 0) == 0) ++histograms;
    }
  }
  EXPECT_EQ(histograms, 2);
  EXPECT_TRUE(fs::exists(out / "histogram_axes.tsv"));

  const fs::path curves = out / ("curves_" + (*runs_)[1].run_id + ".tsv");
  ASSERT_TRUE(fs::exists(curves));
  const auto rows = lines_of(slurp(curves));
  ASSERT_EQ(rows.size(), 5u);  // header + 4 epochs
  const std::vector<int> ks{2, 3, 3, 2};
  for (int e = 0; e < 4; ++e) {
    std::istringstream in(rows[e + 1]);
    std::vector<std::string> cols;
    for (std::string c; std::getline(in, c, '\t');) cols.push_back(c);
    ASSERT_EQ(cols.size(), 8u);
    EXPECT_EQ(std::stoi(cols[0]), e);
    EXPECT_NEAR(std::stod(cols[5]), r_schedule(e, 4, 0.5), 1e-9);
    EXPECT_NEAR(std::stod(cols[6]), lambda_schedule(e, 4, 4), 1e-9);
    EXPECT_EQ(std::stoi(cols[7]), ks[e]);
  }
}

TEST_F(Reports, MissingTelemetryNamesTheRun) {
  RunRecord broken = (*runs_)[0];
  broken.telemetry_path = root_ / "nowhere.log";
  try {
    read_telemetry(broken);
    FAIL() << "expected ReportError";
  } catch (const ReportError& e) {
    EXPECT_NE(std::string(e.what()).find(broken.run_id), std::string::npos);
  }
  EXPECT_THROW(emit_plots({broken}, root_ / "plots_broken"), ReportError);
}

TEST_F(Reports, UnknownOverlayIdIsAnError) {
  PlotOptions o;
  o.overlay_ids = {"no-such-sample"};
  EXPECT_THROW(emit_plots(*runs_, root_ / "plots_bad", o), ReportError);
}

TEST(OverlayPanel, MapEqualToMaskHighlightsExactlyTheMask) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor image({3, 12, 12});
    for (double& v : image.values()) v = static_cast<double>(rng() % 256) / 255.0;
    Grid mask(12, 12);
    for (double& v : mask.values) v = rng() % 4 == 0 ? 1.0 : 0.0;
    mask.values[0] = 1.0;
    mask.values[1] = 0.0;
    const RgbImage panel = overlay_panel(image, mask, mask);
    ASSERT_EQ(panel.width, 36);
    ASSERT_EQ(panel.height, 12);
    for (int y = 0; y < 12; ++y) {
      for (int x = 0; x < 12; ++x) {
        bool differs = false;
        for (int c = 0; c < 3; ++c) differs |= panel.at(y, x + 24, c) != panel.at(y, x, c);
        EXPECT_EQ(differs, mask.at(y, x) > 0) << trial << " " << y << " " << x;
        EXPECT_EQ(panel.at(y, x + 12, 0), mask.at(y, x) > 0 ? 255 : 0);
      }
    }
  }
  EXPECT_EQ(overlay_highlight(Grid(4, 4, 0.7)), Grid(4, 4, 0.0));
  EXPECT_THROW(overlay_panel(Tensor({3, 4, 4}), Grid(4, 4), Grid(5, 5)), InputError);
}

TEST(Cli, ExitCodesAndDiagnostics) {
  const fs::path dir = scratch("cli_codes");
  EXPECT_EQ(cli("defaults", dir).status, 0);
  EXPECT_NE(cli("--no-such-flag", dir).status, 0);
  EXPECT_NE(cli("frobnicate", dir).status, 0);
  const Exec bad = cli("train --set train.epochs=zero --out " + (dir / "r").string(), dir);
  EXPECT_NE(bad.status, 0);
  EXPECT_NE(bad.out.find("fuadlab: error:"), std::string::npos) << bad.out;
  EXPECT_NE(cli("report " + (dir / "missing").string() + " --out " + (dir / "p").string(), dir).status, 0);
  fs::remove_all(dir);
}

TEST(Cli, GenDataWritesConfiguredCounts) {
  const fs::path dir = scratch("cli_gen");
  const Exec r = cli("gen-data --set gen.n_train_normal=5 --set gen.n_test_normal=3 --set gen.n_anomalous_pool=4 --out " +
                         (dir / "data").string(),
                     dir);
  ASSERT_EQ(r.status, 0) << r.out;
  const auto rows = lines_of(slurp(dir / "data" / "manifest.tsv"));
  ASSERT_EQ(rows.size(), 13u);
  int normal = 0, anomalous = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    (rows[i].find("\tanomalous\t") != std::string::npos ? anomalous : normal)++;
  }
  EXPECT_EQ(normal, 8);
  EXPECT_EQ(anomalous, 4);
  fs::remove_all(dir);
}

TEST(Cli, SweepDryRunListsTheGrid) {
  const fs::path dir = scratch("cli_sweep");
  const Exec r =
      cli("sweep --rnoise 0.02,0.05,0.1,0.15 --algo rd,cdd --replicates 3 --dry-run --out " + (dir / "s").string(), dir);
  ASSERT_EQ(r.status, 0) << r.out;
  const auto rows = lines_of(r.out);
  EXPECT_EQ(rows.size(), 24u);
  std::set<std::string> cells;
  for (const auto& l : rows) cells.insert(fs::path(l).parent_path().filename().string());
  EXPECT_EQ(cells.size(), 8u);
  fs::remove_all(dir);
}

TEST(Cli, TrainTwiceGivesIdenticalMetrics) {
  const fs::path dir = scratch("cli_train");
  save_run_config(tiny_config(), dir / "c.cfg");
  const std::string base = "train --config " + (dir / "c.cfg").string() + " --out ";
  ASSERT_EQ(cli(base + (dir / "a").string(), dir).status, 0);
  ASSERT_EQ(cli(base + (dir / "b").string(), dir).status, 0);
  const std::string a = slurp(dir / "a" / "metrics.txt");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir / "b" / "metrics.txt"));
  fs::remove_all(dir);
}
