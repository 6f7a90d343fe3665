#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fuad/checkpoint.hpp"
#include "fuad/datagen.hpp"
#include "fuad/error.hpp"
#include "fuad/metrics.hpp"
#include "fuad/pipeline.hpp"
#include "fuad/report.hpp"
#include "fuad/run_config.hpp"
#include "fuad/sweep.hpp"

namespace fs = std::filesystem;
using namespace fuad;

namespace {

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Base config from an optional file plus key=value overrides.
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig config = path.empty() ? RunConfig{} : load_run_config(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  config.validate();
  return config;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StateError("cannot write " + path.string());
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fuadlab: reverse distillation and cross-domain distillation on noisy training sets"};
  app.require_subcommand(1);

  std::string config_path, out_dir, spec_path, checkpoint_path, setting_name;
  std::vector<std::string> overrides;

  auto* defaults = app.add_subcommand("defaults", "Print the default run config");

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus directory");
  gen->add_option("--spec", spec_path, "Config file; only gen.* keys are used")->check(CLI::ExistingFile);
  gen->add_option("--set", overrides, "Override a config key (key=value)");
  gen->add_option("--out", out_dir, "Corpus directory")->required();

  auto* train = app.add_subcommand("train", "Train one student and evaluate it");
  train->add_option("--config", config_path, "Run config file")->check(CLI::ExistingFile);
  train->add_option("--set", overrides, "Override a config key (key=value)");
  train->add_option("--out", out_dir, "Run directory (default: $FUADLAB_RUN_ROOT/<algorithm>_<digest>)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  eval->add_option("--config", config_path, "Run config file")->check(CLI::ExistingFile);
  eval->add_option("--set", overrides, "Override a config key (key=value)");
  eval->add_option("--checkpoint", checkpoint_path, "Student checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--setting", setting_name, "no_overlap or overlap (default: every configured setting)");

  std::string rnoise, algos, kschedules, strategies, rnormals, lambdas;
  int replicates = 3;
  auto* sweep = app.add_subcommand("sweep", "Grid over config axes with replicate seeds");
  sweep->add_option("--config", config_path, "Base config file")->check(CLI::ExistingFile);
  sweep->add_option("--set", overrides, "Override a base config key (key=value)");
  sweep->add_option("--rnoise", rnoise, "Comma-separated r_noise values");
  sweep->add_option("--algo", algos, "Comma-separated algorithms (rd,cdd)");
  sweep->add_option("--kschedule", kschedules, "Semicolon-separated K schedules");
  sweep->add_option("--strategy", strategies, "Comma-separated strategies");
  sweep->add_option("--rnormal", rnormals, "Comma-separated r_normal values");
  sweep->add_option("--lambda", lambdas, "Comma-separated lambda modes");
  sweep->add_option("--replicates", replicates, "Seeds per cell")->check(CLI::PositiveNumber);
  sweep->add_option("--out", out_dir, "Sweep directory (default: $FUADLAB_RUN_ROOT/sweep)");
  bool dry_run = false;
  sweep->add_flag("--dry-run", dry_run, "List the cells without running them");

  std::vector<std::string> run_dirs;
  std::string overlay_ids;
  auto* report = app.add_subcommand("report", "Plots and tables from finished runs");
  report->add_option("runs", run_dirs, "Run directories")->required()->check(CLI::ExistingDirectory);
  report->add_option("--out", out_dir, "Output directory")->required();
  report->add_option("--overlay", overlay_ids, "Comma-separated test sample ids for overlay panels");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (defaults->parsed()) {
      std::cout << RunConfig{}.canonical();
    } else if (gen->parsed()) {
      const RunConfig config = load_config(spec_path, overrides);
      const Corpus corpus = generate_corpus(config.gen);
      save_corpus(corpus, out_dir);
      std::printf("corpus %s: %zu train normals, %zu test normals, %zu anomalies\n", out_dir.c_str(),
                  corpus.train_normals.size(), corpus.test_normals.size(), corpus.anomalies.size());
    } else if (train->parsed()) {
      const RunConfig config = load_config(config_path, overrides);
      const fs::path dir = out_dir.empty() ? run_root() / default_run_id(config) : fs::path(out_dir);
      const RunRecord rec = execute_run(config, dir);
      std::printf("run %s (%.1f s)\n", rec.dir.c_str(), rec.wall_seconds);
      std::cout << format_metrics(rec.reports);
    } else if (eval->parsed()) {
      const RunConfig config = load_config(config_path, overrides);
      const Corpus corpus = prepare_corpus(config);
      const TeacherNet teacher = build_teacher(config.model, config.teacher_seed);
      const StudentArch arch(config.model);
      const StudentParams params = load_checkpoint(checkpoint_path, arch);
      std::vector<MetricsReport> reports;
      for (Setting s : config.settings) {
        if (!setting_name.empty() && parse_setting(setting_name) != s) continue;
        reports.push_back(evaluate(make_split(config, corpus, s), teacher, arch, params, config.eval));
      }
      if (reports.empty()) throw ConfigError("--setting " + setting_name + " is not among split.settings");
      std::cout << format_metrics(reports);
    } else if (sweep->parsed()) {
      const RunConfig base = load_config(config_path, overrides);
      std::vector<SweepAxis> axes;
      auto axis = [&](const std::string& key, const std::string& values, char sep) {
        if (!values.empty()) axes.push_back({key, split_list(values, sep)});
      };
      axis("train.algorithm", algos, ',');
      axis("split.r_noise", rnoise, ',');
      axis("cdd.k_schedule", kschedules, ';');
      axis("cdd.strategy", strategies, ',');
      axis("cdd.r_normal", rnormals, ',');
      axis("cdd.lambda_mode", lambdas, ',');
      const fs::path root = out_dir.empty() ? run_root() / "sweep" : fs::path(out_dir);
      if (dry_run) {
        for (const auto& cell : expand_sweep(base, axes, replicates, root)) {
          for (const auto& d : cell.dirs) std::printf("%s\n", d.c_str());
        }
        return 0;
      }
      const SweepTable table = run_sweep(base, axes, replicates, root, [](const fs::path& dir, const std::string& s) {
        std::fprintf(stderr, "%s: %s\n", dir.c_str(), s.c_str());
      });
      const std::string text = format_sweep_table(table);
      write_file(root / "sweep.tsv", text);
      std::cout << text;
    } else if (report->parsed()) {
      std::vector<RunRecord> runs;
      for (const auto& d : run_dirs) runs.push_back(read_run_record(d));
      PlotOptions options;
      options.overlay_ids = split_list(overlay_ids, ',');
      const auto files = emit_plots(runs, out_dir, options);
      write_file(fs::path(out_dir) / "runs.tsv", runs_table(runs));
      for (const auto& f : files) std::printf("%s\n", f.c_str());
      std::printf("%s\n", (fs::path(out_dir) / "runs.tsv").c_str());
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "fuadlab: error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fuadlab: error: %s\n", e.what());
    return 2;
  }
  return 0;
}
