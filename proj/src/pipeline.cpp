#include "fuad/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fuad/cdd.hpp"
#include "fuad/checkpoint.hpp"
#include "fuad/error.hpp"
#include "fuad/seed.hpp"
#include "fuad/trainer.hpp"

namespace fuad {

Corpus prepare_corpus(const RunConfig& config) {
  switch (config.source) {
    case DataSource::generate:
      return generate_corpus(config.gen);
    case DataSource::corpus_dir:
      return load_corpus(config.data_path);
    case DataSource::mvtec: {
      MvtecCorpus m = load_mvtec_layout(config.data_path, config.model.image_size);
      Corpus c;
      c.train_normals = std::move(m.train);
      for (auto& s : m.test) (s.label == Label::normal ? c.test_normals : c.anomalies).push_back(std::move(s));
      return c;
    }
  }
  throw ConfigError("data.source: unsupported");
}

FuadSplit make_split(const RunConfig& config, const Corpus& corpus, Setting setting) {
  return build_fuad_split(corpus.train_normals, corpus.test_normals, corpus.anomalies, config.r_noise, setting,
                          config.split_seed);
}

TrainedStudent train_student(const RunConfig& config, const FuadSplit& split, const FeatureExtractor& teacher,
                             const StudentArch& arch, const EpochCallback& on_epoch) {
  const FeatureBank bank = extract_features(teacher, split.train_view());
  StudentParams init = arch.init_params(config.init_seed);
  TrainedStudent out;
  if (config.algorithm == Algorithm::rd) {
    RdResult rd = train_rd(bank, arch, std::move(init), config.train_settings(), {},
                           [&](int epoch, double loss, const StudentParams& params) {
                             char buf[96];
                             std::snprintf(buf, sizeof(buf), "epoch=%d\tloss=%.10f", epoch, loss);
                             out.telemetry.emplace_back(buf);
                             if (on_epoch) on_epoch(epoch, params);
                           });
    out.params = std::move(rd.params);
    return out;
  }
  // Labels feed the per-domain anomaly-ratio telemetry only.
  std::vector<Label> labels;
  const auto truth = split.eval_only();
  for (std::size_t i = 0; i < truth.size(); ++i) labels.push_back(truth.label(i));
  CddResult cdd = run_cdd(bank, arch, std::move(init), config.schedules(), config.train_settings(), config.passes,
                          &labels, [&](const EpochTelemetry& t, const StudentParams& params) {
                            out.telemetry.push_back(format_telemetry(t));
                            if (on_epoch) on_epoch(t.epoch, params);
                          });
  out.params = std::move(cdd.global);
  return out;
}

std::vector<MetricsReport> evaluate_settings(const RunConfig& config, const Corpus& corpus,
                                             const FeatureExtractor& teacher, const StudentArch& arch,
                                             const StudentParams& params) {
  std::vector<MetricsReport> reports;
  for (Setting s : config.settings) {
    reports.push_back(evaluate(make_split(config, corpus, s), teacher, arch, params, config.eval));
  }
  return reports;
}

std::string score_table(const RunConfig& config, const Corpus& corpus, const FeatureExtractor& teacher,
                        const StudentArch& arch, const StudentParams& params) {
  std::string out = "split\tsetting\tid\tlabel\tscore\n";
  char buf[64];
  auto row = [&](const char* split, const std::string& setting, const std::string& id, Label label, double score) {
    std::snprintf(buf, sizeof(buf), "%.10f", score);
    out += std::string(split) + "\t" + setting + "\t" + id + "\t" + to_string(label) + "\t" + buf + "\n";
  };
  const FuadSplit first = make_split(config, corpus, config.settings.front());
  const FeatureBank bank = extract_features(teacher, first.train_view());
  const ScoredSet train = score_dataset(bank, arch, params, teacher.input_shape().height, config.eval.smooth_sigma);
  const auto truth = first.eval_only();
  for (std::size_t i = 0; i < truth.size(); ++i) row("train", "-", bank.ids[i], truth.label(i), train.scores[i]);
  for (Setting s : config.settings) {
    const FuadSplit split = make_split(config, corpus, s);
    const ScoredSet test = score_dataset(split.test(), teacher, arch, params, config.eval.smooth_sigma);
    for (std::size_t i = 0; i < split.test().size(); ++i) {
      row("test", to_string(s), split.test()[i].id, split.test()[i].label, test.scores[i]);
    }
  }
  return out;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StateError("cannot write " + path.string());
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ReportError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

RunRecord execute_run(const RunConfig& config, const std::filesystem::path& run_dir) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  namespace fs = std::filesystem;
  fs::create_directories(run_dir / "checkpoints");
  fs::create_directories(run_dir / "plots");
  save_run_config(config, run_dir / "config.cfg");

  RunRecord rec;
  rec.run_id = run_dir.filename().string();
  rec.dir = run_dir;
  rec.config_digest = config.digest();
  rec.telemetry_path = run_dir / "telemetry.log";

  const Corpus corpus = prepare_corpus(config);
  const TeacherNet teacher = build_teacher(config.model, config.teacher_seed);
  const StudentArch arch(config.model);
  const FuadSplit split = make_split(config, corpus, config.settings.front());

  std::ofstream telemetry(rec.telemetry_path, std::ios::binary | std::ios::trunc);
  TrainedStudent trained = train_student(config, split, teacher, arch, [&](int epoch, const StudentParams& params) {
    if (!config.epoch_checkpoints) return;
    char name[32];
    std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch);
    save_checkpoint(run_dir / "checkpoints" / name, arch, params, config.train_seed);
    rec.checkpoints.push_back(run_dir / "checkpoints" / name);
  });
  for (const auto& line : trained.telemetry) telemetry << line << "\n";
  telemetry.close();

  const fs::path final_ckpt = run_dir / "checkpoints" / "final.ckpt";
  save_checkpoint(final_ckpt, arch, trained.params, config.train_seed);
  rec.checkpoints.push_back(final_ckpt);

  rec.reports = evaluate_settings(config, corpus, teacher, arch, trained.params);
  write_metrics(run_dir / "metrics.txt", rec.reports);
  write_text(run_dir / "scores.tsv", score_table(config, corpus, teacher, arch, trained.params));

  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::string run_txt = "run_id=" + rec.run_id + "\nconfig_digest=" + rec.config_digest + "\nalgorithm=" +
                        to_string(config.algorithm) + "\ntelemetry=telemetry.log\n";
  for (const auto& c : rec.checkpoints) run_txt += "checkpoint=checkpoints/" + c.filename().string() + "\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "wall_seconds=%.3f\n", rec.wall_seconds);
  run_txt += buf;
  write_text(run_dir / "run.txt", run_txt);
  return rec;
}

RunRecord read_run_record(const std::filesystem::path& run_dir) {
  if (!std::filesystem::exists(run_dir / "run.txt")) {
    throw ReportError("run " + run_dir.string() + " is incomplete (no run.txt)");
  }
  RunRecord rec;
  rec.dir = run_dir;
  std::istringstream in(read_text(run_dir / "run.txt"));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "run_id") rec.run_id = value;
    else if (key == "config_digest") rec.config_digest = value;
    else if (key == "telemetry") rec.telemetry_path = run_dir / value;
    else if (key == "checkpoint") rec.checkpoints.push_back(run_dir / value);
    else if (key == "wall_seconds") rec.wall_seconds = std::stod(value);
  }
  const RunConfig config = load_run_config(run_dir / "config.cfg");
  if (config.digest() != rec.config_digest) {
    throw ReportError("run " + rec.run_id + ": config.cfg does not match the recorded digest");
  }
  rec.reports = read_metrics(run_dir / "metrics.txt");
  return rec;
}

std::filesystem::path run_root() {
  if (const char* env = std::getenv("FUADLAB_RUN_ROOT"); env != nullptr && *env != '\0') return env;
  return "runs";
}

std::string default_run_id(const RunConfig& config) {
  return to_string(config.algorithm) + "_" + config.digest();
}

}  // namespace fuad
