#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "fuad/datagen.hpp"
#include "fuad/metrics.hpp"
#include "fuad/run_config.hpp"
#include "fuad/student.hpp"
#include "fuad/teacher.hpp"

namespace fuad {

// Generated, loaded from a saved corpus directory, or ingested from an
// MVTec-style tree (train/good normals; test normals and anomalies).
Corpus prepare_corpus(const RunConfig& config);

// Training set is identical for every setting, so one split serves training.
FuadSplit make_split(const RunConfig& config, const Corpus& corpus, Setting setting);

struct TrainedStudent {
  StudentParams params;
  std::vector<std::string> telemetry;  // one line per epoch
};

using EpochCallback = std::function<void(int epoch, const StudentParams&)>;

TrainedStudent train_student(const RunConfig& config, const FuadSplit& split, const FeatureExtractor& teacher,
                             const StudentArch& arch, const EpochCallback& on_epoch = {});

// One report per configured setting.
std::vector<MetricsReport> evaluate_settings(const RunConfig& config, const Corpus& corpus,
                                             const FeatureExtractor& teacher, const StudentArch& arch,
                                             const StudentParams& params);

// Image scores of the training set and of each setting's test set, with
// eval-only labels, as tab-separated rows: split, setting, id, label, score.
std::string score_table(const RunConfig& config, const Corpus& corpus, const FeatureExtractor& teacher,
                        const StudentArch& arch, const StudentParams& params);

struct RunRecord {
  std::string run_id;
  std::filesystem::path dir;
  std::string config_digest;
  std::filesystem::path telemetry_path;
  std::vector<std::filesystem::path> checkpoints;
  std::vector<MetricsReport> reports;
  double wall_seconds = 0.0;
};

// Run directory layout: config.cfg, telemetry.log, checkpoints/, metrics.txt,
// scores.tsv, run.txt, plots/ (filled by the report step).
RunRecord execute_run(const RunConfig& config, const std::filesystem::path& run_dir);

// Reads run.txt and metrics.txt; throws ReportError when the run is
// incomplete or its stored config no longer matches the recorded digest.
RunRecord read_run_record(const std::filesystem::path& run_dir);

// $FUADLAB_RUN_ROOT, else ./runs
std::filesystem::path run_root();
std::string default_run_id(const RunConfig& config);

}  // namespace fuad
