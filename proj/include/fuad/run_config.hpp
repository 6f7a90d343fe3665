#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fuad/cdd.hpp"
#include "fuad/datagen.hpp"
#include "fuad/metrics.hpp"
#include "fuad/model_config.hpp"

namespace fuad {

enum class Algorithm { rd, cdd };
std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& text);

enum class DataSource { generate, corpus_dir, mvtec };
std::string to_string(DataSource s);
DataSource parse_data_source(const std::string& text);

// Everything a run depends on. Text form: one key=value per line, keys with
// dotted section prefixes, '#' comments. Unset keys keep their defaults.
struct RunConfig {
  GenSpec gen;
  DataSource source = DataSource::generate;
  std::string data_path;  // corpus_dir / mvtec root

  double r_noise = 0.1;
  std::vector<Setting> settings{Setting::no_overlap, Setting::overlap};
  std::uint64_t split_seed = 11;

  ModelConfig model;
  std::uint64_t teacher_seed = 3;
  std::uint64_t init_seed = 5;

  Algorithm algorithm = Algorithm::cdd;
  int epochs = 20;
  int batch_size = 8;
  AdamConfig adam;
  std::uint64_t train_seed = 13;

  CddSchedules cdd;  // cdd.epochs mirrors epochs
  CddPasses passes;

  EvalOptions eval;
  bool epoch_checkpoints = false;

  void validate() const;

  TrainSettings train_settings() const;
  CddSchedules schedules() const;

  // Sorted key=value lines; the digest hashes this text, so it does not
  // depend on the order keys were written in.
  std::string canonical() const;
  std::string digest() const;

  // Throws ConfigError on an unknown key or a malformed value.
  void set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> to_map() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& config, const std::filesystem::path& path);

std::string format_k_schedule(const std::vector<KPhase>& phases);
// "0.25:2,0.25:3,0.25:3,0.25:2", or a bare "2,3,3,2" for equal phases.
std::vector<KPhase> parse_k_schedule(const std::string& text);

}  // namespace fuad
