#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fuad/tensor.hpp"

namespace fuad {

enum class Label { normal, anomalous };
enum class Origin { generated, ingested };
enum class PatternFamily { stripes, checker, blobs };
enum class DefectShape { rectangle, ellipse, blob };
enum class Setting { no_overlap, overlap };

std::string to_string(Label v);
std::string to_string(Origin v);
std::string to_string(PatternFamily v);
std::string to_string(DefectShape v);
std::string to_string(Setting v);
Label parse_label(const std::string& text);
Origin parse_origin(const std::string& text);
PatternFamily parse_pattern(const std::string& text);
DefectShape parse_defect_shape(const std::string& text);
Setting parse_setting(const std::string& text);

struct ImageSample {
  std::string id;
  Tensor pixels;  // [C x H x W], values in [0,1]
  Label label = Label::normal;
  Grid mask;  // [H x W] binary, all zero iff label == normal
  Origin origin = Origin::generated;
};

// Throws InputError when a sample breaks the label/mask or pixel-range contract.
void validate_sample(const ImageSample& sample);

struct DefectSpec {
  // Side-length range in pixels; a defect covers between min_size^2 and
  // max_size^2 pixels.
  int min_size = 4;
  int max_size = 8;
  double contrast = 0.12;
  std::vector<DefectShape> shapes{DefectShape::rectangle, DefectShape::ellipse, DefectShape::blob};
};

struct GenSpec {
  int image_size = 32;
  int channels = 3;
  PatternFamily pattern = PatternFamily::stripes;
  double jitter = 0.05;
  DefectSpec defect;
  int n_train_normal = 200;
  int n_test_normal = 50;
  int n_anomalous_pool = 60;
  std::uint64_t seed = 7;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct Corpus {
  std::vector<ImageSample> train_normals;
  std::vector<ImageSample> test_normals;
  std::vector<ImageSample> anomalies;
};

// Pure function of spec (including spec.seed). Pixels are quantised to
// multiples of 1/255 so corpora survive a round trip through 8-bit PNG.
Corpus generate_corpus(const GenSpec& spec);

// Label-free view of the training images: the only thing training code sees.
class TrainView {
 public:
  TrainView() = default;
  explicit TrainView(const std::vector<ImageSample>* samples) : samples_(samples) {}

  std::size_t size() const { return samples_ ? samples_->size() : 0; }
  const std::string& id(std::size_t i) const { return (*samples_)[i].id; }
  const Tensor& pixels(std::size_t i) const { return (*samples_)[i].pixels; }

 private:
  const std::vector<ImageSample>* samples_ = nullptr;
};

// Ground truth of the training set, only reachable through FuadSplit::eval_only().
class EvalOnlyTrainLabels {
 public:
  explicit EvalOnlyTrainLabels(const std::vector<ImageSample>* samples) : samples_(samples) {}
  std::size_t size() const { return samples_->size(); }
  Label label(std::size_t i) const { return (*samples_)[i].label; }
  const Grid& mask(std::size_t i) const { return (*samples_)[i].mask; }
  const ImageSample& sample(std::size_t i) const { return (*samples_)[i]; }

 private:
  const std::vector<ImageSample>* samples_;
};

class FuadSplit {
 public:
  FuadSplit(std::vector<ImageSample> train, std::vector<ImageSample> test, double r_noise, Setting setting,
            std::uint64_t seed, std::vector<std::string> injected_ids);

  TrainView train_view() const { return TrainView(&train_); }
  EvalOnlyTrainLabels eval_only() const { return EvalOnlyTrainLabels(&train_); }
  const std::vector<ImageSample>& test() const { return test_; }
  double r_noise() const { return r_noise_; }
  Setting setting() const { return setting_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<std::string>& injected_ids() const { return injected_ids_; }
  std::size_t train_size() const { return train_.size(); }

 private:
  std::vector<ImageSample> train_;
  std::vector<ImageSample> test_;
  double r_noise_;
  Setting setting_;
  std::uint64_t seed_;
  std::vector<std::string> injected_ids_;
};

// Number of anomalies to inject so that a / (n_normal + a) is nearest r_noise;
// at least one when r_noise > 0.
std::size_t injection_count(std::size_t n_normal, double r_noise);

// Injects anomalies drawn uniformly (by seed) from the pool into the training
// set. The selection depends only on (pool ids, r_noise, seed), so both
// settings built with one seed share the same training set.
FuadSplit build_fuad_split(const std::vector<ImageSample>& normals_train, const std::vector<ImageSample>& normals_test,
                           const std::vector<ImageSample>& anomaly_pool, double r_noise, Setting setting,
                           std::uint64_t seed);

// Ingests <root>/train/good/*, <root>/test/<defect>/* and
// <root>/ground_truth/<defect>/<stem>_mask.*; images are resized to
// round(image_size * 256 / 224) and centre-cropped to image_size.
struct MvtecCorpus {
  std::vector<ImageSample> train;
  std::vector<ImageSample> test;
};
MvtecCorpus load_mvtec_layout(const std::filesystem::path& root, int image_size);

// Persisted corpus: lossless PNGs plus a tab-separated manifest.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace fuad
