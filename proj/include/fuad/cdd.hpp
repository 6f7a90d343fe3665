#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fuad/adam.hpp"
#include "fuad/datagen.hpp"
#include "fuad/losses.hpp"
#include "fuad/seed.hpp"
#include "fuad/student.hpp"
#include "fuad/trainer.hpp"

namespace fuad {

enum class Strategy { consensual, next, all };
enum class LambdaMode { s_shape, zero, one, linear };
// Optimiser state of a domain student at the start of an epoch: new, or a
// copy of the global student's.
enum class DomainOptimizer { fresh, inherit };

std::string to_string(Strategy s);
std::string to_string(LambdaMode m);
Strategy parse_strategy(const std::string& text);
LambdaMode parse_lambda_mode(const std::string& text);
std::string to_string(DomainOptimizer o);
DomainOptimizer parse_domain_optimizer(const std::string& text);

struct KPhase {
  double fraction = 1.0;
  int k = 2;
};

struct CddSchedules {
  int epochs = 20;
  double r_normal = 0.5;
  double p = 4.0;
  double sigma_noise = 0.2;
  std::vector<KPhase> k_schedule{{0.25, 2}, {0.25, 3}, {0.25, 3}, {0.25, 2}};
  LambdaMode lambda_mode = LambdaMode::s_shape;
  Strategy strategy = Strategy::consensual;
  DomainOptimizer domain_optimizer = DomainOptimizer::fresh;

  void validate() const;
  // Phases cover contiguous epoch ranges; phase boundaries are
  // ceil(cumulative_fraction * epochs).
  int k_at(int epoch) const;
};

// min(e / E, r_normal)
double r_schedule(double e, double E, double r_normal);
// (e/E)^p / ((e/E)^p + (1 - e/E)^p)
double lambda_schedule(double e, double E, double p);
double lambda_for(LambdaMode mode, double e, double E, double p);

struct ConfidenceTable {
  std::vector<std::string> ids;
  std::vector<double> confidence;
  int epoch = 0;
};

// Conf_i = sum over levels of the mean over (h,w) of cos(teacher, global).
// When global_features is given it receives the global student's output for
// every bank entry.
ConfidenceTable compute_confidence(const FeatureBank& bank, const StudentArch& arch, const StudentParams& global,
                                   int epoch, std::vector<FeaturePyramid>* global_features = nullptr);
ConfidenceTable compute_confidence(const TrainView& view, const FeatureExtractor& teacher, const StudentArch& arch,
                                   const StudentParams& global, int epoch);

// Indices refer to positions in the ConfidenceTable / FeatureBank.
struct DomainPartition {
  std::vector<std::size_t> high_conf;
  std::vector<std::vector<std::size_t>> low_subsets;

  int k() const { return static_cast<int>(low_subsets.size()); }
  std::vector<std::size_t> domain(int k) const;
};

// Top floor(r * N) by confidence (descending, ties by id) form the
// high-confidence set; the rest are shuffled by seed and dealt into K
// subsets whose sizes differ by at most one.
DomainPartition construct_domains(const ConfidenceTable& conf, double r, int k, std::uint64_t seed);

// Throws StateError when the partition is not a disjoint cover of [0, n) with
// balanced low-confidence subsets.
void validate_partition(const DomainPartition& partition, std::size_t n);

struct PhaseLoss {
  double mean_total = 0.0;
  std::size_t steps = 0;
};

struct DomainTrainResult {
  StudentParams params;
  std::vector<LossReport> history;
};

// Student initialised from prev_global, trained on the domain with
// layer_cos_loss(teacher, student) + lambda * layer_cos_loss(prev_global, student).
// prev_global_features[i] is the frozen previous-global output for bank entry i.
// The optimiser starts from a copy of warm_start when given, else fresh.
DomainTrainResult train_domain_student(std::span<const std::size_t> domain, const FeatureBank& bank,
                                       std::span<const FeaturePyramid> prev_global_features, const StudentArch& arch,
                                       const StudentParams& prev_global, double lambda, const TrainSettings& settings,
                                       std::size_t epoch, std::size_t stream, int passes = 1,
                                       const Adam* warm_start = nullptr);

struct PseudoSelection {
  std::vector<int> candidates;
  std::vector<double> affinity;  // aligned with candidates
  int chosen = -1;  // domain index; -1 for strategy all
  Strategy strategy = Strategy::consensual;
};

// Aff(h) = sum over levels of the flattened cosine between candidate h's
// features and the previous global student's features. Ties (within 1e-12) go to the
// lowest domain index. candidate_features is indexed by domain; the own
// domain's entry is ignored and may be null.
PseudoSelection affinity_select(std::span<const FeaturePyramid* const> candidate_features,
                                const FeaturePyramid& prev_global_features, Strategy strategy, int own_domain);

// Adds i.i.d. N(0, sigma^2) to every entry; sigma == 0 returns an exact copy.
FeaturePyramid perturb_teacher_features(const FeaturePyramid& pyramid, double sigma, Rng& rng);

// Cross-domain pseudo-normal distillation of the global student over every
// domain in turn.
PhaseLoss train_global_cross(const DomainPartition& partition, std::span<const StudentParams> domain_students,
                             const FeatureBank& bank, std::span<const FeaturePyramid> prev_global_features,
                             const StudentArch& arch, StudentParams& global, Adam& adam, const CddSchedules& schedules,
                             const TrainSettings& settings, std::size_t epoch, int passes = 1,
                             std::vector<LossReport>* history = nullptr);

// Teacher-supervised pass of the global student over the high-confidence set.
PhaseLoss train_global_hc(std::span<const std::size_t> high_conf, const FeatureBank& bank, const StudentArch& arch,
                          StudentParams& global, Adam& adam, const TrainSettings& settings, std::size_t epoch,
                          int passes = 1, std::vector<LossReport>* history = nullptr);

struct EpochTelemetry {
  int epoch = 0;
  int k = 0;
  double r = 0.0;
  double lambda = 0.0;
  std::size_t high_conf_size = 0;
  std::vector<std::size_t> domain_sizes;
  std::vector<double> domain_anomaly_ratios;  // empty without eval labels
  double domain_loss = 0.0;
  double cross_loss = 0.0;
  double hc_loss = 0.0;
  std::size_t domain_steps = 0;
  std::size_t cross_steps = 0;
  std::size_t hc_steps = 0;
};

std::string format_telemetry(const EpochTelemetry& t);

// Passes over the data per epoch for each phase.
struct CddPasses {
  int domain = 3;
  int cross = 2;
  int hc = 1;
};

struct CddResult {
  StudentParams global;
  std::vector<EpochTelemetry> telemetry;
  // domain_history[e][k]: per-step losses of domain student k in epoch e.
  std::vector<std::vector<std::vector<LossReport>>> domain_history;
  std::vector<std::vector<LossReport>> cross_history;
  std::vector<std::vector<LossReport>> hc_history;
};

using EpochObserver = std::function<void(const EpochTelemetry&, const StudentParams&)>;

// Full cross-domain distillation loop. eval_labels (aligned with the bank)
// only feed telemetry and never influence training.
CddResult run_cdd(const FeatureBank& bank, const StudentArch& arch, StudentParams initial_global,
                  const CddSchedules& schedules, const TrainSettings& settings, CddPasses passes = {},
                  const std::vector<Label>* eval_labels = nullptr, const EpochObserver& observer = {});

}  // namespace fuad
