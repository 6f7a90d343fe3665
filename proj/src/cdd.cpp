#include "fuad/cdd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

#include "fuad/error.hpp"

namespace fuad {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::consensual: return "consensual";
    case Strategy::next: return "next";
    case Strategy::all: return "all";
  }
  return "unknown";
}

std::string to_string(LambdaMode m) {
  switch (m) {
    case LambdaMode::s_shape: return "s_shape";
    case LambdaMode::zero: return "zero";
    case LambdaMode::one: return "one";
    case LambdaMode::linear: return "linear";
  }
  return "unknown";
}

Strategy parse_strategy(const std::string& t) {
  if (t == "consensual") return Strategy::consensual;
  if (t == "next") return Strategy::next;
  if (t == "all") return Strategy::all;
  throw ConfigError("cdd.strategy: unknown value '" + t + "'");
}

LambdaMode parse_lambda_mode(const std::string& t) {
  if (t == "s_shape") return LambdaMode::s_shape;
  if (t == "zero") return LambdaMode::zero;
  if (t == "one") return LambdaMode::one;
  if (t == "linear") return LambdaMode::linear;
  throw ConfigError("cdd.lambda_mode: unknown value '" + t + "'");
}

std::string to_string(DomainOptimizer o) { return o == DomainOptimizer::fresh ? "fresh" : "inherit"; }

DomainOptimizer parse_domain_optimizer(const std::string& t) {
  if (t == "fresh") return DomainOptimizer::fresh;
  if (t == "inherit") return DomainOptimizer::inherit;
  throw ConfigError("cdd.domain_optimizer: unknown value '" + t + "'");
}

void CddSchedules::validate() const {
  if (epochs < 1) throw ConfigError("cdd.epochs must be >= 1");
  if (r_normal < 0.0 || r_normal > 1.0) throw ConfigError("cdd.r_normal must lie in [0, 1]");
  if (p <= 0.0) throw ConfigError("cdd.p must be > 0");
  if (sigma_noise < 0.0) throw ConfigError("cdd.sigma_noise must be >= 0");
  if (k_schedule.empty()) throw ConfigError("cdd.k_schedule must not be empty");
  double sum = 0.0;
  for (const auto& ph : k_schedule) {
    if (ph.k < 1) throw ConfigError("cdd.k_schedule: every K must be >= 1");
    if (ph.fraction <= 0.0) throw ConfigError("cdd.k_schedule: phase fractions must be positive");
    sum += ph.fraction;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw ConfigError("cdd.k_schedule: phase fractions must sum to 1");
  if (strategy != Strategy::all) {
    for (const auto& ph : k_schedule) {
      if (ph.k < 2) throw ConfigError("cdd.strategy " + to_string(strategy) + " requires K >= 2 in every phase");
    }
  }
}

int CddSchedules::k_at(int epoch) const {
  double cumulative = 0.0;
  for (std::size_t j = 0; j < k_schedule.size(); ++j) {
    cumulative += k_schedule[j].fraction;
    const int boundary = j + 1 == k_schedule.size()
                             ? epochs
                             : static_cast<int>(std::ceil(cumulative * epochs - 1e-9));
    if (epoch < boundary) return k_schedule[j].k;
  }
  return k_schedule.back().k;
}

double r_schedule(double e, double E, double r_normal) { return std::min(e / E, r_normal); }

double lambda_schedule(double e, double E, double p) {
  const double x = e / E;
  const double a = std::pow(x, p);
  const double b = std::pow(1.0 - x, p);
  return a / (a + b);
}

double lambda_for(LambdaMode mode, double e, double E, double p) {
  switch (mode) {
    case LambdaMode::s_shape: return lambda_schedule(e, E, p);
    case LambdaMode::zero: return 0.0;
    case LambdaMode::one: return 1.0;
    case LambdaMode::linear: return e / E;
  }
  return 0.0;
}

ConfidenceTable compute_confidence(const FeatureBank& bank, const StudentArch& arch, const StudentParams& global,
                                   int epoch, std::vector<FeaturePyramid>* global_features) {
  ConfidenceTable t;
  t.epoch = epoch;
  t.ids = bank.ids;
  t.confidence.reserve(bank.size());
  if (global_features) global_features->clear();
  for (const auto& f : bank.features) {
    FeaturePyramid g = arch.forward(f, global);
    t.confidence.push_back(mean_location_cos(f, g));
    if (global_features) global_features->push_back(std::move(g));
  }
  return t;
}

ConfidenceTable compute_confidence(const TrainView& view, const FeatureExtractor& teacher, const StudentArch& arch,
                                   const StudentParams& global, int epoch) {
  return compute_confidence(extract_features(teacher, view), arch, global, epoch);
}

std::vector<std::size_t> DomainPartition::domain(int k) const {
  std::vector<std::size_t> d = high_conf;
  const auto& low = low_subsets.at(static_cast<std::size_t>(k));
  d.insert(d.end(), low.begin(), low.end());
  return d;
}

DomainPartition construct_domains(const ConfidenceTable& conf, double r, int k, std::uint64_t seed) {
  if (k < 1) throw ConfigError("construct_domains: K must be >= 1");
  if (r < 0.0 || r > 1.0) throw ConfigError("construct_domains: r must lie in [0, 1]");
  const std::size_t n = conf.confidence.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (conf.confidence[a] != conf.confidence[b]) return conf.confidence[a] > conf.confidence[b];
    return conf.ids[a] < conf.ids[b];
  });
  const auto n_high = static_cast<std::size_t>(std::floor(r * static_cast<double>(n) + 1e-9));
  DomainPartition p;
  p.high_conf.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_high));
  std::vector<std::size_t> rest(order.begin() + static_cast<std::ptrdiff_t>(n_high), order.end());
  std::sort(rest.begin(), rest.end());
  Rng rng(seed);
  std::shuffle(rest.begin(), rest.end(), rng);
  p.low_subsets.resize(static_cast<std::size_t>(k));
  const std::size_t base = rest.size() / k;
  const std::size_t extra = rest.size() % k;
  std::size_t pos = 0;
  for (std::size_t j = 0; j < static_cast<std::size_t>(k); ++j) {
    const std::size_t len = base + (j < extra ? 1 : 0);
    p.low_subsets[j].assign(rest.begin() + static_cast<std::ptrdiff_t>(pos),
                            rest.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return p;
}

void validate_partition(const DomainPartition& p, std::size_t n) {
  std::vector<int> seen(n, 0);
  auto mark = [&](std::size_t i) {
    if (i >= n) throw StateError("partition index out of range");
    if (seen[i]++) throw StateError("partition sets overlap at index " + std::to_string(i));
  };
  for (auto i : p.high_conf) mark(i);
  std::size_t lo = n, hi = 0;
  for (const auto& s : p.low_subsets) {
    for (auto i : s) mark(i);
    lo = std::min(lo, s.size());
    hi = std::max(hi, s.size());
  }
  if (p.low_subsets.empty()) throw StateError("partition has no low-confidence subsets");
  if (hi - lo > 1) throw StateError("low-confidence subset sizes differ by more than one");
  for (std::size_t i = 0; i < n; ++i) {
    if (!seen[i]) throw StateError("partition does not cover index " + std::to_string(i));
  }
}

namespace {

template <typename MakeSample>
PhaseLoss run_batches(const std::vector<std::size_t>& order, int batch_size, MakeSample&& make, const StudentArch& arch,
                      StudentParams& params, Adam& adam, std::vector<LossReport>* history) {
  PhaseLoss out;
  double sum = 0.0;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<StepSample> batch;
    for (std::size_t k = start; k < end; ++k) batch.push_back(make(order[k]));
    const LossReport r = train_step(arch, params, adam, batch, out.steps);
    if (history) history->push_back(r);
    sum += r.total;
    ++out.steps;
  }
  out.mean_total = out.steps ? sum / static_cast<double>(out.steps) : 0.0;
  return out;
}

}  // namespace

DomainTrainResult train_domain_student(std::span<const std::size_t> domain, const FeatureBank& bank,
                                       std::span<const FeaturePyramid> prev_global_features, const StudentArch& arch,
                                       const StudentParams& prev_global, double lambda, const TrainSettings& settings,
                                       std::size_t epoch, std::size_t stream, int passes, const Adam* warm_start) {
  if (domain.empty()) throw StateError("train_domain_student: empty domain");
  if (prev_global_features.size() != bank.size()) {
    throw StateError("train_domain_student: previous-global features do not cover the bank");
  }
  DomainTrainResult result{prev_global, {}};
  Adam adam = warm_start ? *warm_start : Adam(arch.parameter_count(), settings.adam);
  const std::vector<std::size_t> members(domain.begin(), domain.end());
  for (int pass = 0; pass < passes; ++pass) {
    const auto order = pass_order(members, settings.seed, epoch * static_cast<std::size_t>(passes) + pass, stream);
    run_batches(
        order, settings.batch_size,
        [&](std::size_t i) {
          return StepSample{&bank.features[i], {{&bank.features[i], 1.0}, {&prev_global_features[i], lambda}}};
        },
        arch, result.params, adam, &result.history);
  }
  return result;
}

PseudoSelection affinity_select(std::span<const FeaturePyramid* const> candidate_features,
                                const FeaturePyramid& prev_global_features, Strategy strategy, int own_domain) {
  const int k = static_cast<int>(candidate_features.size());
  if (own_domain < 0 || own_domain >= k) throw InputError("affinity_select: own domain index out of range");
  if (k < 2 && strategy != Strategy::all) {
    throw ConfigError("affinity_select: strategy " + to_string(strategy) + " needs at least two domains");
  }
  PseudoSelection sel;
  sel.strategy = strategy;
  for (int h = 0; h < k; ++h) {
    if (h == own_domain) continue;
    sel.candidates.push_back(h);
  }
  if (strategy == Strategy::next) {
    sel.chosen = (own_domain + 1) % k;
    return sel;
  }
  if (strategy == Strategy::all) return sel;
  // Affinities within kAffinityTie count as tied, so rounding from a rescaled
  // candidate cannot flip the lowest-index rule.
  constexpr double kAffinityTie = 1e-12;
  double best = -std::numeric_limits<double>::infinity();
  for (int h : sel.candidates) {
    const FeaturePyramid& f = *candidate_features[static_cast<std::size_t>(h)];
    require_same_shapes(f, prev_global_features, "affinity_select");
    double aff = 0.0;
    for (std::size_t l = 0; l < f.size(); ++l) aff += flattened_cos(f[l], prev_global_features[l]);
    sel.affinity.push_back(aff);
    if (aff > best + kAffinityTie) {
      best = aff;
      sel.chosen = h;
    }
  }
  return sel;
}

FeaturePyramid perturb_teacher_features(const FeaturePyramid& pyramid, double sigma, Rng& rng) {
  if (sigma < 0.0) throw ConfigError("sigma_noise must be >= 0");
  FeaturePyramid out = pyramid;
  if (sigma == 0.0) return out;
  std::normal_distribution<double> noise(0.0, sigma);
  for (auto& level : out.levels) {
    for (double& v : level.values()) v += noise(rng);
  }
  return out;
}

PhaseLoss train_global_cross(const DomainPartition& partition, std::span<const StudentParams> domain_students,
                             const FeatureBank& bank, std::span<const FeaturePyramid> prev_global_features,
                             const StudentArch& arch, StudentParams& global, Adam& adam, const CddSchedules& schedules,
                             const TrainSettings& settings, std::size_t epoch, int passes,
                             std::vector<LossReport>* history) {
  const int k = partition.k();
  if (static_cast<int>(domain_students.size()) != k) {
    throw StateError("train_global_cross: need one domain student per domain");
  }
  if (k < 2 && schedules.strategy != Strategy::all) {
    throw ConfigError("cdd.strategy " + to_string(schedules.strategy) + " needs at least two domains");
  }
  // Domain-student outputs are frozen targets, computed at most once per
  // (student, sample) in this phase.
  std::map<std::pair<int, std::size_t>, FeaturePyramid> pseudo_cache;
  auto pseudo = [&](int h, std::size_t i) -> const FeaturePyramid& {
    auto it = pseudo_cache.find({h, i});
    if (it == pseudo_cache.end()) {
      it = pseudo_cache.emplace(std::make_pair(h, i), arch.forward(bank.features[i], domain_students[h])).first;
    }
    return it->second;
  };

  Rng noise_rng(derive_seed(settings.seed, "perturb", epoch));
  PhaseLoss total;
  double sum = 0.0;
  // Perturbed inputs must outlive the batch that references them.
  std::vector<FeaturePyramid> noisy_inputs;
  for (int pass = 0; pass < passes; ++pass) {
    for (int d = 0; d < k; ++d) {
      const auto order =
          pass_order(partition.domain(d), settings.seed, epoch * static_cast<std::size_t>(passes) + pass, 100 + d);
      if (order.empty()) continue;
      noisy_inputs.clear();
      noisy_inputs.reserve(order.size());
      const PhaseLoss part = run_batches(
          order, settings.batch_size,
          [&](std::size_t i) {
            std::vector<const FeaturePyramid*> cands(static_cast<std::size_t>(k), nullptr);
            for (int h = 0; h < k; ++h) {
              if (h != d) cands[h] = &pseudo(h, i);
            }
            const PseudoSelection sel = affinity_select(cands, prev_global_features[i], schedules.strategy, d);
            StepSample s;
            noisy_inputs.push_back(perturb_teacher_features(bank.features[i], schedules.sigma_noise, noise_rng));
            s.input = &noisy_inputs.back();
            if (schedules.strategy == Strategy::all) {
              const double w = sel.candidates.empty() ? 0.0 : 1.0 / static_cast<double>(sel.candidates.size());
              for (int h : sel.candidates) s.targets.push_back({cands[h], w});
            } else {
              s.targets.push_back({cands[sel.chosen], 1.0});
            }
            return s;
          },
          arch, global, adam, history);
      sum += part.mean_total * static_cast<double>(part.steps);
      total.steps += part.steps;
    }
  }
  total.mean_total = total.steps ? sum / static_cast<double>(total.steps) : 0.0;
  return total;
}

PhaseLoss train_global_hc(std::span<const std::size_t> high_conf, const FeatureBank& bank, const StudentArch& arch,
                          StudentParams& global, Adam& adam, const TrainSettings& settings, std::size_t epoch,
                          int passes, std::vector<LossReport>* history) {
  PhaseLoss total;
  if (high_conf.empty()) return total;
  double sum = 0.0;
  const std::vector<std::size_t> members(high_conf.begin(), high_conf.end());
  for (int pass = 0; pass < passes; ++pass) {
    const auto order = pass_order(members, settings.seed, epoch * static_cast<std::size_t>(passes) + pass, 200);
    const PhaseLoss part = run_batches(
        order, settings.batch_size,
        [&](std::size_t i) { return StepSample{&bank.features[i], {{&bank.features[i], 1.0}}}; }, arch, global,
        adam, history);
    sum += part.mean_total * static_cast<double>(part.steps);
    total.steps += part.steps;
  }
  total.mean_total = total.steps ? sum / static_cast<double>(total.steps) : 0.0;
  return total;
}

std::string format_telemetry(const EpochTelemetry& t) {
  auto join_sizes = [](const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s.empty() ? std::string("-") : s;
  };
  std::string ratios;
  for (std::size_t i = 0; i < t.domain_anomaly_ratios.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%.6f", i ? "," : "", t.domain_anomaly_ratios[i]);
    ratios += buf;
  }
  if (ratios.empty()) ratios = "-";
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "epoch=%d\tK=%d\tr=%.10f\tlambda=%.10f\thc_size=%zu\tdomain_sizes=%s\tdomain_anomaly_ratios=%s\t"
                "domain_loss=%.10f\tcross_loss=%.10f\thc_loss=%.10f\tdomain_steps=%zu\tcross_steps=%zu\thc_steps=%zu",
                t.epoch, t.k, t.r, t.lambda, t.high_conf_size, join_sizes(t.domain_sizes).c_str(), ratios.c_str(),
                t.domain_loss, t.cross_loss, t.hc_loss, t.domain_steps, t.cross_steps, t.hc_steps);
  return buf;
}

CddResult run_cdd(const FeatureBank& bank, const StudentArch& arch, StudentParams initial_global,
                  const CddSchedules& schedules, const TrainSettings& settings, CddPasses passes,
                  const std::vector<Label>* eval_labels, const EpochObserver& observer) {
  schedules.validate();
  arch.check_params(initial_global);
  if (bank.size() == 0) throw StateError("run_cdd: empty training set");
  if (eval_labels && eval_labels->size() != bank.size()) throw StateError("run_cdd: eval labels misaligned");

  CddResult result;
  result.global = std::move(initial_global);
  Adam global_adam(arch.parameter_count(), settings.adam);
  const int E = schedules.epochs;
  std::vector<FeaturePyramid> prev_global_features;

  // Re-raises a training failure with the epoch and phase it came from.
  auto in_phase = [](int epoch, const std::string& phase, auto&& fn) {
    try {
      return fn();
    } catch (const TrainingError& err) {
      throw TrainingError("cdd epoch " + std::to_string(epoch) + ", phase " + phase + ": " + err.what(), err.step(),
                          err.last_finite_params());
    }
  };

  for (int e = 0; e < E; ++e) {
    const auto epoch = static_cast<std::size_t>(e);
    const StudentParams prev_global = result.global;
    const ConfidenceTable conf = compute_confidence(bank, arch, prev_global, e, &prev_global_features);
    const double r = r_schedule(e, E, schedules.r_normal);
    const int k = schedules.k_at(e);
    const double lambda = lambda_for(schedules.lambda_mode, e, E, schedules.p);
    const DomainPartition partition = construct_domains(conf, r, k, derive_seed(settings.seed, "domains", epoch));
    validate_partition(partition, bank.size());

    EpochTelemetry t;
    t.epoch = e;
    t.k = k;
    t.r = r;
    t.lambda = lambda;
    t.high_conf_size = partition.high_conf.size();

    std::vector<StudentParams> domain_students;
    std::vector<std::vector<LossReport>> domain_hist;
    double domain_sum = 0.0;
    for (int d = 0; d < k; ++d) {
      const auto members = partition.domain(d);
      t.domain_sizes.push_back(members.size());
      if (eval_labels) {
        std::size_t anomalies = 0;
        for (auto i : members) anomalies += (*eval_labels)[i] == Label::anomalous ? 1 : 0;
        t.domain_anomaly_ratios.push_back(members.empty() ? 0.0
                                                          : static_cast<double>(anomalies) / members.size());
      }
      if (members.empty()) {
        domain_students.push_back(prev_global);
        domain_hist.emplace_back();
        continue;
      }
      DomainTrainResult ds = in_phase(e, "domain " + std::to_string(d), [&] {
        return train_domain_student(members, bank, prev_global_features, arch, prev_global, lambda, settings, epoch,
                                    static_cast<std::size_t>(d), passes.domain,
                                    schedules.domain_optimizer == DomainOptimizer::inherit ? &global_adam : nullptr);
      });
      for (const auto& h : ds.history) domain_sum += h.total;
      t.domain_steps += ds.history.size();
      domain_students.push_back(std::move(ds.params));
      domain_hist.push_back(std::move(ds.history));
    }
    t.domain_loss = t.domain_steps ? domain_sum / static_cast<double>(t.domain_steps) : 0.0;

    std::vector<LossReport> cross_hist, hc_hist;
    const PhaseLoss cross = in_phase(e, "cross", [&] {
      return train_global_cross(partition, domain_students, bank, prev_global_features, arch, result.global,
                                global_adam, schedules, settings, epoch, passes.cross, &cross_hist);
    });
    const PhaseLoss hc = in_phase(e, "high-confidence", [&] {
      return train_global_hc(partition.high_conf, bank, arch, result.global, global_adam, settings, epoch, passes.hc,
                             &hc_hist);
    });
    t.cross_loss = cross.mean_total;
    t.cross_steps = cross.steps;
    t.hc_loss = hc.mean_total;
    t.hc_steps = hc.steps;

    result.domain_history.push_back(std::move(domain_hist));
    result.cross_history.push_back(std::move(cross_hist));
    result.hc_history.push_back(std::move(hc_hist));
    result.telemetry.push_back(t);
    if (observer) observer(t, result.global);
  }
  return result;
}

}  // namespace fuad
