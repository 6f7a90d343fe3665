#include "fuad/run_config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "fuad/error.hpp"
#include "fuad/seed.hpp"

namespace fuad {

std::string to_string(Algorithm a) { return a == Algorithm::rd ? "rd" : "cdd"; }

Algorithm parse_algorithm(const std::string& text) {
  if (text == "rd") return Algorithm::rd;
  if (text == "cdd") return Algorithm::cdd;
  throw ConfigError("train.algorithm: unknown value '" + text + "'");
}

std::string to_string(DataSource s) {
  switch (s) {
    case DataSource::generate: return "generate";
    case DataSource::corpus_dir: return "corpus_dir";
    case DataSource::mvtec: return "mvtec";
  }
  return "unknown";
}

DataSource parse_data_source(const std::string& text) {
  if (text == "generate") return DataSource::generate;
  if (text == "corpus_dir") return DataSource::corpus_dir;
  if (text == "mvtec") return DataSource::mvtec;
  throw ConfigError("data.source: unknown value '" + text + "'");
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // Prefer the shortest form that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    char shorter[64];
    std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
    if (std::strtod(shorter, nullptr) == v) return shorter;
  }
  return buf;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty() || !std::isfinite(out)) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty() || v[0] == '-') throw ConfigError(key + ": expected a seed, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, F f) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + f(items[i]);
  return out;
}

// Wraps a parser so its ConfigError names the key.
template <typename F>
auto named(const std::string& key, F f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    auto num = [&](const std::string& key, auto member) {
      t[key] = {[member](const RunConfig& c) { return fmt_double(member(const_cast<RunConfig&>(c))); },
                [member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = to_double(k, v); }};
    };
    auto integer = [&](const std::string& key, auto member) {
      t[key] = {[member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
                [member](RunConfig& c, const std::string& k, const std::string& v) {
                  member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(to_int(k, v));
                }};
    };
    auto seed = [&](const std::string& key, auto member) {
      t[key] = {[member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
                [member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = to_u64(k, v); }};
    };

    integer("gen.image_size", [](RunConfig& c) -> int& { return c.gen.image_size; });
    integer("gen.channels", [](RunConfig& c) -> int& { return c.gen.channels; });
    t["gen.pattern"] = {[](const RunConfig& c) { return to_string(c.gen.pattern); },
                        [](RunConfig& c, const std::string& k, const std::string& v) {
                          c.gen.pattern = named(k, [&] { return parse_pattern(v); });
                        }};
    num("gen.jitter", [](RunConfig& c) -> double& { return c.gen.jitter; });
    integer("gen.defect.min_size", [](RunConfig& c) -> int& { return c.gen.defect.min_size; });
    integer("gen.defect.max_size", [](RunConfig& c) -> int& { return c.gen.defect.max_size; });
    num("gen.defect.contrast", [](RunConfig& c) -> double& { return c.gen.defect.contrast; });
    t["gen.defect.shapes"] = {
        [](const RunConfig& c) { return join(c.gen.defect.shapes, [](DefectShape s) { return to_string(s); }); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          std::vector<DefectShape> shapes;
          for (const auto& item : split(v, ',')) shapes.push_back(named(k, [&] { return parse_defect_shape(trim(item)); }));
          c.gen.defect.shapes = shapes;
        }};
    integer("gen.n_train_normal", [](RunConfig& c) -> int& { return c.gen.n_train_normal; });
    integer("gen.n_test_normal", [](RunConfig& c) -> int& { return c.gen.n_test_normal; });
    integer("gen.n_anomalous_pool", [](RunConfig& c) -> int& { return c.gen.n_anomalous_pool; });
    seed("gen.seed", [](RunConfig& c) -> std::uint64_t& { return c.gen.seed; });

    t["data.source"] = {[](const RunConfig& c) { return to_string(c.source); },
                        [](RunConfig& c, const std::string&, const std::string& v) { c.source = parse_data_source(v); }};
    t["data.path"] = {[](const RunConfig& c) { return c.data_path; },
                      [](RunConfig& c, const std::string&, const std::string& v) { c.data_path = v; }};

    num("split.r_noise", [](RunConfig& c) -> double& { return c.r_noise; });
    t["split.settings"] = {
        [](const RunConfig& c) { return join(c.settings, [](Setting s) { return to_string(s); }); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          std::vector<Setting> settings;
          for (const auto& item : split(v, ',')) settings.push_back(named(k, [&] { return parse_setting(trim(item)); }));
          c.settings = settings;
        }};
    seed("split.seed", [](RunConfig& c) -> std::uint64_t& { return c.split_seed; });

    integer("model.input_channels", [](RunConfig& c) -> int& { return c.model.input_channels; });
    integer("model.image_size", [](RunConfig& c) -> int& { return c.model.image_size; });
    for (int l = 0; l < kLevels; ++l) {
      integer("model.channels." + std::to_string(l + 1),
              [l](RunConfig& c) -> int& { return c.model.level_channels[l]; });
      integer("model.strides." + std::to_string(l + 1),
              [l](RunConfig& c) -> int& { return c.model.level_strides[l]; });
    }
    t["model.nonlinearity"] = {
        [](const RunConfig& c) { return to_string(c.model.nonlinearity); },
        [](RunConfig& c, const std::string&, const std::string& v) { c.model.nonlinearity = parse_nonlinearity(v); }};
    integer("model.bottleneck_width", [](RunConfig& c) -> int& { return c.model.bottleneck_width; });
    integer("model.bottleneck_stride", [](RunConfig& c) -> int& { return c.model.bottleneck_stride; });
    t["model.fusion"] = {[](const RunConfig& c) { return to_string(c.model.fusion); },
                         [](RunConfig& c, const std::string&, const std::string& v) { c.model.fusion = parse_fusion(v); }};
    t["model.upsampling"] = {
        [](const RunConfig& c) { return to_string(c.model.upsampling); },
        [](RunConfig& c, const std::string&, const std::string& v) { c.model.upsampling = parse_upsampling(v); }};
    seed("model.teacher_seed", [](RunConfig& c) -> std::uint64_t& { return c.teacher_seed; });
    seed("model.init_seed", [](RunConfig& c) -> std::uint64_t& { return c.init_seed; });

    t["train.algorithm"] = {
        [](const RunConfig& c) { return to_string(c.algorithm); },
        [](RunConfig& c, const std::string&, const std::string& v) { c.algorithm = parse_algorithm(v); }};
    integer("train.epochs", [](RunConfig& c) -> int& { return c.epochs; });
    integer("train.batch_size", [](RunConfig& c) -> int& { return c.batch_size; });
    num("train.learning_rate", [](RunConfig& c) -> double& { return c.adam.learning_rate; });
    num("train.beta1", [](RunConfig& c) -> double& { return c.adam.beta1; });
    num("train.beta2", [](RunConfig& c) -> double& { return c.adam.beta2; });
    num("train.epsilon", [](RunConfig& c) -> double& { return c.adam.epsilon; });
    seed("train.seed", [](RunConfig& c) -> std::uint64_t& { return c.train_seed; });
    t["train.epoch_checkpoints"] = {
        [](const RunConfig& c) { return std::string(c.epoch_checkpoints ? "true" : "false"); },
        [](RunConfig& c, const std::string& k, const std::string& v) { c.epoch_checkpoints = to_bool(k, v); }};

    num("cdd.r_normal", [](RunConfig& c) -> double& { return c.cdd.r_normal; });
    num("cdd.p", [](RunConfig& c) -> double& { return c.cdd.p; });
    num("cdd.sigma_noise", [](RunConfig& c) -> double& { return c.cdd.sigma_noise; });
    t["cdd.k_schedule"] = {
        [](const RunConfig& c) { return format_k_schedule(c.cdd.k_schedule); },
        [](RunConfig& c, const std::string&, const std::string& v) { c.cdd.k_schedule = parse_k_schedule(v); }};
    t["cdd.lambda_mode"] = {
        [](const RunConfig& c) { return to_string(c.cdd.lambda_mode); },
        [](RunConfig& c, const std::string&, const std::string& v) { c.cdd.lambda_mode = parse_lambda_mode(v); }};
    t["cdd.strategy"] = {[](const RunConfig& c) { return to_string(c.cdd.strategy); },
                         [](RunConfig& c, const std::string&, const std::string& v) { c.cdd.strategy = parse_strategy(v); }};
    t["cdd.domain_optimizer"] = {
        [](const RunConfig& c) { return to_string(c.cdd.domain_optimizer); },
        [](RunConfig& c, const std::string&, const std::string& v) {
          c.cdd.domain_optimizer = parse_domain_optimizer(v);
        }};
    integer("cdd.domain_passes", [](RunConfig& c) -> int& { return c.passes.domain; });
    integer("cdd.cross_passes", [](RunConfig& c) -> int& { return c.passes.cross; });
    integer("cdd.hc_passes", [](RunConfig& c) -> int& { return c.passes.hc; });

    num("eval.smooth_sigma", [](RunConfig& c) -> double& { return c.eval.smooth_sigma; });
    num("eval.pro_fpr_limit", [](RunConfig& c) -> double& { return c.eval.pro.fpr_limit; });
    integer("eval.pro_thresholds", [](RunConfig& c) -> int& { return c.eval.pro.n_thresholds; });
    return t;
  }();
  return table;
}

}  // namespace

std::string format_k_schedule(const std::vector<KPhase>& phases) {
  return join(phases, [](const KPhase& p) { return fmt_double(p.fraction) + ":" + std::to_string(p.k); });
}

std::vector<KPhase> parse_k_schedule(const std::string& text) {
  const std::string key = "cdd.k_schedule";
  std::vector<KPhase> out;
  const auto items = split(text, ',');
  for (const auto& raw : items) {
    const std::string item = trim(raw);
    const auto colon = item.find(':');
    KPhase p;
    if (colon == std::string::npos) {
      p.fraction = 1.0 / static_cast<double>(items.size());
      p.k = static_cast<int>(to_int(key, item));
    } else {
      p.fraction = to_double(key, item.substr(0, colon));
      p.k = static_cast<int>(to_int(key, item.substr(colon + 1)));
    }
    out.push_back(p);
  }
  return out;
}

void RunConfig::validate() const {
  gen.validate();
  model.validate();
  if (source == DataSource::generate && gen.image_size != model.image_size) {
    throw ConfigError("model.image_size must equal gen.image_size");
  }
  if (source != DataSource::generate && data_path.empty()) throw ConfigError("data.path is required for this source");
  if (!(r_noise >= 0.0 && r_noise < 0.5)) throw ConfigError("split.r_noise must lie in [0, 0.5)");
  if (settings.empty()) throw ConfigError("split.settings must name at least one setting");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(adam.learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (passes.domain < 1 || passes.cross < 1 || passes.hc < 1) throw ConfigError("cdd.*_passes must be >= 1");
  if (!(eval.smooth_sigma >= 0.0)) throw ConfigError("eval.smooth_sigma must be >= 0");
  if (!(eval.pro.fpr_limit > 0.0 && eval.pro.fpr_limit <= 1.0)) throw ConfigError("eval.pro_fpr_limit must lie in (0, 1]");
  if (eval.pro.n_thresholds < 2) throw ConfigError("eval.pro_thresholds must be >= 2");
  if (algorithm == Algorithm::cdd) schedules().validate();
}

TrainSettings RunConfig::train_settings() const {
  TrainSettings s;
  s.epochs = epochs;
  s.batch_size = batch_size;
  s.adam = adam;
  s.seed = train_seed;
  return s;
}

CddSchedules RunConfig::schedules() const {
  CddSchedules s = cdd;
  s.epochs = epochs;
  return s;
}

std::map<std::string, std::string> RunConfig::to_map() const {
  std::map<std::string, std::string> out;
  for (const auto& [key, field] : fields()) out[key] = field.get(*this);
  return out;
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& [key, value] : to_map()) out += key + "=" + value + "\n";
  return out;
}

std::string RunConfig::digest() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(canonical())));
  return buf;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(*this, key, value);
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value, got '" + t + "'");
    }
    c.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

void save_run_config(const RunConfig& config, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write config file: " + path.string());
  out << config.canonical();
}

}  // namespace fuad
