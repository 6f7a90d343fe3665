#include "fuad/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "fuad/error.hpp"
#include "fuad/image_io.hpp"
#include "fuad/seed.hpp"

namespace fuad {

std::string to_string(Label v) { return v == Label::normal ? "normal" : "anomalous"; }
std::string to_string(Origin v) { return v == Origin::generated ? "generated" : "ingested"; }
std::string to_string(PatternFamily v) {
  switch (v) {
    case PatternFamily::stripes: return "stripes";
    case PatternFamily::checker: return "checker";
    case PatternFamily::blobs: return "blobs";
  }
  return "unknown";
}
std::string to_string(DefectShape v) {
  switch (v) {
    case DefectShape::rectangle: return "rectangle";
    case DefectShape::ellipse: return "ellipse";
    case DefectShape::blob: return "blob";
  }
  return "unknown";
}
std::string to_string(Setting v) { return v == Setting::no_overlap ? "no_overlap" : "overlap"; }

Label parse_label(const std::string& t) {
  if (t == "normal") return Label::normal;
  if (t == "anomalous") return Label::anomalous;
  throw ConfigError("unknown label '" + t + "'");
}
Origin parse_origin(const std::string& t) {
  if (t == "generated") return Origin::generated;
  if (t == "ingested") return Origin::ingested;
  throw ConfigError("unknown origin '" + t + "'");
}
PatternFamily parse_pattern(const std::string& t) {
  if (t == "stripes") return PatternFamily::stripes;
  if (t == "checker") return PatternFamily::checker;
  if (t == "blobs") return PatternFamily::blobs;
  throw ConfigError("gen.pattern: unknown family '" + t + "'");
}
DefectShape parse_defect_shape(const std::string& t) {
  if (t == "rectangle") return DefectShape::rectangle;
  if (t == "ellipse") return DefectShape::ellipse;
  if (t == "blob") return DefectShape::blob;
  throw ConfigError("gen.defect.shapes: unknown shape '" + t + "'");
}
Setting parse_setting(const std::string& t) {
  if (t == "no_overlap") return Setting::no_overlap;
  if (t == "overlap") return Setting::overlap;
  throw ConfigError("unknown setting '" + t + "'");
}

void validate_sample(const ImageSample& s) {
  if (s.mask.height != s.pixels.height() || s.mask.width != s.pixels.width()) {
    throw InputError("sample " + s.id + ": mask shape does not match image");
  }
  bool any = false;
  for (double v : s.mask.values) {
    if (v != 0.0 && v != 1.0) throw InputError("sample " + s.id + ": mask is not binary");
    any = any || v != 0.0;
  }
  if (s.label == Label::normal && any) throw InputError("sample " + s.id + ": normal sample has a nonzero mask");
  if (s.label == Label::anomalous && !any) throw InputError("sample " + s.id + ": anomalous sample has an empty mask");
  for (double v : s.pixels.values()) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) throw InputError("sample " + s.id + ": pixel outside [0,1]");
  }
}

void GenSpec::validate() const {
  if (image_size < 16) throw ConfigError("gen.image_size must be >= 16");
  if (channels != 3) throw ConfigError("gen.channels must be 3");
  if (jitter < 0.0 || jitter > 0.5) throw ConfigError("gen.jitter must lie in [0, 0.5]");
  if (defect.min_size < 1 || defect.max_size < defect.min_size) {
    throw ConfigError("gen.defect.size_range must satisfy 1 <= min <= max");
  }
  const double area = static_cast<double>(image_size) * image_size;
  if (defect.min_size * defect.min_size < 0.01 * area || defect.max_size * defect.max_size > 0.25 * area) {
    throw ConfigError("gen.defect.size_range: defect area must lie between 1% and 25% of the image area");
  }
  if (defect.contrast <= 0.0 || defect.contrast > 1.0) throw ConfigError("gen.defect.contrast must lie in (0, 1]");
  if (defect.shapes.empty()) throw ConfigError("gen.defect.shapes must not be empty");
  if (n_train_normal < 0 || n_test_normal < 0 || n_anomalous_pool < 0) {
    throw ConfigError("gen.counts must be non-negative");
  }
}

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

// Structure shared by every normal image of one family.
struct FamilyParams {
  PatternFamily pattern;
  double frequency = 0.0;
  double angle = 0.0;
  std::array<double, 3> base{};
  std::array<double, 3> amplitude{};
  int period = 8;
  std::vector<std::array<double, 3>> bumps;  // x, y, radius on a torus
};

FamilyParams make_family(const GenSpec& spec) {
  Rng rng(derive_seed(spec.seed, "family"));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FamilyParams f;
  f.pattern = spec.pattern;
  f.frequency = 0.12 + 0.08 * u(rng);
  f.angle = kTau * u(rng);
  for (int c = 0; c < 3; ++c) {
    f.base[c] = 0.35 + 0.3 * u(rng);
    f.amplitude[c] = 0.15 + 0.1 * u(rng);
  }
  f.period = 6 + 2 * static_cast<int>(u(rng) * 2.0);
  const int n_bumps = 6;
  for (int i = 0; i < n_bumps; ++i) {
    f.bumps.push_back({u(rng) * spec.image_size, u(rng) * spec.image_size, 2.5 + 2.0 * u(rng)});
  }
  return f;
}

double pattern_value(const FamilyParams& f, double x, double y, double phase, int size) {
  switch (f.pattern) {
    case PatternFamily::stripes: {
      const double t = x * std::cos(f.angle) + y * std::sin(f.angle);
      return std::sin(kTau * f.frequency * t + phase);
    }
    case PatternFamily::checker: {
      const double shift = phase / kTau * f.period;
      const int cx = static_cast<int>(std::floor((x + shift) / f.period));
      const int cy = static_cast<int>(std::floor((y + 0.5 * shift) / f.period));
      return ((cx + cy) & 1) ? 1.0 : -1.0;
    }
    case PatternFamily::blobs: {
      const double shift = phase / kTau * size;
      double v = -1.0;
      for (const auto& b : f.bumps) {
        double dx = std::fmod(std::fabs(x + shift - b[0]), size);
        double dy = std::fmod(std::fabs(y - b[1]), size);
        dx = std::min(dx, size - dx);
        dy = std::min(dy, size - dy);
        v += 2.0 * std::exp(-(dx * dx + dy * dy) / (2.0 * b[2] * b[2]));
      }
      return std::clamp(v, -1.0, 1.0);
    }
  }
  return 0.0;
}

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

Tensor render_normal(const GenSpec& spec, const FamilyParams& f, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  const double phase = kTau * u(rng);
  const double amp_scale = 1.0 + spec.jitter * n(rng);
  std::array<double, 3> offset{};
  for (auto& o : offset) o = spec.jitter * n(rng);
  const double noise = 0.25 * spec.jitter;
  const int s = spec.image_size;
  Tensor img({3, s, s});
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const double p = pattern_value(f, x, y, phase, s);
      for (int c = 0; c < 3; ++c) {
        img.at(c, y, x) = f.base[c] + offset[c] + amp_scale * f.amplitude[c] * p + noise * n(rng);
      }
    }
  }
  return img;
}

// Pixel offsets of a defect relative to its bounding box origin.
std::vector<std::pair<int, int>> defect_footprint(DefectShape shape, const DefectSpec& d, Rng& rng) {
  std::uniform_int_distribution<int> side(d.min_size, d.max_size);
  std::uniform_int_distribution<int> area_dist(d.min_size * d.min_size, d.max_size * d.max_size);
  std::vector<std::pair<int, int>> cells;
  switch (shape) {
    case DefectShape::rectangle: {
      const int w = side(rng);
      const int h = side(rng);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) cells.emplace_back(y, x);
      }
      break;
    }
    case DefectShape::ellipse: {
      const int area = area_dist(rng);
      std::uniform_real_distribution<double> aspect_dist(0.6, 1.6);
      const double q = aspect_dist(rng);
      const int r = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(area)) * 1.6)) + 1;
      std::vector<std::pair<double, std::pair<int, int>>> ranked;
      for (int y = -r; y <= r; ++y) {
        for (int x = -r; x <= r; ++x) {
          const double dx = x / q;
          const double dy = y * q;
          ranked.push_back({dx * dx + dy * dy, {y, x}});
        }
      }
      std::stable_sort(ranked.begin(), ranked.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
      for (int i = 0; i < area; ++i) cells.push_back(ranked[i].second);
      break;
    }
    case DefectShape::blob: {
      const int area = area_dist(rng);
      std::set<std::pair<int, int>> taken{{0, 0}};
      std::vector<std::pair<int, int>> frontier;
      auto push_neighbours = [&](std::pair<int, int> p) {
        const int dy[] = {-1, 1, 0, 0};
        const int dx[] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          std::pair<int, int> q{p.first + dy[k], p.second + dx[k]};
          if (!taken.count(q)) frontier.push_back(q);
        }
      };
      push_neighbours({0, 0});
      while (static_cast<int>(taken.size()) < area) {
        std::uniform_int_distribution<std::size_t> pick(0, frontier.size() - 1);
        const std::size_t i = pick(rng);
        const auto p = frontier[i];
        frontier[i] = frontier.back();
        frontier.pop_back();
        if (taken.insert(p).second) push_neighbours(p);
      }
      cells.assign(taken.begin(), taken.end());
      break;
    }
  }
  int min_y = cells[0].first, min_x = cells[0].second;
  for (const auto& [y, x] : cells) {
    min_y = std::min(min_y, y);
    min_x = std::min(min_x, x);
  }
  for (auto& [y, x] : cells) {
    y -= min_y;
    x -= min_x;
  }
  return cells;
}

enum class DefectLook { bright, dark, colour, texture };
constexpr DefectLook kLooks[] = {DefectLook::bright, DefectLook::dark, DefectLook::colour, DefectLook::texture};

ImageSample make_anomaly(const GenSpec& spec, const FamilyParams& f, Rng& rng, std::string id) {
  Tensor img = render_normal(spec, f, rng);
  std::uniform_int_distribution<std::size_t> shape_pick(0, spec.defect.shapes.size() - 1);
  const DefectShape shape = spec.defect.shapes[shape_pick(rng)];
  auto cells = defect_footprint(shape, spec.defect, rng);
  int h = 0, w = 0;
  for (const auto& [y, x] : cells) {
    h = std::max(h, y + 1);
    w = std::max(w, x + 1);
  }
  const int s = spec.image_size;
  std::uniform_int_distribution<int> oy(0, s - h), ox(0, s - w);
  const int y0 = oy(rng), x0 = ox(rng);

  std::uniform_int_distribution<int> look_pick(0, 3);
  const DefectLook look = kLooks[look_pick(rng)];
  std::uniform_int_distribution<int> chan_pick(0, 2);
  const int chan = chan_pick(rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double angle = f.angle + std::numbers::pi / 2.0;
  const double freq = 0.3 + 0.1 * u(rng);
  const double c = spec.defect.contrast;

  Grid mask(s, s);
  for (const auto& [dy, dx] : cells) {
    const int y = y0 + dy, x = x0 + dx;
    mask.at(y, x) = 1.0;
    for (int ch = 0; ch < 3; ++ch) {
      double& v = img.at(ch, y, x);
      switch (look) {
        case DefectLook::bright: v += c; break;
        case DefectLook::dark: v -= c; break;
        case DefectLook::colour: v += (ch == chan ? 1.5 * c : -0.5 * c); break;
        case DefectLook::texture: {
          const double t = x * std::cos(angle) + y * std::sin(angle);
          v = f.base[ch] + c * std::sin(kTau * freq * t);
          break;
        }
      }
    }
  }
  for (double& v : img.values()) v = quantize(v);
  return ImageSample{std::move(id), std::move(img), Label::anomalous, std::move(mask), Origin::generated};
}

std::string make_id(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%04d", prefix, i);
  return buf;
}

}  // namespace

Corpus generate_corpus(const GenSpec& spec) {
  spec.validate();
  const FamilyParams family = make_family(spec);
  auto normal = [&](const char* role, int i) {
    Rng rng(derive_seed(spec.seed, role, static_cast<std::uint64_t>(i)));
    Tensor img = render_normal(spec, family, rng);
    for (double& v : img.values()) v = quantize(v);
    return ImageSample{make_id(role, i), std::move(img), Label::normal, Grid(spec.image_size, spec.image_size),
                       Origin::generated};
  };
  Corpus c;
  for (int i = 0; i < spec.n_train_normal; ++i) c.train_normals.push_back(normal("train", i));
  for (int i = 0; i < spec.n_test_normal; ++i) c.test_normals.push_back(normal("test", i));
  for (int i = 0; i < spec.n_anomalous_pool; ++i) {
    Rng rng(derive_seed(spec.seed, "anomaly", static_cast<std::uint64_t>(i)));
    c.anomalies.push_back(make_anomaly(spec, family, rng, make_id("anomaly", i)));
  }
  return c;
}

FuadSplit::FuadSplit(std::vector<ImageSample> train, std::vector<ImageSample> test, double r_noise, Setting setting,
                     std::uint64_t seed, std::vector<std::string> injected_ids)
    : train_(std::move(train)),
      test_(std::move(test)),
      r_noise_(r_noise),
      setting_(setting),
      seed_(seed),
      injected_ids_(std::move(injected_ids)) {
  auto check_unique = [](const std::vector<ImageSample>& v, const char* what) {
    std::set<std::string> seen;
    for (const auto& s : v) {
      if (!seen.insert(s.id).second) throw InputError(std::string("duplicate ") + what + " id: " + s.id);
    }
  };
  check_unique(train_, "train");
  check_unique(test_, "test");
}

std::size_t injection_count(std::size_t n_normal, double r_noise) {
  if (r_noise < 0.0 || r_noise >= 0.5) throw ConfigError("r_noise must lie in [0, 0.5)");
  if (r_noise == 0.0) return 0;
  const double exact = r_noise * static_cast<double>(n_normal) / (1.0 - r_noise);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(exact)));
}

FuadSplit build_fuad_split(const std::vector<ImageSample>& normals_train, const std::vector<ImageSample>& normals_test,
                           const std::vector<ImageSample>& anomaly_pool, double r_noise, Setting setting,
                           std::uint64_t seed) {
  const std::size_t a = injection_count(normals_train.size(), r_noise);
  if (a > anomaly_pool.size()) throw CapacityError(a, anomaly_pool.size());

  std::vector<std::size_t> order(anomaly_pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return anomaly_pool[x].id < anomaly_pool[y].id; });
  Rng rng(derive_seed(seed, "inject"));
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<bool> injected(anomaly_pool.size(), false);
  std::vector<std::string> injected_ids;
  std::vector<ImageSample> train = normals_train;
  for (std::size_t k = 0; k < a; ++k) {
    injected[order[k]] = true;
    injected_ids.push_back(anomaly_pool[order[k]].id);
    train.push_back(anomaly_pool[order[k]]);
  }
  std::vector<ImageSample> test = normals_test;
  for (std::size_t i = 0; i < anomaly_pool.size(); ++i) {
    if (setting == Setting::overlap || !injected[i]) test.push_back(anomaly_pool[i]);
  }
  return FuadSplit(std::move(train), std::move(test), r_noise, setting, seed, std::move(injected_ids));
}

namespace {

std::vector<std::filesystem::path> sorted_files(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::filesystem::path find_mask(const std::filesystem::path& gt_dir, const std::string& stem) {
  for (const auto& p : sorted_files(gt_dir)) {
    if (p.stem().string() == stem + "_mask") return p;
  }
  return {};
}

}  // namespace

MvtecCorpus load_mvtec_layout(const std::filesystem::path& root, int image_size) {
  if (!std::filesystem::is_directory(root / "train" / "good")) {
    throw IngestionError("missing train/good directory under " + root.string());
  }
  const int resize = resize_size_for(image_size);
  MvtecCorpus out;
  for (const auto& p : sorted_files(root / "train" / "good")) {
    out.train.push_back({"train/good/" + p.filename().string(), resize_center_crop(read_image(p), resize, image_size),
                         Label::normal, Grid(image_size, image_size), Origin::ingested});
  }
  std::vector<std::filesystem::path> defect_dirs;
  if (std::filesystem::is_directory(root / "test")) {
    for (const auto& e : std::filesystem::directory_iterator(root / "test")) {
      if (e.is_directory()) defect_dirs.push_back(e.path());
    }
  }
  std::sort(defect_dirs.begin(), defect_dirs.end());
  for (const auto& dir : defect_dirs) {
    const std::string defect = dir.filename().string();
    for (const auto& p : sorted_files(dir)) {
      ImageSample s{"test/" + defect + "/" + p.filename().string(),
                    resize_center_crop(read_image(p), resize, image_size), Label::normal, Grid(image_size, image_size),
                    Origin::ingested};
      if (defect != "good") {
        const auto mask_path = find_mask(root / "ground_truth" / defect, p.stem().string());
        if (mask_path.empty()) {
          throw IngestionError("missing ground-truth mask for " + p.string() + " (expected " +
                               (root / "ground_truth" / defect / (p.stem().string() + "_mask.*")).string() + ")");
        }
        s.label = Label::anomalous;
        s.mask = resize_center_crop_mask(read_mask(mask_path), resize, image_size);
      }
      out.test.push_back(std::move(s));
    }
  }
  return out;
}

namespace {

void save_group(const std::vector<ImageSample>& group, const std::string& role, const std::filesystem::path& dir,
                std::ofstream& manifest) {
  for (const auto& s : group) {
    const std::string image = "images/" + s.id + ".png";
    std::string mask = "-";
    write_png(dir / image, s.pixels);
    if (s.label == Label::anomalous) {
      mask = "masks/" + s.id + "_mask.png";
      write_gray_png(dir / mask, s.mask, 0.0, 1.0);
    }
    manifest << s.id << '\t' << to_string(s.label) << '\t' << mask << '\t' << to_string(s.origin) << '\t' << role
             << '\t' << image << '\n';
  }
}

}  // namespace

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.tsv", std::ios::trunc);
  if (!manifest) throw Error("cannot write manifest in " + dir.string());
  manifest << "id\tlabel\tmask\torigin\trole\timage\n";
  save_group(corpus.train_normals, "train_normal", dir, manifest);
  save_group(corpus.test_normals, "test_normal", dir, manifest);
  save_group(corpus.anomalies, "anomaly_pool", dir, manifest);
}

Corpus load_corpus(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.tsv");
  if (!manifest) throw IngestionError("missing manifest: " + (dir / "manifest.tsv").string());
  std::string line;
  std::getline(manifest, line);
  Corpus c;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id, label, mask, origin, role, image;
    std::getline(row, id, '\t');
    std::getline(row, label, '\t');
    std::getline(row, mask, '\t');
    std::getline(row, origin, '\t');
    std::getline(row, role, '\t');
    std::getline(row, image, '\t');
    ImageSample s{id, read_image(dir / image), parse_label(label), Grid(), parse_origin(origin)};
    s.mask = mask == "-" ? Grid(s.pixels.height(), s.pixels.width()) : read_mask(dir / mask);
    validate_sample(s);
    if (role == "train_normal") {
      c.train_normals.push_back(std::move(s));
    } else if (role == "test_normal") {
      c.test_normals.push_back(std::move(s));
    } else if (role == "anomaly_pool") {
      c.anomalies.push_back(std::move(s));
    } else {
      throw IngestionError("manifest: unknown role '" + role + "' for " + id);
    }
  }
  return c;
}

}  // namespace fuad
