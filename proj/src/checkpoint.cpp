#include "fuad/checkpoint.hpp"

#include <bit>
#include <fstream>

#include "fuad/error.hpp"

namespace fuad {

static_assert(std::endian::native == std::endian::little, "container format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'F', 'U', 'A', 'D', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ofstream& out, const std::string& s) {
  put(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw StateError("truncated container: " + path.string());
  return v;
}

std::string get_string(std::ifstream& in, const std::filesystem::path& path) {
  const auto n = get<std::uint32_t>(in, path);
  if (n > (1U << 20)) throw StateError("corrupt container string length: " + path.string());
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw StateError("truncated container: " + path.string());
  return s;
}

}  // namespace

const NamedArray& ArrayContainer::find(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw StateError("container has no array named '" + name + "'");
}

void write_container(const std::filesystem::path& path, const ArrayContainer& c) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StateError("cannot write container: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put(out, c.version);
  put_string(out, c.config_digest);
  put(out, c.seed);
  put(out, static_cast<std::uint32_t>(c.arrays.size()));
  for (const auto& a : c.arrays) {
    std::int64_t expected = 1;
    for (auto d : a.shape) expected *= d;
    if (expected != static_cast<std::int64_t>(a.values.size())) {
      throw StateError("array '" + a.name + "' shape does not match its value count");
    }
    put_string(out, a.name);
    put(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) put(out, d);
    out.write(reinterpret_cast<const char*>(a.values.data()),
              static_cast<std::streamsize>(a.values.size() * sizeof(double)));
  }
  if (!out) throw StateError("failed writing container: " + path.string());
}

ArrayContainer read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StateError("cannot open container: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(std::begin(magic), std::end(magic), std::begin(kMagic))) {
    throw StateError("not a checkpoint container: " + path.string());
  }
  ArrayContainer c;
  c.version = get<std::uint32_t>(in, path);
  if (c.version != kContainerVersion) {
    throw StateError("unsupported container version " + std::to_string(c.version) + ": " + path.string());
  }
  c.config_digest = get_string(in, path);
  c.seed = get<std::uint64_t>(in, path);
  const auto count = get<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = get_string(in, path);
    const auto ndims = get<std::uint32_t>(in, path);
    std::int64_t n = 1;
    for (std::uint32_t d = 0; d < ndims; ++d) {
      a.shape.push_back(get<std::int64_t>(in, path));
      n *= a.shape.back();
    }
    if (n < 0 || n > (std::int64_t{1} << 32)) throw StateError("corrupt array shape in " + path.string());
    a.values.resize(static_cast<std::size_t>(n));
    in.read(reinterpret_cast<char*>(a.values.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw StateError("truncated container: " + path.string());
    c.arrays.push_back(std::move(a));
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const StudentArch& arch, const StudentParams& params,
                     std::uint64_t seed) {
  arch.check_params(params);
  ArrayContainer c;
  c.config_digest = arch.config().digest();
  c.seed = seed;
  for (const auto& b : arch.blocks()) {
    c.arrays.push_back({b.name, b.shape,
                        std::vector<double>(params.values.begin() + static_cast<std::ptrdiff_t>(b.offset),
                                            params.values.begin() + static_cast<std::ptrdiff_t>(b.offset + b.count))});
  }
  write_container(path, c);
}

StudentParams load_checkpoint(const std::filesystem::path& path, const StudentArch& arch) {
  const ArrayContainer c = read_container(path);
  if (c.config_digest != arch.config().digest()) {
    throw StateError("checkpoint config digest " + c.config_digest + " does not match model config " +
                     arch.config().digest() + ": " + path.string());
  }
  StudentParams p{std::vector<double>(arch.parameter_count(), 0.0), arch.layout_digest()};
  for (const auto& b : arch.blocks()) {
    const auto& a = c.find(b.name);
    if (a.shape != b.shape) throw StateError("checkpoint array '" + b.name + "' has the wrong shape");
    std::copy(a.values.begin(), a.values.end(), p.values.begin() + static_cast<std::ptrdiff_t>(b.offset));
  }
  return p;
}

}  // namespace fuad
