#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fuad/student.hpp"

namespace fuad {

inline constexpr std::uint32_t kContainerVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<double> values;
};

// Versioned binary container: magic, format version, config digest, seed,
// then named arrays with their shapes. Doubles are stored little-endian.
struct ArrayContainer {
  std::uint32_t version = kContainerVersion;
  std::string config_digest;
  std::uint64_t seed = 0;
  std::vector<NamedArray> arrays;

  const NamedArray& find(const std::string& name) const;
};

void write_container(const std::filesystem::path& path, const ArrayContainer& container);
ArrayContainer read_container(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const StudentArch& arch, const StudentParams& params,
                     std::uint64_t seed);
// Validates the stored config digest against arch; throws StateError on mismatch.
StudentParams load_checkpoint(const std::filesystem::path& path, const StudentArch& arch);

}  // namespace fuad
