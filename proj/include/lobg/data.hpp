#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lobg/image.hpp"
#include "lobg/model.hpp"

namespace lobg {

struct DatasetConfig {
  std::size_t num_classes = 8;
  std::size_t image_size = 32;
  std::size_t channels = 3;
  // Base-class training samples per class (few-shot).
  std::size_t shots = 16;
  std::size_t test_per_class = 50;
  // Probability that a base training image carries its class's confound.
  double rho = 0.95;
  double noise = 0.05;
  // Side length in pixels of the texture patch.
  std::size_t confound_size = 4;

  void validate() const;
  bool operator==(const DatasetConfig&) const = default;
};

struct ClassEntry {
  std::string name;
  TokenSeq tokens;  // (template-token, class-token)
};

struct Sample {
  Image image;
  std::size_t label = 0;     // coarse class id
  std::size_t confound = 0;  // texture id, kNoConfound for a clean image
};

constexpr std::size_t kNoConfound = static_cast<std::size_t>(-1);

struct B2NDataset {
  DatasetConfig config;
  std::uint64_t seed = 0;
  std::vector<ClassEntry> classes;
  std::vector<std::size_t> base;   // class ids
  std::vector<std::size_t> novel;  // class ids
  std::vector<Sample> train;       // base classes only, confounded at rho
  std::vector<Sample> test_base;   // confound independent of label
  std::vector<Sample> test_novel;  // confound independent of label

  std::size_t num_confounds() const { return base.size(); }
  std::vector<TokenSeq> class_tokens(const std::vector<std::size_t>& ids) const;
};

constexpr std::size_t kTemplateToken = 1;
constexpr std::size_t kFirstClassToken = 2;

std::vector<ClassEntry> make_class_table(std::size_t num_classes);

// Even split: the first half of the class ids are base, the rest novel.
// Deterministic in (config, seed). Throws InvalidParameter for rho outside
// [0, 1] or an odd / too small class count.
B2NDataset generate_b2n(const DatasetConfig& cfg, std::uint64_t seed);

// All classes, with textures drawn independently of the label.
std::vector<Sample> generate_pretrain_set(const DatasetConfig& cfg, std::size_t per_class, std::uint64_t seed);

// Writes one raw little-endian float64 file per image plus manifest.json.
void dump_dataset(const B2NDataset& ds, const std::filesystem::path& dir);

}  // namespace lobg
