#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lobg/bench.hpp"
#include "lobg/data.hpp"
#include "lobg/model.hpp"
#include "lobg/pretrain.hpp"

namespace lobg {

struct TeacherSettings {
  std::size_t per_class = 100;
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  double lr = 2e-3;
  double target_accuracy = 0.99;
  std::uint64_t seed = 0;

  PretrainOptions options() const;
  bool operator==(const TeacherSettings&) const = default;
};

// Everything a run needs. Serialized as a flat INI file with the sections
// [model], [data], [teacher], [train], [loss] and [run].
struct RunConfig {
  ModelConfig model;
  DatasetConfig data;
  TeacherSettings teacher;
  bench::TrainOptions train;
  bench::LossWeights weights;

  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::string output_dir;          // empty: $LOBG_OUT or ./runs
  // Loaded if present, written after pretraining otherwise. Empty: a file in
  // the output directory keyed by teacher_hash().
  std::string teacher_checkpoint;
  std::size_t threads = 1;

  // Throws InvalidParameter naming the offending key.
  void validate() const;

  // Canonical text; parse(to_ini()) round-trips.
  std::string to_ini() const;
  // Throws InvalidParameter on unknown keys or unparsable values, naming the key.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  // FNV-1a over every section except [run]; identifies the experiment.
  std::string hash() const;
  // Hash of the experiment as run with a different cell.
  std::string hash_for(const bench::CellSpec& cell) const;

  // FNV-1a over [model], [data] and [teacher]; identifies a pretrained teacher.
  std::string teacher_hash() const;
  std::filesystem::path resolved_teacher_checkpoint() const;

  // The data section with image geometry taken from the model.
  DatasetConfig dataset() const;

  bench::CellSpec cell(const std::string& name = "run") const;
  std::filesystem::path resolved_output_dir() const;
};

// Loads the checkpoint at cfg.resolved_teacher_checkpoint() if it exists;
// otherwise pretrains on a fresh all-class set and saves it there.
DualEncoder obtain_teacher(const RunConfig& cfg, PretrainReport* report = nullptr);

}  // namespace lobg
