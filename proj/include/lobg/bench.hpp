#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lobg/data.hpp"
#include "lobg/model.hpp"

namespace lobg::bench {

struct LossWeights {
  double lambda = 1.0;  // HLD weight
  double gamma = 3.0;   // STP weight

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

struct TrainOptions {
  bool fif = true;
  bool stp = true;
  bool hld = true;
  double mask_threshold = 30.0;  // q, percent of patches erased
  double fif_probability = 0.5;  // chance a batch is masked

  std::string optimizer = "sgd";
  double lr = 2.5e-3;
  std::size_t epochs = 20;
  std::size_t batch_size = 4;
  std::size_t visual_tokens = 4;
  std::size_t text_tokens = 4;
  double prompt_init_std = 0.02;

  // Gaussian layer weighting for STP. A negative centre means the last layer.
  double layer_sigma = 1.0;
  double layer_center = -1.0;
  double layer_jitter = 0.5;
  std::size_t triplet_samples = 256;

  // When set, a non-finite loss writes the offending batch here.
  std::filesystem::path dump_dir;

  void validate() const;
  bool operator==(const TrainOptions&) const = default;
};

struct LossParts {
  double cls = 0.0;
  double hld = 0.0;  // unweighted
  double stp = 0.0;  // unweighted
  double total = 0.0;
};

struct MetricsRecord {
  std::string config_hash;
  std::uint64_t seed = 0;
  double q = 0.0;
  double lambda = 0.0;
  double gamma = 0.0;
  bool fif = false, stp = false, hld = false;
  double base_acc = 0.0;
  double novel_acc = 0.0;
  double hm = 0.0;
  std::size_t epochs = 0;
  double wall_ms = 0.0;
  std::vector<LossParts> epoch_losses;  // per-epoch means
  std::string error;                    // non-empty when the run failed
};

struct StepInfo {
  std::size_t epoch = 0;
  std::size_t step = 0;
  LossParts parts;
  std::size_t skipped_triplets = 0;
};
using StepObserver = std::function<void(const StepInfo&)>;

struct TrainResult {
  PromptSet initial;  // snapshot before the first update
  PromptSet prompts;
  std::vector<LossParts> epoch_losses;
};

// Tunes a fresh PromptSet against the frozen `model`, which doubles as the
// teacher (bare) and the student (with prompts). Throws InvalidParameter if
// the model is not frozen, TrainingFailed on a non-finite loss or if the
// teacher output changes.
TrainResult train_prompts(const DualEncoder& model, const B2NDataset& data, const LossWeights& weights,
                          const TrainOptions& opts, std::uint64_t seed, const StepObserver& observer = {});

// Top-1 accuracy over `class_ids`; never masks. Throws InvalidInput on an
// empty sample set.
double evaluate(const DualEncoder& model, const PromptSet* prompts, const std::vector<ClassEntry>& classes,
                const std::vector<std::size_t>& class_ids, const std::vector<Sample>& samples);

// 2ab / (a + b); 0 when either is 0.
double harmonic_mean(double a, double b);

// One cell of an experiment: everything that varies per run except the seed.
struct CellSpec {
  std::string name;
  LossWeights weights;
  TrainOptions train;
};

// Generates the seed's dataset, trains, evaluates. Failures are caught and
// reported in MetricsRecord::error. The tuned prompts go to `prompts_out`
// when given.
MetricsRecord run_cell(const DualEncoder& teacher, const DatasetConfig& data_cfg, const CellSpec& cell,
                       std::uint64_t seed, const std::string& config_hash, PromptSet* prompts_out = nullptr);

struct AblationResult {
  std::vector<CellSpec> cells;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricsRecord> records;  // cell-major, then seed, in input order

  const MetricsRecord& at(std::size_t cell, std::size_t seed) const { return records[cell * seeds.size() + seed]; }
};

// Runs every (cell, seed) pair on up to `threads` workers. Ordering of the
// result is independent of scheduling.
AblationResult run_ablation(const DualEncoder& teacher, const DatasetConfig& data_cfg, const std::vector<CellSpec>& cells,
                            const std::vector<std::uint64_t>& seeds, std::size_t threads,
                            const std::function<std::string(const CellSpec&)>& hash_fn);

// Baseline, +STP, +STP+HLD, +STP+HLD+FIF, and +HLD alone for directional
// comparisons. Disabled components also get zero loss weight.
std::vector<CellSpec> component_grid(const CellSpec& full);

struct Summary {
  std::string name;
  std::size_t n = 0;
  double base_mean = 0, base_std = 0;
  double novel_mean = 0, novel_std = 0;
  double hm_mean = 0, hm_std = 0;
};
std::vector<Summary> summarize(const AblationResult& result);

// CSV with the fixed header below; wall_ms is the only timing column.
extern const char* const kCsvHeader;
std::string csv_row(const MetricsRecord& r);
// Same row without wall_ms, for determinism comparisons.
std::string csv_row_untimed(const MetricsRecord& r);
void write_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& records);

}  // namespace lobg::bench
