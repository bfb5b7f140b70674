#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lobg/data.hpp"
#include "lobg/model.hpp"

namespace lobg {

struct PretrainOptions {
  std::size_t max_epochs = 30;
  std::size_t batch_size = 16;
  double lr = 2e-3;
  // Linear warmup over the first epoch, then cosine decay to 0 at max_epochs.
  bool cosine_schedule = true;
  double target_accuracy = 0.9;
  std::uint64_t seed = 0;
  // Called once per epoch with (epoch, mean loss, train accuracy).
  std::function<void(std::size_t, double, double)> on_epoch;
};

struct PretrainReport {
  std::size_t epochs = 0;
  double train_accuracy = 0.0;
  std::vector<double> epoch_loss;
};

// Symmetric image<->text contrastive loss over a batch: image-to-class cross
// entropy against every class, plus class-to-image cross entropy for each
// class present in the batch (uniform target over that class's images).
Tensor contrastive_loss(const Tensor& image_emb, const Tensor& class_emb, const std::vector<std::size_t>& labels,
                        double temperature);

// Trains every weight of a fresh encoder until train accuracy reaches
// target_accuracy, then freezes it. Throws TrainingFailed when max_epochs
// pass without reaching the floor.
DualEncoder pretrain_teacher(const std::vector<Sample>& data, const std::vector<ClassEntry>& classes,
                             const ModelConfig& cfg, const PretrainOptions& opts, PretrainReport* report = nullptr);

// Top-1 accuracy of zero-shot prediction over `class_ids` (labels are class ids).
double zero_shot_accuracy(const DualEncoder& model, const PromptSet* prompts, const std::vector<ClassEntry>& classes,
                          const std::vector<std::size_t>& class_ids, const std::vector<Sample>& samples);

}  // namespace lobg
