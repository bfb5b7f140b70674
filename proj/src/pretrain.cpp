#include "lobg/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "lobg/errors.hpp"
#include "lobg/ops.hpp"
#include "lobg/optim.hpp"

namespace lobg {

Tensor contrastive_loss(const Tensor& image_emb, const Tensor& class_emb, const std::vector<std::size_t>& labels,
                        double temperature) {
  const std::size_t B = image_emb.rows(), C = class_emb.rows();
  auto i2t = cross_entropy_loss(predict(image_emb, class_emb, temperature), labels);

  std::vector<std::size_t> present;
  for (std::size_t c = 0; c < C; ++c) {
    if (std::find(labels.begin(), labels.end(), c) != labels.end()) present.push_back(c);
  }
  auto q = predict(gather_rows(class_emb, present), image_emb, temperature);  // [P, B]
  std::vector<double> target(present.size() * B, 0.0);
  for (std::size_t p = 0; p < present.size(); ++p) {
    const auto n = static_cast<double>(std::count(labels.begin(), labels.end(), present[p]));
    for (std::size_t b = 0; b < B; ++b)
      if (labels[b] == present[p]) target[p * B + b] = 1.0 / n;
  }
  auto t2i = scale(sum(mul(log_floor(q, 1e-300), Tensor::constant({present.size(), B}, std::move(target)))),
                   -1.0 / static_cast<double>(present.size()));
  return scale(add(i2t, t2i), 0.5);
}

double zero_shot_accuracy(const DualEncoder& model, const PromptSet* prompts, const std::vector<ClassEntry>& classes,
                          const std::vector<std::size_t>& class_ids, const std::vector<Sample>& samples) {
  if (samples.empty()) throw InvalidInput("accuracy over an empty sample set");
  std::vector<TokenSeq> seqs;
  for (auto id : class_ids) seqs.push_back(classes.at(id).tokens);
  const Tensor V = model.encode_texts(seqs, prompts).detach();
  std::size_t correct = 0;
  for (const auto& s : samples) {
    auto p = predict(model.encode_image(s.image, prompts).embedding.detach(), V, model.config().temperature);
    const auto pv = p.values();
    const auto best = static_cast<std::size_t>(std::max_element(pv.begin(), pv.end()) - pv.begin());
    if (class_ids[best] == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

DualEncoder pretrain_teacher(const std::vector<Sample>& data, const std::vector<ClassEntry>& classes,
                             const ModelConfig& cfg, const PretrainOptions& opts, PretrainReport* report) {
  if (data.empty()) throw InvalidInput("pretrain_teacher: empty dataset");
  if (opts.batch_size < 2) throw InvalidParameter("pretrain.batch_size must be >= 2");
  std::vector<TokenSeq> seqs;
  std::vector<std::size_t> all_ids;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    seqs.push_back(classes[c].tokens);
    all_ids.push_back(c);
  }
  DualEncoder model(cfg, opts.seed);
  Adam opt(model.trainable_parameters(), opts.lr);
  std::mt19937_64 rng(opts.seed ^ 0x5eedull);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  const std::size_t steps_per_epoch = (data.size() + opts.batch_size - 1) / opts.batch_size;
  const double total_steps = static_cast<double>(steps_per_epoch * opts.max_epochs);
  std::size_t global_step = 0;
  auto lr_at = [&](std::size_t step) {
    if (!opts.cosine_schedule) return opts.lr;
    const double t = static_cast<double>(step);
    if (step < steps_per_epoch) return opts.lr * (t + 1.0) / static_cast<double>(steps_per_epoch);
    return opts.lr * 0.5 * (1.0 + std::cos(M_PI * std::min(1.0, t / total_steps)));
  };

  PretrainReport rep;
  for (std::size_t epoch = 0; epoch < opts.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t steps = 0, correct = 0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t end = std::min(order.size(), start + opts.batch_size);
      if (end - start < 2) break;
      std::vector<Tensor> z;
      std::vector<std::size_t> labels;
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = data[order[i]];
        z.push_back(model.encode_image(s.image).embedding);
        labels.push_back(s.label);
      }
      auto Z = concat_rows(z);
      auto V = model.encode_texts(seqs);
      auto loss = contrastive_loss(Z, V, labels, cfg.temperature);
      if (!std::isfinite(loss.item())) throw TrainingFailed("pretraining loss became non-finite");
      {
        auto p = predict(Z.detach(), V.detach(), cfg.temperature);
        for (std::size_t b = 0; b < labels.size(); ++b) {
          std::size_t best = 0;
          for (std::size_t c = 1; c < classes.size(); ++c)
            if (p.at(b, c) > p.at(b, best)) best = c;
          if (best == labels[b]) ++correct;
        }
      }
      backward(loss);
      opt.set_learning_rate(lr_at(global_step++));
      opt.step();
      loss_sum += loss.item();
      ++steps;
    }
    rep.epochs = epoch + 1;
    rep.epoch_loss.push_back(loss_sum / static_cast<double>(std::max<std::size_t>(steps, 1)));
    // Running accuracy lags the weights; confirm with a clean pass before stopping.
    double acc = static_cast<double>(correct) / static_cast<double>(data.size());
    if (acc >= opts.target_accuracy) acc = zero_shot_accuracy(model, nullptr, classes, all_ids, data);
    rep.train_accuracy = acc;
    if (opts.on_epoch) opts.on_epoch(epoch, rep.epoch_loss.back(), acc);
    if (acc >= opts.target_accuracy) {
      model.freeze();
      if (report) *report = rep;
      return model;
    }
  }
  if (report) *report = rep;
  throw TrainingFailed("teacher pretraining reached train accuracy " + std::to_string(rep.train_accuracy) +
                       " after " + std::to_string(rep.epochs) + " epochs, below the " +
                       std::to_string(opts.target_accuracy) + " floor");
}

}  // namespace lobg
