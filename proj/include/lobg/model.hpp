#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lobg/image.hpp"
#include "lobg/tensor.hpp"

namespace lobg {

using TokenSeq = std::vector<std::size_t>;

struct ModelConfig {
  std::size_t embed_dim = 64;
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t patch_size = 4;
  std::size_t image_size = 32;
  std::size_t channels = 3;
  std::size_t vocab_size = 64;
  std::size_t max_text_len = 8;
  std::size_t mlp_ratio = 4;
  // Number of leading layers that receive fresh prompt tokens.
  std::size_t prompt_depth = 2;
  double temperature = 0.07;

  // Throws InvalidParameter naming the offending field.
  void validate() const;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t patch_dim() const { return channels * patch_size * patch_size; }

  bool operator==(const ModelConfig&) const = default;
};

// Learnable prompt tokens. Each of the first prompt_depth layers owns an
// independent block of tokens (deep prompting); K or L may be zero.
struct PromptSet {
  std::vector<Tensor> visual;   // prompt_depth x [K, d]
  std::vector<Tensor> textual;  // prompt_depth x [L, d]

  static PromptSet init(const ModelConfig& cfg, std::size_t visual_tokens, std::size_t text_tokens,
                        std::mt19937_64& rng, double stddev = 0.02);
  static PromptSet empty(const ModelConfig& cfg) {
    std::mt19937_64 rng(0);
    return init(cfg, 0, 0, rng);
  }

  std::size_t visual_tokens() const { return visual.empty() ? 0 : visual.front().rows(); }
  std::size_t text_tokens() const { return textual.empty() ? 0 : textual.front().rows(); }
  std::vector<Tensor> parameters() const;
  // Deep copy (fresh leaves, same values).
  PromptSet clone() const;
  std::vector<double> flat_values() const;
};

// Everything one image pass exposes to the losses.
struct FeatureStack {
  std::vector<Tensor> layer_features;  // per block, class-token state [1, d]
  Tensor embedding;                    // projected final feature [1, d]
  // Per block: heads x T x T attention probabilities.
  std::vector<std::vector<double>> attention;
  std::size_t tokens = 0;
  std::size_t prompt_tokens = 0;
  std::size_t heads = 0;
};

class DualEncoder {
 public:
  DualEncoder(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  // Sequence is [cls, P_v, patches]; prompts == nullptr runs the bare encoder.
  FeatureStack encode_image(const Image& x, const PromptSet* prompts = nullptr) const;
  // Sequence is [cls, P_l, tokens]; returns [1, d].
  Tensor encode_text(const TokenSeq& tokens, const PromptSet* prompts = nullptr) const;
  // Stacks encode_text over several sequences into [N, d].
  Tensor encode_texts(const std::vector<TokenSeq>& seqs, const PromptSet* prompts = nullptr) const;

  void freeze();
  bool frozen() const { return frozen_; }

  // Throws FrozenModelError once frozen.
  std::vector<Tensor> trainable_parameters() const;
  const std::vector<std::pair<std::string, Tensor>>& named_parameters() const { return params_; }
  std::size_t parameter_count() const;

  void save(const std::filesystem::path& path) const;
  // Validates every tensor against the stored config. The loaded model is
  // frozen iff it was frozen when saved.
  static DualEncoder load(const std::filesystem::path& path);

 private:
  struct Block {
    Tensor ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o, ln2_g, ln2_b, w_fc1, b_fc1, w_fc2, b_fc2;
  };
  struct Tower {
    std::vector<Block> blocks;
    Tensor cls, pos, ln_g, ln_b, proj;
  };

  struct Blank {};
  DualEncoder(const ModelConfig& cfg, Blank);
  void build(std::mt19937_64* rng);
  Tensor& add_param(const std::string& name, Shape shape, std::mt19937_64* rng, double stddev, double fill = 0.0);
  void build_tower(Tower& t, const std::string& prefix, std::size_t positions, std::mt19937_64* rng);
  Tensor run_block(const Block& b, const Tensor& x, std::vector<double>* attn_out) const;
  Tensor patchify(const Image& x) const;

  ModelConfig cfg_;
  bool frozen_ = false;
  std::vector<std::pair<std::string, Tensor>> params_;
  Tower visual_, text_;
  Tensor patch_w_, patch_b_, tok_emb_;
};

// p[b, n] = softmax_n(sim(z_b, v_n) / tau). Throws DegenerateVector on a
// zero-norm row in either argument.
Tensor predict(const Tensor& z, const Tensor& class_embeddings, double temperature);

// -(1/B) sum_b log p[b, y_b]. Throws InvalidInput on out-of-range labels.
Tensor cross_entropy_loss(const Tensor& probs, const std::vector<std::size_t>& labels);

// FNV-1a over the embeddings of a probe batch; used to assert the teacher
// never changes.
std::uint64_t probe_hash(const DualEncoder& model, const std::vector<Image>& probe);

void save_prompts(const PromptSet& prompts, const ModelConfig& cfg, const std::filesystem::path& path);
PromptSet load_prompts(const ModelConfig& cfg, const std::filesystem::path& path);

}  // namespace lobg
