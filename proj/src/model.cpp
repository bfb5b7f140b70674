#include "lobg/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "lobg/errors.hpp"
#include "lobg/ops.hpp"

namespace lobg {

using nlohmann::json;

namespace {

constexpr const char* kCheckpointFormat = "lobg-checkpoint";
constexpr const char* kPromptFormat = "lobg-prompts";
constexpr int kFormatVersion = 1;

std::vector<double> normal_values(std::size_t n, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

json config_to_json(const ModelConfig& c) {
  return json{{"embed_dim", c.embed_dim},   {"layers", c.layers},
              {"heads", c.heads},           {"patch_size", c.patch_size},
              {"image_size", c.image_size}, {"channels", c.channels},
              {"vocab_size", c.vocab_size}, {"max_text_len", c.max_text_len},
              {"mlp_ratio", c.mlp_ratio},   {"prompt_depth", c.prompt_depth},
              {"temperature", c.temperature}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.patch_size = j.at("patch_size").get<std::size_t>();
  c.image_size = j.at("image_size").get<std::size_t>();
  c.channels = j.at("channels").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_text_len = j.at("max_text_len").get<std::size_t>();
  c.mlp_ratio = j.at("mlp_ratio").get<std::size_t>();
  c.prompt_depth = j.at("prompt_depth").get<std::size_t>();
  c.temperature = j.at("temperature").get<double>();
  c.validate();
  return c;
}

json tensor_to_json(const Tensor& t) {
  return json{{"shape", t.shape()}, {"data", std::vector<double>(t.values().begin(), t.values().end())}};
}

void fill_from_json(Tensor& t, const std::string& name, const json& j) {
  const auto shape = j.at("shape").get<Shape>();
  if (shape != t.shape()) {
    throw InvalidInput("checkpoint tensor '" + name + "' has shape " + shape_str(shape) + ", config expects " +
                       shape_str(t.shape()));
  }
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != t.numel()) throw InvalidInput("checkpoint tensor '" + name + "' has wrong element count");
  std::copy(data.begin(), data.end(), t.mutable_values().begin());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidInput("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << j.dump() << '\n';
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw InvalidParameter("model." + key + ": " + why);
  };
  if (embed_dim == 0) fail("embed_dim", "must be > 0");
  if (layers == 0) fail("layers", "must be > 0");
  if (heads == 0) fail("heads", "must be > 0");
  if (embed_dim % heads != 0) fail("heads", "embed_dim must be divisible by heads");
  if (patch_size == 0) fail("patch_size", "must be > 0");
  if (image_size == 0 || image_size % patch_size != 0) fail("image_size", "must be a positive multiple of patch_size");
  if (channels == 0) fail("channels", "must be > 0");
  if (vocab_size == 0) fail("vocab_size", "must be > 0");
  if (max_text_len == 0) fail("max_text_len", "must be > 0");
  if (mlp_ratio == 0) fail("mlp_ratio", "must be > 0");
  if (prompt_depth > layers) fail("prompt_depth", "must not exceed layers");
  if (!(temperature > 0)) fail("temperature", "must be > 0");
}

PromptSet PromptSet::init(const ModelConfig& cfg, std::size_t visual_tokens, std::size_t text_tokens,
                          std::mt19937_64& rng, double stddev) {
  PromptSet p;
  const std::size_t d = cfg.embed_dim;
  for (std::size_t l = 0; l < cfg.prompt_depth; ++l) {
    p.visual.push_back(Tensor::parameter({visual_tokens, d}, normal_values(visual_tokens * d, rng, stddev)));
    p.textual.push_back(Tensor::parameter({text_tokens, d}, normal_values(text_tokens * d, rng, stddev)));
  }
  return p;
}

std::vector<Tensor> PromptSet::parameters() const {
  std::vector<Tensor> out;
  for (const auto& t : visual)
    if (t.numel() > 0) out.push_back(t);
  for (const auto& t : textual)
    if (t.numel() > 0) out.push_back(t);
  return out;
}

PromptSet PromptSet::clone() const {
  PromptSet p;
  auto copy = [](const Tensor& t) {
    return Tensor::parameter(t.shape(), std::vector<double>(t.values().begin(), t.values().end()));
  };
  for (const auto& t : visual) p.visual.push_back(copy(t));
  for (const auto& t : textual) p.textual.push_back(copy(t));
  return p;
}

std::vector<double> PromptSet::flat_values() const {
  std::vector<double> out;
  for (const auto& t : visual) out.insert(out.end(), t.values().begin(), t.values().end());
  for (const auto& t : textual) out.insert(out.end(), t.values().begin(), t.values().end());
  return out;
}

DualEncoder::DualEncoder(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  build(&rng);
}

DualEncoder::DualEncoder(const ModelConfig& cfg, Blank) : cfg_(cfg) {
  cfg_.validate();
  build(nullptr);
}

Tensor& DualEncoder::add_param(const std::string& name, Shape shape, std::mt19937_64* rng, double stddev,
                               double fill) {
  const auto n = shape_numel(shape);
  std::vector<double> v = (rng && stddev > 0) ? normal_values(n, *rng, stddev) : std::vector<double>(n, fill);
  params_.emplace_back(name, Tensor::parameter(std::move(shape), std::move(v)));
  return params_.back().second;
}

void DualEncoder::build_tower(Tower& t, const std::string& prefix, std::size_t positions, std::mt19937_64* rng) {
  const std::size_t d = cfg_.embed_dim, hid = d * cfg_.mlp_ratio;
  const double wd = 1.0 / std::sqrt(static_cast<double>(d));
  const double wh = 1.0 / std::sqrt(static_cast<double>(hid));
  // Residual branches are damped so the stream stays O(1) with depth.
  const double res = 1.0 / std::sqrt(2.0 * static_cast<double>(cfg_.layers));
  t.cls = add_param(prefix + ".cls", {1, d}, rng, 0.5);
  t.pos = add_param(prefix + ".pos", {positions, d}, rng, 0.02);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string p = prefix + ".blocks." + std::to_string(l) + ".";
    Block b;
    b.ln1_g = add_param(p + "ln1_g", {d}, nullptr, 0, 1.0);
    b.ln1_b = add_param(p + "ln1_b", {d}, nullptr, 0, 0.0);
    b.w_qkv = add_param(p + "w_qkv", {d, 3 * d}, rng, wd);
    b.b_qkv = add_param(p + "b_qkv", {3 * d}, nullptr, 0, 0.0);
    b.w_o = add_param(p + "w_o", {d, d}, rng, wd * res);
    b.b_o = add_param(p + "b_o", {d}, nullptr, 0, 0.0);
    b.ln2_g = add_param(p + "ln2_g", {d}, nullptr, 0, 1.0);
    b.ln2_b = add_param(p + "ln2_b", {d}, nullptr, 0, 0.0);
    b.w_fc1 = add_param(p + "w_fc1", {d, hid}, rng, wd);
    b.b_fc1 = add_param(p + "b_fc1", {hid}, nullptr, 0, 0.0);
    b.w_fc2 = add_param(p + "w_fc2", {hid, d}, rng, wh * res);
    b.b_fc2 = add_param(p + "b_fc2", {d}, nullptr, 0, 0.0);
    t.blocks.push_back(std::move(b));
  }
  t.ln_g = add_param(prefix + ".ln_g", {d}, nullptr, 0, 1.0);
  t.ln_b = add_param(prefix + ".ln_b", {d}, nullptr, 0, 0.0);
  t.proj = add_param(prefix + ".proj", {d, d}, rng, wd);
}

void DualEncoder::build(std::mt19937_64* rng) {
  const std::size_t d = cfg_.embed_dim;
  params_.reserve(64);
  patch_w_ = add_param("visual.patch_w", {cfg_.patch_dim(), d}, rng,
                       1.0 / std::sqrt(static_cast<double>(cfg_.patch_dim())));
  patch_b_ = add_param("visual.patch_b", {d}, nullptr, 0, 0.0);
  build_tower(visual_, "visual", 1 + cfg_.num_patches(), rng);
  tok_emb_ = add_param("text.tok_emb", {cfg_.vocab_size, d}, rng, 1.0);
  build_tower(text_, "text", 1 + cfg_.max_text_len, rng);
}

void DualEncoder::freeze() {
  for (auto& [name, t] : params_) t.set_requires_grad(false);
  frozen_ = true;
}

std::vector<Tensor> DualEncoder::trainable_parameters() const {
  if (frozen_) throw FrozenModelError("model is frozen; its parameters are immutable");
  std::vector<Tensor> out;
  for (const auto& [name, t] : params_) out.push_back(t);
  return out;
}

std::size_t DualEncoder::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

Tensor DualEncoder::run_block(const Block& b, const Tensor& x, std::vector<double>* attn_out) const {
  auto h = layer_norm(x, b.ln1_g, b.ln1_b);
  auto qkv = add_row(matmul(h, b.w_qkv), b.b_qkv);
  auto att = attention(qkv, cfg_.heads);
  if (attn_out) *attn_out = std::move(att.probs);
  auto x1 = add(x, add_row(matmul(att.out, b.w_o), b.b_o));
  auto h2 = layer_norm(x1, b.ln2_g, b.ln2_b);
  auto m = add_row(matmul(gelu(add_row(matmul(h2, b.w_fc1), b.b_fc1)), b.w_fc2), b.b_fc2);
  return add(x1, m);
}

Tensor DualEncoder::patchify(const Image& x) const {
  if (x.channels != cfg_.channels || x.size != cfg_.image_size ||
      x.pixels.size() != cfg_.channels * cfg_.image_size * cfg_.image_size) {
    throw InvalidInput("image must be " + std::to_string(cfg_.channels) + "x" + std::to_string(cfg_.image_size) + "x" +
                       std::to_string(cfg_.image_size));
  }
  const std::size_t g = cfg_.grid(), p = cfg_.patch_size, pd = cfg_.patch_dim();
  std::vector<double> rows(cfg_.num_patches() * pd);
  for (std::size_t gy = 0; gy < g; ++gy)
    for (std::size_t gx = 0; gx < g; ++gx) {
      double* r = rows.data() + (gy * g + gx) * pd;
      std::size_t k = 0;
      for (std::size_t c = 0; c < cfg_.channels; ++c)
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t xx = 0; xx < p; ++xx) r[k++] = x.at(c, gy * p + y, gx * p + xx);
    }
  return Tensor::constant({cfg_.num_patches(), pd}, std::move(rows));
}

FeatureStack DualEncoder::encode_image(const Image& x, const PromptSet* prompts) const {
  const std::size_t np = cfg_.num_patches();
  const std::size_t K = prompts ? prompts->visual_tokens() : 0;
  if (prompts && prompts->visual.size() != cfg_.prompt_depth) {
    throw InvalidInput("prompt set depth does not match model prompt_depth");
  }
  auto patches = add_row(matmul(patchify(x), patch_w_), patch_b_);
  auto tokens = add(patches, slice_rows(visual_.pos, 1, np));
  auto cls = add(visual_.cls, slice_rows(visual_.pos, 0, 1));
  Tensor h = K > 0 ? concat_rows({cls, prompts->visual[0], tokens}) : concat_rows({cls, tokens});

  FeatureStack fs;
  fs.tokens = 1 + K + np;
  fs.prompt_tokens = K;
  fs.heads = cfg_.heads;
  fs.attention.resize(cfg_.layers);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    if (K > 0 && l > 0 && l < cfg_.prompt_depth) {
      h = concat_rows({slice_rows(h, 0, 1), prompts->visual[l], slice_rows(h, 1 + K, np)});
    }
    h = run_block(visual_.blocks[l], h, &fs.attention[l]);
    fs.layer_features.push_back(slice_rows(h, 0, 1));
  }
  fs.embedding = matmul(layer_norm(fs.layer_features.back(), visual_.ln_g, visual_.ln_b), visual_.proj);
  return fs;
}

Tensor DualEncoder::encode_text(const TokenSeq& tokens, const PromptSet* prompts) const {
  if (tokens.empty() || tokens.size() > cfg_.max_text_len) {
    throw InvalidInput("token sequence length must be in [1, " + std::to_string(cfg_.max_text_len) + "]");
  }
  for (auto t : tokens) {
    if (t >= cfg_.vocab_size) throw InvalidInput("unknown token id " + std::to_string(t));
  }
  if (prompts && prompts->textual.size() != cfg_.prompt_depth) {
    throw InvalidInput("prompt set depth does not match model prompt_depth");
  }
  const std::size_t L = prompts ? prompts->text_tokens() : 0;
  const std::size_t n = tokens.size();
  auto emb = add(gather_rows(tok_emb_, tokens), slice_rows(text_.pos, 1, n));
  auto cls = add(text_.cls, slice_rows(text_.pos, 0, 1));
  Tensor h = L > 0 ? concat_rows({cls, prompts->textual[0], emb}) : concat_rows({cls, emb});
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    if (L > 0 && l > 0 && l < cfg_.prompt_depth) {
      h = concat_rows({slice_rows(h, 0, 1), prompts->textual[l], slice_rows(h, 1 + L, n)});
    }
    h = run_block(text_.blocks[l], h, nullptr);
  }
  return matmul(layer_norm(slice_rows(h, 0, 1), text_.ln_g, text_.ln_b), text_.proj);
}

Tensor DualEncoder::encode_texts(const std::vector<TokenSeq>& seqs, const PromptSet* prompts) const {
  if (seqs.empty()) throw InvalidInput("encode_texts: no sequences");
  std::vector<Tensor> rows;
  rows.reserve(seqs.size());
  for (const auto& s : seqs) rows.push_back(encode_text(s, prompts));
  return concat_rows(rows);
}

void DualEncoder::save(const std::filesystem::path& path) const {
  json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kFormatVersion;
  j["config"] = config_to_json(cfg_);
  j["frozen"] = frozen_;
  json params = json::object();
  for (const auto& [name, t] : params_) params[name] = tensor_to_json(t);
  j["params"] = std::move(params);
  write_json(j, path);
}

DualEncoder DualEncoder::load(const std::filesystem::path& path) {
  const json j = read_json(path);
  try {
    if (j.at("format") != kCheckpointFormat) throw InvalidInput(path.string() + " is not a model checkpoint");
    if (j.at("version") != kFormatVersion) throw InvalidInput("unsupported checkpoint version");
    DualEncoder m(config_from_json(j.at("config")), Blank{});
    const auto& params = j.at("params");
    if (params.size() != m.params_.size()) throw InvalidInput("checkpoint parameter count does not match config");
    for (auto& [name, t] : m.params_) {
      if (!params.contains(name)) throw InvalidInput("checkpoint is missing tensor '" + name + "'");
      fill_from_json(t, name, params.at(name));
    }
    if (j.value("frozen", false)) m.freeze();
    return m;
  } catch (const json::exception& e) {
    throw InvalidInput("malformed checkpoint " + path.string() + ": " + e.what());
  }
}

Tensor predict(const Tensor& z, const Tensor& class_embeddings, double temperature) {
  if (class_embeddings.rows() == 0) throw InvalidInput("predict: no classes");
  if (z.cols() != class_embeddings.cols()) throw InvalidInput("predict: embedding width mismatch");
  auto check_rows = [](const Tensor& t, const char* what) {
    const std::size_t c = t.cols();
    for (std::size_t r = 0; r < t.rows(); ++r) {
      double s = 0.0;
      for (std::size_t k = 0; k < c; ++k) s += t.at(r, k) * t.at(r, k);
      if (s == 0.0) throw DegenerateVector(std::string("predict: zero-norm ") + what + " row " + std::to_string(r));
    }
  };
  check_rows(z, "image embedding");
  check_rows(class_embeddings, "class embedding");
  auto sims = matmul_nt(normalize_rows(z), normalize_rows(class_embeddings));
  return softmax(sims, temperature);
}

Tensor cross_entropy_loss(const Tensor& probs, const std::vector<std::size_t>& labels) {
  if (labels.size() != probs.rows() || labels.empty()) throw InvalidInput("cross_entropy_loss: one label per row required");
  for (auto y : labels) {
    if (y >= probs.cols()) throw InvalidInput("cross_entropy_loss: label " + std::to_string(y) + " out of range");
  }
  auto logp = log_floor(pick_per_row(probs, labels), 1e-300);
  return scale(sum(logp), -1.0 / static_cast<double>(labels.size()));
}

std::uint64_t probe_hash(const DualEncoder& model, const std::vector<Image>& probe) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& img : probe) {
    const auto fs = model.encode_image(img, nullptr);
    for (double v : fs.embedding.values()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof v);
      for (auto b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
      }
    }
  }
  return h;
}

void save_prompts(const PromptSet& prompts, const ModelConfig& cfg, const std::filesystem::path& path) {
  json j;
  j["format"] = kPromptFormat;
  j["version"] = kFormatVersion;
  j["config"] = config_to_json(cfg);
  json vis = json::array(), txt = json::array();
  for (const auto& t : prompts.visual) vis.push_back(tensor_to_json(t));
  for (const auto& t : prompts.textual) txt.push_back(tensor_to_json(t));
  j["visual"] = std::move(vis);
  j["textual"] = std::move(txt);
  write_json(j, path);
}

PromptSet load_prompts(const ModelConfig& cfg, const std::filesystem::path& path) {
  const json j = read_json(path);
  try {
    if (j.at("format") != kPromptFormat) throw InvalidInput(path.string() + " is not a prompt file");
    if (config_from_json(j.at("config")) != cfg) throw InvalidInput("prompt file was saved for a different model config");
    const auto& vis = j.at("visual");
    const auto& txt = j.at("textual");
    if (vis.size() != cfg.prompt_depth || txt.size() != cfg.prompt_depth) {
      throw InvalidInput("prompt file depth does not match prompt_depth");
    }
    const std::size_t K = vis.empty() ? 0 : vis[0].at("shape").at(0).get<std::size_t>();
    const std::size_t L = txt.empty() ? 0 : txt[0].at("shape").at(0).get<std::size_t>();
    std::mt19937_64 rng(0);
    auto p = PromptSet::init(cfg, K, L, rng);
    for (std::size_t l = 0; l < cfg.prompt_depth; ++l) {
      fill_from_json(p.visual[l], "visual." + std::to_string(l), vis[l]);
      fill_from_json(p.textual[l], "textual." + std::to_string(l), txt[l]);
    }
    return p;
  } catch (const json::exception& e) {
    throw InvalidInput("malformed prompt file " + path.string() + ": " + e.what());
  }
}

}  // namespace lobg
