#include "lobg/gradsuite.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "lobg/errors.hpp"
#include "lobg/gradcheck.hpp"
#include "lobg/hld.hpp"
#include "lobg/model.hpp"
#include "lobg/ops.hpp"
#include "lobg/stp.hpp"

namespace lobg::gradsuite {

namespace {

// Desk-scale shapes: a batch of 4 images, 4 base classes, 64-d features.
constexpr std::size_t kB = 4, kC = 4, kD = 64;
constexpr double kTau = 0.07;

Tensor gaussian(Shape shape, std::mt19937_64& rng, double stddev = 1.0) {
  std::normal_distribution<double> g(0.0, stddev);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = g(rng);
  return Tensor::constant(std::move(shape), std::move(v));
}

std::vector<std::size_t> labels(std::mt19937_64& rng) {
  std::vector<std::size_t> y(kB);
  for (auto& v : y) v = rng() % kC;
  return y;
}

// Reduces a tensor to a scalar with fixed random weights so every output
// coordinate contributes.
Tensor project(const Tensor& t, const Tensor& w) { return sum(mul(t, w)); }

// max() that lets NaN win.
double worse(double a, double b) { return std::isnan(a) || a > b ? a : b; }

Tensor teacher_probs(std::mt19937_64& rng) {
  return predict(gaussian({kB, kD}, rng), gaussian({kC, kD}, rng), kTau).detach();
}

std::vector<Case> build() {
  std::vector<Case> c;

  // Core ops on small random inputs.
  c.push_back({"core", "matmul", [](std::uint64_t s) {
                 std::mt19937_64 rng(s);
                 auto a = gaussian({3, 5}, rng), b = gaussian({5, 4}, rng), w = gaussian({3, 4}, rng);
                 return worse(finite_diff_check([&](const Tensor& x) { return project(matmul(x, b), w); }, a),
                                 finite_diff_check([&](const Tensor& x) { return project(matmul(a, x), w); }, b));
               }});
  c.push_back({"core", "softmax", [](std::uint64_t s) {
                 std::mt19937_64 rng(s);
                 auto a = gaussian({3, 6}, rng), w = gaussian({3, 6}, rng);
                 return finite_diff_check([&](const Tensor& x) { return project(softmax(x, 0.5), w); }, a);
               }});
  c.push_back({"core", "layer_norm", [](std::uint64_t s) {
                 std::mt19937_64 rng(s);
                 auto a = gaussian({3, 8}, rng), g = gaussian({8}, rng), b = gaussian({8}, rng), w = gaussian({3, 8}, rng);
                 return finite_diff_check([&](const Tensor& x) { return project(layer_norm(x, g, b), w); }, a);
               }});
  c.push_back({"core", "gelu", [](std::uint64_t s) {
                 std::mt19937_64 rng(s);
                 auto a = gaussian({4, 5}, rng), w = gaussian({4, 5}, rng);
                 return finite_diff_check([&](const Tensor& x) { return project(gelu(x), w); }, a);
               }});
  c.push_back({"core", "attention", [](std::uint64_t s) {
                 std::mt19937_64 rng(s);
                 auto a = gaussian({5, 24}, rng), w = gaussian({5, 8}, rng);
                 return finite_diff_check([&](const Tensor& x) { return project(attention(x, 2).out, w); }, a);
               }});
  c.push_back({"core", "normalize_rows", [](std::uint64_t s) {
                 std::mt19937_64 rng(s);
                 auto a = gaussian({3, 6}, rng), w = gaussian({3, 6}, rng);
                 return finite_diff_check([&](const Tensor& x) { return project(normalize_rows(x), w); }, a);
               }});
  c.push_back({"core", "cosine_sim", [](std::uint64_t s) {
                 std::mt19937_64 rng(s);
                 auto a = gaussian({1, 6}, rng), b = gaussian({1, 6}, rng);
                 return finite_diff_check([&](const Tensor& x) { return cosine_sim(x, b); }, a);
               }});
  c.push_back({"core", "log_floor", [](std::uint64_t s) {
                 std::mt19937_64 rng(s);
                 auto a = softmax(gaussian({2, 5}, rng)), w = gaussian({2, 5}, rng);
                 return finite_diff_check([&](const Tensor& x) { return project(log_floor(x, 1e-12), w); }, a);
               }});

  // L_cls with respect to image and text embeddings.
  c.push_back({"model", "L_cls", [](std::uint64_t s) {
                 std::mt19937_64 rng(s);
                 auto z = gaussian({kB, kD}, rng), v = gaussian({kC, kD}, rng);
                 const auto y = labels(rng);
                 return worse(
                     finite_diff_check([&](const Tensor& x) { return cross_entropy_loss(predict(x, v, kTau), y); }, z),
                     finite_diff_check([&](const Tensor& x) { return cross_entropy_loss(predict(z, x, kTau), y); }, v));
               }});
  // The same loss through a small dual encoder, with respect to prompt tokens.
  c.push_back({"model", "L_cls_prompts", [](std::uint64_t s) {
                 ModelConfig cfg;
                 cfg.embed_dim = 16;
                 cfg.layers = 2;
                 cfg.heads = 2;
                 cfg.image_size = 8;
                 cfg.vocab_size = 8;
                 DualEncoder m(cfg, s);
                 m.freeze();
                 std::mt19937_64 rng(s + 1);
                 std::normal_distribution<double> g(0.0, 1.0);
                 Image a(cfg.channels, cfg.image_size), b(cfg.channels, cfg.image_size);
                 for (auto& p : a.pixels) p = g(rng);
                 for (auto& p : b.pixels) p = g(rng);
                 auto prompts = PromptSet::init(cfg, 2, 2, rng, 0.5);
                 const std::vector<TokenSeq> seqs{{1, 2}, {1, 3}, {1, 4}};
                 auto f = [&] {
                   auto z = concat_rows({m.encode_image(a, &prompts).embedding, m.encode_image(b, &prompts).embedding});
                   return cross_entropy_loss(predict(z, m.encode_texts(seqs, &prompts), 0.5), {0, 2});
                 };
                 double worst = 0.0;
                 for (auto& leaf : prompts.parameters()) worst = worse(worst, finite_diff_check_leaf(f, leaf));
                 return worst;
               }});

  c.push_back({"stp", "L_vision", [](std::uint64_t s) {
                 std::mt19937_64 rng(s);
                 auto t = gaussian({kB, kD}, rng), st = gaussian({kB, kD}, rng);
                 const auto trip = stp::make_triplets(kB, rng);
                 return finite_diff_check([&](const Tensor& x) { return stp::stp_vision_loss(t, x, trip).value; }, st);
               }});
  c.push_back({"stp", "L_text", [](std::uint64_t s) {
                 std::mt19937_64 rng(s);
                 auto t = gaussian({kC, kD}, rng), st = gaussian({kC, kD}, rng);
                 return finite_diff_check([&](const Tensor& x) { return stp::stp_text_loss(t, x); }, st);
               }});
  c.push_back({"stp", "fuse_layers", [](std::uint64_t s) {
                 std::mt19937_64 rng(s);
                 std::vector<Tensor> layers;
                 for (int i = 0; i < 4; ++i) layers.push_back(gaussian({kB, kD}, rng));
                 auto w = gaussian({kB, kD}, rng);
                 const auto lw = stp::sample_layer_weights(4, 4.0, 1.0, 0.5, rng);
                 return finite_diff_check(
                     [&](const Tensor& x) {
                       auto ls = layers;
                       ls[1] = x;
                       return project(stp::fuse_layers(ls, lw), w);
                     },
                     layers[1]);
               }});

  c.push_back({"hld", "L_ikd", [](std::uint64_t s) {
                 std::mt19937_64 rng(s);
                 auto pt = teacher_probs(rng);
                 auto logits = gaussian({kB, kC}, rng, 3.0);
                 return finite_diff_check([&](const Tensor& x) { return hld::ikd_loss(pt, softmax(x)); }, logits);
               }});
  c.push_back({"hld", "L_ckd", [](std::uint64_t s) {
                 std::mt19937_64 rng(s);
                 auto mt = hld::class_relation(teacher_probs(rng));
                 auto logits = gaussian({kB, kC}, rng, 3.0);
                 return finite_diff_check(
                     [&](const Tensor& x) { return hld::ckd_loss(mt, hld::class_relation(softmax(x))); }, logits);
               }});

  // Full objective L_cls + lambda L_HLD + gamma L_STP over packed student
  // features [image embeddings; text embeddings; fused layer features].
  c.push_back({"bench", "L_total", [](std::uint64_t s) {
                 std::mt19937_64 rng(s);
                 const double lambda = 1.0, gamma = 3.0;
                 auto zt = gaussian({kB, kD}, rng), vt = gaussian({kC, kD}, rng), ft = gaussian({kB, kD}, rng);
                 auto pt = predict(zt, vt, kTau);
                 auto mt = hld::class_relation(pt);
                 const auto y = labels(rng);
                 const auto trip = stp::make_triplets(kB, rng);
                 auto packed = gaussian({2 * kB + kC, kD}, rng);
                 auto f = [&](const Tensor& x) {
                   auto z = slice_rows(x, 0, kB), v = slice_rows(x, kB, kC), fz = slice_rows(x, kB + kC, kB);
                   auto p = predict(z, v, kTau);
                   auto l_hld = hld::hld_total(hld::ikd_loss(pt, p), hld::ckd_loss(mt, hld::class_relation(p)));
                   auto l_stp = stp::stp_total(stp::stp_vision_loss(ft, fz, trip).value, stp::stp_text_loss(vt, v));
                   return add(add(cross_entropy_loss(p, y), scale(l_hld, lambda)), scale(l_stp, gamma));
                 };
                 return finite_diff_check(f, packed);
               }});
  return c;
}

}  // namespace

const std::vector<Case>& cases() {
  static const std::vector<Case> all = build();
  return all;
}

std::vector<std::string> modules() {
  std::vector<std::string> out;
  for (const auto& c : cases())
    if (std::find(out.begin(), out.end(), c.module) == out.end()) out.push_back(c.module);
  return out;
}

std::vector<Result> run(const std::string& scope, std::size_t seeds, double tolerance) {
  const auto mods = modules();
  if (scope != "all" && std::find(mods.begin(), mods.end(), scope) == mods.end()) {
    std::string known;
    for (const auto& m : mods) known += " " + m;
    throw InvalidParameter("unknown gradcheck scope '" + scope + "' (expected all or one of:" + known + ")");
  }
  std::vector<Result> out;
  for (const auto& c : cases()) {
    if (scope != "all" && c.module != scope) continue;
    Result r{c.module, c.name, 0.0, false};
    for (std::uint64_t s = 0; s < seeds; ++s) {
      const double e = c.run(s);
      if (std::isnan(e) || e > r.worst) r.worst = e;
      if (std::isnan(r.worst)) break;
    }
    r.passed = r.worst < tolerance;
    out.push_back(r);
  }
  return out;
}

}  // namespace lobg::gradsuite
