#include "lobg/stp.hpp"

#include <cmath>

#include "lobg/errors.hpp"
#include "lobg/log.hpp"
#include "lobg/ops.hpp"

namespace lobg::stp {

LayerWeights sample_layer_weights(std::size_t layers, double center, double width, double jitter,
                                  std::mt19937_64& rng) {
  if (layers == 0) throw InvalidParameter("stp: layer count must be >= 1");
  if (!(width > 0)) throw InvalidParameter("stp.sigma must be > 0");
  if (!(jitter >= 0)) throw InvalidParameter("stp.jitter must be >= 0");
  double mu = center;
  if (jitter > 0) mu += std::normal_distribution<double>(0.0, jitter)(rng);
  LayerWeights lw;
  lw.w.resize(layers);
  double total = 0.0;
  for (std::size_t i = 0; i < layers; ++i) {
    const double x = static_cast<double>(i + 1) - mu;
    lw.w[i] = std::exp(-x * x / (2.0 * width * width));
    total += lw.w[i];
  }
  if (total == 0.0) {
    // Centre jittered far outside the layer range; fall back to nearest end.
    lw.w.assign(layers, 0.0);
    lw.w[mu < 1.0 ? 0 : layers - 1] = 1.0;
    return lw;
  }
  for (auto& v : lw.w) v /= total;
  return lw;
}

Tensor fuse_layers(const std::vector<Tensor>& layer_features, const LayerWeights& w) {
  if (layer_features.empty() || layer_features.size() != w.w.size()) {
    throw InvalidInput("fuse_layers: " + std::to_string(w.w.size()) + " weights for " +
                       std::to_string(layer_features.size()) + " layers");
  }
  Tensor acc = scale(layer_features[0], w.w[0]);
  for (std::size_t i = 1; i < layer_features.size(); ++i) acc = add(acc, scale(layer_features[i], w.w[i]));
  return acc;
}

Tensor fuse_layers(const FeatureStack& stack, const LayerWeights& w) { return fuse_layers(stack.layer_features, w); }

TripletSet make_triplets(std::size_t batch, std::mt19937_64& rng, std::size_t sample_size,
                         std::size_t exhaustive_limit) {
  TripletSet out;
  if (batch < 3) return out;
  if (batch <= exhaustive_limit) {
    for (std::size_t i = 0; i < batch; ++i)
      for (std::size_t j = 0; j < batch; ++j)
        for (std::size_t k = 0; k < batch; ++k)
          if (i != j && j != k && i != k) out.push_back({i, j, k});
    return out;
  }
  std::uniform_int_distribution<std::size_t> pick(0, batch - 1);
  while (out.size() < sample_size) {
    Triplet t{pick(rng), pick(rng), pick(rng)};
    if (t.i != t.j && t.j != t.k && t.i != t.k) out.push_back(t);
  }
  return out;
}

namespace {

void check_triplet(const Tensor& z, std::size_t i, std::size_t j, std::size_t k) {
  if (i >= z.rows() || j >= z.rows() || k >= z.rows()) throw InvalidInput("angle_relation: index out of range");
  if (i == j || j == k || i == k) throw InvalidInput("angle_relation: indices must be distinct");
}

bool degenerate(const Tensor& z, std::size_t i, std::size_t j, std::size_t k) {
  const std::size_t d = z.cols();
  double nij = 0.0, nkj = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    const double a = z.at(i, c) - z.at(j, c);
    const double b = z.at(k, c) - z.at(j, c);
    nij += a * a;
    nkj += b * b;
  }
  return std::sqrt(nij) <= kDegenerateEps || std::sqrt(nkj) <= kDegenerateEps;
}

}  // namespace

std::optional<double> angle_relation_value(const Tensor& z, std::size_t i, std::size_t j, std::size_t k) {
  check_triplet(z, i, j, k);
  if (degenerate(z, i, j, k)) return std::nullopt;
  const std::size_t d = z.cols();
  double dot = 0.0, nij = 0.0, nkj = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    const double a = z.at(i, c) - z.at(j, c);
    const double b = z.at(k, c) - z.at(j, c);
    dot += a * b;
    nij += a * a;
    nkj += b * b;
  }
  return dot / (std::sqrt(nij) * std::sqrt(nkj) + 1e-12);
}

std::optional<Tensor> angle_relation(const Tensor& z, std::size_t i, std::size_t j, std::size_t k) {
  check_triplet(z, i, j, k);
  if (degenerate(z, i, j, k)) return std::nullopt;
  auto zj = slice_rows(z, j, 1);
  auto eij = sub(slice_rows(z, i, 1), zj);
  auto ekj = sub(slice_rows(z, k, 1), zj);
  return cosine_sim(eij, ekj);
}

VisionLoss stp_vision_loss(const Tensor& teacher, const Tensor& student, const TripletSet& triplets) {
  if (teacher.shape() != student.shape()) {
    throw InvalidInput("stp_vision_loss: teacher " + shape_str(teacher.shape()) + " vs student " +
                       shape_str(student.shape()));
  }
  VisionLoss out;
  if (student.rows() < 3) {
    log_warning("stp_vision_loss: batch of " + std::to_string(student.rows()) + " has no triplets; loss is 0");
    out.value = Tensor::scalar(0.0);
    return out;
  }
  std::vector<Tensor> terms;
  for (const auto& t : triplets) {
    const auto a_teacher = angle_relation_value(teacher, t.i, t.j, t.k);
    if (!a_teacher) {
      ++out.skipped;
      continue;
    }
    auto a_student = angle_relation(student, t.i, t.j, t.k);
    if (!a_student) {
      ++out.skipped;
      continue;
    }
    terms.push_back(abs_elem(sub(*a_student, Tensor::scalar(*a_teacher))));
  }
  out.used = terms.size();
  if (terms.empty()) {
    out.value = Tensor::scalar(0.0);
    return out;
  }
  Tensor acc = terms[0];
  for (std::size_t n = 1; n < terms.size(); ++n) acc = add(acc, terms[n]);
  out.value = scale(acc, 1.0 / static_cast<double>(terms.size()));
  return out;
}

Tensor stp_text_loss(const Tensor& teacher, const Tensor& student) {
  if (teacher.shape() != student.shape()) {
    throw InvalidInput("stp_text_loss: teacher " + shape_str(teacher.shape()) + " vs student " +
                       shape_str(student.shape()));
  }
  return mean(abs_elem(sub(student, teacher)));
}

Tensor stp_total(const Tensor& vision, const Tensor& text) { return add(vision, text); }

}  // namespace lobg::stp
