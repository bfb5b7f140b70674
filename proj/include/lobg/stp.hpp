#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <vector>

#include "lobg/model.hpp"
#include "lobg/tensor.hpp"

// Structural topology preservation: match the angles formed by triples of
// fused image features between teacher and student, plus an L1 tie on the
// text embeddings.
namespace lobg::stp {

struct LayerWeights {
  std::vector<double> w;  // nonnegative, sums to 1
};

struct Triplet {
  std::size_t i = 0, j = 0, k = 0;
  bool operator==(const Triplet&) const = default;
};
using TripletSet = std::vector<Triplet>;

// Degenerate-triple guard on |e_ij| and |e_kj|.
constexpr double kDegenerateEps = 1e-8;

// w_i proportional to exp(-(i - mu)^2 / (2 width^2)) over 1-based layer
// indices, with mu = center + N(0, jitter^2) drawn from rng. jitter = 0 gives
// the plain kernel. Throws InvalidParameter for layers == 0 or width <= 0.
LayerWeights sample_layer_weights(std::size_t layers, double center, double width, double jitter,
                                  std::mt19937_64& rng);

// z_w = sum_i w_i z_i over same-shaped per-layer features.
Tensor fuse_layers(const std::vector<Tensor>& layer_features, const LayerWeights& w);
Tensor fuse_layers(const FeatureStack& stack, const LayerWeights& w);

// All ordered triples of distinct indices when batch <= exhaustive_limit,
// otherwise sample_size uniformly drawn ordered triples.
TripletSet make_triplets(std::size_t batch, std::mt19937_64& rng, std::size_t sample_size = 256,
                         std::size_t exhaustive_limit = 8);

// Cosine of the angle at vertex j formed by rows i, j, k of z; nullopt for a
// degenerate triple.
std::optional<Tensor> angle_relation(const Tensor& z, std::size_t i, std::size_t j, std::size_t k);
std::optional<double> angle_relation_value(const Tensor& z, std::size_t i, std::size_t j, std::size_t k);

struct VisionLoss {
  Tensor value;  // scalar
  std::size_t used = 0;
  std::size_t skipped = 0;
};

// Mean over non-degenerate triples of |A_student - A_teacher|. A triple is
// skipped when it is degenerate on either side. Batches smaller than 3 give
// 0 with a warning.
VisionLoss stp_vision_loss(const Tensor& teacher, const Tensor& student, const TripletSet& triplets);

// Mean absolute difference over all N x d entries.
Tensor stp_text_loss(const Tensor& teacher, const Tensor& student);

Tensor stp_total(const Tensor& vision, const Tensor& text);

}  // namespace lobg::stp
