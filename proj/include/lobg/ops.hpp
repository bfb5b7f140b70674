#pragma once

#include <cstddef>
#include <vector>

#include "lobg/tensor.hpp"

// Differentiable operations. Matrix-shaped ops view a tensor as
// rows() x cols() (last axis is the column axis).
namespace lobg {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// a[r, c] + b[c] broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& b);
// Same values, new shape (numel must match).
Tensor reshape(const Tensor& a, Shape shape);

// [m,k] x [k,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [m,k] x [n,k]^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// [k,m]^T x [k,n]
Tensor matmul_tn(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// log(max(a, floor)); the clamped region has zero gradient.
Tensor log_floor(const Tensor& a, double floor);
Tensor abs_elem(const Tensor& a);
// Gradient at exactly 0 is taken as 0.
Tensor sqrt_elem(const Tensor& a);
// tanh-approximated GELU.
Tensor gelu(const Tensor& a);

// Softmax over the last axis of a / temperature. Throws InvalidParameter
// for temperature <= 0.
Tensor softmax(const Tensor& logits, double temperature = 1.0);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

struct AttentionResult {
  Tensor out;                 // [T, d]
  std::vector<double> probs;  // heads x T x T, row-stochastic
};

// Multi-head scaled dot-product self-attention. qkv is [T, 3d] laid out as
// [Q | K | V]; each head owns a contiguous d/heads slice of each block.
AttentionResult attention(const Tensor& qkv, std::size_t heads);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);
Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& ids);

// x / (||x|| + eps) per row.
Tensor normalize_rows(const Tensor& a, double eps = 1e-12);
// a.b / (||a|| ||b|| + 1e-12); throws DegenerateVector if either norm is 0.
Tensor cosine_sim(const Tensor& a, const Tensor& b);

// out[r] = a[r, cols[r]]
Tensor pick_per_row(const Tensor& a, const std::vector<std::size_t>& cols);

}  // namespace lobg
