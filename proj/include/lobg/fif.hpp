#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lobg/image.hpp"
#include "lobg/model.hpp"

// Foreground information filtering: erase the patches a frozen teacher
// attends to most.
namespace lobg::fif {

// Row-major grid x grid of nonnegative per-patch attention.
struct AttentionMap {
  std::size_t grid = 0;
  std::vector<double> values;
};

struct Mask {
  std::size_t grid = 0;
  std::vector<std::uint8_t> keep;  // 1 keeps the patch, 0 erases it
  double q = 0.0;                  // percent of patches targeted

  std::size_t zeros() const;
};

// Head-averaged attention from the class token to each patch in the
// teacher's last layer. Requires a frozen teacher.
AttentionMap extract_attention(const DualEncoder& teacher, const Image& x);

// Linear-interpolated percentile of `values` at `pct` in [0, 100].
double percentile(std::vector<double> values, double pct);

// cutoff = (100 - q)-th percentile; patches strictly above the cutoff are
// erased, ties survive. Throws InvalidParameter for q outside [0, 100].
Mask build_mask(const AttentionMap& attn, double q);

// x' = mask (upsampled to pixels) * x. Throws InvalidInput when the image
// side is not a multiple of the mask grid.
Image apply_mask(const Mask& mask, const Image& x);

}  // namespace lobg::fif
