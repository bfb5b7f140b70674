#include "lobg/fif.hpp"

#include <algorithm>
#include <cmath>

#include "lobg/errors.hpp"

namespace lobg::fif {

std::size_t Mask::zeros() const { return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), 0)); }

AttentionMap extract_attention(const DualEncoder& teacher, const Image& x) {
  if (!teacher.frozen()) throw InvalidParameter("attention maps must come from a frozen teacher");
  const auto fs = teacher.encode_image(x, nullptr);
  const auto& cfg = teacher.config();
  const std::size_t T = fs.tokens, np = cfg.num_patches(), first = 1 + fs.prompt_tokens;
  const auto& probs = fs.attention.back();
  AttentionMap map;
  map.grid = cfg.grid();
  map.values.assign(np, 0.0);
  for (std::size_t h = 0; h < fs.heads; ++h) {
    const double* cls_row = probs.data() + h * T * T;  // query = class token
    for (std::size_t p = 0; p < np; ++p) map.values[p] += cls_row[first + p];
  }
  for (auto& v : map.values) v /= static_cast<double>(fs.heads);
  return map;
}

double percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw InvalidInput("percentile of an empty set");
  if (!(pct >= 0.0 && pct <= 100.0)) throw InvalidParameter("percentile must be in [0, 100]");
  std::sort(values.begin(), values.end());
  const double rank = pct / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

Mask build_mask(const AttentionMap& attn, double q) {
  if (!(q >= 0.0 && q <= 100.0)) throw InvalidParameter("mask threshold q must be in [0, 100]");
  Mask m;
  m.grid = attn.grid;
  m.q = q;
  m.keep.assign(attn.values.size(), 1);
  if (q == 0.0 || attn.values.empty()) return m;
  const double cutoff = percentile(attn.values, 100.0 - q);
  for (std::size_t i = 0; i < attn.values.size(); ++i) {
    if (attn.values[i] > cutoff) m.keep[i] = 0;
  }
  return m;
}

Image apply_mask(const Mask& mask, const Image& x) {
  if (mask.grid == 0 || x.size % mask.grid != 0 || mask.keep.size() != mask.grid * mask.grid) {
    throw InvalidInput("mask grid " + std::to_string(mask.grid) + " does not tile a " + std::to_string(x.size) +
                       "-pixel image");
  }
  const std::size_t p = x.size / mask.grid;
  Image out = x;
  for (std::size_t c = 0; c < x.channels; ++c)
    for (std::size_t y = 0; y < x.size; ++y)
      for (std::size_t xx = 0; xx < x.size; ++xx) {
        if (!mask.keep[(y / p) * mask.grid + xx / p]) out.at(c, y, xx) = 0.0;
      }
  return out;
}

}  // namespace lobg::fif
