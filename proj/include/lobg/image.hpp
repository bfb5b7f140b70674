#pragma once

#include <cstddef>
#include <vector>

namespace lobg {

// Channel-major (C, H, W) square image.
struct Image {
  std::size_t channels = 3;
  std::size_t size = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t c, std::size_t s) : channels(c), size(s), pixels(c * s * s, 0.0) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * size + y) * size + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * size + y) * size + x]; }

  bool operator==(const Image&) const = default;
};

}  // namespace lobg
