#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "sfg/guidance.hpp"
#include "sfg/tensor.hpp"

namespace sfg {

/// 8-bit grayscale image, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Binary PGM (P5, maxval 255).
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

/// Each patch's L2 norm mapped linearly from [0, max_norm] to [0, 255]
/// (clamped), each patch drawn as a scale×scale block.
GrayImage latent_image(const Tensor& latent, int grid_h, int grid_w, int scale = 8, double max_norm = 2.5);

/// Token index k of n drawn as round(255·k/n).
GrayImage semantic_image(const std::vector<int>& map, int tokens, int grid_h, int grid_w, int scale = 8);

/// One attention column (weights in [0, 1], clamped) as an image.
GrayImage attention_image(const Tensor& weights, std::size_t column, int grid_h, int grid_w, int scale = 8);

}  // namespace sfg
