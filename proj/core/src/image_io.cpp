#include "sfg/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "sfg/errors.hpp"

namespace sfg {

namespace {

std::uint8_t to_byte(double v01) {
  return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v01, 0.0, 1.0)));
}

GrayImage upscale(const std::vector<double>& cells, int grid_h, int grid_w, int scale) {
  if (grid_h < 1 || grid_w < 1 || scale < 1) throw ConfigError("image grid and scale must be positive");
  if (cells.size() != static_cast<std::size_t>(grid_h) * static_cast<std::size_t>(grid_w)) {
    throw DimensionError("image: expected " + std::to_string(grid_h * grid_w) + " patches, got " +
                         std::to_string(cells.size()));
  }
  GrayImage img{grid_w * scale, grid_h * scale, {}};
  img.pixels.resize(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const auto p = static_cast<std::size_t>((y / scale) * grid_w + x / scale);
      img.pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(img.width) + static_cast<std::size_t>(x)] =
          to_byte(cells[p]);
    }
  }
  return img;
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  if (image.pixels.size() != static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.height)) {
    throw DimensionError("pgm: pixel count does not match size");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string magic;
  GrayImage img;
  int maxval = 0;
  in >> magic >> img.width >> img.height >> maxval;
  if (!in || magic != "P5" || maxval != 255 || img.width < 1 || img.height < 1) {
    throw FormatError(path.string() + ": not an 8-bit P5 image");
  }
  in.get();
  img.pixels.resize(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height));
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) throw FormatError(path.string() + ": truncated");
  return img;
}

GrayImage latent_image(const Tensor& latent, int grid_h, int grid_w, int scale, double max_norm) {
  require_matrix(latent, "latent image");
  if (!(max_norm > 0.0)) throw ConfigError("latent image range must be positive");
  std::vector<double> cells(latent.rows());
  for (std::size_t p = 0; p < latent.rows(); ++p) {
    const auto r = latent.row(p);
    cells[p] = std::sqrt(dot(r, r)) / max_norm;
  }
  return upscale(cells, grid_h, grid_w, scale);
}

GrayImage semantic_image(const std::vector<int>& map, int tokens, int grid_h, int grid_w, int scale) {
  if (tokens < 1) throw EmptyPromptError("semantic image needs at least one token");
  std::vector<double> cells(map.size());
  for (std::size_t p = 0; p < map.size(); ++p) {
    if (map[p] < 0 || map[p] > tokens) throw DomainError("semantic index out of range");
    cells[p] = static_cast<double>(map[p]) / tokens;
  }
  return upscale(cells, grid_h, grid_w, scale);
}

GrayImage attention_image(const Tensor& weights, std::size_t column, int grid_h, int grid_w, int scale) {
  require_matrix(weights, "attention image");
  if (column >= weights.cols()) throw DimensionError("attention column out of range");
  std::vector<double> cells(weights.rows());
  for (std::size_t p = 0; p < weights.rows(); ++p) cells[p] = weights(p, column);
  return upscale(cells, grid_h, grid_w, scale);
}

}  // namespace sfg
