#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "o3n/clipenc.hpp"
#include "o3n/tensor.hpp"

namespace o3n {

/// 8-bit RGB raster, row-major.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(std::size_t w, std::size_t h) : width(w), height(h), rgb(w * h * 3, 0) {}
  std::uint8_t* px(std::size_t x, std::size_t y) { return rgb.data() + (y * width + x) * 3; }
};

/// Binary PPM (P6).
void write_ppm(const Image& img, const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);

/// Min-max rescale to [0, 255]; a constant input maps to 128.
std::vector<std::uint8_t> rescale_u8(std::span<const float> values);

/// One image per 3-channel block of an encoded clip, each block rescaled on its own.
std::vector<Image> encoded_images(const EncodedClip& clip);

/// First-layer kernels (C_out, KH, KW, C_in) tiled ceil(sqrt(C_out)) per row. C_in is reduced to three
/// display channels by averaging consecutive depth groups; a single channel is shown as gray.
Image filter_grid(const Tensor<float>& kernels, std::size_t scale = 8, std::size_t gap = 1);

/// Columns and rows of the filter tiling.
std::pair<std::size_t, std::size_t> grid_layout(std::size_t count);

}  // namespace o3n
