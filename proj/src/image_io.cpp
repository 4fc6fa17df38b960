#include "o3n/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "o3n/error.hpp"

namespace o3n {

void write_ppm(const Image& img, const std::filesystem::path& path) {
  if (img.rgb.size() != img.width * img.height * 3) throw ShapeError("image payload does not match its size");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0, maxv = 0;
  in >> magic >> w >> h >> maxv;
  if (magic != "P6" || maxv != 255 || !in) throw MalformedContainer(path.string() + " is not an 8-bit P6 image");
  in.get();
  Image img(w, h);
  in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.rgb.size())) throw MalformedContainer(path.string() + " is truncated");
  return img;
}

std::vector<std::uint8_t> rescale_u8(std::span<const float> values) {
  std::vector<std::uint8_t> out(values.size(), 128);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double a = *lo, b = *hi;
  if (!(b > a)) return out;
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = static_cast<std::uint8_t>(std::lround(255.0 * (values[i] - a) / (b - a)));
  return out;
}

std::vector<Image> encoded_images(const EncodedClip& clip) {
  const Tensor<float>& d = clip.data;
  if (d.rank() != 3 || d.dim(2) % 3 != 0) throw ShapeError("encoded clip must be (h, w, 3k), got " + shape_str(d.shape()));
  const std::size_t h = d.dim(0), w = d.dim(1), c = d.dim(2);
  std::vector<Image> out;
  for (std::size_t block = 0; block < c / 3; ++block) {
    std::vector<float> vals(h * w * 3);
    for (std::size_t p = 0; p < h * w; ++p)
      for (std::size_t ch = 0; ch < 3; ++ch) vals[p * 3 + ch] = d[p * c + block * 3 + ch];
    Image img(w, h);
    img.rgb = rescale_u8(vals);
    out.push_back(std::move(img));
  }
  return out;
}

std::pair<std::size_t, std::size_t> grid_layout(std::size_t count) {
  if (count == 0) return {0, 0};
  auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(count))));
  while (cols * cols < count) ++cols;
  while (cols > 1 && (cols - 1) * (cols - 1) >= count) --cols;
  return {cols, (count + cols - 1) / cols};
}

Image filter_grid(const Tensor<float>& kernels, std::size_t scale, std::size_t gap) {
  if (kernels.rank() != 4) throw ShapeError("filters must be (C_out, KH, KW, C_in), got " + shape_str(kernels.shape()));
  if (scale == 0) throw ShapeError("filter scale must be >= 1");
  const std::size_t co = kernels.dim(0), kh = kernels.dim(1), kw = kernels.dim(2), ci = kernels.dim(3);
  if (ci != 1 && ci % 3 != 0) throw ShapeError("cannot show " + std::to_string(ci) + " input channels as RGB");
  const auto [cols, rows] = grid_layout(co);
  const std::size_t group = ci == 1 ? 1 : ci / 3;
  const std::size_t tw = kw * scale, th = kh * scale;
  Image img(cols * tw + (cols + 1) * gap, rows * th + (rows + 1) * gap);
  std::fill(img.rgb.begin(), img.rgb.end(), std::uint8_t{255});

  for (std::size_t f = 0; f < co; ++f) {
    std::vector<float> rgb(kh * kw * 3);
    for (std::size_t p = 0; p < kh * kw; ++p) {
      const float* src = kernels.data() + (f * kh * kw + p) * ci;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        if (ci == 1) {
          rgb[p * 3 + ch] = src[0];
          continue;
        }
        double s = 0;
        for (std::size_t k = 0; k < group; ++k) s += src[ch * group + k];
        rgb[p * 3 + ch] = static_cast<float>(s / static_cast<double>(group));
      }
    }
    const auto px = rescale_u8(rgb);
    const std::size_t x0 = gap + (f % cols) * (tw + gap), y0 = gap + (f / cols) * (th + gap);
    for (std::size_t y = 0; y < th; ++y)
      for (std::size_t x = 0; x < tw; ++x) {
        const std::uint8_t* s = px.data() + ((y / scale) * kw + x / scale) * 3;
        std::copy(s, s + 3, img.px(x0 + x, y0 + y));
      }
  }
  return img;
}

}  // namespace o3n
