#include "o3n/clipenc.hpp"

#include <cmath>

#include "o3n/error.hpp"

namespace o3n {

std::string to_string(Encoder e) {
  switch (e) {
    case Encoder::sum_of_diff: return "sum_of_diff";
    case Encoder::dynamic_image: return "dynamic_image";
    case Encoder::stack_of_diff: return "stack_of_diff";
  }
  return "?";
}

Encoder parse_encoder(const std::string& s) {
  if (s == "sum_of_diff") return Encoder::sum_of_diff;
  if (s == "dynamic_image") return Encoder::dynamic_image;
  if (s == "stack_of_diff") return Encoder::stack_of_diff;
  throw ConfigError("unknown encoder '" + s + "'");
}

int encoded_channels(Encoder e, int W, int c) { return e == Encoder::stack_of_diff ? (W - 1) * c : c; }

std::vector<double> sumdiff_weights(int W) {
  if (W < 1) throw ConfigError("sumdiff_weights needs W >= 1");
  std::vector<double> w(W);
  for (int t = 1; t <= W; ++t) w[t - 1] = 2.0 * t - 1.0 - W;
  return w;
}

std::vector<double> dynimg_weights(int W) {
  if (W < 1) throw ConfigError("dynimg_weights needs W >= 1");
  std::vector<double> harmonic(W + 1, 0.0);
  for (int t = 1; t <= W; ++t) harmonic[t] = harmonic[t - 1] + 1.0 / t;
  std::vector<double> w(W);
  for (int t = 1; t <= W; ++t) w[t - 1] = 2.0 * (W - t + 1) - (W + 1.0) * (harmonic[W] - harmonic[t - 1]);
  return w;
}

void standardize_channels(Tensor<float>& hwc) {
  const std::size_t c = hwc.dim(hwc.rank() - 1);
  const std::size_t positions = hwc.size() / c;
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean = 0;
    for (std::size_t p = 0; p < positions; ++p) mean += hwc[p * c + ch];
    mean /= static_cast<double>(positions);
    double var = 0;
    for (std::size_t p = 0; p < positions; ++p) {
      const double d = hwc[p * c + ch] - mean;
      var += d * d;
    }
    var /= static_cast<double>(positions);
    const double inv = 1.0 / std::sqrt(std::max(var, 1e-5));
    for (std::size_t p = 0; p < positions; ++p)
      hwc[p * c + ch] = static_cast<float>((hwc[p * c + ch] - mean) * inv);
  }
}

namespace {

void check_clip(const Tensor<float>& frames, const char* what) {
  if (frames.rank() != 4) throw ShapeError(std::string(what) + ": expected (W, h, w, c) frames, got " + shape_str(frames.shape()));
  if (frames.dim(0) < 2) throw ShapeError(std::string(what) + ": needs at least 2 frames");
}

EncodedClip weighted_sum(const Tensor<float>& frames, const std::vector<double>& weights, Encoder tag, bool standardize) {
  const std::size_t W = frames.dim(0);
  const std::size_t fs = frames.size() / W;
  EncodedClip out;
  out.encoder = tag;
  out.c_out = static_cast<int>(frames.dim(3));
  out.data = Tensor<float>({frames.dim(1), frames.dim(2), frames.dim(3)});
  std::vector<double> acc(fs, 0.0);
  for (std::size_t t = 0; t < W; ++t) {
    const double w = weights[t];
    if (w == 0.0) continue;
    const float* f = frames.data() + t * fs;
    for (std::size_t i = 0; i < fs; ++i) acc[i] += w * f[i];
  }
  for (std::size_t i = 0; i < fs; ++i) out.data[i] = static_cast<float>(acc[i]);
  if (standardize) standardize_channels(out.data);
  return out;
}

}  // namespace

EncodedClip encode_sumdiff(const Tensor<float>& frames, bool standardize) {
  check_clip(frames, "encode_sumdiff");
  return weighted_sum(frames, sumdiff_weights(static_cast<int>(frames.dim(0))), Encoder::sum_of_diff, standardize);
}

EncodedClip encode_dynimg(const Tensor<float>& frames, bool standardize) {
  check_clip(frames, "encode_dynimg");
  return weighted_sum(frames, dynimg_weights(static_cast<int>(frames.dim(0))), Encoder::dynamic_image, standardize);
}

EncodedClip encode_stackdiff(const Tensor<float>& frames, bool standardize) {
  check_clip(frames, "encode_stackdiff");
  const std::size_t W = frames.dim(0), h = frames.dim(1), w = frames.dim(2), c = frames.dim(3);
  const std::size_t positions = h * w;
  EncodedClip out;
  out.encoder = Encoder::stack_of_diff;
  out.c_out = static_cast<int>((W - 1) * c);
  out.data = Tensor<float>({h, w, (W - 1) * c});
  const std::size_t cout = (W - 1) * c;
  for (std::size_t k = 0; k + 1 < W; ++k) {
    const float* a = frames.data() + k * positions * c;
    const float* b = frames.data() + (k + 1) * positions * c;
    for (std::size_t p = 0; p < positions; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) out.data[p * cout + k * c + ch] = b[p * c + ch] - a[p * c + ch];
  }
  if (standardize) standardize_channels(out.data);
  return out;
}

EncodedClip encode_clip(const Tensor<float>& frames, Encoder e, bool standardize) {
  switch (e) {
    case Encoder::sum_of_diff: return encode_sumdiff(frames, standardize);
    case Encoder::dynamic_image: return encode_dynimg(frames, standardize);
    case Encoder::stack_of_diff: return encode_stackdiff(frames, standardize);
  }
  throw ConfigError("unknown encoder");
}

}  // namespace o3n
