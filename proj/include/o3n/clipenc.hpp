#pragma once

#include <string>
#include <vector>

#include "o3n/tensor.hpp"

namespace o3n {

enum class Encoder { sum_of_diff, dynamic_image, stack_of_diff };

std::string to_string(Encoder e);
Encoder parse_encoder(const std::string& s);

/// Output channels of an encoder for W-frame clips with `c` channels per frame.
int encoded_channels(Encoder e, int W, int c = 3);

/// A clip compressed to a single (h, w, c_out) tensor.
struct EncodedClip {
  Tensor<float> data;
  Encoder encoder = Encoder::sum_of_diff;
  int c_out = 0;
};

/// Frame weights of the sum of all later-minus-earlier differences: w[t] = 2t - 1 - W, t = 1..W.
std::vector<double> sumdiff_weights(int W);

/// Frame weights of the same pairwise-difference sum applied to running means of the frames:
/// w[t] = 2(W - t + 1) - (W + 1)(H_W - H_{t-1}), H the harmonic numbers with H_0 = 0.
std::vector<double> dynimg_weights(int W);

/// Running means M_t = (1/t) sum_{j<=t} X_j over the leading axis of a (W, ...) tensor.
template <typename T>
Tensor<T> smooth_means(const Tensor<T>& frames) {
  Tensor<T> out(frames.shape());
  if (frames.rank() == 0 || frames.dim(0) == 0) return out;
  const std::size_t W = frames.dim(0);
  const std::size_t fs = frames.size() / W;
  std::vector<double> acc(fs, 0.0);
  for (std::size_t t = 0; t < W; ++t) {
    for (std::size_t i = 0; i < fs; ++i) {
      acc[i] += static_cast<double>(frames[t * fs + i]);
      out[t * fs + i] = static_cast<T>(acc[i] / static_cast<double>(t + 1));
    }
  }
  return out;
}

/// Per-channel zero mean, unit variance over the spatial positions of an (h, w, c) tensor.
/// Variance is floored at 1e-5 so constant channels map to zero.
void standardize_channels(Tensor<float>& hwc);

EncodedClip encode_sumdiff(const Tensor<float>& frames, bool standardize = true);
EncodedClip encode_dynimg(const Tensor<float>& frames, bool standardize = true);
EncodedClip encode_stackdiff(const Tensor<float>& frames, bool standardize = true);
EncodedClip encode_clip(const Tensor<float>& frames, Encoder e, bool standardize = true);

}  // namespace o3n
