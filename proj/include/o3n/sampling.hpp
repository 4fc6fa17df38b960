#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "o3n/rng.hpp"
#include "o3n/tensor.hpp"
#include "o3n/videodata.hpp"

namespace o3n {

enum class Strategy { consecutive, random, constrained_consecutive };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& s);

/// W frames pulled from a video. Indices are 1-based.
struct Clip {
  std::vector<int> indices;
  Tensor<float> frames;  // (W, h, w, c), pixels scaled to [0, 1]
  bool is_odd = false;
};

struct Question {
  std::vector<Clip> elements;
  int answer = 0;  // 1-based position of the odd element
  Strategy strategy = Strategy::random;
  std::size_t source_video_id = 0;
  int duplicate_even_pairs = 0;  // even clips drawn with identical indices
};

struct SamplerConfig {
  int num_even = 5;  // N; a question has N + 1 elements
  int frames = 6;    // W
  Strategy strategy = Strategy::random;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Inclusive 1-based frame range.
struct FrameRange {
  int first = 1;
  int last = 1;
  int length() const { return last - first + 1; }
};

bool strictly_increasing(const std::vector<int>& indices);

/// Pixels of the given 1-based frames as float in [0, 1].
Tensor<float> extract_frames(const Video& v, const std::vector<int>& indices);

Clip sample_consecutive(const Video& v, int W, Rng& rng);
/// W consecutive frames with the start drawn uniformly inside `range`.
Clip sample_consecutive(const Video& v, int W, FrameRange range, Rng& rng);
Clip sample_random_ordered(const Video& v, int W, Rng& rng);

/// Uniform permutation of `sorted` (distinct values) that is not strictly increasing.
std::vector<int> odd_permutation(std::vector<int> sorted, Rng& rng);

/// Shuffled clip. For constrained_consecutive pass the window; other strategies draw from the whole video.
Clip make_odd_clip(const Video& v, int W, Strategy strategy, const FrameRange* window, Rng& rng);

/// ceil(1.5 W) contiguous frames with a uniform start.
FrameRange constrained_window(const Video& v, int W, Rng& rng);
int constrained_window_length(int W);

/// Minimum video length the strategy needs.
int min_frames_for(Strategy s, int W);

Question build_question(const Video& v, const SamplerConfig& cfg, Rng& rng, std::size_t video_id = 0);

}  // namespace o3n
