#include "o3n/sampling.hpp"

#include <algorithm>
#include <numeric>

#include "o3n/error.hpp"

namespace o3n {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::consecutive: return "consecutive";
    case Strategy::random: return "random";
    case Strategy::constrained_consecutive: return "constrained_consecutive";
  }
  return "?";
}

Strategy parse_strategy(const std::string& s) {
  if (s == "consecutive") return Strategy::consecutive;
  if (s == "random") return Strategy::random;
  if (s == "constrained_consecutive" || s == "constrained") return Strategy::constrained_consecutive;
  throw ConfigError("unknown sampling strategy '" + s + "'");
}

void SamplerConfig::validate() const {
  if (num_even < 1) throw ConfigError("a question needs at least one even element (N >= 1)");
  if (frames < 2) throw ConfigError("clips need at least two frames (W >= 2)");
}

bool strictly_increasing(const std::vector<int>& indices) {
  return std::adjacent_find(indices.begin(), indices.end(), std::greater_equal<>()) == indices.end();
}

Tensor<float> extract_frames(const Video& v, const std::vector<int>& indices) {
  Tensor<float> out({indices.size(), v.h, v.w, v.c});
  const std::size_t fs = v.frame_size();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 1 || static_cast<std::uint32_t>(idx) > v.n)
      throw ShapeError("frame index " + std::to_string(idx) + " outside [1, " + std::to_string(v.n) + "]");
    auto src = v.frame(static_cast<std::size_t>(idx - 1));
    float* dst = out.data() + i * fs;
    for (std::size_t j = 0; j < fs; ++j) dst[j] = static_cast<float>(src[j]) / 255.0f;
  }
  return out;
}

namespace {

void require_frames(const Video& v, int needed, const char* what) {
  if (static_cast<int>(v.n) < needed)
    throw VideoTooShort(std::string(what) + " needs " + std::to_string(needed) + " frames, video has " +
                        std::to_string(v.n));
}

// Uniform W-subset of [range.first, range.last], ascending (selection sampling).
std::vector<int> sorted_subset(FrameRange range, int W, Rng& rng) {
  std::vector<int> out;
  out.reserve(W);
  int remaining = range.length();
  int needed = W;
  for (int i = range.first; i <= range.last && needed > 0; ++i, --remaining) {
    std::uniform_int_distribution<int> d(0, remaining - 1);
    if (d(rng) < needed) {
      out.push_back(i);
      --needed;
    }
  }
  return out;
}

}  // namespace

Clip sample_consecutive(const Video& v, int W, FrameRange range, Rng& rng) {
  if (range.length() < W)
    throw VideoTooShort("consecutive sampling needs " + std::to_string(W) + " frames in range, got " +
                        std::to_string(range.length()));
  std::uniform_int_distribution<int> start(range.first, range.last - W + 1);
  const int s = start(rng);
  Clip clip;
  clip.indices.resize(W);
  std::iota(clip.indices.begin(), clip.indices.end(), s);
  clip.frames = extract_frames(v, clip.indices);
  return clip;
}

Clip sample_consecutive(const Video& v, int W, Rng& rng) {
  require_frames(v, W, "consecutive sampling");
  return sample_consecutive(v, W, FrameRange{1, static_cast<int>(v.n)}, rng);
}

Clip sample_random_ordered(const Video& v, int W, Rng& rng) {
  require_frames(v, W, "random sampling");
  Clip clip;
  clip.indices = sorted_subset(FrameRange{1, static_cast<int>(v.n)}, W, rng);
  clip.frames = extract_frames(v, clip.indices);
  return clip;
}

std::vector<int> odd_permutation(std::vector<int> sorted, Rng& rng) {
  if (sorted.size() < 2) throw ConfigError("an odd clip needs at least two frames");
  do {
    std::shuffle(sorted.begin(), sorted.end(), rng);
  } while (strictly_increasing(sorted));
  return sorted;
}

int constrained_window_length(int W) { return (3 * W + 1) / 2; }

FrameRange constrained_window(const Video& v, int W, Rng& rng) {
  const int len = constrained_window_length(W);
  require_frames(v, len, "constrained consecutive sampling");
  std::uniform_int_distribution<int> start(1, static_cast<int>(v.n) - len + 1);
  const int s = start(rng);
  return {s, s + len - 1};
}

Clip make_odd_clip(const Video& v, int W, Strategy strategy, const FrameRange* window, Rng& rng) {
  FrameRange range{1, static_cast<int>(v.n)};
  if (strategy == Strategy::constrained_consecutive) {
    if (!window) throw ConfigError("constrained consecutive odd clip needs a sampling window");
    range = *window;
  }
  if (range.length() < W)
    throw VideoTooShort("odd clip needs " + std::to_string(W) + " frames, range has " + std::to_string(range.length()));
  Clip clip;
  clip.indices = odd_permutation(sorted_subset(range, W, rng), rng);
  clip.frames = extract_frames(v, clip.indices);
  clip.is_odd = true;
  return clip;
}

int min_frames_for(Strategy s, int W) {
  return s == Strategy::constrained_consecutive ? constrained_window_length(W) : W;
}

Question build_question(const Video& v, const SamplerConfig& cfg, Rng& rng, std::size_t video_id) {
  cfg.validate();
  require_frames(v, min_frames_for(cfg.strategy, cfg.frames), "question construction");
  Question q;
  q.strategy = cfg.strategy;
  q.source_video_id = video_id;

  FrameRange window{1, static_cast<int>(v.n)};
  if (cfg.strategy == Strategy::constrained_consecutive) window = constrained_window(v, cfg.frames, rng);

  std::vector<Clip> evens;
  for (int i = 0; i < cfg.num_even; ++i) {
    switch (cfg.strategy) {
      case Strategy::consecutive: evens.push_back(sample_consecutive(v, cfg.frames, rng)); break;
      case Strategy::random: evens.push_back(sample_random_ordered(v, cfg.frames, rng)); break;
      case Strategy::constrained_consecutive:
        evens.push_back(sample_consecutive(v, cfg.frames, window, rng));
        break;
    }
  }
  for (std::size_t i = 0; i < evens.size(); ++i)
    for (std::size_t j = i + 1; j < evens.size(); ++j)
      if (evens[i].indices == evens[j].indices) ++q.duplicate_even_pairs;

  Clip odd = make_odd_clip(v, cfg.frames, cfg.strategy, &window, rng);
  std::uniform_int_distribution<int> pos(1, cfg.num_even + 1);
  q.answer = pos(rng);
  q.elements.reserve(cfg.num_even + 1);
  auto it = evens.begin();
  for (int p = 1; p <= cfg.num_even + 1; ++p)
    q.elements.push_back(p == q.answer ? std::move(odd) : std::move(*it++));
  return q;
}

}  // namespace o3n
