#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace o3n {

/// Decoded frame sequence, frame-major then row-major, u8 pixels.
struct Video {
  std::uint32_t n = 0;
  std::uint32_t h = 0;
  std::uint32_t w = 0;
  std::uint32_t c = 3;
  std::vector<std::uint8_t> pixels;

  Video() = default;
  Video(std::uint32_t frames, std::uint32_t height, std::uint32_t width, std::uint32_t channels = 3)
      : n(frames), h(height), w(width), c(channels), pixels(std::size_t{frames} * height * width * channels, 0) {}

  std::size_t frame_size() const { return std::size_t{h} * w * c; }
  std::span<std::uint8_t> frame(std::size_t t) { return {pixels.data() + t * frame_size(), frame_size()}; }
  std::span<const std::uint8_t> frame(std::size_t t) const {
    return {pixels.data() + t * frame_size(), frame_size()};
  }
  std::uint8_t& at(std::size_t t, std::size_t y, std::size_t x, std::size_t ch) {
    return pixels[((t * h + y) * w + x) * c + ch];
  }
  std::uint8_t at(std::size_t t, std::size_t y, std::size_t x, std::size_t ch) const {
    return pixels[((t * h + y) * w + x) * c + ch];
  }

  /// Throws DimensionError unless n >= 1, h, w >= 8, c == 3 and the payload matches.
  void validate() const;

  bool operator==(const Video&) const = default;
};

inline constexpr char kVideoMagic[4] = {'O', '3', 'N', 'V'};
inline constexpr std::uint32_t kVideoVersion = 1;
inline constexpr std::size_t kVideoHeaderBytes = 24;

void save_video(const Video& v, const std::filesystem::path& path);
Video load_video(const std::filesystem::path& path);

enum class Split { train, val, test };

std::string to_string(Split s);
Split parse_split(const std::string& s);

struct LabeledCorpus {
  std::vector<Video> videos;
  std::vector<int> labels;
  std::vector<Split> splits;
  std::vector<std::string> class_names;

  std::size_t num_classes() const { return class_names.size(); }
  std::vector<std::size_t> indices(Split s) const;
  void validate() const;
};

struct SynthConfig {
  int num_videos_per_class = 40;
  int num_classes = 6;
  int height = 32;
  int width = 32;
  int frames_per_video = 24;
  int sprite_size = 6;
  double noise_std = 4.0;
  double train_fraction = 0.6;
  double val_fraction = 0.1;
  std::uint64_t seed = 7;

  void validate() const;
};

/// Motion programs, in class-index order. At most kMotionNames.size() classes.
inline const std::vector<std::string> kMotionNames = {"rightward",   "leftward",   "downward", "upward",
                                                      "oscillating", "clockwise",  "diagonal", "counterclockwise"};

/// Parameters of one rendered sprite trajectory.
struct MotionParams {
  int program = 0;
  double x0 = 0, y0 = 0;  // start position (top-left corner of the sprite), pixels
  double speed = 1.5;     // pixels per frame for the linear programs
  double radius = 7.0;    // amplitude for oscillating / circular programs
  double phase = 0.0;
  double period = 12.0;  // frames per revolution / oscillation
};

/// Sprite top-left position at frame t.
std::pair<double, double> motion_position(const MotionParams& m, int t);

/// Background image (h, w, c) plus the sprite colour used by every class.
struct Scene {
  std::vector<float> background;
  float sprite_rgb[3] = {235.f, 215.f, 120.f};
};

/// Renders sprite positions over a scene on a torus (the sprite wraps at the borders, so the
/// visible sprite area is the same in every frame). No noise.
Video render_video(const Scene& scene, int h, int w, int sprite_size, const std::vector<std::pair<double, double>>& positions);

LabeledCorpus synth_corpus(const SynthConfig& cfg);

inline constexpr const char* kCorpusIndexFile = "index.tsv";
inline constexpr const char* kCorpusClassesFile = "classes.txt";

/// Writes one container per video plus the index (`<path>\t<label>\t<split>`) and class names.
void save_corpus(const LabeledCorpus& corpus, const std::filesystem::path& dir);
LabeledCorpus load_corpus(const std::filesystem::path& dir);

}  // namespace o3n
