#include "o3n/videodata.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "o3n/error.hpp"
#include "o3n/rng.hpp"

namespace o3n {

namespace fs = std::filesystem;

void Video::validate() const {
  if (n < 1 || h < 8 || w < 8)
    throw DimensionError("video dimensions must satisfy n >= 1, h >= 8, w >= 8 (got n=" + std::to_string(n) +
                         ", h=" + std::to_string(h) + ", w=" + std::to_string(w) + ")");
  if (c != 3) throw DimensionError("video must have 3 channels, got " + std::to_string(c));
  if (pixels.size() != std::size_t{n} * h * w * c) throw DimensionError("video payload does not match its dimensions");
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
}

}  // namespace

void save_video(const Video& v, const fs::path& path) {
  v.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kVideoMagic, 4);
  put_u32(os, kVideoVersion);
  put_u32(os, v.n);
  put_u32(os, v.h);
  put_u32(os, v.w);
  put_u32(os, v.c);
  os.write(reinterpret_cast<const char*>(v.pixels.data()), static_cast<std::streamsize>(v.pixels.size()));
  if (!os) throw IoError("failed writing " + path.string());
}

Video load_video(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  unsigned char header[kVideoHeaderBytes];
  is.read(reinterpret_cast<char*>(header), kVideoHeaderBytes);
  if (is.gcount() != static_cast<std::streamsize>(kVideoHeaderBytes))
    throw MalformedContainer(path.string() + ": truncated header");
  if (std::memcmp(header, kVideoMagic, 4) != 0) throw MalformedContainer(path.string() + ": bad magic");
  if (get_u32(header + 4) != kVideoVersion)
    throw MalformedContainer(path.string() + ": unsupported version " + std::to_string(get_u32(header + 4)));
  Video v;
  v.n = get_u32(header + 8);
  v.h = get_u32(header + 12);
  v.w = get_u32(header + 16);
  v.c = get_u32(header + 20);
  if (v.n == 0 || v.h == 0 || v.w == 0 || v.c == 0) throw DimensionError(path.string() + ": zero dimension in header");
  const std::uint64_t bytes = std::uint64_t{v.n} * v.h * v.w * v.c;
  if (bytes > (std::uint64_t{1} << 34)) throw MalformedContainer(path.string() + ": implausible payload size");
  v.pixels.resize(bytes);
  is.read(reinterpret_cast<char*>(v.pixels.data()), static_cast<std::streamsize>(bytes));
  if (static_cast<std::uint64_t>(is.gcount()) != bytes) throw MalformedContainer(path.string() + ": truncated payload");
  if (is.peek() != std::char_traits<char>::eof()) throw MalformedContainer(path.string() + ": trailing bytes");
  v.validate();
  return v;
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + s + "'");
}

std::vector<std::size_t> LabeledCorpus::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == s) out.push_back(i);
  return out;
}

void LabeledCorpus::validate() const {
  if (labels.size() != videos.size() || splits.size() != videos.size())
    throw ConfigError("corpus labels/splits do not match the number of videos");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= class_names.size())
      throw LabelOutOfRange("corpus label " + std::to_string(l) + " outside [0, " +
                            std::to_string(class_names.size()) + ")");
}

void SynthConfig::validate() const {
  if (num_classes < 2 || num_classes > static_cast<int>(kMotionNames.size()))
    throw ConfigError("num_classes must be in [2, " + std::to_string(kMotionNames.size()) + "]");
  if (num_videos_per_class < 1) throw ConfigError("num_videos_per_class must be >= 1");
  if (height < 8 || width < 8) throw ConfigError("video height and width must be >= 8");
  if (frames_per_video < 2) throw ConfigError("frames_per_video must be >= 2");
  if (sprite_size < 1 || sprite_size >= std::min(height, width))
    throw ConfigError("sprite_size must be in [1, min(height, width))");
  if (!(noise_std >= 0)) throw ConfigError("noise_std must be >= 0");
  if (train_fraction < 0 || val_fraction < 0 || train_fraction + val_fraction > 1)
    throw ConfigError("train_fraction and val_fraction must be non-negative and sum to at most 1");
}

std::pair<double, double> motion_position(const MotionParams& m, int t) {
  const double theta = 2.0 * std::numbers::pi * t / m.period;
  switch (m.program) {
    case 0: return {m.x0 + m.speed * t, m.y0};
    case 1: return {m.x0 - m.speed * t, m.y0};
    case 2: return {m.x0, m.y0 + m.speed * t};
    case 3: return {m.x0, m.y0 - m.speed * t};
    case 4: return {m.x0 + m.radius * std::sin(m.phase + theta), m.y0};
    case 5: return {m.x0 + m.radius * std::cos(m.phase + theta), m.y0 + m.radius * std::sin(m.phase + theta)};
    case 6: return {m.x0 + m.speed * t, m.y0 + m.speed * t};
    case 7: return {m.x0 + m.radius * std::cos(m.phase - theta), m.y0 + m.radius * std::sin(m.phase - theta)};
    default: throw ConfigError("unknown motion program " + std::to_string(m.program));
  }
}

namespace {

// Length of [a, a+s) ∩ [p, p+1) on a circle of circumference len.
double torus_overlap(double a, double s, int p, int len) {
  a = std::fmod(a, static_cast<double>(len));
  if (a < 0) a += len;
  double total = 0;
  for (int k = -1; k <= 1; ++k) {
    const double lo = std::max(a + k * len, static_cast<double>(p));
    const double hi = std::min(a + k * len + s, static_cast<double>(p + 1));
    if (hi > lo) total += hi - lo;
  }
  return total;
}

std::vector<float> render_float(const Scene& scene, int h, int w, int sprite_size,
                                const std::vector<std::pair<double, double>>& positions) {
  const std::size_t frame = static_cast<std::size_t>(h) * w * 3;
  std::vector<float> out(positions.size() * frame);
  std::vector<double> cov_x(w), cov_y(h);
  for (std::size_t t = 0; t < positions.size(); ++t) {
    const auto [px, py] = positions[t];
    for (int x = 0; x < w; ++x) cov_x[x] = torus_overlap(px, sprite_size, x, w);
    for (int y = 0; y < h; ++y) cov_y[y] = torus_overlap(py, sprite_size, y, h);
    float* f = out.data() + t * frame;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const auto cov = static_cast<float>(cov_x[x] * cov_y[y]);
        for (int ch = 0; ch < 3; ++ch) {
          const std::size_t i = (static_cast<std::size_t>(y) * w + x) * 3 + ch;
          f[i] = scene.background[i] * (1.f - cov) + scene.sprite_rgb[ch] * cov;
        }
      }
  }
  return out;
}

std::uint8_t quantize(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

Scene random_scene(int h, int w, Rng& rng) {
  std::uniform_real_distribution<double> base(10.0, 40.0);
  std::uniform_real_distribution<double> freq(0.05, 0.35);
  std::uniform_real_distribution<double> ph(0.0, 2.0 * std::numbers::pi);
  Scene scene;
  scene.background.resize(static_cast<std::size_t>(h) * w * 3);
  double level[3];
  for (double& l : level) l = base(rng);
  const double fx = freq(rng), fy = freq(rng), p1 = ph(rng), p2 = ph(rng);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double tex = 6.0 * std::sin(fx * x + p1) + 6.0 * std::sin(fy * y + p2);
      for (int ch = 0; ch < 3; ++ch)
        scene.background[(static_cast<std::size_t>(y) * w + x) * 3 + ch] = static_cast<float>(level[ch] + tex);
    }
  return scene;
}

}  // namespace

Video render_video(const Scene& scene, int h, int w, int sprite_size,
                   const std::vector<std::pair<double, double>>& positions) {
  const auto f = render_float(scene, h, w, sprite_size, positions);
  Video v(static_cast<std::uint32_t>(positions.size()), h, w, 3);
  std::transform(f.begin(), f.end(), v.pixels.begin(), [](float x) { return quantize(x); });
  return v;
}

LabeledCorpus synth_corpus(const SynthConfig& cfg) {
  cfg.validate();
  LabeledCorpus corpus;
  corpus.class_names.assign(kMotionNames.begin(), kMotionNames.begin() + cfg.num_classes);
  const int per_class = cfg.num_videos_per_class;
  const int n_train = static_cast<int>(std::lround(cfg.train_fraction * per_class));
  const int n_val = std::min(per_class - n_train, static_cast<int>(std::lround(cfg.val_fraction * per_class)));

  for (int k = 0; k < cfg.num_classes; ++k) {
    for (int i = 0; i < per_class; ++i) {
      const std::uint64_t video_index = static_cast<std::uint64_t>(k) * per_class + i;
      Rng rng = derive_rng(cfg.seed, video_index);
      const Scene scene = random_scene(cfg.height, cfg.width, rng);

      std::uniform_real_distribution<double> ux(0.0, cfg.width), uy(0.0, cfg.height);
      std::uniform_real_distribution<double> speed(1.0, 2.0), radius(5.0, 9.0), period(10.0, 14.0);
      std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
      MotionParams m;
      m.program = k;
      m.x0 = ux(rng);
      m.y0 = uy(rng);
      m.speed = speed(rng);
      m.radius = radius(rng);
      m.period = period(rng);
      m.phase = phase(rng);

      std::vector<std::pair<double, double>> positions;
      for (int t = 0; t < cfg.frames_per_video; ++t) positions.push_back(motion_position(m, t));
      auto frames = render_float(scene, cfg.height, cfg.width, cfg.sprite_size, positions);

      Video v(cfg.frames_per_video, cfg.height, cfg.width, 3);
      std::normal_distribution<double> noise(0.0, cfg.noise_std > 0 ? cfg.noise_std : 1.0);
      for (std::size_t j = 0; j < frames.size(); ++j) {
        const double px = frames[j] + (cfg.noise_std > 0 ? noise(rng) : 0.0);
        v.pixels[j] = quantize(px);
      }
      corpus.videos.push_back(std::move(v));
      corpus.labels.push_back(k);
      corpus.splits.push_back(i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test));
    }
  }
  return corpus;
}

void save_corpus(const LabeledCorpus& corpus, const fs::path& dir) {
  corpus.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create corpus directory " + dir.string() + ": " + ec.message());
  std::ofstream index(dir / kCorpusIndexFile, std::ios::trunc);
  if (!index) throw IoError("cannot write " + (dir / kCorpusIndexFile).string());
  for (std::size_t i = 0; i < corpus.videos.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "video_%05zu.o3nv", i);
    save_video(corpus.videos[i], dir / name);
    index << name << '\t' << corpus.labels[i] << '\t' << to_string(corpus.splits[i]) << '\n';
  }
  std::ofstream classes(dir / kCorpusClassesFile, std::ios::trunc);
  for (const auto& c : corpus.class_names) classes << c << '\n';
  if (!index || !classes) throw IoError("failed writing corpus index in " + dir.string());
}

LabeledCorpus load_corpus(const fs::path& dir) {
  std::ifstream index(dir / kCorpusIndexFile);
  if (!index) throw IoError("cannot open corpus index " + (dir / kCorpusIndexFile).string());
  LabeledCorpus corpus;
  std::string line;
  int max_label = -1;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string rel, label, split;
    if (!std::getline(ls, rel, '\t') || !std::getline(ls, label, '\t') || !std::getline(ls, split))
      throw MalformedContainer("corpus index line malformed: '" + line + "'");
    corpus.videos.push_back(load_video(dir / rel));
    corpus.labels.push_back(std::stoi(label));
    corpus.splits.push_back(parse_split(split));
    max_label = std::max(max_label, corpus.labels.back());
  }
  std::ifstream classes(dir / kCorpusClassesFile);
  while (classes && std::getline(classes, line))
    if (!line.empty()) corpus.class_names.push_back(line);
  for (int k = static_cast<int>(corpus.class_names.size()); k <= max_label; ++k)
    corpus.class_names.push_back("class_" + std::to_string(k));
  corpus.validate();
  return corpus;
}

}  // namespace o3n
