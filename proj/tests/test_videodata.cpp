#include <doctest.h>

#include <array>
#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "o3n/error.hpp"
#include "o3n/rng.hpp"
#include "o3n/videodata.hpp"

using namespace o3n;
namespace fs = std::filesystem;

namespace {

Video random_video(std::uint32_t n, std::uint32_t h, std::uint32_t w, std::uint64_t seed) {
  Video v(n, h, w, 3);
  Rng rng(seed);
  std::uniform_int_distribution<int> d(0, 255);
  for (auto& p : v.pixels) p = static_cast<std::uint8_t>(d(rng));
  return v;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::vector<char>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(b.data(), static_cast<std::streamsize>(b.size()));
}

void put_u32(std::vector<char>& b, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[at + i] = static_cast<char>((v >> (8 * i)) & 0xff);
}

}  // namespace

TEST_CASE("video container round-trips bitwise") {
  const auto dir = test::tmp_dir("videodata_roundtrip");
  for (auto [n, h, w] : std::vector<std::array<std::uint32_t, 3>>{{1, 8, 8}, {2, 8, 8}, {7, 12, 9}, {24, 32, 32}}) {
    const Video v = random_video(n, h, w, n * 131 + h);
    save_video(v, dir / "v.o3nv");
    const Video back = load_video(dir / "v.o3nv");
    CHECK(back == v);
  }
}

TEST_CASE("container layout: header then frame-major bytes") {
  const auto dir = test::tmp_dir("videodata_layout");
  const Video v = random_video(2, 8, 8, 5);
  save_video(v, dir / "v.o3nv");
  const auto bytes = read_bytes(dir / "v.o3nv");
  // magic + version + n + h + w + c = 4 + 5 * 4 bytes, then 2 * 8 * 8 * 3 pixels
  CHECK(kVideoHeaderBytes == 24);
  CHECK(bytes.size() == 24 + 384);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "O3NV");
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == 2);
  CHECK(bytes[12] == 8);
  CHECK(bytes[16] == 8);
  CHECK(bytes[20] == 3);
  CHECK(static_cast<std::uint8_t>(bytes[24 + 5]) == v.pixels[5]);
}

TEST_CASE("malformed containers are rejected") {
  const auto dir = test::tmp_dir("videodata_malformed");
  const Video v = random_video(10, 8, 8, 9);
  save_video(v, dir / "good.o3nv");
  auto bytes = read_bytes(dir / "good.o3nv");

  SUBCASE("bad magic") {
    auto b = bytes;
    std::copy_n("XXXX", 4, b.begin());
    write_bytes(dir / "bad.o3nv", b);
    CHECK_THROWS_AS(load_video(dir / "bad.o3nv"), MalformedContainer);
  }
  SUBCASE("payload one frame short") {
    auto b = bytes;
    b.resize(b.size() - 8 * 8 * 3);
    write_bytes(dir / "short.o3nv", b);
    CHECK_THROWS_AS(load_video(dir / "short.o3nv"), MalformedContainer);
  }
  SUBCASE("truncated header") {
    auto b = bytes;
    b.resize(10);
    write_bytes(dir / "hdr.o3nv", b);
    CHECK_THROWS_AS(load_video(dir / "hdr.o3nv"), MalformedContainer);
  }
  SUBCASE("zero dimension") {
    auto b = bytes;
    put_u32(b, 12, 0);
    b.resize(24);
    write_bytes(dir / "zero.o3nv", b);
    CHECK_THROWS_AS(load_video(dir / "zero.o3nv"), DimensionError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_video(dir / "absent.o3nv"), IoError); }
}

TEST_CASE("unwritable destination raises IoError") {
  const auto dir = test::tmp_dir("videodata_unwritable");
  const Video v = random_video(1, 8, 8, 1);
  CHECK_THROWS_AS(save_video(v, dir / "no_such_dir" / "v.o3nv"), IoError);
}

TEST_CASE("invalid videos are refused") {
  Video v(1, 4, 8, 3);
  CHECK_THROWS_AS(v.validate(), DimensionError);
  Video ok(1, 8, 8, 3);
  CHECK_NOTHROW(ok.validate());
}

TEST_CASE("synthetic corpus is deterministic and balanced") {
  SynthConfig cfg;
  cfg.seed = 7;
  const auto a = synth_corpus(cfg);
  const auto b = synth_corpus(cfg);
  REQUIRE(a.videos.size() == 240);
  CHECK(a.videos == b.videos);
  CHECK(a.labels == b.labels);
  CHECK(a.splits == b.splits);

  std::array<int, 6> per_class{};
  for (int l : a.labels) ++per_class.at(l);
  for (int c : per_class) CHECK(c == 40);
  CHECK(a.class_names.size() == 6);

  for (const auto& v : a.videos) {
    CHECK(v.n == 24);
    CHECK(v.h == 32);
    CHECK(v.w == 32);
    CHECK(v.c == 3);
  }

  cfg.seed = 8;
  CHECK(synth_corpus(cfg).videos != a.videos);
}

TEST_CASE("splits are disjoint and sized per class") {
  const auto corpus = synth_corpus(SynthConfig{});
  const auto train = corpus.indices(Split::train);
  const auto val = corpus.indices(Split::val);
  const auto test_ids = corpus.indices(Split::test);
  CHECK(train.size() == 6 * 24);
  CHECK(val.size() == 6 * 4);
  CHECK(test_ids.size() == 6 * 12);
  CHECK(train.size() + val.size() + test_ids.size() == corpus.videos.size());
}

TEST_CASE("corpus directory round-trips") {
  const auto dir = test::tmp_dir("videodata_corpus");
  SynthConfig cfg;
  cfg.num_videos_per_class = 3;
  const auto corpus = synth_corpus(cfg);
  save_corpus(corpus, dir);
  const auto back = load_corpus(dir);
  CHECK(back.videos == corpus.videos);
  CHECK(back.labels == corpus.labels);
  CHECK(back.splits == corpus.splits);
  CHECK(back.class_names == corpus.class_names);

  std::ifstream index(dir / kCorpusIndexFile);
  std::string line;
  int lines = 0;
  while (std::getline(index, line)) ++lines;
  CHECK(lines == 18);
}

TEST_CASE("time-reversed rightward motion is leftward motion") {
  const int n = 24, h = 32, w = 32, s = 6;
  Scene scene;
  scene.background.assign(static_cast<std::size_t>(h) * w * 3, 0.f);
  for (std::size_t i = 0; i < scene.background.size(); ++i) scene.background[i] = static_cast<float>(20 + (i * 7) % 40);

  MotionParams right;
  right.program = 0;
  right.x0 = 3.25;
  right.y0 = 11.5;
  right.speed = 1.4;
  MotionParams left = right;
  left.program = 1;
  left.x0 = right.x0 + right.speed * (n - 1);

  std::vector<std::pair<double, double>> pr, pl;
  for (int t = 0; t < n; ++t) {
    pr.push_back(motion_position(right, t));
    pl.push_back(motion_position(left, t));
  }
  const Video vr = render_video(scene, h, w, s, pr);
  const Video vl = render_video(scene, h, w, s, pl);

  // Noise-free frames coincide exactly once one video is played backwards.
  for (int t = 0; t < n; ++t) {
    const auto a = vr.frame(n - 1 - t);
    const auto b = vl.frame(t);
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }

  // With independent pixel noise the per-frame histograms still agree up to noise.
  Rng ra(1), rb(2);
  std::normal_distribution<double> noise(0.0, 4.0);
  auto noisy = [&](const Video& v, Rng& r) {
    Video out = v;
    for (auto& p : out.pixels) p = static_cast<std::uint8_t>(std::clamp(std::lround(p + noise(r)), 0L, 255L));
    return out;
  };
  const Video nr = noisy(vr, ra), nl = noisy(vl, rb);
  for (int t = 0; t < n; ++t) {
    std::array<double, 16> ha{}, hb{};
    for (auto p : nr.frame(n - 1 - t)) ha[p / 16] += 1;
    for (auto p : nl.frame(t)) hb[p / 16] += 1;
    double l1 = 0;
    for (int i = 0; i < 16; ++i) l1 += std::abs(ha[i] - hb[i]);
    // bins are 16 wide and noise std 4: only pixels near bin edges can move
    CHECK(l1 / static_cast<double>(h * w * 3) < 0.6);
    double ma = 0, mb = 0;
    for (auto p : nr.frame(n - 1 - t)) ma += p;
    for (auto p : nl.frame(t)) mb += p;
    CHECK(std::abs(ma - mb) / static_cast<double>(h * w * 3) < 0.5);
  }
}

TEST_CASE("single-frame appearance does not reveal the class") {
  const auto corpus = synth_corpus(SynthConfig{});
  const std::size_t K = corpus.num_classes();
  auto frame_means = [](const Video& v, std::size_t t) {
    std::array<double, 3> m{};
    const auto f = v.frame(t);
    for (std::size_t i = 0; i < f.size(); ++i) m[i % 3] += f[i];
    for (auto& x : m) x /= static_cast<double>(f.size() / 3);
    return m;
  };
  std::vector<std::array<double, 3>> centroid(K, {0, 0, 0});
  std::vector<double> count(K, 0);
  for (std::size_t id : corpus.indices(Split::train))
    for (std::size_t t = 0; t < corpus.videos[id].n; ++t) {
      const auto m = frame_means(corpus.videos[id], t);
      for (int c = 0; c < 3; ++c) centroid[corpus.labels[id]][c] += m[c];
      count[corpus.labels[id]] += 1;
    }
  for (std::size_t k = 0; k < K; ++k)
    for (auto& x : centroid[k]) x /= count[k];

  std::size_t hits = 0, total = 0;
  for (std::size_t id : corpus.indices(Split::test))
    for (std::size_t t = 0; t < corpus.videos[id].n; ++t) {
      const auto m = frame_means(corpus.videos[id], t);
      std::size_t best = 0;
      double best_d = 1e300;
      for (std::size_t k = 0; k < K; ++k) {
        double d = 0;
        for (int c = 0; c < 3; ++c) d += (m[c] - centroid[k][c]) * (m[c] - centroid[k][c]);
        if (d < best_d) best_d = d, best = k;
      }
      hits += best == static_cast<std::size_t>(corpus.labels[id]);
      ++total;
    }
  const double acc = static_cast<double>(hits) / static_cast<double>(total);
  MESSAGE("nearest-centroid frame accuracy " << acc);
  CHECK(acc <= 1.0 / static_cast<double>(K) + 0.15);
}

TEST_CASE("bad synthetic configs raise ConfigError") {
  SynthConfig cfg;
  cfg.num_classes = 1;
  CHECK_THROWS_AS(synth_corpus(cfg), ConfigError);
  cfg = SynthConfig{};
  cfg.num_classes = 9;
  CHECK_THROWS_AS(synth_corpus(cfg), ConfigError);
}
