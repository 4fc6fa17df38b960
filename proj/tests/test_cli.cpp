#include <doctest.h>

#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "o3n/cli.hpp"
#include "o3n/image_io.hpp"
#include "o3n/runconfig.hpp"
#include "o3n/transfer.hpp"

using namespace o3n;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> with(std::vector<std::string> base, const std::vector<std::string>& more) {
  base.insert(base.end(), more.begin(), more.end());
  return base;
}

// small enough to run the whole pipeline in seconds
const std::vector<std::string> kQuick = {"--synth.videos_per_class", "4", "--o3n.epochs", "2", "--o3n.batch_questions",
                                         "8", "--finetune.epochs", "2", "--finetune.clips_per_video", "2",
                                         "--finetune.batch_samples", "16", "--clip.encoder", "stack_of_diff"};

fs::path only_run_dir(const fs::path& out) {
  std::vector<fs::path> runs;
  for (const auto& e : fs::directory_iterator(out)) runs.push_back(e.path());
  REQUIRE(runs.size() == 1);
  return runs[0];
}

}  // namespace

TEST_CASE("gen-data writes the default corpus and is reproducible") {
  const auto dir = test::tmp_dir("cli_gen");
  auto r = cli({"gen-data", "--out", (dir / "a").string(), "--seed", "7"});
  REQUIRE(r.code == 0);
  const auto run = only_run_dir(dir / "a");
  std::size_t videos = 0;
  for (const auto& e : fs::directory_iterator(run / "corpus")) videos += e.path().extension() == ".o3nv";
  CHECK(videos == 240);
  const auto index = slurp(run / "corpus" / "index.tsv");
  CHECK(std::count(index.begin(), index.end(), '\n') == 240);
  CHECK(fs::exists(run / "config.txt"));

  r = cli({"gen-data", "--out", (dir / "b").string(), "--seed", "7"});
  REQUIRE(r.code == 0);
  const auto run_b = only_run_dir(dir / "b");
  CHECK(run.filename() == run_b.filename());
  for (const auto& e : fs::directory_iterator(run / "corpus"))
    CHECK(slurp(e.path()) == slurp(run_b / "corpus" / e.path().filename()));
}

TEST_CASE("bad keys and arguments") {
  const auto dir = test::tmp_dir("cli_bad");
  auto r = cli({"gen-data", "--out", dir.string(), "--set", "foo=1"});
  CHECK(r.code != 0);
  CHECK(r.err.find("foo") != std::string::npos);

  r = cli({"gen-data", "--out", dir.string(), "--nonsense"});
  CHECK(r.code == 2);
  r = cli({});
  CHECK(r.code == 2);

  r = cli({"pretrain", "--out", dir.string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("gen-data") != std::string::npos);
}

TEST_CASE("precedence: flag over file over default") {
  const auto dir = test::tmp_dir("cli_precedence");
  {
    std::ofstream f(dir / "run.conf");
    f << "seed = 3\nsynth.videos_per_class = 2\nsynth.frames = 12\n";
  }
  auto r = cli({"gen-data", "--out", (dir / "runs").string(), "--config", (dir / "run.conf").string(), "--seed", "7",
                "--synth.frames", "10"});
  REQUIRE(r.code == 0);
  const auto run = only_run_dir(dir / "runs");
  CHECK(run.filename().string().substr(run.filename().string().size() - 2) == "-7");
  const auto config = slurp(run / "config.txt");
  CHECK(config.find("seed = 7") != std::string::npos);
  CHECK(config.find("synth.videos_per_class = 2") != std::string::npos);
  CHECK(config.find("synth.frames = 10") != std::string::npos);
  CHECK(config.find("synth.height = 32") != std::string::npos);

  const auto corpus = load_corpus(run / "corpus");
  CHECK(corpus.videos.size() == 12);
  CHECK(corpus.videos[0].n == 10);

  // --set and key flags have the same rank
  r = cli({"gen-data", "--out", (dir / "runs2").string(), "--config", (dir / "run.conf").string(), "--set",
           "synth.frames=9"});
  REQUIRE(r.code == 0);
  CHECK(load_corpus(only_run_dir(dir / "runs2") / "corpus").videos[0].n == 9);
}

TEST_CASE("missing checkpoint for o3n init names the path") {
  const auto dir = test::tmp_dir("cli_missing_ckpt");
  const auto base = with({"--out", dir.string(), "--finetune.init", "o3n"}, kQuick);
  REQUIRE(cli(with({"gen-data"}, base)).code == 0);
  const auto r = cli(with({"finetune", "--paths.checkpoint", (dir / "nope.ckpt").string()}, base));
  CHECK(r.code != 0);
  CHECK(r.err.find("nope.ckpt") != std::string::npos);
}

TEST_CASE("pipeline smoke run") {
  const auto dir = test::tmp_dir("cli_pipeline");
  const auto base = with({"--out", dir.string(), "--seed", "4", "--deterministic", "--finetune.init", "o3n"}, kQuick);
  REQUIRE(cli(with({"gen-data"}, base)).code == 0);
  auto r = cli(with({"pretrain"}, base));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("epoch 1 train") != std::string::npos);
  r = cli(with({"finetune"}, base));
  INFO(r.err);
  REQUIRE(r.code == 0);
  r = cli(with({"eval"}, base));
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("test accuracy") != std::string::npos);

  const auto run = only_run_dir(dir);
  const auto summary = parse_summary(slurp(run / "eval_summary.txt"));
  CHECK(summary.count("accuracy") == 1);
  CHECK(summary.at("seed") == "4");
  CHECK(summary.at("deterministic") == "true");
  CHECK(summary.at("total") == "12");
  CHECK(fs::exists(run / "eval_confusion.csv"));
  CHECK(fs::exists(run / "finetune_metrics.csv"));
  CHECK(slurp(run / "finetune_metrics.csv").rfind("epoch,phase,loss,accuracy,lr\n", 0) == 0);

  const auto ckpt = load_checkpoint(run / "pretrain.ckpt");
  CHECK(ckpt.meta.at("run.seed") == "4");
  CHECK(fs::exists(run / "pretrain_metrics.csv"));

  r = cli(with({"inspect-filters"}, base));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("4x4 grid") != std::string::npos);
  const auto img = read_ppm(run / "filters.ppm");
  CHECK(img.width == 4 * 40 + 5);
}

TEST_CASE("encode writes one image per channel triple") {
  const auto dir = test::tmp_dir("cli_encode");
  Video v(12, 16, 16);
  for (std::size_t i = 0; i < v.pixels.size(); ++i) v.pixels[i] = static_cast<std::uint8_t>((i * 31) % 256);
  save_video(v, dir / "clip.o3nv");

  auto r = cli({"encode", "--out", dir.string(), "--clip.encoder", "stack_of_diff", "--video",
                (dir / "clip.o3nv").string(), "--start", "3", "--dest", (dir / "img").string()});
  REQUIRE(r.code == 0);
  std::size_t images = 0;
  for (const auto& e : fs::directory_iterator(dir / "img")) images += e.path().extension() == ".ppm";
  CHECK(images == 5);
  CHECK(fs::exists(dir / "img" / "clip_stack_of_diff_t3_1.ppm"));

  Video flat(8, 16, 16);
  std::fill(flat.pixels.begin(), flat.pixels.end(), std::uint8_t{90});
  save_video(flat, dir / "flat.o3nv");
  r = cli({"encode", "--out", dir.string(), "--video", (dir / "flat.o3nv").string(), "--dest", (dir / "flat").string()});
  REQUIRE(r.code == 0);
  const auto img = read_ppm(dir / "flat" / "flat_dynamic_image_t1_1.ppm");
  for (auto p : img.rgb) CHECK(p == 128);

  r = cli({"encode", "--out", dir.string(), "--video", (dir / "flat.o3nv").string(), "--start", "4"});
  CHECK(r.code == 1);
  CHECK(r.err.find("frames") != std::string::npos);
}
