#include "o3n/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>

#include "o3n/error.hpp"
#include "o3n/image_io.hpp"
#include "o3n/runconfig.hpp"
#include "o3n/sampling.hpp"
#include "o3n/transfer.hpp"
#include "o3n/util.hpp"

namespace o3n {

namespace fs = std::filesystem;

namespace {

struct Context {
  RunConfig cfg;
  fs::path run_dir;
  std::ostream& out;

  fs::path corpus_dir() const { return cfg.corpus_dir.empty() ? run_dir / "corpus" : cfg.corpus_dir; }
  fs::path checkpoint() const { return cfg.checkpoint.empty() ? run_dir / "pretrain.ckpt" : cfg.checkpoint; }
  fs::path model() const { return cfg.model.empty() ? run_dir / "finetune.ckpt" : cfg.model; }

  void prepare() const {
    std::error_code ec;
    fs::create_directories(run_dir, ec);
    if (ec) throw IoError("cannot create run directory " + run_dir.string() + ": " + ec.message());
    write_text(run_dir / "config.txt", "seed = " + std::to_string(cfg.seed) + "\n" + describe(cfg));
  }

  static void write_text(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot write " + p.string());
    f << text;
    if (!f) throw IoError("write failed for " + p.string());
  }

  LabeledCorpus corpus() const {
    const fs::path dir = corpus_dir();
    if (!fs::exists(dir / "index.tsv")) throw IoError("no corpus at " + dir.string() + " (run gen-data first)");
    return load_corpus(dir);
  }
};

std::map<std::string, std::string> run_meta(const Context& c) {
  return {{"config_hash", config_hash(c.cfg)},
          {"seed", std::to_string(c.cfg.seed)},
          {"deterministic", c.cfg.deterministic ? "true" : "false"}};
}

void cmd_gen_data(const Context& c) {
  c.prepare();
  const auto corpus = synth_corpus(c.cfg.synth_config());
  save_corpus(corpus, c.corpus_dir());
  c.out << "wrote " << corpus.videos.size() << " videos to " << c.corpus_dir().string() << "\n";
}

void cmd_pretrain(const Context& c) {
  const auto corpus = c.corpus();
  std::vector<const Video*> videos;
  for (Split s : {Split::train, Split::val})
    for (std::size_t id : corpus.indices(s)) videos.push_back(&corpus.videos[id]);
  c.prepare();
  auto result = pretrain(videos, c.cfg.o3n_config(), [&](const MetricRow& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %d %s loss %.4f acc %.4f lr %.3g\n", r.epoch, r.phase.c_str(), r.loss,
                  r.accuracy, r.lr);
    c.out << buf;
  });
  for (const auto& [k, v] : run_meta(c)) result.checkpoint.meta["run." + k] = v;
  save_checkpoint(result.checkpoint, c.checkpoint());
  Context::write_text(c.run_dir / "pretrain_metrics.csv", metrics_csv(result.metrics));
  c.out << "checkpoint " << c.checkpoint().string() << "\n";
}

void cmd_finetune(const Context& c) {
  const auto corpus = c.corpus();
  FinetuneConfig fc = c.cfg.finetune_config();
  fc.checkpoint_path = c.checkpoint();
  c.prepare();
  auto result = finetune(corpus, fc, [&](const MetricRow& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %d %s loss %.4f acc %.4f lr %.3g\n", r.epoch, r.phase.c_str(), r.loss,
                  r.accuracy, r.lr);
    c.out << buf;
  });
  auto meta = run_meta(c);
  meta["init"] = to_string(fc.init);
  save_checkpoint(classifier_checkpoint(result.model, meta), c.model());
  Context::write_text(c.run_dir / "finetune_metrics.csv", metrics_csv(result.metrics));
  c.out << "model " << c.model().string() << "\n";
}

void cmd_eval(const Context& c, const std::string& split) {
  const auto corpus = c.corpus();
  if (!fs::exists(c.model())) throw IoError("model not found: " + c.model().string());
  const auto model = classifier_from_checkpoint(load_checkpoint(c.model()));
  c.prepare();
  auto report = evaluate(model, corpus, parse_split(split));
  for (const auto& [k, v] : run_meta(c)) report.meta[k] = v;
  // relative inside the run directory so that summaries of identical runs compare equal
  const auto rel = c.model().lexically_relative(c.run_dir);
  report.meta["model"] = (!rel.empty() && *rel.begin() != "..") ? rel.string() : c.model().string();
  Context::write_text(c.run_dir / "eval_confusion.csv", confusion_csv(report));
  Context::write_text(c.run_dir / "eval_summary.txt", summary_text(report));
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s accuracy %.4f over %zu videos\n", split.c_str(), report.accuracy, report.total);
  c.out << buf;
}

void cmd_encode(const Context& c, const fs::path& video_path, int start, const fs::path& dest_opt) {
  const Video v = load_video(video_path);
  const int W = c.cfg.o3n.frames;
  if (W < 2) throw ConfigError("clip.frames must be >= 2");
  if (start < 1) throw ConfigError("--start is 1-based");
  if (start + W - 1 > static_cast<int>(v.n))
    throw VideoTooShort("clip of " + std::to_string(W) + " frames from frame " + std::to_string(start) +
                        " needs " + std::to_string(start + W - 1) + " frames, video has " + std::to_string(v.n));
  std::vector<int> idx(W);
  for (int i = 0; i < W; ++i) idx[i] = start + i;
  const auto enc = encode_clip(extract_frames(v, idx), c.cfg.o3n.encoder);
  const fs::path dest = dest_opt.empty() ? c.run_dir / "encode" : dest_opt;
  std::error_code ec;
  fs::create_directories(dest, ec);
  if (ec) throw IoError("cannot create " + dest.string());
  const auto images = encoded_images(enc);
  const std::string stem = video_path.stem().string() + "_" + to_string(c.cfg.o3n.encoder) + "_t" + std::to_string(start);
  for (std::size_t k = 0; k < images.size(); ++k) {
    const fs::path p = dest / (stem + "_" + std::to_string(k + 1) + ".ppm");
    write_ppm(images[k], p);
    c.out << p.string() << "\n";
  }
}

void cmd_inspect_filters(const Context& c, const fs::path& output_opt) {
  const fs::path ckpt_path = c.checkpoint();
  if (!fs::exists(ckpt_path)) throw IoError("checkpoint not found: " + ckpt_path.string());
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Tensor<float>* k = ckpt.find("conv1.weight");
  if (!k) throw MalformedContainer(ckpt_path.string() + " has no conv1.weight");
  const fs::path out = output_opt.empty() ? c.run_dir / "filters.ppm" : output_opt;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  const Image img = filter_grid(*k);
  write_ppm(img, out);
  const auto [cols, rows] = grid_layout(k->dim(0));
  c.out << out.string() << " (" << cols << "x" << rows << " grid)\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Odd-one-out pretraining and action classification on synthetic videos"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::string out_dir = "runs";
  std::vector<std::string> sets;
  std::map<std::string, std::string> key_flags;

  app.add_option("--config", config_path, "Config file of key = value lines");
  app.add_option("--seed", seed, "Seed for every random stream");
  app.add_flag("--deterministic", deterministic, "Bitwise-reproducible outputs");
  app.add_option("--out", out_dir, "Parent directory of run directories");
  app.add_option("--set", sets, "Override a config key (key=value), repeatable");
  for (const auto& key : config_keys()) {
    if (key == "seed" || key == "deterministic") continue;
    app.add_option_function<std::string>("--" + key, [&key_flags, key](const std::string& v) { key_flags[key] = v; },
                                         "Config key " + key);
  }

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic labeled corpus");
  auto* pre = app.add_subcommand("pretrain", "Self-supervised odd-one-out training");
  auto* fin = app.add_subcommand("finetune", "Supervised fine-tuning of the action classifier");
  auto* ev = app.add_subcommand("eval", "Evaluate the fine-tuned classifier");
  std::string split = "test";
  ev->add_option("--split", split, "train, val or test");
  auto* enc = app.add_subcommand("encode", "Write encoded-clip images");
  std::string video_path, dest;
  int start = 1;
  enc->add_option("--video", video_path, "Video container")->required();
  enc->add_option("--start", start, "First frame, 1-based");
  enc->add_option("--dest", dest, "Output directory");
  auto* filt = app.add_subcommand("inspect-filters", "Tile first-layer filters into an image");
  std::string filters_out;
  filt->add_option("--output", filters_out, "Output image path");

  std::vector<std::string> argv_store;
  argv_store.reserve(args.size() + 1);
  argv_store.push_back("o3n");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) apply_config(cfg, read_config_file(config_path));
    KeyValues flags(key_flags.begin(), key_flags.end());
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      flags[s.substr(0, eq)] = s.substr(eq + 1);
    }
    apply_config(cfg, flags);
    if (seed) cfg.seed = *seed;
    if (deterministic) cfg.deterministic = true;
    cfg.validate();

    Context ctx{cfg, run_directory(out_dir, cfg), out};
    if (gen->parsed()) cmd_gen_data(ctx);
    else if (pre->parsed()) cmd_pretrain(ctx);
    else if (fin->parsed()) cmd_finetune(ctx);
    else if (ev->parsed()) cmd_eval(ctx, split);
    else if (enc->parsed()) cmd_encode(ctx, video_path, start, dest);
    else if (filt->parsed()) cmd_inspect_filters(ctx, filters_out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace o3n
