#include "o3n/runconfig.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "o3n/error.hpp"
#include "o3n/util.hpp"

namespace o3n {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& what) {
  throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as " + what);
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) bad_value(key, v, "an integer");
  return out;
}

int to_i32(const std::string& key, const std::string& v) {
  const long long x = to_int(key, v);
  if (x < -2147483647LL || x > 2147483647LL) bad_value(key, v, "a 32-bit integer");
  return static_cast<int>(x);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) bad_value(key, v, "an unsigned integer");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) bad_value(key, v, "a number");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

template <typename F>
auto parse_tag(const std::string& key, const std::string& v, F parse) {
  try {
    return parse(v);
  } catch (const Error& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define O3N_INT(KEY, MEMBER)                                                                \
  Field {                                                                                   \
    KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = to_i32(KEY, v); },             \
        [](const RunConfig& c) { return std::to_string(c.MEMBER); }                        \
  }
#define O3N_REAL(KEY, MEMBER)                                                               \
  Field {                                                                                   \
    KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = to_double(KEY, v); },          \
        [](const RunConfig& c) { return fmt_double(c.MEMBER); }                            \
  }
#define O3N_PATH(KEY, MEMBER)                                                               \
  Field {                                                                                   \
    KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = v; },                          \
        [](const RunConfig& c) { return c.MEMBER.string(); }                               \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64("seed", v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"deterministic", [](RunConfig& c, const std::string& v) { c.deterministic = to_bool("deterministic", v); },
       [](const RunConfig& c) { return std::string(c.deterministic ? "true" : "false"); }},

      O3N_INT("synth.num_classes", synth.num_classes),
      O3N_INT("synth.videos_per_class", synth.num_videos_per_class),
      O3N_INT("synth.height", synth.height),
      O3N_INT("synth.width", synth.width),
      O3N_INT("synth.frames", synth.frames_per_video),
      O3N_INT("synth.sprite_size", synth.sprite_size),
      O3N_REAL("synth.noise_std", synth.noise_std),
      O3N_REAL("synth.train_fraction", synth.train_fraction),
      O3N_REAL("synth.val_fraction", synth.val_fraction),

      {"clip.frames",
       [](RunConfig& c, const std::string& v) { c.o3n.frames = c.finetune.model.frames = to_i32("clip.frames", v); },
       [](const RunConfig& c) { return std::to_string(c.o3n.frames); }},
      {"clip.encoder",
       [](RunConfig& c, const std::string& v) {
         c.o3n.encoder = c.finetune.model.encoder = parse_tag("clip.encoder", v, parse_encoder);
       },
       [](const RunConfig& c) { return to_string(c.o3n.encoder); }},
      {"trunk.convs",
       [](RunConfig& c, const std::string& v) {
         c.o3n.trunk.convs = c.finetune.model.trunk.convs = parse_tag("trunk.convs", v, parse_conv_specs);
       },
       [](const RunConfig& c) { return format_conv_specs(c.o3n.trunk.convs); }},

      O3N_INT("o3n.n_even", o3n.num_even),
      {"o3n.strategy",
       [](RunConfig& c, const std::string& v) { c.o3n.strategy = parse_tag("o3n.strategy", v, parse_strategy); },
       [](const RunConfig& c) { return to_string(c.o3n.strategy); }},
      {"o3n.fusion", [](RunConfig& c, const std::string& v) { c.o3n.fusion = parse_tag("o3n.fusion", v, parse_fusion); },
       [](const RunConfig& c) { return to_string(c.o3n.fusion); }},
      O3N_INT("o3n.fc_dim", o3n.trunk.fc_dim),
      O3N_INT("o3n.head_dim", o3n.head_dim),
      O3N_INT("o3n.epochs", o3n.epochs),
      O3N_INT("o3n.batch_questions", o3n.batch_questions),
      O3N_REAL("o3n.lr_start", o3n.lr_start),
      O3N_REAL("o3n.lr_end", o3n.lr_end),
      O3N_REAL("o3n.momentum", o3n.momentum),
      O3N_REAL("o3n.weight_decay", o3n.weight_decay),
      O3N_REAL("o3n.clip_norm", o3n.clip_norm),
      O3N_INT("o3n.questions_per_video", o3n.questions_per_video),
      O3N_REAL("o3n.val_fraction", o3n.val_fraction),

      O3N_INT("finetune.hidden_dim", finetune.model.hidden_dim),
      O3N_INT("finetune.hidden_layers", finetune.model.hidden_layers),
      O3N_INT("finetune.epochs", finetune.epochs),
      O3N_INT("finetune.batch_samples", finetune.batch_samples),
      O3N_REAL("finetune.lr_start", finetune.lr_start),
      O3N_REAL("finetune.lr_end", finetune.lr_end),
      O3N_REAL("finetune.fc_lr_multiplier", finetune.fc_lr_multiplier),
      O3N_REAL("finetune.momentum", finetune.momentum),
      O3N_REAL("finetune.weight_decay", finetune.weight_decay),
      O3N_REAL("finetune.clip_norm", finetune.clip_norm),
      O3N_REAL("finetune.dropout", finetune.model.dropout),
      {"finetune.init",
       [](RunConfig& c, const std::string& v) { c.finetune.init = parse_tag("finetune.init", v, parse_init); },
       [](const RunConfig& c) { return to_string(c.finetune.init); }},
      O3N_INT("finetune.clips_per_video", finetune.clips_per_video),

      O3N_PATH("paths.corpus_dir", corpus_dir),
      O3N_PATH("paths.checkpoint", checkpoint),
      O3N_PATH("paths.model", model),
  };
  return table;
}

#undef O3N_INT
#undef O3N_REAL
#undef O3N_PATH

const Field& field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

SynthConfig RunConfig::synth_config() const {
  SynthConfig s = synth;
  s.seed = seed;
  return s;
}

O3NConfig RunConfig::o3n_config() const {
  O3NConfig c = o3n;
  c.seed = seed;
  c.trunk.input_h = synth.height;
  c.trunk.input_w = synth.width;
  return c;
}

FinetuneConfig RunConfig::finetune_config() const {
  FinetuneConfig f = finetune;
  f.seed = seed;
  f.model.num_classes = synth.num_classes;
  f.model.trunk.input_h = synth.height;
  f.model.trunk.input_w = synth.width;
  f.checkpoint_path = checkpoint;
  return f;
}

void RunConfig::validate() const {
  synth_config().validate();
  o3n_config().validate();
  finetune_config().validate();
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

KeyValues parse_config_text(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  field(key).set(cfg, value);
}

void apply_config(RunConfig& cfg, const KeyValues& kv) {
  for (const auto& [k, v] : kv) field(k);
  for (const auto& [k, v] : kv) set_config_value(cfg, k, v);
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) { return field(key).get(cfg); }

std::string describe(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) {
    if (f.key == "seed" || f.key == "deterministic" || f.key.starts_with("paths.")) continue;
    out += f.key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

std::string config_hash(const RunConfig& cfg) { return hex64(fnv1a64(describe(cfg))).substr(0, 12); }

std::filesystem::path run_directory(const std::filesystem::path& out, const RunConfig& cfg) {
  return out / ("run-" + config_hash(cfg) + "-" + std::to_string(cfg.seed));
}

}  // namespace o3n
