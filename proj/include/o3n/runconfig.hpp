#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "o3n/o3nmodel.hpp"
#include "o3n/transfer.hpp"
#include "o3n/videodata.hpp"

namespace o3n {

using KeyValues = std::map<std::string, std::string>;

/// Everything a command needs. Per-module seeds are overwritten by `seed` in resolve().
struct RunConfig {
  std::uint64_t seed = 0;
  bool deterministic = false;
  SynthConfig synth;
  O3NConfig o3n;
  FinetuneConfig finetune;
  std::filesystem::path corpus_dir;  // empty: <run dir>/corpus
  std::filesystem::path checkpoint;  // empty: <run dir>/pretrain.ckpt
  std::filesystem::path model;       // empty: <run dir>/finetune.ckpt

  /// Copies of the module configs with the shared seed and clip settings applied.
  SynthConfig synth_config() const;
  O3NConfig o3n_config() const;
  FinetuneConfig finetune_config() const;
  void validate() const;
};

/// Every accepted key, in canonical order.
const std::vector<std::string>& config_keys();

/// Parses `key = value` lines; `#` starts a comment. Malformed lines raise ConfigError with the line number.
KeyValues parse_config_text(const std::string& text);
KeyValues read_config_file(const std::filesystem::path& path);

/// Sets one field. Unknown keys and unparsable values raise ConfigError naming the key.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
void apply_config(RunConfig& cfg, const KeyValues& kv);

/// Current value of a key, in the text form accepted by set_config_value.
std::string get_config_value(const RunConfig& cfg, const std::string& key);

/// Canonical `key = value` text for every key except seed, deterministic and paths.*.
std::string describe(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

/// <out>/run-<config hash>-<seed>
std::filesystem::path run_directory(const std::filesystem::path& out, const RunConfig& cfg);

}  // namespace o3n
