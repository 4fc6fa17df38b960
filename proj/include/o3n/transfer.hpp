#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "o3n/autodiff.hpp"
#include "o3n/checkpoint.hpp"
#include "o3n/clipenc.hpp"
#include "o3n/o3nmodel.hpp"
#include "o3n/videodata.hpp"

namespace o3n {

enum class InitKind { random, o3n };

std::string to_string(InitKind k);
InitKind parse_init(const std::string& s);

/// Architecture of the supervised clip classifier: conv trunk, hidden FC layers, K-way output.
struct ClassifierSpec {
  TrunkConfig trunk;  // fc_dim unused; in_channels follows the encoder
  int hidden_dim = 256;
  int hidden_layers = 2;
  int num_classes = 6;
  int frames = 6;
  Encoder encoder = Encoder::dynamic_image;
  double dropout = 0.8;

  void validate() const;
};

struct FinetuneConfig {
  ClassifierSpec model;
  int epochs = 60;
  int batch_samples = 128;
  double lr_start = 1e-3;  // conv layers; FC layers use fc_lr_multiplier times this
  double lr_end = 1e-5;
  double fc_lr_multiplier = 10.0;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double clip_norm = 5.0;  // global gradient-norm bound, 0 disables
  int clips_per_video = 16;
  InitKind init = InitKind::random;
  std::filesystem::path checkpoint_path;
  std::uint64_t seed = 0;

  void validate() const;
  /// Learning-rate range used for the large-scale runs (1e-2 -> 1e-4).
  static FinetuneConfig large_scale_lr_preset();
};

class ActionClassifier {
 public:
  ActionClassifier(const ClassifierSpec& spec, double fc_lr_multiplier, Rng& rng);

  /// (B, h, w, c) encoded clips -> (B, K) logits. Dropout is active only when `train` is set.
  ad::Var<float> forward(const ad::Var<float>& clips, bool train, Rng* dropout_rng) const;
  /// Conv trunk responses, (B, feature_dim).
  ad::Var<float> trunk_features(const ad::Var<float>& clips) const;
  /// Per-clip log-softmax, (B, K), eval mode.
  Tensor<float> log_probs(const Tensor<float>& clips) const;

  const ClassifierSpec& spec() const { return spec_; }
  ad::ParamSet<float>& params() { return params_; }
  const ad::ParamSet<float>& params() const { return params_; }
  std::vector<std::string> fc_param_names() const;

 private:
  ClassifierSpec spec_;
  ad::ParamSet<float> params_;
};

/// Fresh classifier whose conv layers are copied from an O3N checkpoint; FC layers are re-initialized.
ActionClassifier init_from_checkpoint(const Checkpoint& ckpt, const FinetuneConfig& cfg);

struct FinetuneResult {
  ActionClassifier model;
  std::vector<MetricRow> metrics;
};

FinetuneResult finetune(const LabeledCorpus& corpus, const FinetuneConfig& cfg,
                        const std::function<void(const MetricRow&)>& on_metric = {});

struct VideoPrediction {
  int label = 0;
  std::vector<double> log_prob;  // summed over clips, per class
  std::size_t clips = 0;
};

/// Sums per-class log-probabilities over the floor(n / W) non-overlapping clips starting at frame 1.
VideoPrediction predict_video(const ActionClassifier& model, const Video& v);

/// Index of the largest value, lowest index on ties.
int argmax_lowest(const std::vector<double>& scores);

/// Summed log-probabilities of per-clip probability rows, and the winning class.
VideoPrediction aggregate_clip_probs(const std::vector<std::vector<double>>& clip_probs);

struct EvalReport {
  std::vector<std::string> class_names;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<double> per_class_accuracy;
  double accuracy = 0;
  std::size_t total = 0;
  std::map<std::string, std::string> meta;
};

EvalReport make_report(const std::vector<int>& truth, const std::vector<int>& predicted,
                       const std::vector<std::string>& class_names);
EvalReport evaluate(const ActionClassifier& model, const LabeledCorpus& corpus, Split split = Split::test);

std::string confusion_csv(const EvalReport& r);
std::string summary_text(const EvalReport& r);
/// Reads back the key=value summary.
std::map<std::string, std::string> parse_summary(const std::string& text);

Checkpoint classifier_checkpoint(const ActionClassifier& model, std::map<std::string, std::string> extra = {});
ActionClassifier classifier_from_checkpoint(const Checkpoint& ckpt);

}  // namespace o3n
