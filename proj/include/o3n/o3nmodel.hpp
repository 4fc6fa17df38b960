#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "o3n/autodiff.hpp"
#include "o3n/checkpoint.hpp"
#include "o3n/clipenc.hpp"
#include "o3n/sampling.hpp"
#include "o3n/videodata.hpp"

namespace o3n {

/// One convolution block: conv(out, kernel x kernel, stride, pad = kernel / 2) -> relu -> maxpool(pool).
/// pool <= 1 disables pooling.
struct ConvSpec {
  int out_channels = 16;
  int kernel = 3;
  int stride = 1;
  int pool = 2;
  bool operator==(const ConvSpec&) const = default;
};

/// Parses "16:5:2:2,32:3:1:2" (out:kernel:stride:pool per layer).
std::vector<ConvSpec> parse_conv_specs(const std::string& s);
std::string format_conv_specs(const std::vector<ConvSpec>& specs);

struct TrunkConfig {
  std::vector<ConvSpec> convs = {{16, 5, 2, 2}, {32, 3, 1, 2}, {64, 3, 1, 2}};
  int fc_dim = 128;  // d, the first fully connected layer
  int in_channels = 3;
  int input_h = 32;
  int input_w = 32;

  /// Flattened size of the last conv block output.
  std::size_t feature_dim() const;
  void validate() const;
};

std::vector<std::string> conv_param_names(const TrunkConfig& trunk);

template <typename T>
void add_conv_params(ad::ParamSet<T>& params, const TrunkConfig& trunk, Rng& rng);

/// Conv blocks of the trunk: (B, h, w, c_in) -> (B, feature_dim).
template <typename T>
ad::Var<T> conv_features(const ad::ParamSet<T>& params, const TrunkConfig& trunk, const ad::Var<T>& x);

enum class Fusion { concat, sum_of_diff };

std::string to_string(Fusion f);
Fusion parse_fusion(const std::string& s);

struct O3NConfig {
  int num_even = 5;  // N
  int frames = 6;    // W
  Strategy strategy = Strategy::random;
  Encoder encoder = Encoder::dynamic_image;
  Fusion fusion = Fusion::sum_of_diff;
  TrunkConfig trunk;
  int head_dim = 128;
  int epochs = 200;
  int batch_questions = 64;
  double lr_start = 0.01;
  double lr_end = 0.0001;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double clip_norm = 5.0;  // global gradient-norm bound, 0 disables
  int questions_per_video = 1;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;

  int branches() const { return num_even + 1; }
  /// Trunk with in_channels set from the encoder.
  TrunkConfig resolved_trunk() const;
  SamplerConfig sampler() const { return {num_even, frames, strategy, seed}; }
  void validate() const;
  /// Canonical key=value description (excludes the seed).
  std::string describe() const;
};

/// Multi-branch odd-one-out network with one shared trunk.
template <typename T>
class O3NNetwork {
 public:
  O3NNetwork(const O3NConfig& cfg, Rng& rng);

  /// (B, h, w, c) encoded clips -> (B, d) first fully connected activations.
  ad::Var<T> forward_branch(const ad::Var<T>& clips) const;
  /// (B, M, d) -> fused vector per question.
  ad::Var<T> fuse(const ad::Var<T>& activations) const;
  /// (Q * M, h, w, c), question-major -> (Q, M) logits.
  ad::Var<T> forward(const ad::Var<T>& clips) const;

  ad::ParamSet<T>& params() { return params_; }
  const ad::ParamSet<T>& params() const { return params_; }
  const O3NConfig& config() const { return cfg_; }
  const TrunkConfig& trunk() const { return trunk_; }

 private:
  O3NConfig cfg_;
  TrunkConfig trunk_;
  ad::ParamSet<T> params_;
};

/// Geometric interpolation from lr_start at epoch 0 to lr_end at epoch epochs - 1.
double lr_at(int epoch, int epochs, double lr_start, double lr_end);

/// Encodes every element of every question into one (Q * M, h, w, c) batch.
Tensor<float> encode_questions(const std::vector<Question>& questions, Encoder encoder);
std::vector<int> answer_labels(const std::vector<Question>& questions);

struct StepStats {
  double loss = 0;
  double accuracy = 0;
  double grad_norm = 0;  // before clipping
};

/// One SGD step on a batch of encoded questions (labels are 0-based answers).
StepStats o3n_train_step(O3NNetwork<float>& net, ad::Sgd<float>& opt, const Tensor<float>& clips,
                         std::span<const int> labels, double lr);

struct O3NEval {
  double loss = 0;
  double accuracy = 0;
  double mean_true_prob = 0;  // softmax mass on the odd position
  double mean_even_prob = 0;  // average mass on a single even position
  std::size_t questions = 0;
};

O3NEval evaluate_o3n(const O3NNetwork<float>& net, const Tensor<float>& clips, std::span<const int> labels,
                     std::size_t batch_questions = 64);

struct MetricRow {
  int epoch = 0;
  std::string phase;
  double loss = 0;
  double accuracy = 0;
  double lr = 0;
};

inline constexpr const char* kMetricsHeader = "epoch,phase,loss,accuracy,lr";
std::string metrics_csv(const std::vector<MetricRow>& rows);

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<MetricRow> metrics;
  O3NEval final_val;
  std::size_t train_videos = 0;
  std::size_t val_videos = 0;
  std::size_t duplicate_even_pairs = 0;
};

/// Self-supervised odd-one-out training. Questions are regenerated from every training video
/// each epoch; a val_fraction of the videos is held out for validation questions.
PretrainResult pretrain(const std::vector<const Video*>& videos, const O3NConfig& cfg,
                        const std::function<void(const MetricRow&)>& on_metric = {});

std::map<std::string, std::string> o3n_metadata(const O3NConfig& cfg);
/// Rebuilds the config stored in an O3N checkpoint's metadata.
O3NConfig o3n_config_from_metadata(const std::map<std::string, std::string>& meta);

}  // namespace o3n
