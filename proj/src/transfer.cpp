#include "o3n/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "o3n/error.hpp"
#include "o3n/sampling.hpp"
#include "o3n/util.hpp"

namespace o3n {

std::string to_string(InitKind k) { return k == InitKind::random ? "random" : "o3n"; }

InitKind parse_init(const std::string& s) {
  if (s == "random") return InitKind::random;
  if (s == "o3n" || s == "o3n_checkpoint") return InitKind::o3n;
  throw ConfigError("unknown init '" + s + "' (expected random or o3n)");
}

void ClassifierSpec::validate() const {
  TrunkConfig t = trunk;
  t.in_channels = encoded_channels(encoder, frames);
  t.validate();
  if (hidden_dim < 1 || hidden_layers < 0) throw ConfigError("classifier hidden layers need width >= 1");
  if (num_classes < 2) throw ConfigError("classifier needs at least 2 classes");
  if (frames < 2) throw ConfigError("clips need at least 2 frames");
  if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must be in [0, 1)");
}

void FinetuneConfig::validate() const {
  model.validate();
  if (epochs < 2) throw ConfigError("fine-tuning needs at least 2 epochs");
  if (batch_samples < 1) throw ConfigError("batch_samples must be >= 1");
  if (!(lr_start > 0) || !(lr_end > 0)) throw ConfigError("learning rates must be positive");
  if (!(fc_lr_multiplier > 0)) throw ConfigError("fc_lr_multiplier must be > 0");
  if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must be in [0, 1)");
  if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
  if (clip_norm < 0) throw ConfigError("clip_norm must be >= 0");
  if (clips_per_video < 1) throw ConfigError("clips_per_video must be >= 1");
}

FinetuneConfig FinetuneConfig::large_scale_lr_preset() {
  FinetuneConfig c;
  c.lr_start = 1e-2;
  c.lr_end = 1e-4;
  return c;
}

ActionClassifier::ActionClassifier(const ClassifierSpec& spec, double fc_lr_multiplier, Rng& rng) : spec_(spec) {
  spec_.validate();
  spec_.trunk.in_channels = encoded_channels(spec_.encoder, spec_.frames);
  add_conv_params(params_, spec_.trunk, rng);
  std::size_t in = spec_.trunk.feature_dim();
  for (int i = 1; i <= spec_.hidden_layers; ++i) {
    const std::size_t out = spec_.hidden_dim;
    params_.add("fc" + std::to_string(i) + ".weight", ad::he_normal<float>({in, out}, in, rng), fc_lr_multiplier);
    params_.add("fc" + std::to_string(i) + ".bias", Tensor<float>({out}), fc_lr_multiplier);
    in = out;
  }
  const std::size_t k = spec_.num_classes;
  params_.add("out.weight", ad::he_normal<float>({in, k}, in, rng), fc_lr_multiplier);
  params_.add("out.bias", Tensor<float>({k}), fc_lr_multiplier);
}

std::vector<std::string> ActionClassifier::fc_param_names() const {
  std::vector<std::string> names;
  for (const auto& e : params_.entries())
    if (e.name.rfind("conv", 0) != 0) names.push_back(e.name);
  return names;
}

ad::Var<float> ActionClassifier::trunk_features(const ad::Var<float>& clips) const {
  return conv_features(params_, spec_.trunk, clips);
}

ad::Var<float> ActionClassifier::forward(const ad::Var<float>& clips, bool train, Rng* dropout_rng) const {
  if (train && spec_.dropout > 0 && !dropout_rng) throw ConfigError("training forward pass needs a dropout RNG");
  auto h = trunk_features(clips);
  for (int i = 1; i <= spec_.hidden_layers; ++i) {
    const std::string p = "fc" + std::to_string(i);
    h = ad::relu(ad::affine(h, params_.get(p + ".weight"), params_.get(p + ".bias")));
    if (train) h = ad::dropout(h, spec_.dropout, *dropout_rng, true);
  }
  return ad::affine(h, params_.get("out.weight"), params_.get("out.bias"));
}

Tensor<float> ActionClassifier::log_probs(const Tensor<float>& clips) const {
  auto logits = forward(ad::constant(clips), false, nullptr)->value;
  const std::size_t B = logits.dim(0), C = logits.dim(1);
  Tensor<float> out(logits.shape());
  for (std::size_t b = 0; b < B; ++b) {
    const float* z = logits.data() + b * C;
    const double mx = *std::max_element(z, z + C);
    double sum = 0;
    for (std::size_t c = 0; c < C; ++c) sum += std::exp(z[c] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t c = 0; c < C; ++c) out[b * C + c] = static_cast<float>(z[c] - lse);
  }
  return out;
}

ActionClassifier init_from_checkpoint(const Checkpoint& ckpt, const FinetuneConfig& cfg) {
  Rng rng = derive_rng(cfg.seed, streams::kInit);
  ActionClassifier model(cfg.model, cfg.fc_lr_multiplier, rng);
  load_into(model.params(), ckpt, conv_param_names(model.spec().trunk));
  return model;
}

namespace {

Tensor<float> stack_clips(const std::vector<EncodedClip>& enc) {
  const Shape& s = enc.front().data.shape();
  Tensor<float> out({enc.size(), s[0], s[1], s[2]});
  const std::size_t each = enc.front().data.size();
  for (std::size_t i = 0; i < enc.size(); ++i) std::copy(enc[i].data.vec().begin(), enc[i].data.vec().end(), out.data() + i * each);
  return out;
}

std::vector<std::vector<int>> tiled_clips(const Video& v, int W) {
  const int m = static_cast<int>(v.n) / W;
  if (m == 0) throw VideoTooShort("video has " + std::to_string(v.n) + " frames, clips need " + std::to_string(W));
  std::vector<std::vector<int>> out(m);
  for (int k = 0; k < m; ++k) {
    out[k].resize(W);
    std::iota(out[k].begin(), out[k].end(), k * W + 1);
  }
  return out;
}

}  // namespace

FinetuneResult finetune(const LabeledCorpus& corpus, const FinetuneConfig& cfg,
                        const std::function<void(const MetricRow&)>& on_metric) {
  cfg.validate();
  corpus.validate();
  if (static_cast<std::size_t>(cfg.model.num_classes) != corpus.num_classes())
    throw ConfigError("classifier has " + std::to_string(cfg.model.num_classes) + " classes, corpus has " +
                      std::to_string(corpus.num_classes()));
  const auto train_ids = corpus.indices(Split::train);
  const auto val_ids = corpus.indices(Split::val);
  if (train_ids.empty()) throw ConfigError("corpus has no training videos");
  const int W = cfg.model.frames;
  for (std::size_t id : train_ids)
    if (static_cast<int>(corpus.videos[id].n) < W)
      throw VideoTooShort("training video " + std::to_string(id) + " is shorter than " + std::to_string(W) + " frames");

  ActionClassifier model = [&] {
    if (cfg.init == InitKind::o3n) {
      if (cfg.checkpoint_path.empty()) throw ConfigError("init=o3n needs a checkpoint path");
      if (!std::filesystem::exists(cfg.checkpoint_path))
        throw IoError("checkpoint not found: " + cfg.checkpoint_path.string());
      return init_from_checkpoint(load_checkpoint(cfg.checkpoint_path), cfg);
    }
    Rng rng = derive_rng(cfg.seed, streams::kInit);
    return ActionClassifier(cfg.model, cfg.fc_lr_multiplier, rng);
  }();

  // Fixed validation clips: every non-overlapping clip of every val video.
  Tensor<float> val_clips;
  std::vector<int> val_labels;
  {
    std::vector<EncodedClip> enc;
    for (std::size_t id : val_ids) {
      if (static_cast<int>(corpus.videos[id].n) < W) continue;
      for (const auto& idx : tiled_clips(corpus.videos[id], W)) {
        enc.push_back(encode_clip(extract_frames(corpus.videos[id], idx), cfg.model.encoder));
        val_labels.push_back(corpus.labels[id]);
      }
    }
    if (!enc.empty()) val_clips = stack_clips(enc);
  }

  FinetuneResult result{std::move(model), {}};
  ActionClassifier& net = result.model;
  ad::Sgd<float> opt(cfg.momentum, cfg.weight_decay, cfg.clip_norm);
  Rng dropout_rng = derive_rng(cfg.seed, streams::kDropout);
  const std::size_t per_epoch = train_ids.size() * static_cast<std::size_t>(cfg.clips_per_video);
  const std::size_t batch = std::min<std::size_t>(cfg.batch_samples, per_epoch);
  const std::size_t num_batches = per_epoch / batch;

  auto emit = [&](MetricRow row) {
    result.metrics.push_back(row);
    if (on_metric) on_metric(row);
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg.epochs, cfg.lr_start, cfg.lr_end);
    std::vector<std::size_t> slots;
    for (std::size_t id : train_ids)
      for (int k = 0; k < cfg.clips_per_video; ++k) slots.push_back(id);
    Rng shuffle_rng = derive_rng(cfg.seed, streams::kShuffle + 1 + static_cast<std::uint64_t>(epoch));
    std::shuffle(slots.begin(), slots.end(), shuffle_rng);
    Rng clip_rng = derive_rng(cfg.seed, streams::kClips + static_cast<std::uint64_t>(epoch));

    double loss_sum = 0, acc_sum = 0;
    for (std::size_t b = 0; b < num_batches; ++b) {
      std::vector<EncodedClip> enc;
      std::vector<int> labels;
      for (std::size_t i = 0; i < batch; ++i) {
        const std::size_t id = slots[b * batch + i];
        enc.push_back(encode_clip(sample_consecutive(corpus.videos[id], W, clip_rng).frames, cfg.model.encoder));
        labels.push_back(corpus.labels[id]);
      }
      net.params().zero_grad();
      auto logits = net.forward(ad::constant(stack_clips(enc)), true, &dropout_rng);
      auto x = ad::softmax_xent(logits, std::span<const int>(labels));
      ad::backward(x.loss);
      opt.step(net.params(), lr);
      loss_sum += x.loss->value[0];
      std::size_t hits = 0;
      const std::size_t K = x.probs.dim(1);
      for (std::size_t r = 0; r < labels.size(); ++r) {
        const float* p = x.probs.data() + r * K;
        if (static_cast<int>(std::max_element(p, p + K) - p) == labels[r]) ++hits;
      }
      acc_sum += static_cast<double>(hits) / static_cast<double>(labels.size());
    }
    emit({epoch, "train", loss_sum / num_batches, acc_sum / num_batches, lr});

    if (!val_labels.empty()) {
      const auto lp = net.log_probs(val_clips);
      const std::size_t K = lp.dim(1);
      double loss = 0;
      std::size_t hits = 0;
      for (std::size_t r = 0; r < val_labels.size(); ++r) {
        const float* row = lp.data() + r * K;
        loss -= row[val_labels[r]];
        if (static_cast<int>(std::max_element(row, row + K) - row) == val_labels[r]) ++hits;
      }
      emit({epoch, "val", loss / val_labels.size(), static_cast<double>(hits) / val_labels.size(), lr});
    }
  }
  return result;
}

int argmax_lowest(const std::vector<double>& scores) {
  if (scores.empty()) throw ShapeError("argmax of an empty score vector");
  int best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = static_cast<int>(i);
  return best;
}

VideoPrediction aggregate_clip_probs(const std::vector<std::vector<double>>& clip_probs) {
  if (clip_probs.empty()) throw ShapeError("no clips to aggregate");
  VideoPrediction p;
  p.log_prob.assign(clip_probs.front().size(), 0.0);
  for (const auto& row : clip_probs) {
    if (row.size() != p.log_prob.size()) throw ShapeError("clip probability rows differ in length");
    for (std::size_t c = 0; c < row.size(); ++c) p.log_prob[c] += std::log(row[c]);
  }
  p.clips = clip_probs.size();
  p.label = argmax_lowest(p.log_prob);
  return p;
}

VideoPrediction predict_video(const ActionClassifier& model, const Video& v) {
  const int W = model.spec().frames;
  std::vector<EncodedClip> enc;
  for (const auto& idx : tiled_clips(v, W)) enc.push_back(encode_clip(extract_frames(v, idx), model.spec().encoder));
  const auto lp = model.log_probs(stack_clips(enc));
  const std::size_t K = lp.dim(1);
  VideoPrediction p;
  p.log_prob.assign(K, 0.0);
  for (std::size_t r = 0; r < enc.size(); ++r)
    for (std::size_t c = 0; c < K; ++c) p.log_prob[c] += lp[r * K + c];
  p.clips = enc.size();
  p.label = argmax_lowest(p.log_prob);
  return p;
}

EvalReport make_report(const std::vector<int>& truth, const std::vector<int>& predicted,
                       const std::vector<std::string>& class_names) {
  if (truth.size() != predicted.size()) throw ShapeError("truth and prediction counts differ");
  if (truth.empty()) throw ConfigError("cannot report on an empty split");
  const std::size_t K = class_names.size();
  EvalReport r;
  r.class_names = class_names;
  r.confusion.assign(K, std::vector<std::size_t>(K, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || static_cast<std::size_t>(truth[i]) >= K || predicted[i] < 0 ||
        static_cast<std::size_t>(predicted[i]) >= K)
      throw LabelOutOfRange("label outside [0, " + std::to_string(K) + ")");
    ++r.confusion[truth[i]][predicted[i]];
  }
  std::size_t diag = 0;
  r.per_class_accuracy.assign(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t row = std::accumulate(r.confusion[k].begin(), r.confusion[k].end(), std::size_t{0});
    diag += r.confusion[k][k];
    r.per_class_accuracy[k] = row ? static_cast<double>(r.confusion[k][k]) / static_cast<double>(row) : 0.0;
  }
  r.total = truth.size();
  r.accuracy = static_cast<double>(diag) / static_cast<double>(r.total);
  return r;
}

EvalReport evaluate(const ActionClassifier& model, const LabeledCorpus& corpus, Split split) {
  const auto ids = corpus.indices(split);
  if (ids.empty()) throw ConfigError("corpus has no " + to_string(split) + " videos");
  std::vector<int> truth, pred;
  for (std::size_t id : ids) {
    truth.push_back(corpus.labels[id]);
    pred.push_back(predict_video(model, corpus.videos[id]).label);
  }
  EvalReport r = make_report(truth, pred, corpus.class_names);
  r.meta["split"] = to_string(split);
  r.meta["encoder"] = to_string(model.spec().encoder);
  r.meta["frames"] = std::to_string(model.spec().frames);
  return r;
}

std::string confusion_csv(const EvalReport& r) {
  std::string out = "true\\predicted";
  for (const auto& n : r.class_names) out += "," + n;
  out += "\n";
  for (std::size_t k = 0; k < r.confusion.size(); ++k) {
    out += r.class_names[k];
    for (std::size_t c : r.confusion[k]) out += "," + std::to_string(c);
    out += "\n";
  }
  return out;
}

std::string summary_text(const EvalReport& r) {
  char buf[64];
  std::ostringstream os;
  std::snprintf(buf, sizeof buf, "%.6f", r.accuracy);
  os << "accuracy=" << buf << "\n";
  os << "total=" << r.total << "\n";
  for (std::size_t k = 0; k < r.class_names.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.6f", r.per_class_accuracy[k]);
    os << "accuracy." << r.class_names[k] << "=" << buf << "\n";
  }
  for (const auto& [k, v] : r.meta) os << k << "=" << v << "\n";
  return os.str();
}

std::map<std::string, std::string> parse_summary(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw MalformedContainer("summary line without '=': " + line);
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

Checkpoint classifier_checkpoint(const ActionClassifier& model, std::map<std::string, std::string> extra) {
  const auto& s = model.spec();
  auto meta = std::move(extra);
  meta["kind"] = "classifier";
  meta["convs"] = format_conv_specs(s.trunk.convs);
  meta["input_h"] = std::to_string(s.trunk.input_h);
  meta["input_w"] = std::to_string(s.trunk.input_w);
  meta["in_channels"] = std::to_string(s.trunk.in_channels);
  meta["hidden_dim"] = std::to_string(s.hidden_dim);
  meta["hidden_layers"] = std::to_string(s.hidden_layers);
  meta["num_classes"] = std::to_string(s.num_classes);
  meta["frames"] = std::to_string(s.frames);
  meta["encoder"] = to_string(s.encoder);
  meta["dropout"] = fmt_double(s.dropout);
  return to_checkpoint(model.params(), std::move(meta));
}

ActionClassifier classifier_from_checkpoint(const Checkpoint& ckpt) {
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = ckpt.meta.find(k);
    if (it == ckpt.meta.end()) throw MalformedContainer("classifier checkpoint metadata lacks '" + k + "'");
    return it->second;
  };
  if (get("kind") != "classifier") throw MalformedContainer("checkpoint is not a classifier (kind=" + get("kind") + ")");
  ClassifierSpec s;
  s.trunk.convs = parse_conv_specs(get("convs"));
  s.trunk.input_h = std::stoi(get("input_h"));
  s.trunk.input_w = std::stoi(get("input_w"));
  s.hidden_dim = std::stoi(get("hidden_dim"));
  s.hidden_layers = std::stoi(get("hidden_layers"));
  s.num_classes = std::stoi(get("num_classes"));
  s.frames = std::stoi(get("frames"));
  s.encoder = parse_encoder(get("encoder"));
  s.dropout = std::stod(get("dropout"));
  Rng rng(0);
  ActionClassifier model(s, 1.0, rng);
  std::vector<std::string> names;
  for (const auto& e : model.params().entries()) names.push_back(e.name);
  load_into(model.params(), ckpt, names);
  return model;
}

}  // namespace o3n
