#include "o3n/o3nmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "o3n/error.hpp"
#include "o3n/util.hpp"

namespace o3n {

std::vector<ConvSpec> parse_conv_specs(const std::string& s) {
  std::vector<ConvSpec> out;
  std::istringstream ss(s);
  std::string layer;
  while (std::getline(ss, layer, ',')) {
    ConvSpec c;
    char sep1 = 0, sep2 = 0, sep3 = 0;
    std::istringstream ls(layer);
    if (!(ls >> c.out_channels >> sep1 >> c.kernel >> sep2 >> c.stride >> sep3 >> c.pool) || sep1 != ':' ||
        sep2 != ':' || sep3 != ':')
      throw ConfigError("bad conv spec '" + layer + "', expected out:kernel:stride:pool");
    std::string rest;
    if (ls >> rest) throw ConfigError("bad conv spec '" + layer + "', trailing '" + rest + "'");
    out.push_back(c);
  }
  if (out.empty()) throw ConfigError("conv spec list is empty");
  return out;
}

std::string format_conv_specs(const std::vector<ConvSpec>& specs) {
  std::string s;
  for (const auto& c : specs) {
    if (!s.empty()) s += ',';
    s += std::to_string(c.out_channels) + ':' + std::to_string(c.kernel) + ':' + std::to_string(c.stride) + ':' +
         std::to_string(c.pool);
  }
  return s;
}

namespace {

// Spatial extent after each conv block, throwing if it collapses.
std::pair<int, int> trunk_output_hw(const TrunkConfig& t) {
  int h = t.input_h, w = t.input_w;
  for (std::size_t i = 0; i < t.convs.size(); ++i) {
    const auto& c = t.convs[i];
    const int pad = c.kernel / 2;
    h = (h + 2 * pad - c.kernel) / c.stride + 1;
    w = (w + 2 * pad - c.kernel) / c.stride + 1;
    if (c.pool > 1) {
      if (h < c.pool || w < c.pool) throw ConfigError("conv block " + std::to_string(i + 1) + " pools an input smaller than its window");
      h = (h - c.pool) / c.pool + 1;
      w = (w - c.pool) / c.pool + 1;
    }
    if (h < 1 || w < 1) throw ConfigError("conv block " + std::to_string(i + 1) + " reduces the input to nothing");
  }
  return {h, w};
}

}  // namespace

std::size_t TrunkConfig::feature_dim() const {
  const auto [h, w] = trunk_output_hw(*this);
  return static_cast<std::size_t>(h) * w * convs.back().out_channels;
}

void TrunkConfig::validate() const {
  if (convs.empty()) throw ConfigError("trunk needs at least one conv layer");
  for (const auto& c : convs)
    if (c.out_channels < 1 || c.kernel < 1 || c.stride < 1 || c.pool < 0)
      throw ConfigError("invalid conv spec " + format_conv_specs({c}));
  if (fc_dim < 1) throw ConfigError("fc_dim must be >= 1");
  if (in_channels < 1) throw ConfigError("trunk input channels must be >= 1");
  if (input_h < 1 || input_w < 1) throw ConfigError("trunk input size must be positive");
  (void)feature_dim();
}

std::vector<std::string> conv_param_names(const TrunkConfig& trunk) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < trunk.convs.size(); ++i) {
    names.push_back("conv" + std::to_string(i + 1) + ".weight");
    names.push_back("conv" + std::to_string(i + 1) + ".bias");
  }
  return names;
}

template <typename T>
void add_conv_params(ad::ParamSet<T>& params, const TrunkConfig& trunk, Rng& rng) {
  std::size_t cin = trunk.in_channels;
  for (std::size_t i = 0; i < trunk.convs.size(); ++i) {
    const auto& c = trunk.convs[i];
    const std::size_t k = c.kernel, co = c.out_channels;
    const std::string p = "conv" + std::to_string(i + 1);
    params.add(p + ".weight", ad::he_normal<T>({co, k, k, cin}, k * k * cin, rng));
    params.add(p + ".bias", Tensor<T>({co}));
    cin = co;
  }
}

template <typename T>
ad::Var<T> conv_features(const ad::ParamSet<T>& params, const TrunkConfig& trunk, const ad::Var<T>& x) {
  const auto& s = x->value.shape();
  if (s.size() != 4 || s[1] != static_cast<std::size_t>(trunk.input_h) || s[2] != static_cast<std::size_t>(trunk.input_w) ||
      s[3] != static_cast<std::size_t>(trunk.in_channels))
    throw ShapeError("trunk expects (B, " + std::to_string(trunk.input_h) + ", " + std::to_string(trunk.input_w) + ", " +
                     std::to_string(trunk.in_channels) + ") input, got " + shape_str(s));
  ad::Var<T> h = x;
  for (std::size_t i = 0; i < trunk.convs.size(); ++i) {
    const auto& c = trunk.convs[i];
    const std::string p = "conv" + std::to_string(i + 1);
    h = ad::relu(ad::conv2d(h, params.get(p + ".weight"), params.get(p + ".bias"), c.stride, c.kernel / 2));
    if (c.pool > 1) h = ad::maxpool2d(h, c.pool, c.pool);
  }
  const std::size_t B = s[0];
  return ad::reshape(h, {B, h->value.size() / B});
}

std::string to_string(Fusion f) { return f == Fusion::concat ? "concat" : "sum_of_diff"; }

Fusion parse_fusion(const std::string& s) {
  if (s == "concat") return Fusion::concat;
  if (s == "sum_of_diff" || s == "sod") return Fusion::sum_of_diff;
  throw ConfigError("unknown fusion '" + s + "'");
}

TrunkConfig O3NConfig::resolved_trunk() const {
  TrunkConfig t = trunk;
  t.in_channels = encoded_channels(encoder, frames);
  return t;
}

void O3NConfig::validate() const {
  sampler().validate();
  resolved_trunk().validate();
  if (head_dim < 1) throw ConfigError("head_dim must be >= 1");
  if (epochs < 2) throw ConfigError("epochs must be >= 2 for the learning-rate schedule");
  if (batch_questions < 1) throw ConfigError("batch_questions must be >= 1");
  if (!(lr_start > 0) || !(lr_end > 0)) throw ConfigError("learning rates must be positive");
  if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must be in [0, 1)");
  if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
  if (clip_norm < 0) throw ConfigError("clip_norm must be >= 0");
  if (questions_per_video < 1) throw ConfigError("questions_per_video must be >= 1");
  if (val_fraction < 0 || val_fraction >= 1) throw ConfigError("val_fraction must be in [0, 1)");
}

std::string O3NConfig::describe() const {
  std::ostringstream os;
  for (const auto& [k, v] : o3n_metadata(*this))
    if (k != "seed" && k != "kind") os << k << '=' << v << '\n';
  return os.str();
}

std::map<std::string, std::string> o3n_metadata(const O3NConfig& cfg) {
  const TrunkConfig t = cfg.resolved_trunk();
  return {{"kind", "o3n"},
          {"num_even", std::to_string(cfg.num_even)},
          {"frames", std::to_string(cfg.frames)},
          {"strategy", to_string(cfg.strategy)},
          {"encoder", to_string(cfg.encoder)},
          {"fusion", to_string(cfg.fusion)},
          {"convs", format_conv_specs(t.convs)},
          {"fc_dim", std::to_string(t.fc_dim)},
          {"in_channels", std::to_string(t.in_channels)},
          {"input_h", std::to_string(t.input_h)},
          {"input_w", std::to_string(t.input_w)},
          {"head_dim", std::to_string(cfg.head_dim)},
          {"epochs", std::to_string(cfg.epochs)},
          {"batch_questions", std::to_string(cfg.batch_questions)},
          {"lr_start", fmt_double(cfg.lr_start)},
          {"lr_end", fmt_double(cfg.lr_end)},
          {"momentum", fmt_double(cfg.momentum)},
          {"weight_decay", fmt_double(cfg.weight_decay)},
          {"clip_norm", fmt_double(cfg.clip_norm)},
          {"questions_per_video", std::to_string(cfg.questions_per_video)},
          {"val_fraction", fmt_double(cfg.val_fraction)},
          {"seed", std::to_string(cfg.seed)}};
}

O3NConfig o3n_config_from_metadata(const std::map<std::string, std::string>& meta) {
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = meta.find(k);
    if (it == meta.end()) throw MalformedContainer("checkpoint metadata lacks '" + k + "'");
    return it->second;
  };
  O3NConfig c;
  c.num_even = std::stoi(get("num_even"));
  c.frames = std::stoi(get("frames"));
  c.strategy = parse_strategy(get("strategy"));
  c.encoder = parse_encoder(get("encoder"));
  c.fusion = parse_fusion(get("fusion"));
  c.trunk.convs = parse_conv_specs(get("convs"));
  c.trunk.fc_dim = std::stoi(get("fc_dim"));
  c.trunk.input_h = std::stoi(get("input_h"));
  c.trunk.input_w = std::stoi(get("input_w"));
  c.trunk.in_channels = std::stoi(get("in_channels"));
  c.head_dim = std::stoi(get("head_dim"));
  c.epochs = std::stoi(get("epochs"));
  c.seed = std::stoull(get("seed"));
  return c;
}

template <typename T>
O3NNetwork<T>::O3NNetwork(const O3NConfig& cfg, Rng& rng) : cfg_(cfg), trunk_(cfg.resolved_trunk()) {
  cfg_.validate();
  add_conv_params(params_, trunk_, rng);
  const std::size_t feat = trunk_.feature_dim(), d = trunk_.fc_dim, h = cfg.head_dim, m = cfg.branches();
  const std::size_t fused = cfg.fusion == Fusion::concat ? m * d : d;
  params_.add("fc6.weight", ad::he_normal<T>({feat, d}, feat, rng));
  params_.add("fc6.bias", Tensor<T>({d}));
  params_.add("head.fc.weight", ad::he_normal<T>({fused, h}, fused, rng));
  params_.add("head.fc.bias", Tensor<T>({h}));
  params_.add("head.out.weight", ad::he_normal<T>({h, m}, h, rng));
  params_.add("head.out.bias", Tensor<T>({m}));
}

template <typename T>
ad::Var<T> O3NNetwork<T>::forward_branch(const ad::Var<T>& clips) const {
  auto feat = conv_features(params_, trunk_, clips);
  return ad::relu(ad::affine(feat, params_.get("fc6.weight"), params_.get("fc6.bias")));
}

template <typename T>
ad::Var<T> O3NNetwork<T>::fuse(const ad::Var<T>& activations) const {
  const std::size_t m = cfg_.branches(), d = trunk_.fc_dim;
  const auto& s = activations->value.shape();
  if (s.size() != 3 || s[1] != m || s[2] != d)
    throw ShapeError("fusion expects (B, " + std::to_string(m) + ", " + std::to_string(d) + "), got " + shape_str(s));
  auto fused = cfg_.fusion == Fusion::concat ? ad::fuse_concat(activations) : ad::fuse_sod(activations);
  const std::size_t expected = cfg_.fusion == Fusion::concat ? m * d : d;
  if (fused->value.dim(1) != expected) throw ShapeError("fused width " + std::to_string(fused->value.dim(1)) + " != " + std::to_string(expected));
  return fused;
}

template <typename T>
ad::Var<T> O3NNetwork<T>::forward(const ad::Var<T>& clips) const {
  const std::size_t m = cfg_.branches();
  const std::size_t total = clips->value.dim(0);
  if (total % m != 0)
    throw ShapeError("batch of " + std::to_string(total) + " clips is not a multiple of " + std::to_string(m) + " branches");
  auto v = forward_branch(clips);
  auto fused = fuse(ad::reshape(v, {total / m, m, static_cast<std::size_t>(trunk_.fc_dim)}));
  auto h = ad::relu(ad::affine(fused, params_.get("head.fc.weight"), params_.get("head.fc.bias")));
  return ad::affine(h, params_.get("head.out.weight"), params_.get("head.out.bias"));
}

template class O3NNetwork<float>;
template class O3NNetwork<double>;
template void add_conv_params<float>(ad::ParamSet<float>&, const TrunkConfig&, Rng&);
template void add_conv_params<double>(ad::ParamSet<double>&, const TrunkConfig&, Rng&);
template ad::Var<float> conv_features<float>(const ad::ParamSet<float>&, const TrunkConfig&, const ad::Var<float>&);
template ad::Var<double> conv_features<double>(const ad::ParamSet<double>&, const TrunkConfig&, const ad::Var<double>&);

double lr_at(int epoch, int epochs, double lr_start, double lr_end) {
  if (epochs < 2) throw ConfigError("learning-rate schedule needs at least 2 epochs");
  if (epoch < 0 || epoch >= epochs) throw ConfigError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(epochs) + ")");
  if (!(lr_start > 0) || !(lr_end > 0)) throw ConfigError("learning rates must be positive");
  if (epoch == 0) return lr_start;
  if (epoch == epochs - 1) return lr_end;
  return lr_start * std::pow(lr_end / lr_start, static_cast<double>(epoch) / (epochs - 1));
}

Tensor<float> encode_questions(const std::vector<Question>& questions, Encoder encoder) {
  if (questions.empty()) throw ShapeError("no questions to encode");
  std::vector<EncodedClip> enc;
  for (const auto& q : questions)
    for (const auto& c : q.elements) enc.push_back(encode_clip(c.frames, encoder));
  const Shape& s = enc.front().data.shape();
  Tensor<float> out({enc.size(), s[0], s[1], s[2]});
  const std::size_t each = enc.front().data.size();
  for (std::size_t i = 0; i < enc.size(); ++i) {
    if (enc[i].data.shape() != s) throw ShapeError("questions mix clip shapes");
    std::copy(enc[i].data.vec().begin(), enc[i].data.vec().end(), out.data() + i * each);
  }
  return out;
}

std::vector<int> answer_labels(const std::vector<Question>& questions) {
  std::vector<int> out;
  for (const auto& q : questions) out.push_back(q.answer - 1);
  return out;
}

namespace {

double argmax_accuracy(const Tensor<float>& probs, std::span<const int> labels) {
  const std::size_t B = probs.dim(0), C = probs.dim(1);
  std::size_t hits = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const float* p = probs.data() + b * C;
    if (static_cast<int>(std::max_element(p, p + C) - p) == labels[b]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(B);
}

Tensor<float> slice_batch(const Tensor<float>& t, std::size_t first, std::size_t count) {
  Shape s = t.shape();
  const std::size_t each = t.size() / s[0];
  s[0] = count;
  return Tensor<float>(s, std::vector<float>(t.data() + first * each, t.data() + (first + count) * each));
}

}  // namespace

StepStats o3n_train_step(O3NNetwork<float>& net, ad::Sgd<float>& opt, const Tensor<float>& clips,
                         std::span<const int> labels, double lr) {
  net.params().zero_grad();
  auto logits = net.forward(ad::constant(clips));
  auto x = ad::softmax_xent(logits, labels);
  ad::backward(x.loss);
  const double norm = opt.step(net.params(), lr);
  return {x.loss->value[0], argmax_accuracy(x.probs, labels), norm};
}

O3NEval evaluate_o3n(const O3NNetwork<float>& net, const Tensor<float>& clips, std::span<const int> labels,
                     std::size_t batch_questions) {
  const std::size_t m = net.config().branches();
  const std::size_t q = labels.size();
  if (clips.dim(0) != q * m) throw ShapeError("evaluate_o3n: clip count does not match labels");
  O3NEval e;
  e.questions = q;
  for (std::size_t first = 0; first < q; first += batch_questions) {
    const std::size_t n = std::min(batch_questions, q - first);
    auto logits = net.forward(ad::constant(slice_batch(clips, first * m, n * m)));
    auto lab = labels.subspan(first, n);
    auto x = ad::softmax_xent(logits, lab);
    e.loss += x.loss->value[0] * n;
    e.accuracy += argmax_accuracy(x.probs, lab) * n;
    for (std::size_t b = 0; b < n; ++b) {
      const double pt = x.probs[b * m + lab[b]];
      e.mean_true_prob += pt;
      e.mean_even_prob += (1.0 - pt) / static_cast<double>(m - 1);
    }
  }
  e.loss /= q;
  e.accuracy /= q;
  e.mean_true_prob /= q;
  e.mean_even_prob /= q;
  return e;
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%s,%.6f,%.6f,%.8g\n", r.epoch, r.phase.c_str(), r.loss, r.accuracy, r.lr);
    out += buf;
  }
  return out;
}

PretrainResult pretrain(const std::vector<const Video*>& videos, const O3NConfig& cfg,
                        const std::function<void(const MetricRow&)>& on_metric) {
  cfg.validate();
  const int needed = min_frames_for(cfg.strategy, cfg.frames);
  for (std::size_t i = 0; i < videos.size(); ++i) {
    if (static_cast<int>(videos[i]->n) < needed)
      throw VideoTooShort("video " + std::to_string(i) + " has " + std::to_string(videos[i]->n) + " frames, " +
                          to_string(cfg.strategy) + " sampling needs " + std::to_string(needed));
    if (static_cast<int>(videos[i]->h) != cfg.trunk.input_h || static_cast<int>(videos[i]->w) != cfg.trunk.input_w)
      throw ShapeError("video " + std::to_string(i) + " is not " + std::to_string(cfg.trunk.input_h) + "x" +
                       std::to_string(cfg.trunk.input_w));
  }
  if (videos.size() < 2) throw ConfigError("pretraining needs at least 2 videos");

  // Held-out split for self-supervised validation.
  std::vector<std::size_t> order(videos.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng = derive_rng(cfg.seed, streams::kShuffle);
  std::shuffle(order.begin(), order.end(), split_rng);
  std::size_t n_val = static_cast<std::size_t>(std::lround(cfg.val_fraction * static_cast<double>(videos.size())));
  if (cfg.val_fraction > 0) n_val = std::clamp<std::size_t>(n_val, 1, videos.size() - 1);
  std::vector<std::size_t> val_ids(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_ids(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val_ids.begin(), val_ids.end());
  std::sort(train_ids.begin(), train_ids.end());

  PretrainResult result;
  result.train_videos = train_ids.size();
  result.val_videos = val_ids.size();
  const SamplerConfig scfg = cfg.sampler();

  Tensor<float> val_clips;
  std::vector<int> val_labels;
  if (!val_ids.empty()) {
    Rng vrng = derive_rng(cfg.seed, streams::kValQuestions);
    std::vector<Question> vq;
    for (std::size_t id : val_ids)
      for (int k = 0; k < cfg.questions_per_video; ++k) vq.push_back(build_question(*videos[id], scfg, vrng, id));
    val_clips = encode_questions(vq, cfg.encoder);
    val_labels = answer_labels(vq);
  }

  Rng init_rng = derive_rng(cfg.seed, streams::kInit);
  O3NNetwork<float> net(cfg, init_rng);
  ad::Sgd<float> opt(cfg.momentum, cfg.weight_decay, cfg.clip_norm);

  const std::size_t per_epoch = train_ids.size() * static_cast<std::size_t>(cfg.questions_per_video);
  const std::size_t batch = std::min<std::size_t>(cfg.batch_questions, per_epoch);
  const std::size_t num_batches = per_epoch / batch;

  auto emit = [&](MetricRow row) {
    result.metrics.push_back(row);
    if (on_metric) on_metric(row);
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg.epochs, cfg.lr_start, cfg.lr_end);
    std::vector<std::size_t> slots;
    for (std::size_t id : train_ids)
      for (int k = 0; k < cfg.questions_per_video; ++k) slots.push_back(id);
    Rng shuffle_rng = derive_rng(cfg.seed, streams::kShuffle + 1 + static_cast<std::uint64_t>(epoch));
    std::shuffle(slots.begin(), slots.end(), shuffle_rng);
    Rng qrng = derive_rng(cfg.seed, streams::kTrainQuestions + static_cast<std::uint64_t>(epoch));

    double loss_sum = 0, acc_sum = 0;
    for (std::size_t b = 0; b < num_batches; ++b) {
      std::vector<Question> qs;
      qs.reserve(batch);
      for (std::size_t i = 0; i < batch; ++i) {
        const std::size_t id = slots[b * batch + i];
        qs.push_back(build_question(*videos[id], scfg, qrng, id));
        result.duplicate_even_pairs += static_cast<std::size_t>(qs.back().duplicate_even_pairs);
      }
      const auto labels = answer_labels(qs);
      const StepStats st = o3n_train_step(net, opt, encode_questions(qs, cfg.encoder), labels, lr);
      loss_sum += st.loss;
      acc_sum += st.accuracy;
    }
    emit({epoch, "train", loss_sum / num_batches, acc_sum / num_batches, lr});
    if (!val_ids.empty()) {
      result.final_val = evaluate_o3n(net, val_clips, val_labels, cfg.batch_questions);
      emit({epoch, "val", result.final_val.loss, result.final_val.accuracy, lr});
    }
  }

  auto meta = o3n_metadata(cfg);
  meta["config_hash"] = hex64(fnv1a64(cfg.describe()));
  meta["epoch"] = std::to_string(cfg.epochs);
  result.checkpoint = to_checkpoint(net.params(), std::move(meta));
  return result;
}

}  // namespace o3n
