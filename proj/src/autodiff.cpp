#include "o3n/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "o3n/error.hpp"

namespace o3n::ad {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
Var<T> make_node(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(Node<T>&)> fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = std::any_of(parents.begin(), parents.end(), [](const Var<T>& p) { return p && p->requires_grad; });
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward = std::move(fn);
  }
  return n;
}

template <typename T>
bool wants_grad(const Var<T>& v) {
  return v && v->requires_grad;
}

void expect(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

// Rows of images processed per im2col chunk.
constexpr std::size_t kConvChunkRows = 8192;

struct ConvGeom {
  std::size_t B, H, W, C, Co, KH, KW, OH, OW;
  int stride, pad;
  std::size_t K() const { return KH * KW * C; }
  std::size_t P() const { return OH * OW; }
};

template <typename T>
void im2col(const T* img, const ConvGeom& g, T* col) {
  const std::size_t K = g.K();
  for (std::size_t oy = 0; oy < g.OH; ++oy)
    for (std::size_t ox = 0; ox < g.OW; ++ox) {
      T* row = col + (oy * g.OW + ox) * K;
      for (std::size_t ky = 0; ky < g.KH; ++ky) {
        const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ky);
        T* dst = row + ky * g.KW * g.C;
        if (iy < 0 || iy >= static_cast<long>(g.H)) {
          std::fill(dst, dst + g.KW * g.C, T{0});
          continue;
        }
        for (std::size_t kx = 0; kx < g.KW; ++kx) {
          const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kx);
          T* d = dst + kx * g.C;
          if (ix < 0 || ix >= static_cast<long>(g.W)) {
            std::fill(d, d + g.C, T{0});
          } else {
            const T* s = img + (static_cast<std::size_t>(iy) * g.W + static_cast<std::size_t>(ix)) * g.C;
            std::copy(s, s + g.C, d);
          }
        }
      }
    }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, T* img) {
  const std::size_t K = g.K();
  for (std::size_t oy = 0; oy < g.OH; ++oy)
    for (std::size_t ox = 0; ox < g.OW; ++ox) {
      const T* row = col + (oy * g.OW + ox) * K;
      for (std::size_t ky = 0; ky < g.KH; ++ky) {
        const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ky);
        if (iy < 0 || iy >= static_cast<long>(g.H)) continue;
        for (std::size_t kx = 0; kx < g.KW; ++kx) {
          const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kx);
          if (ix < 0 || ix >= static_cast<long>(g.W)) continue;
          const T* s = row + (ky * g.KW + kx) * g.C;
          T* d = img + (static_cast<std::size_t>(iy) * g.W + static_cast<std::size_t>(ix)) * g.C;
          for (std::size_t c = 0; c < g.C; ++c) d[c] += s[c];
        }
      }
    }
}

}  // namespace

template <typename T>
Var<T> constant(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  return n;
}

template <typename T>
Var<T> parameter(Tensor<T> value) {
  auto n = constant(std::move(value));
  n->requires_grad = true;
  return n;
}

template <typename T>
void backward(const Var<T>& root) {
  expect(root->value.size() == 1, "backward() needs a scalar root, got " + shape_str(root->value.shape()));
  if (!root->requires_grad) return;
  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p && p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward) (*it)->backward(**it);
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias, int stride, int pad) {
  const auto& xs = x->value.shape();
  const auto& ks = kernel->value.shape();
  expect(xs.size() == 4, "conv2d input must be NHWC, got " + shape_str(xs));
  expect(ks.size() == 4, "conv2d kernel must be (Co, KH, KW, C), got " + shape_str(ks));
  expect(xs[3] == ks[3], "conv2d channel mismatch: input " + shape_str(xs) + ", kernel " + shape_str(ks));
  expect(stride >= 1 && pad >= 0, "conv2d needs stride >= 1 and pad >= 0");
  expect(!bias || bias->value.size() == ks[0], "conv2d bias length must equal output channels");
  ConvGeom g{xs[0], xs[1], xs[2], xs[3], ks[0], ks[1], ks[2], 0, 0, stride, pad};
  expect(g.H + 2 * pad >= g.KH && g.W + 2 * pad >= g.KW, "conv2d kernel larger than padded input");
  g.OH = (g.H + 2 * pad - g.KH) / stride + 1;
  g.OW = (g.W + 2 * pad - g.KW) / stride + 1;

  const std::size_t K = g.K(), P = g.P();
  const std::size_t imgs_per_chunk = std::max<std::size_t>(1, kConvChunkRows / P);
  Tensor<T> out({g.B, g.OH, g.OW, g.Co});
  CMapMat<T> wm(kernel->value.data(), g.Co, K);
  std::vector<T> col;
  for (std::size_t b0 = 0; b0 < g.B; b0 += imgs_per_chunk) {
    const std::size_t nb = std::min(imgs_per_chunk, g.B - b0);
    col.resize(nb * P * K);
    for (std::size_t i = 0; i < nb; ++i)
      im2col(x->value.data() + (b0 + i) * g.H * g.W * g.C, g, col.data() + i * P * K);
    CMapMat<T> cm(col.data(), nb * P, K);
    MapMat<T> om(out.data() + b0 * P * g.Co, nb * P, g.Co);
    om.noalias() = cm * wm.transpose();
    if (bias) om.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias->value.data(), g.Co);
  }

  return make_node<T>(std::move(out), {x, kernel, bias}, [g, imgs_per_chunk](Node<T>& self) {
    const auto& xv = self.parents[0];
    const auto& kv = self.parents[1];
    const auto& bv = self.parents[2];
    const std::size_t K = g.K(), P = g.P();
    const T* dout = self.grad.data();
    if (wants_grad(bv)) {
      T* db = bv->ensure_grad().data();
      for (std::size_t r = 0; r < g.B * P; ++r)
        for (std::size_t o = 0; o < g.Co; ++o) db[o] += dout[r * g.Co + o];
    }
    const bool need_k = wants_grad(kv), need_x = wants_grad(xv);
    if (!need_k && !need_x) return;
    CMapMat<T> wm(kv->value.data(), g.Co, K);
    std::vector<T> col, dcol;
    for (std::size_t b0 = 0; b0 < g.B; b0 += imgs_per_chunk) {
      const std::size_t nb = std::min(imgs_per_chunk, g.B - b0);
      CMapMat<T> dm(dout + b0 * P * g.Co, nb * P, g.Co);
      if (need_k) {
        col.resize(nb * P * K);
        for (std::size_t i = 0; i < nb; ++i)
          im2col(xv->value.data() + (b0 + i) * g.H * g.W * g.C, g, col.data() + i * P * K);
        CMapMat<T> cm(col.data(), nb * P, K);
        MapMat<T> dk(kv->ensure_grad().data(), g.Co, K);
        dk.noalias() += dm.transpose() * cm;
      }
      if (need_x) {
        dcol.resize(nb * P * K);
        MapMat<T> dc(dcol.data(), nb * P, K);
        dc.noalias() = dm * wm;
        T* dx = xv->ensure_grad().data();
        for (std::size_t i = 0; i < nb; ++i) col2im_add(dcol.data() + i * P * K, g, dx + (b0 + i) * g.H * g.W * g.C);
      }
    }
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->value[i] > T{0} ? x->value[i] : T{0};
  return make_node<T>(std::move(out), {x}, [](Node<T>& self) {
    auto& p = self.parents[0];
    auto& dx = p->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (p->value[i] > T{0}) dx[i] += self.grad[i];
  });
}

template <typename T>
Var<T> maxpool2d(const Var<T>& x, int k, int stride) {
  const auto& s = x->value.shape();
  expect(s.size() == 4, "maxpool2d input must be NHWC, got " + shape_str(s));
  expect(k >= 1 && stride >= 1, "maxpool2d needs k >= 1 and stride >= 1");
  expect(s[1] >= static_cast<std::size_t>(k) && s[2] >= static_cast<std::size_t>(k), "maxpool2d window larger than input");
  const std::size_t B = s[0], H = s[1], W = s[2], C = s[3];
  const std::size_t OH = (H - k) / stride + 1, OW = (W - k) / stride + 1;
  Tensor<T> out({B, OH, OW, C});
  std::vector<std::uint32_t> arg(out.size());
  const T* xv = x->value.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t oy = 0; oy < OH; ++oy)
      for (std::size_t ox = 0; ox < OW; ++ox)
        for (std::size_t c = 0; c < C; ++c) {
          std::size_t best = ((b * H + oy * stride) * W + ox * stride) * C + c;
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const std::size_t i = ((b * H + oy * stride + ky) * W + ox * stride + kx) * C + c;
              if (xv[i] > xv[best]) best = i;
            }
          const std::size_t o = ((b * OH + oy) * OW + ox) * C + c;
          out[o] = xv[best];
          arg[o] = static_cast<std::uint32_t>(best);
        }
  return make_node<T>(std::move(out), {x}, [arg = std::move(arg)](Node<T>& self) {
    auto& dx = self.parents[0]->ensure_grad();
    for (std::size_t o = 0; o < arg.size(); ++o) dx[arg[o]] += self.grad[o];
  });
}

template <typename T>
Var<T> dropout(const Var<T>& x, double rate, Rng& rng, bool train) {
  expect(rate >= 0 && rate < 1, "dropout rate must be in [0, 1)");
  if (!train || rate == 0) return x;
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<T> mask(x->value.size());
  Tensor<T> out(x->value.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = keep(rng) ? scale : T{0};
    out[i] = x->value[i] * mask[i];
  }
  return make_node<T>(std::move(out), {x}, [mask = std::move(mask)](Node<T>& self) {
    auto& dx = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < mask.size(); ++i) dx[i] += self.grad[i] * mask[i];
  });
}

template <typename T>
Var<T> affine(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const auto& xs = x->value.shape();
  const auto& ws = weight->value.shape();
  expect(xs.size() == 2 && ws.size() == 2 && xs[1] == ws[0],
         "affine shape mismatch: x " + shape_str(xs) + ", weight " + shape_str(ws));
  expect(!bias || bias->value.size() == ws[1], "affine bias length must equal output width");
  const std::size_t B = xs[0], in = xs[1], outw = ws[1];
  Tensor<T> out({B, outw});
  CMapMat<T> xm(x->value.data(), B, in);
  CMapMat<T> wm(weight->value.data(), in, outw);
  MapMat<T> om(out.data(), B, outw);
  om.noalias() = xm * wm;
  if (bias) om.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias->value.data(), outw);
  return make_node<T>(std::move(out), {x, weight, bias}, [B, in, outw](Node<T>& self) {
    const auto& xv = self.parents[0];
    const auto& wv = self.parents[1];
    const auto& bv = self.parents[2];
    CMapMat<T> dy(self.grad.data(), B, outw);
    if (wants_grad(wv)) {
      MapMat<T> dw(wv->ensure_grad().data(), in, outw);
      dw.noalias() += CMapMat<T>(xv->value.data(), B, in).transpose() * dy;
    }
    if (wants_grad(bv)) {
      T* db = bv->ensure_grad().data();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < outw; ++o) db[o] += dy(b, o);
    }
    if (wants_grad(xv)) {
      MapMat<T> dx(xv->ensure_grad().data(), B, in);
      dx.noalias() += dy * CMapMat<T>(wv->value.data(), in, outw).transpose();
    }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x->value;
  out.reshape(std::move(shape));
  return make_node<T>(std::move(out), {x}, [](Node<T>& self) {
    auto& dx = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
  });
}

template <typename T>
Var<T> fuse_concat(const Var<T>& x) {
  const auto& s = x->value.shape();
  expect(s.size() == 3, "fuse_concat expects (B, M, d), got " + shape_str(s));
  return reshape(x, {s[0], s[1] * s[2]});
}

template <typename T>
Var<T> fuse_sod(const Var<T>& x) {
  const auto& s = x->value.shape();
  expect(s.size() == 3, "fuse_sod expects (B, M, d), got " + shape_str(s));
  const std::size_t B = s[0], M = s[1], d = s[2];
  std::vector<T> coef(M);
  for (std::size_t k = 1; k <= M; ++k) coef[k - 1] = static_cast<T>(2.0 * k - 1.0 - static_cast<double>(M));
  Tensor<T> out({B, d});
  // coefficients are antisymmetric, so identical branches cancel exactly
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t m = 0; m < M / 2; ++m) {
      const T* lo = x->value.data() + (b * M + m) * d;
      const T* hi = x->value.data() + (b * M + M - 1 - m) * d;
      T* o = out.data() + b * d;
      for (std::size_t i = 0; i < d; ++i) o[i] += coef[M - 1 - m] * (hi[i] - lo[i]);
    }
  return make_node<T>(std::move(out), {x}, [B, M, d, coef](Node<T>& self) {
    auto& dx = self.parents[0]->ensure_grad();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t m = 0; m < M; ++m) {
        T* g = dx.data() + (b * M + m) * d;
        const T* dy = self.grad.data() + b * d;
        for (std::size_t i = 0; i < d; ++i) g[i] += coef[m] * dy[i];
      }
  });
}

template <typename T>
Var<T> dot_const(const Var<T>& x, const Tensor<T>& r) {
  expect(x->value.size() == r.size(), "dot_const size mismatch");
  T acc{0};
  for (std::size_t i = 0; i < r.size(); ++i) acc += r[i] * x->value[i];
  return make_node<T>(Tensor<T>({1}, std::vector<T>{acc}), {x}, [r](Node<T>& self) {
    auto& dx = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < r.size(); ++i) dx[i] += self.grad[0] * r[i];
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  expect(logits.rank() == 2, "softmax expects (B, C), got " + shape_str(logits.shape()));
  const std::size_t B = logits.dim(0), C = logits.dim(1);
  Tensor<T> p(logits.shape());
  for (std::size_t b = 0; b < B; ++b) {
    const T* z = logits.data() + b * C;
    const T mx = *std::max_element(z, z + C);
    T sum{0};
    for (std::size_t c = 0; c < C; ++c) sum += (p[b * C + c] = std::exp(z[c] - mx));
    for (std::size_t c = 0; c < C; ++c) p[b * C + c] /= sum;
  }
  return p;
}

template <typename T>
XentResult<T> softmax_xent(const Var<T>& logits, std::span<const int> labels) {
  const auto& s = logits->value.shape();
  expect(s.size() == 2, "softmax_xent expects (B, C) logits, got " + shape_str(s));
  const std::size_t B = s[0], C = s[1];
  expect(labels.size() == B, "softmax_xent: " + std::to_string(labels.size()) + " labels for batch of " + std::to_string(B));
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= C)
      throw LabelOutOfRange("label " + std::to_string(l) + " outside [0, " + std::to_string(C) + ")");
  Tensor<T> probs(s);
  double loss = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const T* z = logits->value.data() + b * C;
    const T mx = *std::max_element(z, z + C);
    double sum = 0;
    for (std::size_t c = 0; c < C; ++c) sum += std::exp(static_cast<double>(z[c] - mx));
    const double lse = std::log(sum);
    for (std::size_t c = 0; c < C; ++c) probs[b * C + c] = static_cast<T>(std::exp(static_cast<double>(z[c] - mx) - lse));
    loss -= static_cast<double>(z[labels[b]] - mx) - lse;
  }
  loss /= static_cast<double>(B);
  std::vector<int> lab(labels.begin(), labels.end());
  XentResult<T> r;
  r.probs = probs;
  r.loss = make_node<T>(Tensor<T>({1}, std::vector<T>{static_cast<T>(loss)}), {logits},
                        [probs = std::move(probs), lab = std::move(lab), B, C](Node<T>& self) {
                          auto& dz = self.parents[0]->ensure_grad();
                          const T g = self.grad[0] / static_cast<T>(B);
                          for (std::size_t b = 0; b < B; ++b)
                            for (std::size_t c = 0; c < C; ++c) {
                              const T onehot = static_cast<int>(c) == lab[b] ? T{1} : T{0};
                              dz[b * C + c] += g * (probs[b * C + c] - onehot);
                            }
                        });
  return r;
}

template <typename T>
Var<T> ParamSet<T>::add(const std::string& name, Tensor<T> init, double lr_mult) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  index_[name] = entries_.size();
  entries_.push_back({name, parameter(std::move(init)), lr_mult});
  return entries_.back().var;
}

template <typename T>
const Var<T>& ParamSet<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ShapeMismatch("no parameter named '" + name + "'");
  return entries_[it->second].var;
}

template <typename T>
typename ParamSet<T>::Entry& ParamSet<T>::entry(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ShapeMismatch("no parameter named '" + name + "'");
  return entries_[it->second];
}

template <typename T>
std::size_t ParamSet<T>::numel() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.var->value.size();
  return n;
}

template <typename T>
void ParamSet<T>::zero_grad() {
  for (auto& e : entries_) e.var->ensure_grad().fill(T{0});
}

template <typename T>
void sgd_update(std::span<T> w, std::span<const T> g, std::span<T> v, double lr, double momentum, double weight_decay) {
  expect(w.size() == g.size() && w.size() == v.size(), "sgd_update: parameter, gradient and velocity sizes differ");
  const T m = static_cast<T>(momentum), l = static_cast<T>(lr), wd = static_cast<T>(weight_decay);
  for (std::size_t i = 0; i < w.size(); ++i) {
    v[i] = m * v[i] - l * (g[i] + wd * w[i]);
    w[i] += v[i];
  }
}

template <typename T>
double Sgd<T>::step(ParamSet<T>& params, double lr) {
  auto& entries = params.entries();
  if (velocity_.size() != entries.size()) {
    velocity_.clear();
    for (const auto& e : entries) velocity_.emplace_back(e.var->value.shape());
  }
  double sq = 0;
  for (auto& e : entries)
    for (T g : e.var->ensure_grad().vec()) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (clip_norm_ > 0 && norm > clip_norm_) {
    const T scale = static_cast<T>(clip_norm_ / norm);
    for (auto& e : entries)
      for (T& g : e.var->grad.vec()) g *= scale;
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& node = *entries[i].var;
    expect(velocity_[i].shape() == node.value.shape(), "optimizer state does not match parameter " + entries[i].name);
    const auto& g = node.ensure_grad();
    sgd_update<T>(node.value.span(), g.span(), velocity_[i].span(), lr * entries[i].lr_mult, momentum_, weight_decay_);
  }
  return norm;
}

template <typename T>
Tensor<T> he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> d(0.0, std::sqrt(2.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1))));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(d(rng));
  return t;
}

GradCheckResult grad_check(const std::function<Var<double>()>& loss_fn, const std::vector<Var<double>>& wrt,
                           double eps, Rng& rng, std::size_t coords_per_input) {
  for (const auto& v : wrt) {
    v->requires_grad = true;
    v->ensure_grad().fill(0.0);
  }
  backward(loss_fn());
  GradCheckResult result;
  for (const auto& v : wrt) {
    const Tensor<double> analytic = v->grad;
    std::vector<std::size_t> coords(v->value.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > coords_per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(coords_per_input);
    }
    auto measure = [&](std::size_t i, double h) {
      const double orig = v->value[i];
      v->value[i] = orig + h;
      const double fp = loss_fn()->value[0];
      v->value[i] = orig - h;
      const double fm = loss_fn()->value[0];
      v->value[i] = orig;
      const double numeric = (fp - fm) / (2 * h);
      const double a = analytic[i];
      return std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-4});
    };
    for (std::size_t i : coords) {
      double err = measure(i, eps);
      // kinks: one retry with a smaller step
      if (err >= 1e-4) {
        err = measure(i, eps / 10);
        ++result.retried;
      }
      result.max_rel_error = std::max(result.max_rel_error, err);
      ++result.checked;
    }
  }
  return result;
}

#define O3N_INSTANTIATE(T)                                                                             \
  template Var<T> constant<T>(Tensor<T>);                                                              \
  template Var<T> parameter<T>(Tensor<T>);                                                             \
  template void backward<T>(const Var<T>&);                                                            \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int, int);                    \
  template Var<T> relu<T>(const Var<T>&);                                                              \
  template Var<T> maxpool2d<T>(const Var<T>&, int, int);                                               \
  template Var<T> dropout<T>(const Var<T>&, double, Rng&, bool);                                       \
  template Var<T> affine<T>(const Var<T>&, const Var<T>&, const Var<T>&);                              \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                                    \
  template Var<T> fuse_concat<T>(const Var<T>&);                                                       \
  template Var<T> fuse_sod<T>(const Var<T>&);                                                          \
  template Var<T> dot_const<T>(const Var<T>&, const Tensor<T>&);                                       \
  template XentResult<T> softmax_xent<T>(const Var<T>&, std::span<const int>);                         \
  template Tensor<T> softmax<T>(const Tensor<T>&);                                                     \
  template class ParamSet<T>;                                                                          \
  template void sgd_update<T>(std::span<T>, std::span<const T>, std::span<T>, double, double, double); \
  template class Sgd<T>;                                                                               \
  template Tensor<T> he_normal<T>(Shape, std::size_t, Rng&);

O3N_INSTANTIATE(float)
O3N_INSTANTIATE(double)

#undef O3N_INSTANTIATE

}  // namespace o3n::ad
