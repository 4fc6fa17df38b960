#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "o3n/rng.hpp"
#include "o3n/tensor.hpp"

// Reverse-mode automatic differentiation over dense tensors. Graphs are built eagerly by the
// op functions below and released when the last handle to the root goes away. Instantiated for
// float (training) and double (gradient checks).
namespace o3n::ad {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor<T>& ensure_grad() {
    if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> constant(Tensor<T> value);

template <typename T>
Var<T> parameter(Tensor<T> value);

/// Seeds d(root)/d(root) = 1 and runs every reachable backward function in reverse topological order.
template <typename T>
void backward(const Var<T>& root);

/// NHWC cross-correlation. x: (B, H, W, C), kernel: (Co, KH, KW, C), bias: (Co) or null.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias, int stride, int pad);

template <typename T>
Var<T> relu(const Var<T>& x);

/// Max pooling over NHWC windows of size k. Output extent floor((H - k) / stride) + 1.
template <typename T>
Var<T> maxpool2d(const Var<T>& x, int k, int stride);

/// Inverted dropout: survivors scaled by 1 / (1 - rate) when training, identity otherwise.
template <typename T>
Var<T> dropout(const Var<T>& x, double rate, Rng& rng, bool train);

/// x: (B, in), weight: (in, out), bias: (out) or null.
template <typename T>
Var<T> affine(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);

/// (B, M, d) -> (B, M * d), branch blocks in presentation order.
template <typename T>
Var<T> fuse_concat(const Var<T>& x);

/// (B, M, d) -> (B, d), o = sum_{j > i} (v_j - v_i) = sum_k (2k - 1 - M) v_k.
template <typename T>
Var<T> fuse_sod(const Var<T>& x);

/// Scalar sum_i r_i x_i with a constant r; reduces a tensor output to a loss for gradient checks.
template <typename T>
Var<T> dot_const(const Var<T>& x, const Tensor<T>& r);

template <typename T>
struct XentResult {
  Var<T> loss;     // scalar mean negative log-likelihood
  Tensor<T> probs;  // (B, C)
};

template <typename T>
XentResult<T> softmax_xent(const Var<T>& logits, std::span<const int> labels);

/// Row-wise softmax with max subtraction, no graph.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

/// Named parameters in insertion order.
template <typename T>
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Var<T> var;
    double lr_mult = 1.0;
  };

  Var<T> add(const std::string& name, Tensor<T> init, double lr_mult = 1.0);
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  const Var<T>& get(const std::string& name) const;
  Entry& entry(const std::string& name);
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t numel() const;
  void zero_grad();

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// v <- momentum v - lr (g + weight_decay w);  w <- w + v.
template <typename T>
void sgd_update(std::span<T> w, std::span<const T> g, std::span<T> v, double lr, double momentum, double weight_decay);

template <typename T>
class Sgd {
 public:
  /// clip_norm > 0 rescales the gradients so that their global L2 norm is at most clip_norm.
  Sgd(double momentum, double weight_decay, double clip_norm = 0)
      : momentum_(momentum), weight_decay_(weight_decay), clip_norm_(clip_norm) {}
  /// One update of every parameter with lr * entry.lr_mult, using the gradients held by the nodes.
  /// Returns the global gradient norm before clipping.
  double step(ParamSet<T>& params, double lr);

 private:
  double momentum_;
  double weight_decay_;
  double clip_norm_;
  std::vector<Tensor<T>> velocity_;
};

/// Zero-mean Gaussian with standard deviation sqrt(2 / fan_in).
template <typename T>
Tensor<T> he_normal(Shape shape, std::size_t fan_in, Rng& rng);

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::size_t retried = 0;  // re-measured with eps / 10
};

/// Compares backward() against central differences of `loss_fn` with respect to the leaf
/// tensors `wrt`, on up to `coords_per_input` random coordinates of each. The error is
/// |a - n| / max(|a|, |n|, 1e-4); a coordinate at or above 1e-4 is measured again with eps / 10.
/// `loss_fn` must rebuild the graph from the current leaf values on each call and be deterministic.
GradCheckResult grad_check(const std::function<Var<double>()>& loss_fn, const std::vector<Var<double>>& wrt,
                           double eps, Rng& rng, std::size_t coords_per_input = 40);

}  // namespace o3n::ad
