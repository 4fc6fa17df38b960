#include <doctest.h>

#include <cmath>

#include "o3n/autodiff.hpp"
#include "o3n/error.hpp"

using namespace o3n;
using namespace o3n::ad;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.vec()) v = d(rng);
  return t;
}

Tensor<double> random_like(const Tensor<double>& t, Rng& rng) { return random_tensor(t.shape(), rng); }

}  // namespace

TEST_CASE("conv2d examples") {
  Rng rng(1);
  const auto x = random_tensor({2, 5, 5, 3}, rng);
  Tensor<double> eye({3, 1, 1, 3});
  for (int c = 0; c < 3; ++c) eye[c * 3 + c] = 1;
  const auto y = conv2d(constant(x), constant(eye), Var<double>{}, 1, 0);
  CHECK(y->value == x);

  const auto ones = conv2d(constant(Tensor<double>({1, 3, 3, 1}, 1.0)), constant(Tensor<double>({1, 3, 3, 1}, 1.0)),
                           Var<double>{}, 1, 0);
  CHECK(ones->value.shape() == Shape{1, 1, 1, 1});
  CHECK(ones->value[0] == 9);

  const auto strided = conv2d(constant(x), constant(random_tensor({4, 3, 3, 3}, rng)), Var<double>{}, 2, 1);
  CHECK(strided->value.shape() == Shape{2, 3, 3, 4});  // floor((5 + 2 - 3) / 2) + 1

  CHECK_THROWS_AS(conv2d(constant(x), constant(random_tensor({4, 3, 3, 2}, rng)), Var<double>{}, 1, 0), ShapeError);
}

TEST_CASE("conv2d against a direct loop") {
  Rng rng(2);
  const auto x = random_tensor({1, 6, 5, 2}, rng), k = random_tensor({3, 3, 3, 2}, rng), b = random_tensor({3}, rng);
  const int stride = 2, pad = 1;
  const auto y = conv2d(constant(x), constant(k), constant(b), stride, pad)->value;
  const int H = 6, W = 5, OH = (H + 2 * pad - 3) / stride + 1, OW = (W + 2 * pad - 3) / stride + 1;
  REQUIRE(y.shape() == Shape{1, static_cast<std::size_t>(OH), static_cast<std::size_t>(OW), 3});
  for (int oy = 0; oy < OH; ++oy)
    for (int ox = 0; ox < OW; ++ox)
      for (int o = 0; o < 3; ++o) {
        double s = b[o];
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
            for (int c = 0; c < 2; ++c) s += x[(iy * W + ix) * 2 + c] * k[((o * 3 + ky) * 3 + kx) * 2 + c];
          }
        CHECK(y[(oy * OW + ox) * 3 + o] == doctest::Approx(s).epsilon(1e-12));
      }
}

TEST_CASE("pointwise op examples") {
  const auto r = relu(constant(Tensor<double>({3}, {-1, 0, 2})));
  CHECK(r->value.vec() == std::vector<double>{0, 0, 2});

  const auto p = maxpool2d(constant(Tensor<double>({1, 2, 2, 1}, {1, 2, 3, 4})), 2, 2);
  CHECK(p->value.shape() == Shape{1, 1, 1, 1});
  CHECK(p->value[0] == 4);

  Rng rng(3);
  const auto x = random_tensor({4, 10}, rng);
  CHECK(dropout(constant(x), 0.0, rng, true)->value == x);
  CHECK(dropout(constant(x), 0.8, rng, false)->value == x);
}

TEST_CASE("dropout keeps the expectation") {
  Rng rng(4);
  const Tensor<double> x({1, 20000}, 1.0);
  const auto y = dropout(constant(x), 0.8, rng, true)->value;
  double sum = 0;
  std::size_t kept = 0;
  for (double v : y.vec()) {
    CHECK((v == 0 || std::abs(v - 5.0) < 1e-12));
    sum += v;
    kept += v != 0;
  }
  CHECK(sum / 20000 == doctest::Approx(1.0).epsilon(0.05));
  CHECK(static_cast<double>(kept) / 20000 == doctest::Approx(0.2).epsilon(0.05));
}

TEST_CASE("softmax cross-entropy") {
  const std::vector<int> labels = {2};
  auto equal = softmax_xent(constant(Tensor<double>({1, 6}, 0.3)), labels);
  CHECK(equal.loss->value[0] == doctest::Approx(std::log(6.0)));
  for (double p : equal.probs.vec()) CHECK(p == doctest::Approx(1.0 / 6));

  const std::vector<int> zero = {0};
  auto big = softmax_xent(constant(Tensor<double>({1, 2}, {1000, 0})), zero);
  CHECK(std::isfinite(big.loss->value[0]));
  CHECK(big.probs[0] == doctest::Approx(1.0));
  CHECK(big.probs[1] < 1e-12);

  const auto pf = softmax(Tensor<float>({2, 3}, {1e4f, -1e4f, 0.f, 1.f, 2.f, 3.f}));
  CHECK(std::abs(pf[0] + pf[1] + pf[2] - 1.0) < 1e-6);
  CHECK(std::abs(pf[3] + pf[4] + pf[5] - 1.0) < 1e-6);

  const std::vector<int> bad = {6};
  CHECK_THROWS_AS(softmax_xent(constant(Tensor<double>({1, 6})), bad), LabelOutOfRange);
  const std::vector<int> two = {0, 1};
  CHECK_THROWS_AS(softmax_xent(constant(Tensor<double>({1, 6})), two), ShapeError);
}

TEST_CASE("cross-entropy gradient is (probs - onehot) / B") {
  Rng rng(5);
  const auto logits = parameter(random_tensor({4, 6}, rng, -3, 3));
  const std::vector<int> labels = {0, 5, 2, 2};
  auto r = softmax_xent(logits, labels);
  backward(r.loss);
  for (std::size_t b = 0; b < 4; ++b)
    for (std::size_t c = 0; c < 6; ++c) {
      const double expect = (r.probs[b * 6 + c] - (static_cast<int>(c) == labels[b] ? 1.0 : 0.0)) / 4.0;
      CHECK(logits->grad[b * 6 + c] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("gradient checks") {
  Rng rng(6);
  const double eps = 1e-3;

  SUBCASE("conv2d") {
    auto x = parameter(random_tensor({2, 5, 5, 3}, rng));
    auto k = parameter(random_tensor({4, 3, 3, 3}, rng));
    auto b = parameter(random_tensor({4}, rng));
    const auto r = random_tensor({2, 3, 3, 4}, rng);
    auto res = grad_check([&] { return dot_const(conv2d(x, k, b, 2, 1), r); }, {x, k, b}, eps, rng);
    CHECK(res.checked > 0);
    CHECK(res.max_rel_error < 1e-4);
  }
  SUBCASE("relu away from the kink") {
    auto x0 = random_tensor({3, 7}, rng);
    for (auto& v : x0.vec()) v = (v < 0 ? -1 : 1) * (0.1 + std::abs(v));
    auto x = parameter(x0);
    const auto r = random_like(x0, rng);
    auto res = grad_check([&] { return dot_const(relu(x), r); }, {x}, eps, rng);
    CHECK(res.max_rel_error < 1e-4);
  }
  SUBCASE("maxpool with separated values") {
    Tensor<double> x0({2, 6, 6, 2});
    std::vector<double> vals(x0.size());
    std::iota(vals.begin(), vals.end(), 0.0);
    std::shuffle(vals.begin(), vals.end(), rng);
    for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = vals[i] * 0.05;
    auto x = parameter(x0);
    const auto r = random_tensor({2, 3, 3, 2}, rng);
    auto res = grad_check([&] { return dot_const(maxpool2d(x, 2, 2), r); }, {x}, eps, rng, 200);
    CHECK(res.max_rel_error < 1e-4);
  }
  SUBCASE("affine") {
    auto x = parameter(random_tensor({5, 7}, rng));
    auto w = parameter(random_tensor({7, 3}, rng));
    auto b = parameter(random_tensor({3}, rng));
    const auto r = random_tensor({5, 3}, rng);
    auto res = grad_check([&] { return dot_const(affine(x, w, b), r); }, {x, w, b}, eps, rng);
    CHECK(res.max_rel_error < 1e-6);
  }
  SUBCASE("softmax cross-entropy") {
    auto z = parameter(random_tensor({4, 6}, rng, -2, 2));
    const std::vector<int> labels = {1, 3, 0, 5};
    auto res = grad_check([&] { return softmax_xent(z, labels).loss; }, {z}, eps, rng);
    CHECK(res.max_rel_error < 1e-4);
  }
  SUBCASE("fusions and reshape") {
    auto x = parameter(random_tensor({2, 6, 4}, rng));
    const auto rc = random_tensor({2, 24}, rng), rs = random_tensor({2, 4}, rng);
    CHECK(grad_check([&] { return dot_const(fuse_concat(x), rc); }, {x}, eps, rng).max_rel_error < 1e-6);
    CHECK(grad_check([&] { return dot_const(fuse_sod(x), rs); }, {x}, eps, rng).max_rel_error < 1e-6);
    const auto rr = random_tensor({12, 4}, rng);
    CHECK(grad_check([&] { return dot_const(reshape(x, {12, 4}), rr); }, {x}, eps, rng).max_rel_error < 1e-6);
  }
  SUBCASE("dropout with a fixed mask") {
    auto x = parameter(random_tensor({3, 8}, rng));
    const auto r = random_tensor({3, 8}, rng);
    auto res = grad_check(
        [&] {
          Rng fixed(42);
          return dot_const(dropout(x, 0.5, fixed, true), r);
        },
        {x}, eps, rng);
    CHECK(res.max_rel_error < 1e-4);
  }
  SUBCASE("small network") {
    auto x = parameter(random_tensor({2, 8, 8, 3}, rng));
    auto k = parameter(random_tensor({4, 3, 3, 3}, rng));
    auto w = parameter(random_tensor({64, 5}, rng));
    const std::vector<int> labels = {4, 1};
    auto loss = [&] {
      auto h = maxpool2d(conv2d(x, k, Var<double>{}, 1, 1), 2, 2);
      return softmax_xent(affine(reshape(h, {2, 64}), w, Var<double>{}), labels).loss;
    };
    CHECK(grad_check(loss, {x, k, w}, eps, rng).max_rel_error < 1e-4);
  }
}

TEST_CASE("gradient check catches a wrong backward") {
  Rng rng(31);
  auto x = parameter(random_tensor({4, 5}, rng));
  // the constant copy of x hides half of d(x.x)/dx from backward
  auto res = grad_check([&] { return dot_const(x, x->value); }, {x}, 1e-5, rng);
  CHECK(res.max_rel_error == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(res.retried == res.checked);

  auto ok = grad_check([&] { return dot_const(x, Tensor<double>(x->value.shape(), 2.0)); }, {x}, 1e-5, rng);
  CHECK(ok.retried == 0);
}

TEST_CASE("sgd update examples") {
  std::vector<double> w = {1}, g = {2}, v = {0};
  sgd_update<double>(w, g, v, 0.1, 0.0, 0.0);
  CHECK(w[0] == doctest::Approx(0.8));

  w = {0.37};
  v = {0};
  g = {0};
  sgd_update<double>(w, g, v, 0.1, 0.9, 0.0);
  CHECK(w[0] == 0.37);

  w = {0};
  v = {0};
  g = {1};
  sgd_update<double>(w, g, v, 0.1, 0.9, 0.0);
  sgd_update<double>(w, g, v, 0.1, 0.9, 0.0);
  CHECK(w[0] == doctest::Approx(-0.29));

  w = {2};
  v = {0};
  g = {0};
  sgd_update<double>(w, g, v, 0.1, 0.0, 0.5);
  CHECK(w[0] == doctest::Approx(1.9));
}

TEST_CASE("Sgd applies lr multipliers and clips the global norm") {
  ParamSet<double> params;
  auto a = params.add("a", Tensor<double>({2}, {0, 0}));
  auto b = params.add("b", Tensor<double>({1}, {0}), 10.0);
  a->ensure_grad() = Tensor<double>({2}, {3, 0});
  b->ensure_grad() = Tensor<double>({1}, {4});

  Sgd<double> plain(0.0, 0.0);
  CHECK(plain.step(params, 0.1) == doctest::Approx(5.0));
  CHECK(a->value[0] == doctest::Approx(-0.3));
  CHECK(b->value[0] == doctest::Approx(-4.0));

  a->value.fill(0);
  b->value.fill(0);
  Sgd<double> clipped(0.0, 0.0, 1.0);
  CHECK(clipped.step(params, 0.1) == doctest::Approx(5.0));
  CHECK(a->value[0] == doctest::Approx(-0.3 / 5));
  CHECK(b->value[0] == doctest::Approx(-4.0 / 5));

  // clipping rescaled the stored gradients
  CHECK(b->grad[0] == doctest::Approx(0.8));
  a->value.fill(0);
  b->value.fill(0);
  a->grad = Tensor<double>({2}, {3, 0});
  b->grad = Tensor<double>({1}, {4});
  Sgd<double> loose(0.0, 0.0, 10.0);
  loose.step(params, 0.1);
  CHECK(a->value[0] == doctest::Approx(-0.3));
}

TEST_CASE("He initialization statistics") {
  Rng rng(7);
  const auto w = he_normal<double>({100, 200}, 50, rng);
  double mean = 0, sq = 0;
  for (double v : w.vec()) mean += v;
  mean /= w.size();
  for (double v : w.vec()) sq += (v - mean) * (v - mean);
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::sqrt(sq / w.size()) == doctest::Approx(std::sqrt(2.0 / 50)).epsilon(0.02));
}

namespace {

struct TinyNet {
  ParamSet<float> params;
  Var<float> w1, b1, w2, b2;
  explicit TinyNet(std::uint64_t seed) {
    Rng rng(seed);
    w1 = params.add("w1", he_normal<float>({4, 16}, 4, rng));
    b1 = params.add("b1", Tensor<float>({16}));
    w2 = params.add("w2", he_normal<float>({16, 2}, 16, rng));
    b2 = params.add("b2", Tensor<float>({2}));
  }
  Var<float> logits(const Tensor<float>& x) const { return affine(relu(affine(constant(x), w1, b1)), w2, b2); }
};

std::pair<Tensor<float>, std::vector<int>> separable_samples() {
  Rng rng(8);
  std::normal_distribution<float> d(0.f, 1.f);
  Tensor<float> x({16, 4});
  std::vector<int> y(16);
  for (int i = 0; i < 16; ++i) {
    y[i] = i % 2;
    for (int j = 0; j < 4; ++j) x[i * 4 + j] = d(rng) * 0.5f + (y[i] ? 1.5f : -1.5f) * (j == 0);
  }
  return {x, y};
}

std::vector<float> train(TinyNet& net, int steps, int* steps_to_fit) {
  const auto [x, y] = separable_samples();
  Sgd<float> opt(0.9, 0.0);
  for (int s = 0; s < steps; ++s) {
    net.params.zero_grad();
    auto r = softmax_xent(net.logits(x), y);
    backward(r.loss);
    opt.step(net.params, 0.05);
    int correct = 0;
    for (int i = 0; i < 16; ++i) correct += (r.probs[i * 2 + 1] > r.probs[i * 2]) == (y[i] == 1);
    if (correct == 16 && steps_to_fit && *steps_to_fit < 0) *steps_to_fit = s;
  }
  std::vector<float> flat;
  for (const auto& e : net.params.entries()) flat.insert(flat.end(), e.var->value.vec().begin(), e.var->value.vec().end());
  return flat;
}

}  // namespace

TEST_CASE("two-layer net fits 16 separable samples") {
  TinyNet net(1);
  int fit = -1;
  train(net, 500, &fit);
  CHECK(fit >= 0);
  CHECK(fit < 500);
}

TEST_CASE("training is bitwise reproducible") {
  TinyNet a(3), b(3), c(4);
  const auto wa = train(a, 50, nullptr), wb = train(b, 50, nullptr), wc = train(c, 50, nullptr);
  CHECK(wa == wb);
  CHECK(wa != wc);
}

TEST_CASE("parameter sets") {
  ParamSet<float> p;
  p.add("x", Tensor<float>({2, 3}));
  p.add("y", Tensor<float>({4}));
  CHECK(p.size() == 2);
  CHECK(p.numel() == 10);
  CHECK(p.contains("x"));
  CHECK_FALSE(p.contains("z"));
  CHECK(p.entries()[1].name == "y");
  CHECK_THROWS(p.add("x", Tensor<float>({1})));
}
