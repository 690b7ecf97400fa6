#include <doctest.h>

#include <cmath>
#include <functional>

#include "skullkit/autodiff.hpp"
#include "skullkit/model.hpp"
#include "skullkit/rng.hpp"

using namespace skullkit;

namespace {

Tensor random_tensor(Rng& rng, std::array<int64_t, 5> shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (auto& v : t.data) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

// independent direct-convolution oracle: materialize the zero-padded input,
// then slide the kernel (no inline bounds logic shared with the real op)
Tensor conv3d_oracle(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const int64_t N = x.shape[0], Ci = x.shape[1];
  const int64_t Co = w.shape[0], k = w.shape[2];
  std::array<int64_t, 3> in{x.shape[2], x.shape[3], x.shape[4]};
  std::array<int64_t, 3> padded{in[0] + 2 * pad, in[1] + 2 * pad, in[2] + 2 * pad};
  Tensor xp({N, Ci, padded[0], padded[1], padded[2]});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < Ci; ++c)
      for (int64_t d = 0; d < in[0]; ++d)
        for (int64_t h = 0; h < in[1]; ++h)
          for (int64_t ww = 0; ww < in[2]; ++ww)
            xp.at(n, c, d + pad, h + pad, ww + pad) = x.at(n, c, d, h, ww);

  std::array<int64_t, 3> out{};
  for (int a = 0; a < 3; ++a) out[a] = (in[a] + 2 * pad - k) / stride + 1;
  Tensor y({N, Co, out[0], out[1], out[2]});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t co = 0; co < Co; ++co)
      for (int64_t od = 0; od < out[0]; ++od)
        for (int64_t oh = 0; oh < out[1]; ++oh)
          for (int64_t ow = 0; ow < out[2]; ++ow) {
            double acc = b.data[static_cast<size_t>(co)];
            for (int64_t ci = 0; ci < Ci; ++ci)
              for (int64_t kd = 0; kd < k; ++kd)
                for (int64_t kh = 0; kh < k; ++kh)
                  for (int64_t kw = 0; kw < k; ++kw)
                    acc += static_cast<double>(xp.at(n, ci, od * stride + kd, oh * stride + kh,
                                                     ow * stride + kw)) *
                           w.at(co, ci, kd, kh, kw);
            y.at(n, co, od, oh, ow) = static_cast<float>(acc);
          }
  return y;
}

// Scalar functional of a graph output: fixed-weight sum so upstream grads are
// non-uniform.
Var weighted_sum(const Var& y, const Tensor& weights) {
  return sum_all(mul(y, make_leaf(weights)));
}

// Central finite differences on every element of every labelled leaf.
void check_gradients(const std::vector<Var>& leaves, const std::function<Var()>& forward_loss,
                     double eps = 1e-3, double tol = 1e-2) {
  Var loss = forward_loss();
  for (const auto& leaf : leaves) leaf->zero_grad();
  backward(loss);
  for (size_t li = 0; li < leaves.size(); ++li) {
    const Var& leaf = leaves[li];
    REQUIRE(leaf->has_grad());
    for (size_t j = 0; j < leaf->value.data.size(); ++j) {
      float saved = leaf->value.data[j];
      leaf->value.data[j] = static_cast<float>(saved + eps);
      double f_plus = forward_loss()->value.data[0];
      leaf->value.data[j] = static_cast<float>(saved - eps);
      double f_minus = forward_loss()->value.data[0];
      leaf->value.data[j] = saved;
      double fd = (f_plus - f_minus) / (2 * eps);
      double an = leaf->grad.data[j];
      double denom = std::max({std::fabs(fd), std::fabs(an), 0.1});
      CAPTURE(li);
      CAPTURE(j);
      CHECK(std::fabs(fd - an) / denom < tol);
    }
  }
}

}  // namespace

TEST_CASE("conv3d identity kernel") {
  Rng rng(1);
  Tensor x = random_tensor(rng, {1, 1, 3, 3, 3});
  Tensor w({1, 1, 1, 1, 1});
  w.data[0] = 1.f;
  Tensor b({1, 1, 1, 1, 1});
  Var y = conv3d(make_leaf(x), make_leaf(w), make_leaf(b), 1, 0);
  CHECK(y->value.data == x.data);
}

TEST_CASE("conv3d all-ones 2x2x2 kernel sums the cube") {
  Tensor x({1, 1, 2, 2, 2});
  for (auto& v : x.data) v = 1.f;
  Tensor w({1, 1, 2, 2, 2});
  for (auto& v : w.data) v = 1.f;
  Tensor b({1, 1, 1, 1, 1});
  Var y = conv3d(make_leaf(x), make_leaf(w), make_leaf(b), 1, 0);
  CHECK(y->value.shape == std::array<int64_t, 5>{1, 1, 1, 1, 1});
  CHECK(y->value.data[0] == 8.f);
}

TEST_CASE("conv3d matches the direct oracle on random small instances") {
  Rng rng(0xC0DE);
  for (int trial = 0; trial < 50; ++trial) {
    int64_t ci = 1 + static_cast<int64_t>(rng.uniform_int(3));
    int64_t co = 1 + static_cast<int64_t>(rng.uniform_int(3));
    int64_t k = 1 + static_cast<int64_t>(rng.uniform_int(3));
    int stride = 1 + static_cast<int>(rng.uniform_int(2));
    int pad = static_cast<int>(rng.uniform_int(2));
    std::array<int64_t, 3> sp{};
    for (int a = 0; a < 3; ++a) {
      int64_t min_in = std::max<int64_t>(1, k - 2 * pad);
      sp[a] = std::min<int64_t>(4, min_in + static_cast<int64_t>(rng.uniform_int(4)));
      sp[a] = std::max(sp[a], min_in);
    }
    int64_t n = 1 + static_cast<int64_t>(rng.uniform_int(2));
    Tensor x = random_tensor(rng, {n, ci, sp[0], sp[1], sp[2]});
    Tensor w = random_tensor(rng, {co, ci, k, k, k});
    Tensor b = random_tensor(rng, {1, co, 1, 1, 1});

    Var got = conv3d(make_leaf(x), make_leaf(w), make_leaf(b), stride, pad);
    Tensor want = conv3d_oracle(x, w, b, stride, pad);
    REQUIRE(got->value.shape == want.shape);
    for (size_t i = 0; i < want.data.size(); ++i)
      CHECK(got->value.data[i] == doctest::Approx(want.data[i]).epsilon(1e-6));
  }
}

TEST_CASE("conv3d gradients vs central finite differences") {
  Rng rng(0x9D);
  for (int trial = 0; trial < 20; ++trial) {
    int64_t k = 1 + static_cast<int64_t>(rng.uniform_int(3));
    int stride = 1 + static_cast<int>(rng.uniform_int(2));
    int pad = 1;
    int64_t ci = 1 + static_cast<int64_t>(rng.uniform_int(2));
    int64_t co = 1 + static_cast<int64_t>(rng.uniform_int(2));
    Var x = make_leaf(random_tensor(rng, {1, ci, 3, 3, 3}), true);
    Var w = make_leaf(random_tensor(rng, {co, ci, k, k, k}), true);
    Var b = make_leaf(random_tensor(rng, {1, co, 1, 1, 1}), true);
    Var probe;
    {
      NoGradGuard off;
      probe = conv3d(x, w, b, stride, pad);
    }
    Tensor weights = random_tensor(rng, probe->value.shape);
    check_gradients({x, w, b},
                    [&] { return weighted_sum(conv3d(x, w, b, stride, pad), weights); });
  }
}

TEST_CASE("conv_transpose3d identity and scatter") {
  Rng rng(3);
  Tensor x = random_tensor(rng, {1, 1, 3, 3, 3});
  Tensor w1({1, 1, 1, 1, 1});
  w1.data[0] = 1.f;
  Tensor b({1, 1, 1, 1, 1});
  Var y = conv_transpose3d(make_leaf(x), make_leaf(w1), make_leaf(b), 1, 0, 0);
  CHECK(y->value.data == x.data);

  Tensor one({1, 1, 1, 1, 1});
  one.data[0] = 3.5f;
  Tensor w2({1, 1, 2, 2, 2});
  for (auto& v : w2.data) v = 1.f;
  Var up = conv_transpose3d(make_leaf(one), make_leaf(w2), make_leaf(b), 2, 0, 0);
  CHECK(up->value.shape == std::array<int64_t, 5>{1, 1, 2, 2, 2});
  for (float v : up->value.data) CHECK(v == 3.5f);
}

TEST_CASE("conv_transpose3d is the adjoint of conv3d") {
  Rng rng(0xADD);
  int checked = 0;
  for (int trial = 0; trial < 60 && checked < 20; ++trial) {
    int64_t ci = 1 + static_cast<int64_t>(rng.uniform_int(3));
    int64_t co = 1 + static_cast<int64_t>(rng.uniform_int(3));
    int64_t k = 1 + static_cast<int64_t>(rng.uniform_int(3));
    int stride = 1 + static_cast<int>(rng.uniform_int(2));
    int pad = static_cast<int>(rng.uniform_int(2));
    std::array<int64_t, 3> in{};
    for (int a = 0; a < 3; ++a) {
      int64_t min_in = std::max<int64_t>(1, k - 2 * pad);
      in[a] = min_in + static_cast<int64_t>(rng.uniform_int(4));
    }
    Tensor x = random_tensor(rng, {1, ci, in[0], in[1], in[2]});
    Tensor w = random_tensor(rng, {co, ci, k, k, k});
    Tensor zero_b_co({1, co, 1, 1, 1});
    Tensor zero_b_ci({1, ci, 1, 1, 1});

    Var cx = conv3d(make_leaf(x), make_leaf(w), make_leaf(zero_b_co), stride, pad);
    Tensor y = random_tensor(rng, cx->value.shape);

    // conv_transpose shares w: its (Cin, Cout, k, k, k) layout equals the
    // conv weight's (Co, Ci, k, k, k) buffer with the roles swapped
    std::array<int64_t, 3> back{};
    bool feasible = true;
    for (int a = 0; a < 3; ++a)
      back[a] = (cx->value.shape[2 + a] - 1) * stride - 2 * pad + k;
    int output_padding = static_cast<int>(in[0] - back[0]);
    if (output_padding < 0 || output_padding >= stride) feasible = false;
    for (int a = 1; a < 3; ++a)
      if (in[a] - back[a] != output_padding) feasible = false;
    if (!feasible) continue;
    ++checked;

    Var ty = conv_transpose3d(make_leaf(y), make_leaf(w), make_leaf(zero_b_ci), stride, pad,
                              output_padding);
    REQUIRE(ty->value.shape == x.shape);

    double lhs = 0, rhs = 0;
    for (size_t i = 0; i < y.data.size(); ++i)
      lhs += static_cast<double>(cx->value.data[i]) * y.data[i];
    for (size_t i = 0; i < x.data.size(); ++i)
      rhs += static_cast<double>(x.data[i]) * ty->value.data[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-4));
  }
  CHECK(checked >= 10);
}

TEST_CASE("conv_transpose3d gradients vs central finite differences") {
  Rng rng(0x7A);
  for (int trial = 0; trial < 20; ++trial) {
    int64_t k = 2 + static_cast<int64_t>(rng.uniform_int(2));
    int stride = 1 + static_cast<int>(rng.uniform_int(2));
    int pad = static_cast<int>(rng.uniform_int(2));
    int op = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(stride)));
    int64_t ci = 1 + static_cast<int64_t>(rng.uniform_int(2));
    int64_t co = 1 + static_cast<int64_t>(rng.uniform_int(2));
    Var x = make_leaf(random_tensor(rng, {1, ci, 2, 2, 2}), true);
    Var w = make_leaf(random_tensor(rng, {ci, co, k, k, k}), true);
    Var b = make_leaf(random_tensor(rng, {1, co, 1, 1, 1}), true);
    Var probe;
    {
      NoGradGuard off;
      probe = conv_transpose3d(x, w, b, stride, pad, op);
    }
    if (probe->value.numel() < 1) continue;
    Tensor weights = random_tensor(rng, probe->value.shape);
    check_gradients({x, w, b}, [&] {
      return weighted_sum(conv_transpose3d(x, w, b, stride, pad, op), weights);
    });
  }
}

TEST_CASE("prelu behaviour") {
  Tensor x({1, 1, 1, 1, 4});
  x.data = {-1.f, 2.f, -4.f, 0.f};
  Tensor alpha({1, 1, 1, 1, 1});

  alpha.data[0] = 0.f;  // ReLU
  Var y0 = prelu(make_leaf(x), make_leaf(alpha));
  CHECK(y0->value.data == std::vector<float>{-0.f, 2.f, -0.f, 0.f});

  alpha.data[0] = 1.f;  // identity
  Var y1 = prelu(make_leaf(x), make_leaf(alpha));
  CHECK(y1->value.data == x.data);

  alpha.data[0] = 0.25f;
  Var y2 = prelu(make_leaf(x), make_leaf(alpha));
  CHECK(y2->value.data[2] == -1.f);
}

TEST_CASE("prelu gradients (including alpha) vs finite differences") {
  Rng rng(0x9E);
  for (int trial = 0; trial < 20; ++trial) {
    Var x = make_leaf(random_tensor(rng, {1, 2, 2, 2, 2}), true);
    Var alpha = make_leaf(Tensor::scalar(static_cast<float>(rng.uniform(0.05, 0.9))), true);
    Tensor weights = random_tensor(rng, x->value.shape);
    check_gradients({x, alpha}, [&] { return weighted_sum(prelu(x, alpha), weights); });
  }
}

TEST_CASE("softmax_channels") {
  Tensor x({1, 2, 1, 1, 1});
  x.data = {0.f, 0.f};
  Var y = softmax_channels(make_leaf(x));
  CHECK(y->value.data[0] == doctest::Approx(0.5));
  CHECK(y->value.data[1] == doctest::Approx(0.5));

  x.data = {1000.f, 0.f};
  Var big = softmax_channels(make_leaf(x));
  CHECK(big->value.data[0] == doctest::Approx(1.0));
  CHECK(big->value.data[1] == doctest::Approx(0.0));
  CHECK(std::isfinite(big->value.data[0]));

  Rng rng(0x5F);
  Var r = softmax_channels(make_leaf(random_tensor(rng, {2, 3, 2, 2, 2}, -5, 5)));
  const Tensor& p = r->value;
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t v = 0; v < 8; ++v) {
      double s = 0;
      for (int64_t c = 0; c < 3; ++c) s += p.data[static_cast<size_t>((n * 3 + c) * 8 + v)];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("softmax_channels gradients vs finite differences") {
  Rng rng(0x60);
  for (int trial = 0; trial < 20; ++trial) {
    Var x = make_leaf(random_tensor(rng, {1, 3, 2, 2, 1}, -2, 2), true);
    Tensor weights = random_tensor(rng, x->value.shape);
    check_gradients({x}, [&] { return weighted_sum(softmax_channels(x), weights); });
  }
}

TEST_CASE("backward of sum(w*x) wrt w equals x") {
  Rng rng(0x11);
  Tensor xv = random_tensor(rng, {1, 1, 2, 2, 2});
  Var w = make_leaf(random_tensor(rng, {1, 1, 2, 2, 2}), true);
  Var loss = sum_all(mul(w, make_leaf(xv)));
  backward(loss);
  REQUIRE(w->has_grad());
  for (size_t i = 0; i < xv.data.size(); ++i)
    CHECK(w->grad.data[i] == doctest::Approx(xv.data[i]));
}

TEST_CASE("backward twice without a fresh forward raises NoTape") {
  Var w = make_leaf(Tensor::scalar(2.f), true);
  Var loss = sum_all(mul(w, w));
  backward(loss);
  CHECK_THROWS_WITH_AS(backward(loss), doctest::Contains("NoTape"), Error);
  CHECK_THROWS_AS(backward(w), Error);  // a bare leaf has no tape either
}

TEST_CASE("two-layer toy net passes the finite-difference check end to end") {
  Rng rng(0x22);
  Var x = make_leaf(random_tensor(rng, {1, 1, 4, 4, 4}), false);
  Var w1 = make_leaf(random_tensor(rng, {2, 1, 3, 3, 3}, -0.5, 0.5), true);
  Var b1 = make_leaf(Tensor({1, 2, 1, 1, 1}), true);
  Var a1 = make_leaf(Tensor::scalar(0.25f), true);
  Var w2 = make_leaf(random_tensor(rng, {2, 2, 3, 3, 3}, -0.5, 0.5), true);
  Var b2 = make_leaf(Tensor({1, 2, 1, 1, 1}), true);
  Tensor weights = random_tensor(rng, {1, 2, 2, 2, 2});

  check_gradients({w1, b1, a1, w2, b2}, [&] {
    Var h = prelu(conv3d(x, w1, b1, 2, 1), a1);
    Var y = conv3d(h, w2, b2, 1, 1);
    return weighted_sum(softmax_channels(y), weights);
  });
}

TEST_CASE("autoencoder construction and shapes") {
  ModelConfig cfg;
  cfg.channels = {8, 16};
  cfg.strides = {2, 2};
  Model model = build_autoencoder(cfg, 7);
  CHECK(model.encoder_layer_count() == 2);
  CHECK(model.decoder_layer_count() == 2);

  Var x = make_leaf(Tensor({1, 1, 8, 8, 8}));
  Var y = model.forward(x);
  CHECK(y->value.shape == std::array<int64_t, 5>{1, 2, 8, 8, 8});
}

TEST_CASE("same seed gives bit-identical parameters") {
  ModelConfig cfg;
  cfg.channels = {4, 8};
  cfg.strides = {2, 2};
  Model a = build_autoencoder(cfg, 123);
  Model b = build_autoencoder(cfg, 123);
  CHECK(a.parameter_hash() == b.parameter_hash());
  Model c = build_autoencoder(cfg, 124);
  CHECK(a.parameter_hash() != c.parameter_hash());
}

TEST_CASE("indivisible input dims name the offending axis") {
  ModelConfig cfg;
  cfg.channels = {4, 8};
  cfg.strides = {2, 2};
  Model model = build_autoencoder(cfg, 1);
  Var x = make_leaf(Tensor({1, 1, 8, 6, 8}));
  CHECK_THROWS_WITH_AS(model.forward(x), doctest::Contains("height"), Error);
  try {
    model.forward(x);
    FAIL("expected InvalidConfig");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidConfig);
  }
}

TEST_CASE("forward is deterministic and batch-independent") {
  ModelConfig cfg;
  cfg.channels = {4, 8};
  cfg.strides = {2, 2};
  Model model = build_autoencoder(cfg, 55);
  Rng rng(0x77);
  Tensor a = random_tensor(rng, {1, 1, 4, 4, 4});
  Tensor b = random_tensor(rng, {1, 1, 4, 4, 4});

  Var ya = model.forward(make_leaf(a));
  Var ya2 = model.forward(make_leaf(a));
  CHECK(ya->value.data == ya2->value.data);

  Tensor batch({2, 1, 4, 4, 4});
  std::copy(a.data.begin(), a.data.end(), batch.data.begin());
  std::copy(b.data.begin(), b.data.end(), batch.data.begin() + a.numel());
  Var yb = model.forward(make_leaf(batch));
  Var yb1 = model.forward(make_leaf(b));
  int64_t per = ya->value.numel();
  for (int64_t i = 0; i < per; ++i) {
    CHECK(yb->value.data[static_cast<size_t>(i)] ==
          doctest::Approx(ya->value.data[static_cast<size_t>(i)]).epsilon(1e-6));
    CHECK(yb->value.data[static_cast<size_t>(per + i)] ==
          doctest::Approx(yb1->value.data[static_cast<size_t>(i)]).epsilon(1e-6));
  }
}

TEST_CASE("grad mode off records no tape") {
  Var w = make_leaf(Tensor::scalar(1.f), true);
  Var y;
  {
    NoGradGuard off;
    y = sum_all(mul(w, w));
  }
  CHECK(y->is_leaf);
  CHECK_THROWS_AS(backward(y), Error);
}
