#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "rdance/nn.hpp"
#include "rdance/tensor.hpp"

using namespace rdance;

namespace {

Tensor<double> random_input(int r, int c, uint64_t seed, double lo = -1,
                            double hi = 1) {
  Rng rng(seed);
  std::vector<double> v(size_t(r) * c);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor<double>::from_data(r, c, v);
}

}  // namespace

TEST_CASE("grad_check on f(x)=x^2 at x=3") {
  ModelParams<double> params;
  auto& x = params.add("x", Tensor<double>::from_data(1, 1, {3.0}));
  auto f = [&](ModelParams<double>& p) { return mul(p.get("x"), p.get("x")); };
  double err = grad_check<double>(f, params, 1e-5);
  CHECK(err < 1e-8);
  params.zero_grad();
  auto loss = f(params);
  loss.backward();
  CHECK(x.grad()[0] == Catch::Approx(6.0));
}

TEST_CASE("grad_check flags the |x| kink at 0") {
  // Probe half a step away from the origin so the kink sits inside the
  // central-difference stencil; at exactly 0 both sides cancel to 0.
  ModelParams<double> params;
  params.add("x", Tensor<double>::from_data(1, 1, {5e-6}));
  auto f = [&](ModelParams<double>& p) {
    // |x| via sqrt(x^2): non-smooth at the origin
    return rowwise_l2norm(p.get("x"));
  };
  double err = grad_check<double>(f, params, 1e-5);
  CHECK(err > 1e-3);  // documented non-smooth case: error above tolerance
}

TEST_CASE("two-layer MLP with gelu passes gradient check") {
  ModelParams<double> params;
  Rng rng(123);
  auto l1 = Linear<double>::create(params, "l1", 5, 7, rng);
  auto l2 = Linear<double>::create(params, "l2", 7, 1, rng);
  Tensor<double> x = random_input(3, 5, 77);
  auto f = [&](ModelParams<double>& p) {
    (void)p;
    return mean_all(l2.forward(gelu(l1.forward(x))));
  };
  double err = grad_check<double>(f, params, 1e-5);
  CHECK(err < 1e-3);
}

TEST_CASE("conv1d gradient matches finite differences") {
  ModelParams<double> params;
  Rng rng(5);
  auto conv = Conv1d<double>::create(params, "c", 3, 4, 6, rng);
  Tensor<double> x = random_input(9, 4, 31);
  auto f = [&](ModelParams<double>& p) {
    (void)p;
    return mean_all(mul(conv.forward(x), conv.forward(x)));
  };
  double err = grad_check<double>(f, params, 1e-5);
  CHECK(err < 1e-3);
}

TEST_CASE("multi-head attention: one position reduces to V projection") {
  ModelParams<double> params;
  Rng rng(9);
  auto mha = MultiHeadAttention<double>::create(params, "a", 8, 2, 0.0, rng);
  Tensor<double> x = random_input(1, 8, 13);
  Tensor<double> out = mha.forward(x, x, x, nullptr);
  // softmax over a single key is 1, so out = Wo(Wv x + bv) + bo
  Tensor<double> expect = mha.wo.forward(mha.wv.forward(x));
  for (int c = 0; c < 8; ++c)
    CHECK(out(0, c) == Catch::Approx(expect(0, c)).margin(1e-12));
}

TEST_CASE("attention weights rows sum to 1") {
  ModelParams<double> params;
  Rng rng(10);
  auto mha = MultiHeadAttention<double>::create(params, "a", 12, 3, 0.0, rng);
  Tensor<double> x = random_input(6, 12, 14);
  for (int h = 0; h < 3; ++h) {
    Tensor<double> w = mha.attention_weights(x, h);
    for (int r = 0; r < 6; ++r) {
      double sum = 0;
      for (int c = 0; c < 6; ++c) sum += w(r, c);
      CHECK(sum == Catch::Approx(1.0).margin(1e-6));
    }
  }
}

TEST_CASE("multi-head attention gradient check") {
  ModelParams<double> params;
  Rng rng(17);
  auto mha = MultiHeadAttention<double>::create(params, "a", 8, 2, 0.0, rng);
  Tensor<double> x = random_input(5, 8, 21);
  auto f = [&](ModelParams<double>& p) {
    (void)p;
    return mean_all(mul(mha.forward(x, x, x, nullptr), x));
  };
  double err = grad_check<double>(f, params, 1e-5);
  CHECK(err < 1e-3);
}

TEST_CASE("encoder layer gradient check") {
  ModelParams<double> params;
  Rng rng(19);
  auto layer = EncoderLayer<double>::create(params, "enc", 8, 2, 16, 0.0, rng);
  Tensor<double> x = random_input(4, 8, 23);
  auto f = [&](ModelParams<double>& p) {
    (void)p;
    return mean_all(mul(layer.forward(x, nullptr), x));
  };
  double err = grad_check<double>(f, params, 1e-5);
  CHECK(err < 1e-3);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  ModelParams<float> params;
  auto& w = params.add("w", Tensor<float>::from_data(1, 3, {1.f, -2.f, 0.5f}));
  params.zero_grad();
  params.adam_step(0.1f);
  CHECK(w.data()[0] == 1.f);
  CHECK(w.data()[1] == -2.f);
  CHECK(w.data()[2] == 0.5f);
  CHECK(params.step() == 1);
  params.zero_grad();
  params.adam_step(0.1f);
  CHECK(params.step() == 2);
}

TEST_CASE("adam converges on f(t)=t^2") {
  ModelParams<double> params;
  auto& theta = params.add("t", Tensor<double>::from_data(1, 1, {1.0}));
  for (int i = 0; i < 200; ++i) {
    params.zero_grad();
    auto loss = mul(theta, theta);
    loss.backward();
    params.adam_step(0.1);
  }
  CHECK(std::abs(theta.data()[0]) < 0.05);
}

TEST_CASE("adam rejects non-finite gradients") {
  ModelParams<float> params;
  auto& w = params.add("w", Tensor<float>::from_data(1, 1, {1.f}));
  params.zero_grad();
  w.node()->grad[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(params.adam_step(0.1f), Error);
}

TEST_CASE("forward determinism given seed (dropout counter-based)") {
  ModelParams<float> params;
  Rng rng(99);
  auto layer = EncoderLayer<float>::create(params, "e", 8, 2, 16, 0.1f, rng);
  std::vector<float> v(32);
  Rng data_rng(7);
  for (auto& x : v) x = float(data_rng.uniform(-1, 1));
  auto x = Tensor<float>::from_data(4, 8, v);
  DropoutCtx c1{5, 3, 0, true};
  auto y1 = layer.forward(x, &c1);
  DropoutCtx c2{5, 3, 0, true};
  auto y2 = layer.forward(x, &c2);
  for (int64_t i = 0; i < y1.numel(); ++i) CHECK(y1.data()[i] == y2.data()[i]);
}

TEST_CASE("xavier init is deterministic per seed") {
  Rng a(42), b(42);
  auto t1 = xavier_uniform<float>(10, 10, 10, 10, a);
  auto t2 = xavier_uniform<float>(10, 10, 10, 10, b);
  for (int64_t i = 0; i < t1.numel(); ++i) CHECK(t1.data()[i] == t2.data()[i]);
}
