#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rdance/nn.hpp"
#include "rdance/tensor.hpp"

using namespace rdance;

TEST_CASE("softmax of equal logits is uniform") {
  auto x = Tensor<double>::from_data(1, 5, {2.0, 2.0, 2.0, 2.0, 2.0});
  auto y = softmax_rows(x);
  for (int c = 0; c < 5; ++c) CHECK(y(0, c) == Catch::Approx(0.2).margin(1e-12));
}

TEST_CASE("softmax shift invariance") {
  Rng rng(7);
  std::vector<double> v(8);
  for (auto& x : v) x = rng.uniform(-3, 3);
  auto a = softmax_rows(Tensor<double>::from_data(1, 8, v));
  for (auto& x : v) x += 11.5;
  auto b = softmax_rows(Tensor<double>::from_data(1, 8, v));
  for (int c = 0; c < 8; ++c)
    CHECK(std::abs(a(0, c) - b(0, c)) < 1e-6);
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(3);
  std::vector<double> v(40);
  for (auto& x : v) x = rng.uniform(-10, 10);
  auto y = softmax_rows(Tensor<double>::from_data(5, 8, v));
  for (int r = 0; r < 5; ++r) {
    double sum = 0;
    for (int c = 0; c < 8; ++c) sum += y(r, c);
    CHECK(sum == Catch::Approx(1.0).margin(1e-6));
  }
}

TEST_CASE("matmul identity") {
  auto I = Tensor<double>::from_data(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto A = Tensor<double>::from_data(3, 2, {1, 2, 3, 4, 5, 6});
  auto C = matmul(I, A);
  for (int i = 0; i < 6; ++i) CHECK(C.data()[i] == Catch::Approx(A.data()[i]));
}

TEST_CASE("matmul transpose flags agree with manual transpose") {
  Rng rng(11);
  std::vector<double> av(6), bv(6);
  for (auto& x : av) x = rng.uniform(-1, 1);
  for (auto& x : bv) x = rng.uniform(-1, 1);
  auto A = Tensor<double>::from_data(2, 3, av);   // 2x3
  auto B = Tensor<double>::from_data(2, 3, bv);   // 2x3
  auto C1 = matmul(A, B, false, true);            // 2x2
  // manual: C[i][j] = sum_k A[i][k] B[j][k]
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      double acc = 0;
      for (int k = 0; k < 3; ++k) acc += A(i, k) * B(j, k);
      CHECK(C1(i, j) == Catch::Approx(acc));
    }
  auto C2 = matmul(A, B, true, false);  // 3x3
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0;
      for (int k = 0; k < 2; ++k) acc += A(k, i) * B(k, j);
      CHECK(C2(i, j) == Catch::Approx(acc));
    }
}

TEST_CASE("layer_norm hand case x=[1,3]") {
  auto x = Tensor<double>::from_data(1, 2, {1.0, 3.0});
  auto gamma = Tensor<double>::from_data(1, 2, {1.0, 1.0});
  auto beta = Tensor<double>::from_data(1, 2, {0.0, 0.0});
  auto y = layer_norm(x, gamma, beta, 0.0);
  CHECK(y(0, 0) == Catch::Approx(-1.0));
  CHECK(y(0, 1) == Catch::Approx(1.0));
}

TEST_CASE("layer_norm constant input yields beta") {
  auto x = Tensor<double>::from_data(1, 4, {5.0, 5.0, 5.0, 5.0});
  auto gamma = Tensor<double>::from_data(1, 4, {2.0, 2.0, 2.0, 2.0});
  auto beta = Tensor<double>::from_data(1, 4, {0.3, 0.3, 0.3, 0.3});
  auto y = layer_norm(x, gamma, beta, 1e-5);
  for (int c = 0; c < 4; ++c) CHECK(y(0, c) == Catch::Approx(0.3).margin(1e-9));
}

TEST_CASE("layer_norm output statistics match gamma/beta") {
  Rng rng(5);
  std::vector<double> v(64);
  for (auto& x : v) x = rng.uniform(-2, 5);
  auto x = Tensor<double>::from_data(1, 64, v);
  std::vector<double> g(64, 1.7), b(64, 0.4);
  auto y = layer_norm(x, Tensor<double>::from_data(1, 64, g),
                      Tensor<double>::from_data(1, 64, b), 1e-10);
  double mean = 0;
  for (int c = 0; c < 64; ++c) mean += y(0, c);
  mean /= 64;
  double var = 0;
  for (int c = 0; c < 64; ++c) var += (y(0, c) - mean) * (y(0, c) - mean);
  var /= 64;
  CHECK(mean == Catch::Approx(0.4).margin(1e-4));
  CHECK(std::sqrt(var) == Catch::Approx(1.7).margin(1e-4));
}

TEST_CASE("conv1d with k=1 identity kernel reproduces input") {
  Rng rng(9);
  const int T = 6, d = 4;
  std::vector<double> v(T * d);
  for (auto& x : v) x = rng.uniform(-1, 1);
  auto x = Tensor<double>::from_data(T, d, v);
  std::vector<double> kv(d * d, 0.0);
  for (int i = 0; i < d; ++i) kv[i * d + i] = 1.0;
  auto K = Tensor<double>::from_data(d, d, kv);
  auto b = Tensor<double>::zeros(1, d);
  auto y = conv1d_same(x, K, b, 1);
  for (size_t i = 0; i < v.size(); ++i)
    CHECK(y.data()[i] == Catch::Approx(v[i]).margin(1e-12));
}

TEST_CASE("avg_pool_time column means") {
  auto x = Tensor<double>::from_data(2, 2, {1, 2, 3, 4});
  auto y = avg_pool_time(x);
  CHECK(y(0, 0) == Catch::Approx(2.0));
  CHECK(y(0, 1) == Catch::Approx(3.0));
}

TEST_CASE("backward through add/mul/matmul chain") {
  // f(a) = sum((a*a) @ w), hand gradient: d/da = (2a) * (w broadcast sum)
  auto a = Tensor<double>::from_data(1, 3, {1.0, 2.0, 3.0});
  a.node()->requires_grad = true;
  auto w = Tensor<double>::from_data(3, 1, {0.5, -1.0, 2.0});
  auto f = sum_all(matmul(mul(a, a), w));
  f.backward();
  CHECK(a.grad()[0] == Catch::Approx(2 * 1.0 * 0.5));
  CHECK(a.grad()[1] == Catch::Approx(2 * 2.0 * -1.0));
  CHECK(a.grad()[2] == Catch::Approx(2 * 3.0 * 2.0));
}

TEST_CASE("all outputs finite for finite inputs across ops") {
  Rng rng(21);
  std::vector<double> v(24);
  for (auto& x : v) x = rng.uniform(-50, 50);
  auto x = Tensor<double>::from_data(4, 6, v);
  CHECK(all_finite(softmax_rows(x)));
  CHECK(all_finite(gelu(x)));
  CHECK(all_finite(sigmoid(x)));
  CHECK(all_finite(normalize_rows(x, 1e-5)));
  CHECK(all_finite(rowwise_l2norm(x)));
}

TEST_CASE("dropout is deterministic for fixed seed/step/layer and scales") {
  auto x = Tensor<float>::from_data(10, 10, std::vector<float>(100, 1.f));
  DropoutCtx c1{42, 7, 0, true};
  auto y1 = dropout(x, 0.5f, &c1);
  DropoutCtx c2{42, 7, 0, true};
  auto y2 = dropout(x, 0.5f, &c2);
  for (int i = 0; i < 100; ++i) CHECK(y1.data()[i] == y2.data()[i]);
  bool any_zero = false, any_scaled = false;
  for (int i = 0; i < 100; ++i) {
    if (y1.data()[i] == 0.f) any_zero = true;
    if (y1.data()[i] == 2.f) any_scaled = true;
  }
  CHECK(any_zero);
  CHECK(any_scaled);
  DropoutCtx eval{42, 7, 0, false};
  auto y3 = dropout(x, 0.5f, &eval);
  for (int i = 0; i < 100; ++i) CHECK(y3.data()[i] == 1.f);
}

TEST_CASE("shape mismatch raises") {
  auto a = Tensor<double>::zeros(2, 3);
  auto b = Tensor<double>::zeros(3, 2);
  CHECK_THROWS_AS(add(a, b), Error);
  CHECK_THROWS_AS(matmul(a, a), Error);
}
