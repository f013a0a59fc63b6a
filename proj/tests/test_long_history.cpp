#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "rdance/dataset.hpp"
#include "rdance/long_history.hpp"
#include "rdance/synth.hpp"

using namespace rdance;

namespace {

constexpr int kM = 10, kN = 7;

Tensor<double> random_history(int T, int dim, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(size_t(T) * dim);
  for (auto& x : v) x = rng.uniform(-1, 1);
  return Tensor<double>::from_data(T, dim, v);
}

/// Straight-line re-implementation of the attention read-out: per-window
/// convolutions, pooled keys, raw dot-product weights, weighted value sum.
struct BruteForce {
  std::vector<double> conv_same(const std::vector<double>& x, int T, int din,
                                const std::vector<double>& K,
                                const std::vector<double>& b, int dout) const {
    std::vector<double> y(size_t(T) * dout, 0.0);
    for (int t = 0; t < T; ++t) {
      for (int o = 0; o < dout; ++o) y[size_t(t) * dout + o] = b[o];
      for (int tap = 0; tap < 3; ++tap) {
        int src = t + tap - 1;
        if (src < 0 || src >= T) continue;
        for (int i = 0; i < din; ++i)
          for (int o = 0; o < dout; ++o)
            y[size_t(t) * dout + o] +=
                x[size_t(src) * din + i] * K[(size_t(tap) * din + i) * dout + o];
      }
    }
    return y;
  }

  std::vector<double> window(const Tensor<double>& X, int start, int len) const {
    std::vector<double> out(size_t(len) * X.cols());
    for (int r = 0; r < len; ++r)
      for (int c = 0; c < X.cols(); ++c)
        out[size_t(r) * X.cols() + c] = X(start + r, c);
    return out;
  }

  /// returns (e_hist n*d, weights W)
  std::pair<std::vector<double>, std::vector<double>> encode(
      const LongHistoryEncoder<double>& enc, const Tensor<double>& X, int m,
      int n) const {
    const int T = X.rows(), din = X.cols(), d = enc.dim();
    const auto& qk = enc.q_conv();
    const auto& kk = enc.k_conv();
    const auto& vk = enc.v_conv();
    int W = T - 2 * m - n + 1;
    auto pooled = [&](const std::vector<double>& conv, int len) {
      std::vector<double> out(d, 0.0);
      for (int t = 0; t < len; ++t)
        for (int c = 0; c < d; ++c) out[c] += conv[size_t(t) * d + c];
      for (auto& v : out) v /= len;
      return out;
    };
    std::vector<double> q = pooled(
        conv_same(window(X, T - m, m), m, din, qk.K.data(), qk.b.data(), d), m);
    std::vector<double> logits(W);
    std::vector<std::vector<double>> values(W);
    for (int i = 0; i < W; ++i) {
      std::vector<double> ki = pooled(
          conv_same(window(X, i, m), m, din, kk.K.data(), kk.b.data(), d), m);
      double dot = 0;
      for (int c = 0; c < d; ++c) dot += q[c] * ki[c];
      logits[i] = std::min(50.0, std::max(-50.0, dot));
      values[i] =
          conv_same(window(X, i + m, n), n, din, vk.K.data(), vk.b.data(), d);
    }
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    std::vector<double> a(W);
    double sum = 0;
    for (int i = 0; i < W; ++i) {
      a[i] = std::exp(logits[i] - mx);
      sum += a[i];
    }
    for (auto& v : a) v /= sum;
    std::vector<double> e(size_t(n) * d, 0.0);
    for (int i = 0; i < W; ++i)
      for (size_t k = 0; k < e.size(); ++k) e[k] += a[i] * values[i][k];
    return {e, a};
  }
};

}  // namespace

TEST_CASE("exactly one window: weight 1 and E_hist == V_1") {
  const int dim = 12;
  ModelParams<double> params;
  Rng rng(3);
  LongHistoryEncoder<double> enc(params, "h", dim, 8, rng);
  Tensor<double> X = random_history(2 * kM + kN, dim, 17);
  auto out = enc.encode(X, kM, kN);
  REQUIRE(out.weights.numel() == 1);
  CHECK(out.weights.item() == Catch::Approx(1.0));
  BruteForce bf;
  auto [e, a] = bf.encode(enc, X, kM, kN);
  REQUIRE(out.e_hist.numel() == int64_t(e.size()));
  for (size_t i = 0; i < e.size(); ++i)
    CHECK(out.e_hist.data()[i] == Catch::Approx(e[i]).margin(1e-9));
}

TEST_CASE("matches brute-force oracle on random inputs up to T=100") {
  const int dim = 10;
  ModelParams<double> params;
  Rng rng(5);
  LongHistoryEncoder<double> enc(params, "h", dim, 6, rng);
  for (int T : {27, 40, 63, 100}) {
    Tensor<double> X = random_history(T, dim, 100 + T);
    auto out = enc.encode(X, kM, kN);
    BruteForce bf;
    auto [e, a] = bf.encode(enc, X, kM, kN);
    REQUIRE(out.weights.numel() == int64_t(a.size()));
    for (size_t i = 0; i < a.size(); ++i)
      CHECK(out.weights.data()[i] == Catch::Approx(a[i]).margin(1e-9));
    for (size_t i = 0; i < e.size(); ++i)
      CHECK(out.e_hist.data()[i] == Catch::Approx(e[i]).margin(1e-5));
  }
}

TEST_CASE("weights: non-negative, sum to 1") {
  const int dim = 8;
  ModelParams<double> params;
  Rng rng(7);
  LongHistoryEncoder<double> enc(params, "h", dim, 6, rng);
  Tensor<double> X = random_history(80, dim, 31);
  auto out = enc.encode(X, kM, kN);
  double sum = 0;
  for (int64_t i = 0; i < out.weights.numel(); ++i) {
    CHECK(out.weights.data()[i] >= 0.0);
    sum += out.weights.data()[i];
  }
  CHECK(sum == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("planted exact repeat of the query window wins the attention") {
  // Fixed test kernels: CNN_q == CNN_k with only the center tap active and
  // an identity-style projection, so a pooled key is the time-average of the
  // window's leading feature dims. The query lives on feature dim 0; every
  // noise frame is orthogonal to it (dim 0 component zero), so q.k_i is
  // positive only where the copy overlaps, maximal at the exact repeat.
  const int dim = 16, d = 12, T = 90;
  int wins = 0;
  for (int trial = 0; trial < 100; ++trial) {
    ModelParams<double> params;
    Rng rng(trial + 1);
    LongHistoryEncoder<double> enc(params, "h", dim, d, rng);
    auto fix_kernel = [&](const std::string& path) {
      auto& K = params.get(path + ".K").data();
      std::fill(K.begin(), K.end(), 0.0);
      for (int c = 0; c < d; ++c) K[(size_t(1) * dim + c) * d + c] = 1.0;  // center tap
      auto& b = params.get(path + ".b").data();
      std::fill(b.begin(), b.end(), 0.0);
    };
    fix_kernel("h.cnn_q");
    fix_kernel("h.cnn_k");

    Rng noise(1000 + trial);
    Tensor<double> X = Tensor<double>::zeros(T, dim);
    for (int t = 0; t < T; ++t) {
      X.at(t, 0) = 0.0;  // orthogonal-feature noise: nothing on the query dim
      for (int c = 1; c < dim; ++c) X.at(t, c) = noise.uniform(-1, 1);
    }
    for (int r = 0; r < kM; ++r) X.at(T - kM + r, 0) = 1.5;  // the query motif

    const int W = history_window_count(T, kM, kN);
    int planted = int(Rng(555 + trial).below(uint64_t(W)));
    for (int r = 0; r < kM; ++r)
      for (int c = 0; c < dim; ++c)
        X.at(planted + r, c) = X(T - kM + r, c);

    auto out = enc.encode(X, kM, kN);
    int argmax = 0;
    for (int i = 1; i < W; ++i)
      if (out.weights.data()[i] > out.weights.data()[argmax]) argmax = i;
    if (argmax == planted) ++wins;
  }
  CHECK(wins == 100);
}

TEST_CASE("permuting (key, value) pairs leaves E_hist unchanged") {
  // The read-out is a weighted sum over the window set; permute the terms in
  // the oracle and compare.
  const int dim = 9;
  ModelParams<double> params;
  Rng rng(13);
  LongHistoryEncoder<double> enc(params, "h", dim, 5, rng);
  Tensor<double> X = random_history(60, dim, 77);
  auto out = enc.encode(X, kM, kN);

  BruteForce bf;
  auto [e, a] = bf.encode(enc, X, kM, kN);
  const int W = int(a.size());
  std::vector<int> perm(W);
  for (int i = 0; i < W; ++i) perm[i] = i;
  Rng shuffle_rng(99);
  for (int i = W - 1; i > 0; --i)
    std::swap(perm[i], perm[shuffle_rng.below(uint64_t(i + 1))]);
  std::vector<double> e_perm(e.size(), 0.0);
  // recompute the weighted sum in permuted order with permuted softmax inputs
  {
    const auto& qk = enc.q_conv();
    (void)qk;
    std::vector<std::vector<double>> values(W);
    std::vector<double> logits(W);
    // reuse oracle internals: recompute per-window pieces
    for (int i = 0; i < W; ++i) {
      auto ki_conv = bf.conv_same(bf.window(X, i, kM), kM, dim,
                                  enc.k_conv().K.data(), enc.k_conv().b.data(),
                                  enc.dim());
      std::vector<double> ki(enc.dim(), 0.0);
      for (int t = 0; t < kM; ++t)
        for (int c = 0; c < enc.dim(); ++c) ki[c] += ki_conv[size_t(t) * enc.dim() + c];
      for (auto& v : ki) v /= kM;
      auto q_conv = bf.conv_same(bf.window(X, X.rows() - kM, kM), kM, dim,
                                 enc.q_conv().K.data(), enc.q_conv().b.data(),
                                 enc.dim());
      std::vector<double> q(enc.dim(), 0.0);
      for (int t = 0; t < kM; ++t)
        for (int c = 0; c < enc.dim(); ++c) q[c] += q_conv[size_t(t) * enc.dim() + c];
      for (auto& v : q) v /= kM;
      double dot = 0;
      for (int c = 0; c < enc.dim(); ++c) dot += q[c] * ki[c];
      logits[i] = dot;
      values[i] = bf.conv_same(bf.window(X, i + kM, kN), kN, dim,
                               enc.v_conv().K.data(), enc.v_conv().b.data(),
                               enc.dim());
    }
    double mx = -1e300;
    for (int i = 0; i < W; ++i) mx = std::max(mx, logits[perm[i]]);
    double sum = 0;
    std::vector<double> ap(W);
    for (int i = 0; i < W; ++i) {
      ap[i] = std::exp(logits[perm[i]] - mx);
      sum += ap[i];
    }
    for (int i = 0; i < W; ++i)
      for (size_t k = 0; k < e_perm.size(); ++k)
        e_perm[k] += (ap[i] / sum) * values[perm[i]][k];
  }
  for (size_t i = 0; i < e_perm.size(); ++i)
    CHECK(out.e_hist.data()[i] == Catch::Approx(e_perm[i]).margin(1e-9));
}

TEST_CASE("full gradient path through q/k/v convolutions and softmax") {
  const int dim = 6;
  ModelParams<double> params;
  Rng rng(19);
  LongHistoryEncoder<double> enc(params, "h", dim, 4, rng);
  Tensor<double> X = random_history(2 * kM + kN + 9, dim, 404);
  auto f = [&](ModelParams<double>& p) {
    (void)p;
    auto out = enc.encode(X, kM, kN);
    return mean_all(mul(out.e_hist, out.e_hist));
  };
  double err = grad_check<double>(f, params, 1e-5);
  CHECK(err < 1e-3);
}

TEST_CASE("insufficient history raises") {
  const int dim = 6;
  ModelParams<double> params;
  Rng rng(23);
  LongHistoryEncoder<double> enc(params, "h", dim, 4, rng);
  Tensor<double> X = random_history(2 * kM + kN - 1, dim, 1);
  try {
    enc.encode(X, kM, kN);
    FAIL("expected InsufficientHistory");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInsufficientHistory);
  }
}

TEST_CASE("training history sampler: single eligible clip always chosen") {
  std::vector<MotionClip> motions;
  std::vector<MusicFeatureTrack> musics;
  for (int i = 0; i < 3; ++i) {
    auto [c, m] = synth_dance(i == 2 ? 1 : 0, i == 0 ? 8.0 : 2.0, 100.0, i);
    c.clip_id = "clip" + std::to_string(i);
    motions.push_back(c);
    musics.push_back(m);
  }
  Dataset ds = Dataset::from_clips(motions, musics, {"a", "b"});
  Rng rng(9);
  for (int k = 0; k < 20; ++k) {
    MotionClip s = sample_history_slice(ds, 0, 120, rng);
    CHECK(s.clip_id == "clip0");
    CHECK(s.T == 120);
  }
  // no clip of style 1 long enough
  try {
    sample_history_slice(ds, 1, 120, rng);
    FAIL("expected NoEligibleClip");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNoEligibleClip);
  }
}

TEST_CASE("training history sampler: uniform over eligible clips") {
  std::vector<MotionClip> motions;
  std::vector<MusicFeatureTrack> musics;
  for (int i = 0; i < 4; ++i) {
    auto [c, m] = synth_dance(0, 10.0, 100.0, 100 + i);
    c.clip_id = "c" + std::to_string(i);
    motions.push_back(c);
    musics.push_back(m);
  }
  Dataset ds = Dataset::from_clips(motions, musics, {"only"});
  Rng rng(31337);
  std::map<std::string, int> counts;
  const int draws = 10000;
  for (int k = 0; k < draws; ++k)
    counts[sample_history_slice(ds, 0, 60, rng).clip_id]++;
  for (auto& [id, c] : counts) {
    double freq = double(c) / draws;
    CHECK(freq > 0.2);
    CHECK(freq < 0.3);
  }
}
