#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rdance/errors.hpp"
#include "rdance/motion.hpp"
#include "rdance/nn.hpp"
#include "rdance/rng.hpp"
#include "rdance/tensor.hpp"

namespace rdance {

// ============================================================================
// Long-history attention.
//
// The ongoing m-frame motion is the query; every m-frame window of the
// earlier history is a key and its n-frame continuation is the value:
//   q   = AvgPool(CNN_q(X[T-m : T]))
//   k_i = AvgPool(CNN_k(X[i : i+m]))
//   V_i = CNN_V(X[i+m : i+m+n])
//   a   = softmax_i(q . k_i)        (raw dot products, no sqrt(d) scaling;
//                                    logits clipped to +-50 before softmax)
//   E_hist = sum_i a_i V_i          (n x d)
// Convolutions use zero 'same' padding within each window, so an exact
// window repeat yields an exact key match. Key windows cover the history
// before the query window; at least one key+value window must fit, i.e.
// T >= 2m+n.
// ============================================================================

namespace detail {

/// Pooled per-window convolution: window starts i in [0, W), each covering
/// rows [i, i+m); output row i = time-average of conv1d_same over that
/// window. Computed via prefix sums over rows (exact reformulation).
template <typename T>
Tensor<T> conv_windows_pooled(const Tensor<T>& x, const Tensor<T>& kernel,
                              const Tensor<T>& bias, int k, int m, int W) {
  int Tt = x.rows(), din = x.cols(), dout = kernel.cols();
  if (kernel.rows() != k * din || bias.cols() != dout)
    throw Error(ErrorCode::kShapeMismatch, "conv_windows_pooled: kernel shape");
  if (W < 1 || W + m > Tt + 1)
    throw Error(ErrorCode::kShapeMismatch, "conv_windows_pooled: window range");
  auto xn = x.node(), kn = kernel.node(), bn = bias.node();
  int half = k / 2;

  // prefix[t] = sum of rows [0, t) in double for stability
  auto prefix = std::make_shared<std::vector<double>>(size_t(Tt + 1) * din, 0.0);
  {
    auto& P = *prefix;
    for (int t = 0; t < Tt; ++t) {
      const T* xr = xn->value.data() + size_t(t) * din;
      const double* prev = P.data() + size_t(t) * din;
      double* cur = P.data() + size_t(t + 1) * din;
      for (int i = 0; i < din; ++i) cur[i] = prev[i] + double(xr[i]);
    }
  }

  auto window_sum = [prefix, din, m](int i, int tap, int half, std::vector<T>& row) {
    int o = tap - half;
    int lo = std::max(0, o);
    int hi = m - 1 + std::min(0, o);
    const double* a = prefix->data() + size_t(i + lo) * din;
    const double* b = prefix->data() + size_t(i + hi + 1) * din;
    for (int c = 0; c < din; ++c) row[c] = T(b[c] - a[c]);
  };

  Tensor<T> out = detail::make_op<T>(
      W, dout, {xn, kn, bn},
      [xn, kn, bn, prefix, window_sum, Tt, din, dout, k, m, W, half](TensorNode<T>& o) {
        T inv_m = T(1) / T(m);
        std::vector<T> srow(din);
        std::vector<T> g(size_t(W) * din);
        for (int tap = 0; tap < k; ++tap) {
          int off = tap - half;
          int lo = std::max(0, off);
          int hi = m - 1 + std::min(0, off);
          const T* ktap = kn->value.data() + size_t(tap) * din * dout;
          if (kn->requires_grad) {
            kn->ensure_grad();
            T* kg = kn->grad.data() + size_t(tap) * din * dout;
            for (int i = 0; i < W; ++i) {
              window_sum(i, tap, half, srow);
              const T* dy = o.grad.data() + size_t(i) * dout;
              for (int c = 0; c < din; ++c) {
                T sv = srow[c] * inv_m;
                T* kr = kg + size_t(c) * dout;
                for (int j = 0; j < dout; ++j) kr[j] += sv * dy[j];
              }
            }
          }
          if (xn->requires_grad) {
            xn->ensure_grad();
            // g[i] = (dy[i] . K_tap^T) / m, then range-add over rows [i+lo, i+hi]
            std::fill(g.begin(), g.end(), T(0));
            gemm_acc(o.grad.data(), ktap, g.data(), W, dout, din, false, true);
            std::vector<T> diff(size_t(Tt + 1) * din, T(0));
            for (int i = 0; i < W; ++i) {
              const T* gi = g.data() + size_t(i) * din;
              T* d0 = diff.data() + size_t(i + lo) * din;
              T* d1 = diff.data() + size_t(i + hi + 1) * din;
              for (int c = 0; c < din; ++c) {
                d0[c] += gi[c];
                d1[c] -= gi[c];
              }
            }
            std::vector<T> runacc(din, T(0));
            for (int t = 0; t < Tt; ++t) {
              const T* dr = diff.data() + size_t(t) * din;
              T* xg = xn->grad.data() + size_t(t) * din;
              for (int c = 0; c < din; ++c) {
                runacc[c] += dr[c];
                xg[c] += runacc[c] * inv_m;
              }
            }
          }
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (int i = 0; i < W; ++i) {
            const T* dy = o.grad.data() + size_t(i) * dout;
            for (int j = 0; j < dout; ++j) bn->grad[j] += dy[j];
          }
        }
      });

  // forward: out[i] = b + (1/m) sum_tap S(i,tap) * K_tap
  std::vector<T> srow(din);
  std::vector<T> smat(size_t(W) * din);
  for (int i = 0; i < W; ++i) {
    T* y = out.data().data() + size_t(i) * dout;
    for (int j = 0; j < dout; ++j) y[j] = bn->value[j];
  }
  for (int tap = 0; tap < k; ++tap) {
    for (int i = 0; i < W; ++i) {
      window_sum(i, tap, half, srow);
      T inv_m = T(1) / T(m);
      for (int c = 0; c < din; ++c) smat[size_t(i) * din + c] = srow[c] * inv_m;
    }
    gemm_acc(smat.data(), kn->value.data() + size_t(tap) * din * dout,
             out.data().data(), W, din, dout, false, false);
  }
  return out;
}

/// Per-window convolution without pooling: window i covers rows
/// [i+skip, i+skip+n); output row i is the flattened n x dout conv result.
template <typename T>
Tensor<T> conv_windows_flat(const Tensor<T>& x, const Tensor<T>& kernel,
                            const Tensor<T>& bias, int k, int skip, int n,
                            int W) {
  int Tt = x.rows(), din = x.cols(), dout = kernel.cols();
  if (kernel.rows() != k * din || bias.cols() != dout)
    throw Error(ErrorCode::kShapeMismatch, "conv_windows_flat: kernel shape");
  if (W < 1 || W - 1 + skip + n > Tt)
    throw Error(ErrorCode::kShapeMismatch, "conv_windows_flat: window range");
  auto xn = x.node(), kn = kernel.node(), bn = bias.node();
  int half = k / 2;
  Tensor<T> out = detail::make_op<T>(
      W, n * dout, {xn, kn, bn},
      [xn, kn, bn, Tt, din, dout, k, skip, n, W, half](TensorNode<T>& o) {
        if (bn->requires_grad) bn->ensure_grad();
        if (kn->requires_grad) kn->ensure_grad();
        if (xn->requires_grad) xn->ensure_grad();
        for (int i = 0; i < W; ++i) {
          int base = i + skip;
          for (int r = 0; r < n; ++r) {
            const T* dy = o.grad.data() + size_t(i) * n * dout + size_t(r) * dout;
            if (bn->requires_grad)
              for (int j = 0; j < dout; ++j) bn->grad[j] += dy[j];
            for (int tap = 0; tap < k; ++tap) {
              int rr = r + tap - half;
              if (rr < 0 || rr >= n) continue;
              const T* xv = xn->value.data() + size_t(base + rr) * din;
              if (kn->requires_grad) {
                T* kg = kn->grad.data() + size_t(tap) * din * dout;
                for (int c = 0; c < din; ++c) {
                  T xi = xv[c];
                  T* kr = kg + size_t(c) * dout;
                  for (int j = 0; j < dout; ++j) kr[j] += xi * dy[j];
                }
              }
              if (xn->requires_grad) {
                const T* kv = kn->value.data() + size_t(tap) * din * dout;
                T* xg = xn->grad.data() + size_t(base + rr) * din;
                for (int c = 0; c < din; ++c) {
                  const T* kr = kv + size_t(c) * dout;
                  T acc = 0;
                  for (int j = 0; j < dout; ++j) acc += kr[j] * dy[j];
                  xg[c] += acc;
                }
              }
            }
          }
        }
      });
  for (int i = 0; i < W; ++i) {
    int base = i + skip;
    for (int r = 0; r < n; ++r) {
      T* y = out.data().data() + size_t(i) * n * dout + size_t(r) * dout;
      for (int j = 0; j < dout; ++j) y[j] = bn->value[j];
      for (int tap = 0; tap < k; ++tap) {
        int rr = r + tap - half;
        if (rr < 0 || rr >= n) continue;
        const T* xv = xn->value.data() + size_t(base + rr) * din;
        const T* kv = kn->value.data() + size_t(tap) * din * dout;
        for (int c = 0; c < din; ++c) {
          T xi = xv[c];
          const T* kr = kv + size_t(c) * dout;
          for (int j = 0; j < dout; ++j) y[j] += xi * kr[j];
        }
      }
    }
  }
  return out;
}

/// Inference-only fused value path: E_flat[r] = sum_i a_i * conv-row r of
/// window i, computed as convolutions of attention-weighted row sums.
template <typename T>
std::vector<T> weighted_value_rows(const T* x, int Tt, int din, const T* kernel,
                                   const T* bias, int dout, int k,
                                   const T* weights, int W, int skip, int n) {
  int half = k / 2;
  std::vector<T> out(size_t(n) * dout);
  std::vector<double> wsum(din);
  for (int r = 0; r < n; ++r) {
    T* y = out.data() + size_t(r) * dout;
    for (int j = 0; j < dout; ++j) y[j] = bias[j];
    for (int tap = 0; tap < k; ++tap) {
      int rr = r + tap - half;
      if (rr < 0 || rr >= n) continue;
      std::fill(wsum.begin(), wsum.end(), 0.0);
      for (int i = 0; i < W; ++i) {
        const T* xv = x + size_t(i + skip + rr) * din;
        double w = double(weights[i]);
        for (int c = 0; c < din; ++c) wsum[c] += w * double(xv[c]);
      }
      const T* kv = kernel + size_t(tap) * din * dout;
      for (int c = 0; c < din; ++c) {
        T xi = T(wsum[c]);
        const T* kr = kv + size_t(c) * dout;
        for (int j = 0; j < dout; ++j) y[j] += xi * kr[j];
      }
    }
  }
  return out;
}

}  // namespace detail

/// Window geometry: key windows must fit, with their n-frame values, before
/// the m-frame query window.
inline int history_window_count(int T, int m, int n) {
  return T - 2 * m - n + 1;
}

inline bool sufficient_history(int T, int m, int n) {
  return history_window_count(T, m, n) >= 1;
}

template <typename T>
struct LongHistoryOutput {
  Tensor<T> e_hist;   // n x d
  Tensor<T> weights;  // 1 x W attention over window starts
};

template <typename T>
class LongHistoryEncoder {
 public:
  static constexpr int kKernelWidth = 3;

  LongHistoryEncoder() = default;

  LongHistoryEncoder(ModelParams<T>& params, const std::string& path,
                     int input_dim, int d, Rng& rng)
      : d_(d) {
    q_conv_ = Conv1d<T>::create(params, path + ".cnn_q", kKernelWidth, input_dim, d, rng);
    k_conv_ = Conv1d<T>::create(params, path + ".cnn_k", kKernelWidth, input_dim, d, rng);
    v_conv_ = Conv1d<T>::create(params, path + ".cnn_v", kKernelWidth, input_dim, d, rng);
  }

  int dim() const { return d_; }

  /// X is a (T x input_dim) tensor holding the motion history including the
  /// ongoing query window as its last m rows.
  LongHistoryOutput<T> encode(const Tensor<T>& X, int m, int n) const {
    const int T_frames = X.rows();
    const int W = history_window_count(T_frames, m, n);
    if (W < 1)
      throw Error(ErrorCode::kInsufficientHistory,
                  "history length " + std::to_string(T_frames) +
                      " < 2m+n = " + std::to_string(2 * m + n));
    Tensor<T> query_win = rows(X, T_frames - m, m);
    Tensor<T> q = avg_pool_time(q_conv_.forward(query_win));        // 1 x d
    Tensor<T> K = detail::conv_windows_pooled(X, k_conv_.K, k_conv_.b,
                                              kKernelWidth, m, W);  // W x d
    Tensor<T> logits = clamp(matmul(q, K, false, true), T(-50), T(50));  // 1 x W
    Tensor<T> a = softmax_rows(logits);

    LongHistoryOutput<T> out;
    out.weights = a;
    if (grad_mode() && (X.requires_grad() || v_conv_.K.requires_grad())) {
      Tensor<T> V = detail::conv_windows_flat(X, v_conv_.K, v_conv_.b,
                                              kKernelWidth, m, n, W);  // W x n*d
      out.e_hist = reshape(matmul(a, V), n, d_);
    } else {
      std::vector<T> flat = detail::weighted_value_rows(
          X.data().data(), T_frames, X.cols(), v_conv_.K.data().data(),
          v_conv_.b.data().data(), d_, kKernelWidth, a.data().data(), W, m, n);
      out.e_hist = Tensor<T>::from_data(n, d_, std::move(flat));
    }
    return out;
  }

  const Conv1d<T>& q_conv() const { return q_conv_; }
  const Conv1d<T>& k_conv() const { return k_conv_; }
  const Conv1d<T>& v_conv() const { return v_conv_; }

 private:
  int d_ = 0;
  Conv1d<T> q_conv_, k_conv_, v_conv_;
};

/// Uniformly random same-style clip and offset for the noisy-history
/// substitution during training. Caller supplies the RNG stream.
template <typename Dataset>
MotionClip sample_history_slice(const Dataset& dataset, int style, int length,
                                Rng& rng) {
  std::vector<int> eligible;
  for (int i = 0; i < dataset.size(); ++i) {
    const MotionClip& c = dataset.motion(i);
    if (c.style == style && c.T >= length) eligible.push_back(i);
  }
  if (eligible.empty())
    throw Error(ErrorCode::kNoEligibleClip,
                "no clip of style " + std::to_string(style) +
                    " with T >= " + std::to_string(length));
  const MotionClip& clip = dataset.motion(eligible[rng.below(eligible.size())]);
  int offset = int(rng.below(uint64_t(clip.T - length + 1)));
  return clip.slice(offset, length);
}

}  // namespace rdance
