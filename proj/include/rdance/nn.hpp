#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rdance/rng.hpp"
#include "rdance/tensor.hpp"

namespace rdance {

// ============================================================================
// Parameter store + Adam
// ============================================================================

/// Named learnable tensors plus per-parameter Adam moments. Iteration order
/// is the sorted parameter path, which makes checkpoints and training runs
/// reproducible byte-for-byte.
template <typename T>
class ModelParams {
 public:
  Tensor<T>& add(const std::string& path, Tensor<T> t) {
    t.node()->requires_grad = true;
    auto [it, fresh] = params_.emplace(path, std::move(t));
    if (!fresh) throw Error(ErrorCode::kShapeMismatch, "duplicate param " + path);
    return it->second;
  }

  Tensor<T>& get(const std::string& path) {
    auto it = params_.find(path);
    if (it == params_.end())
      throw Error(ErrorCode::kShapeMismatch, "unknown param " + path);
    return it->second;
  }

  bool contains(const std::string& path) const { return params_.count(path) > 0; }

  std::map<std::string, Tensor<T>>& all() { return params_; }
  const std::map<std::string, Tensor<T>>& all() const { return params_; }

  int64_t step() const { return step_; }
  void set_step(int64_t s) { step_ = s; }

  int64_t total_size() const {
    int64_t n = 0;
    for (auto& [k, v] : params_) n += v.numel();
    return n;
  }

  void zero_grad() {
    for (auto& [k, v] : params_) {
      auto& g = v.node()->grad;
      g.assign(v.numel(), T(0));
    }
  }

  /// Standard Adam with bias correction. Throws NonFiniteGrad before touching
  /// any parameter if a gradient is non-finite.
  void adam_step(T lr, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8)) {
    for (auto& [k, v] : params_) {
      auto& g = v.node()->grad;
      if (g.size() != v.data().size()) g.assign(v.numel(), T(0));
      for (auto gv : g)
        if (!std::isfinite(double(gv)))
          throw Error(ErrorCode::kNonFiniteGrad, "gradient of " + k);
    }
    ++step_;
    T bc1 = T(1) - std::pow(beta1, T(step_));
    T bc2 = T(1) - std::pow(beta2, T(step_));
    for (auto& [k, v] : params_) {
      auto& mom = moments_[k];
      if (mom.m.size() != v.data().size()) {
        mom.m.assign(v.numel(), T(0));
        mom.v.assign(v.numel(), T(0));
      }
      auto& g = v.node()->grad;
      auto& val = v.data();
      for (size_t i = 0; i < val.size(); ++i) {
        mom.m[i] = beta1 * mom.m[i] + (T(1) - beta1) * g[i];
        mom.v[i] = beta2 * mom.v[i] + (T(1) - beta2) * g[i] * g[i];
        T mhat = mom.m[i] / bc1;
        T vhat = mom.v[i] / bc2;
        val[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

  struct Moments {
    std::vector<T> m, v;
  };
  std::map<std::string, Moments>& moments() { return moments_; }

 private:
  std::map<std::string, Tensor<T>> params_;
  std::map<std::string, Moments> moments_;
  int64_t step_ = 0;
};

// ============================================================================
// Initializers
// ============================================================================

template <typename T>
Tensor<T> xavier_uniform(int fan_in, int fan_out, int rows_, int cols_, Rng& rng) {
  T bound = T(std::sqrt(6.0 / double(fan_in + fan_out)));
  Tensor<T> t = Tensor<T>::zeros(rows_, cols_);
  for (auto& v : t.data()) v = T(rng.uniform(-double(bound), double(bound)));
  return t;
}

// ============================================================================
// Layers
// ============================================================================

template <typename T>
struct Linear {
  Tensor<T> W;  // in x out
  Tensor<T> b;  // 1 x out

  static Linear create(ModelParams<T>& p, const std::string& path, int in,
                       int out, Rng& rng) {
    Linear l;
    l.W = p.add(path + ".W", xavier_uniform<T>(in, out, in, out, rng));
    l.b = p.add(path + ".b", Tensor<T>::zeros(1, out));
    return l;
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return add_row(matmul(x, W), b);
  }
};

template <typename T>
struct Conv1d {
  Tensor<T> K;  // (k*din) x dout
  Tensor<T> b;  // 1 x dout
  int k = 3;

  static Conv1d create(ModelParams<T>& p, const std::string& path, int k,
                       int din, int dout, Rng& rng) {
    Conv1d c;
    c.k = k;
    c.K = p.add(path + ".K", xavier_uniform<T>(k * din, dout, k * din, dout, rng));
    c.b = p.add(path + ".b", Tensor<T>::zeros(1, dout));
    return c;
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return conv1d_same(x, K, b, k);
  }
};

template <typename T>
struct LayerNormParams {
  Tensor<T> gamma;  // 1 x d
  Tensor<T> beta;   // 1 x d
  T eps = T(1e-5);

  static LayerNormParams create(ModelParams<T>& p, const std::string& path,
                                int d) {
    LayerNormParams ln;
    ln.gamma = p.add(path + ".gamma", Tensor<T>::zeros(1, d));
    for (auto& v : ln.gamma.data()) v = T(1);
    ln.beta = p.add(path + ".beta", Tensor<T>::zeros(1, d));
    return ln;
  }
};

/// (x - E[x]) / sqrt(Var[x] + eps) * gamma + beta over the last axis.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps) {
  return add_row(mul_row(normalize_rows(x, eps), gamma), beta);
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const LayerNormParams<T>& ln) {
  return layer_norm(x, ln.gamma, ln.beta, ln.eps);
}

/// Scaled dot-product multi-head self/cross attention. Projections carry
/// biases; attention weights get dropout in training mode.
template <typename T>
struct MultiHeadAttention {
  Linear<T> wq, wk, wv, wo;
  int heads = 1;
  int d_model = 0;
  T attn_dropout = T(0.1);

  static MultiHeadAttention create(ModelParams<T>& p, const std::string& path,
                                   int d_model, int heads, T dropout_p, Rng& rng) {
    if (d_model % heads != 0)
      throw Error(ErrorCode::kShapeMismatch, "d_model not divisible by heads");
    MultiHeadAttention m;
    m.heads = heads;
    m.d_model = d_model;
    m.attn_dropout = dropout_p;
    m.wq = Linear<T>::create(p, path + ".wq", d_model, d_model, rng);
    m.wk = Linear<T>::create(p, path + ".wk", d_model, d_model, rng);
    m.wv = Linear<T>::create(p, path + ".wv", d_model, d_model, rng);
    m.wo = Linear<T>::create(p, path + ".wo", d_model, d_model, rng);
    return m;
  }

  Tensor<T> forward(const Tensor<T>& q_in, const Tensor<T>& k_in,
                    const Tensor<T>& v_in, DropoutCtx* ctx) const {
    Tensor<T> Q = wq.forward(q_in);
    Tensor<T> K = wk.forward(k_in);
    Tensor<T> V = wv.forward(v_in);
    int dh = d_model / heads;
    T inv_sqrt = T(1) / T(std::sqrt(double(dh)));
    std::vector<Tensor<T>> head_out;
    head_out.reserve(heads);
    for (int h = 0; h < heads; ++h) {
      Tensor<T> Qh = cols(Q, h * dh, dh);
      Tensor<T> Kh = cols(K, h * dh, dh);
      Tensor<T> Vh = cols(V, h * dh, dh);
      Tensor<T> logits = scale(matmul(Qh, Kh, false, true), inv_sqrt);
      Tensor<T> attn = softmax_rows(logits);
      attn = dropout(attn, attn_dropout, ctx);
      head_out.push_back(matmul(attn, Vh));
    }
    return wo.forward(concat_cols(head_out));
  }

  /// Row-stochastic attention weights of one head (diagnostics/tests).
  Tensor<T> attention_weights(const Tensor<T>& x, int head) const {
    Tensor<T> Q = wq.forward(x);
    Tensor<T> K = wk.forward(x);
    int dh = d_model / heads;
    T inv_sqrt = T(1) / T(std::sqrt(double(dh)));
    Tensor<T> Qh = cols(Q, head * dh, dh);
    Tensor<T> Kh = cols(K, head * dh, dh);
    return softmax_rows(scale(matmul(Qh, Kh, false, true), inv_sqrt));
  }
};

/// Position-wise feed-forward: Linear(d->ffn), gelu, Linear(ffn->d).
template <typename T>
struct FeedForward {
  Linear<T> w1, w2;
  T out_dropout = T(0.1);

  static FeedForward create(ModelParams<T>& p, const std::string& path, int d,
                            int ffn, T dropout_p, Rng& rng) {
    FeedForward f;
    f.out_dropout = dropout_p;
    f.w1 = Linear<T>::create(p, path + ".w1", d, ffn, rng);
    f.w2 = Linear<T>::create(p, path + ".w2", ffn, d, rng);
    return f;
  }

  Tensor<T> forward(const Tensor<T>& x, DropoutCtx* ctx) const {
    return dropout(w2.forward(gelu(w1.forward(x))), out_dropout, ctx);
  }
};

/// Post-LN transformer encoder layer with plain layer norm (style encoders).
template <typename T>
struct EncoderLayer {
  MultiHeadAttention<T> attn;
  FeedForward<T> ffn;
  LayerNormParams<T> ln1, ln2;

  static EncoderLayer create(ModelParams<T>& p, const std::string& path, int d,
                             int heads, int ffn_dim, T dropout_p, Rng& rng) {
    EncoderLayer l;
    l.attn = MultiHeadAttention<T>::create(p, path + ".attn", d, heads, dropout_p, rng);
    l.ffn = FeedForward<T>::create(p, path + ".ffn", d, ffn_dim, dropout_p, rng);
    l.ln1 = LayerNormParams<T>::create(p, path + ".ln1", d);
    l.ln2 = LayerNormParams<T>::create(p, path + ".ln2", d);
    return l;
  }

  Tensor<T> forward(const Tensor<T>& x, DropoutCtx* ctx) const {
    Tensor<T> h = layer_norm(add(x, attn.forward(x, x, x, ctx)), ln1);
    return layer_norm(add(h, ffn.forward(h, ctx)), ln2);
  }
};

/// Sinusoidal position embedding rows [offset, offset+len).
template <typename T>
Tensor<T> sinusoidal_positions(int offset, int len, int d) {
  Tensor<T> pe = Tensor<T>::zeros(len, d);
  for (int r = 0; r < len; ++r) {
    double pos = offset + r;
    for (int i = 0; i < d; i += 2) {
      double freq = std::pow(10000.0, -double(i) / double(d));
      pe.at(r, i) = T(std::sin(pos * freq));
      if (i + 1 < d) pe.at(r, i + 1) = T(std::cos(pos * freq));
    }
  }
  return pe;
}

// ============================================================================
// Finite-difference gradient checker
// ============================================================================

/// Central differences against analytic gradients for a scalar-valued f of
/// the parameters. Returns the max relative error over all coordinates.
/// Run this with T = double.
template <typename T, typename F>
T grad_check(F&& f, ModelParams<T>& params, T h = T(1e-5)) {
  params.zero_grad();
  Tensor<T> loss = f(params);
  if (!all_finite(loss)) throw Error(ErrorCode::kNonFiniteValue, "grad_check loss");
  loss.backward();

  std::map<std::string, std::vector<T>> analytic;
  for (auto& [name, t] : params.all()) {
    auto g = t.node()->grad;
    if (g.size() != t.data().size()) g.assign(t.numel(), T(0));
    analytic[name] = g;
  }

  T max_rel = 0;
  NoGradGuard ng;
  for (auto& [name, t] : params.all()) {
    auto& val = t.data();
    for (size_t i = 0; i < val.size(); ++i) {
      T saved = val[i];
      val[i] = saved + h;
      T fp = f(params).item();
      val[i] = saved - h;
      T fm = f(params).item();
      val[i] = saved;
      if (!std::isfinite(double(fp)) || !std::isfinite(double(fm)))
        throw Error(ErrorCode::kNonFiniteValue, "grad_check probe at " + name);
      T numeric = (fp - fm) / (T(2) * h);
      T a = analytic[name][i];
      T denom = std::max(T(1e-8), std::abs(a) + std::abs(numeric));
      max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
  }
  return max_rel;
}

}  // namespace rdance
