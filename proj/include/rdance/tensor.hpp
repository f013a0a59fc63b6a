#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "rdance/errors.hpp"
#include "rdance/rng.hpp"

namespace rdance {

// ============================================================================
// Reverse-mode autodiff over dense 2-D tensors.
//
// Scalar type is a template parameter: training runs in float, gradient
// checking re-runs the same graphs in double. Tensors are matrices
// (rows x cols); scalars are 1x1, vectors are 1xN or Nx1 as noted per op.
// Graphs are built eagerly; backward closures pull the output gradient into
// the parents. Construction is single-threaded per graph.
// ============================================================================

/// Global switch: when false, ops do not record backward closures.
/// Inference paths (rollout, evaluation) disable it to skip tape overhead.
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

class NoGradGuard {
 public:
  NoGradGuard() : saved_(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = saved_; }

 private:
  bool saved_;
};

template <typename T>
struct TensorNode {
  std::vector<T> value;
  std::vector<T> grad;  // allocated lazily during backward
  int rows = 0;
  int cols = 0;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode<T>>> parents;
  std::function<void(TensorNode<T>&)> backward;

  int64_t numel() const { return int64_t(rows) * cols; }

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int rows, int cols, bool requires_grad = false) {
    Tensor t;
    t.n_ = std::make_shared<TensorNode<T>>();
    t.n_->rows = rows;
    t.n_->cols = cols;
    t.n_->value.assign(int64_t(rows) * cols, T(0));
    t.n_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from_data(int rows, int cols, std::vector<T> data,
                          bool requires_grad = false) {
    if (int64_t(rows) * cols != int64_t(data.size()))
      throw Error(ErrorCode::kShapeMismatch, "from_data size mismatch");
    Tensor t = zeros(rows, cols, requires_grad);
    t.n_->value = std::move(data);
    return t;
  }

  static Tensor scalar(T v) { return from_data(1, 1, {v}); }

  bool defined() const { return n_ != nullptr; }
  int rows() const { return n_->rows; }
  int cols() const { return n_->cols; }
  int64_t numel() const { return n_->numel(); }
  bool requires_grad() const { return n_->requires_grad; }

  std::vector<T>& data() { return n_->value; }
  const std::vector<T>& data() const { return n_->value; }
  std::vector<T>& grad() { return n_->grad; }

  T operator()(int r, int c) const { return n_->value[int64_t(r) * cols() + c]; }
  T& at(int r, int c) { return n_->value[int64_t(r) * cols() + c]; }

  T item() const {
    if (numel() != 1)
      throw Error(ErrorCode::kShapeMismatch, "item() on non-scalar tensor");
    return n_->value[0];
  }

  std::shared_ptr<TensorNode<T>> node() const { return n_; }

  /// Backward pass from a scalar output. Accumulates into leaf grads.
  void backward() {
    if (numel() != 1)
      throw Error(ErrorCode::kShapeMismatch, "backward() needs scalar output");
    // Topological order by DFS over parents.
    std::vector<TensorNode<T>*> order;
    std::unordered_set<TensorNode<T>*> seen;
    std::vector<std::pair<TensorNode<T>*, size_t>> stack;
    stack.push_back({n_.get(), 0});
    seen.insert(n_.get());
    while (!stack.empty()) {
      auto& [node, idx] = stack.back();
      if (idx < node->parents.size()) {
        TensorNode<T>* p = node->parents[idx].get();
        ++idx;
        if (p->requires_grad && !seen.count(p)) {
          seen.insert(p);
          stack.push_back({p, 0});
        }
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    n_->ensure_grad();
    n_->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      TensorNode<T>* node = *it;
      if (node->backward) node->backward(*node);
    }
  }

 private:
  std::shared_ptr<TensorNode<T>> n_;
};

namespace detail {

template <typename T>
inline Tensor<T> make_op(int rows, int cols,
                         std::vector<std::shared_ptr<TensorNode<T>>> parents,
                         std::function<void(TensorNode<T>&)> backward) {
  Tensor<T> out = Tensor<T>::zeros(rows, cols);
  if (grad_mode()) {
    bool any = false;
    for (auto& p : parents)
      if (p->requires_grad) any = true;
    if (any) {
      out.node()->requires_grad = true;
      out.node()->parents = std::move(parents);
      out.node()->backward = std::move(backward);
    }
  }
  return out;
}

template <typename T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                             const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorCode::kShapeMismatch, what);
}

}  // namespace detail

// ============================================================================
// Elementwise and arithmetic ops
// ============================================================================

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add: shapes differ");
  auto an = a.node(), bn = b.node();
  Tensor<T> out = detail::make_op<T>(
      a.rows(), a.cols(), {an, bn}, [an, bn](TensorNode<T>& o) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] += o.grad[i];
        }
      });
  for (int64_t i = 0; i < out.numel(); ++i)
    out.data()[i] = an->value[i] + bn->value[i];
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "sub: shapes differ");
  auto an = a.node(), bn = b.node();
  Tensor<T> out = detail::make_op<T>(
      a.rows(), a.cols(), {an, bn}, [an, bn](TensorNode<T>& o) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] -= o.grad[i];
        }
      });
  for (int64_t i = 0; i < out.numel(); ++i)
    out.data()[i] = an->value[i] - bn->value[i];
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul: shapes differ");
  auto an = a.node(), bn = b.node();
  Tensor<T> out = detail::make_op<T>(
      a.rows(), a.cols(), {an, bn}, [an, bn](TensorNode<T>& o) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (size_t i = 0; i < o.grad.size(); ++i)
            an->grad[i] += o.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (size_t i = 0; i < o.grad.size(); ++i)
            bn->grad[i] += o.grad[i] * an->value[i];
        }
      });
  for (int64_t i = 0; i < out.numel(); ++i)
    out.data()[i] = an->value[i] * bn->value[i];
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  auto an = a.node();
  Tensor<T> out = detail::make_op<T>(
      a.rows(), a.cols(), {an}, [an, c](TensorNode<T>& o) {
        an->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += c * o.grad[i];
      });
  for (int64_t i = 0; i < out.numel(); ++i) out.data()[i] = c * an->value[i];
  return out;
}

template <typename T>
Tensor<T> add_const(const Tensor<T>& a, T c) {
  auto an = a.node();
  Tensor<T> out = detail::make_op<T>(
      a.rows(), a.cols(), {an}, [an](TensorNode<T>& o) {
        an->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
      });
  for (int64_t i = 0; i < out.numel(); ++i) out.data()[i] = an->value[i] + c;
  return out;
}

/// Broadcast-add a 1 x cols row vector onto every row.
template <typename T>
Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw Error(ErrorCode::kShapeMismatch, "add_row: bad row vector");
  auto an = a.node(), rn = row.node();
  int R = a.rows(), C = a.cols();
  Tensor<T> out = detail::make_op<T>(
      R, C, {an, rn}, [an, rn, R, C](TensorNode<T>& o) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
        }
        if (rn->requires_grad) {
          rn->ensure_grad();
          for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) rn->grad[c] += o.grad[int64_t(r) * C + c];
        }
      });
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c)
      out.data()[int64_t(r) * C + c] = an->value[int64_t(r) * C + c] + rn->value[c];
  return out;
}

/// Broadcast-multiply every row by a 1 x cols row vector.
template <typename T>
Tensor<T> mul_row(const Tensor<T>& a, const Tensor<T>& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw Error(ErrorCode::kShapeMismatch, "mul_row: bad row vector");
  auto an = a.node(), rn = row.node();
  int R = a.rows(), C = a.cols();
  Tensor<T> out = detail::make_op<T>(
      R, C, {an, rn}, [an, rn, R, C](TensorNode<T>& o) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c)
              an->grad[int64_t(r) * C + c] += o.grad[int64_t(r) * C + c] * rn->value[c];
        }
        if (rn->requires_grad) {
          rn->ensure_grad();
          for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c)
              rn->grad[c] += o.grad[int64_t(r) * C + c] * an->value[int64_t(r) * C + c];
        }
      });
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c)
      out.data()[int64_t(r) * C + c] = an->value[int64_t(r) * C + c] * rn->value[c];
  return out;
}

/// Broadcast-add a learned 1x1 scalar to every element.
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, const Tensor<T>& s) {
  if (s.numel() != 1) throw Error(ErrorCode::kShapeMismatch, "add_scalar: s not 1x1");
  auto an = a.node(), sn = s.node();
  Tensor<T> out = detail::make_op<T>(
      a.rows(), a.cols(), {an, sn}, [an, sn](TensorNode<T>& o) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
        }
        if (sn->requires_grad) {
          sn->ensure_grad();
          for (size_t i = 0; i < o.grad.size(); ++i) sn->grad[0] += o.grad[i];
        }
      });
  for (int64_t i = 0; i < out.numel(); ++i)
    out.data()[i] = an->value[i] + sn->value[0];
  return out;
}

/// Multiply row r of a by col[r] (col is rows x 1).
template <typename T>
Tensor<T> mul_col(const Tensor<T>& a, const Tensor<T>& col) {
  if (col.cols() != 1 || col.rows() != a.rows())
    throw Error(ErrorCode::kShapeMismatch, "mul_col: bad column vector");
  auto an = a.node(), cn = col.node();
  int R = a.rows(), C = a.cols();
  Tensor<T> out = detail::make_op<T>(
      R, C, {an, cn}, [an, cn, R, C](TensorNode<T>& o) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c)
              an->grad[int64_t(r) * C + c] += o.grad[int64_t(r) * C + c] * cn->value[r];
        }
        if (cn->requires_grad) {
          cn->ensure_grad();
          for (int r = 0; r < R; ++r) {
            T acc = 0;
            for (int c = 0; c < C; ++c)
              acc += o.grad[int64_t(r) * C + c] * an->value[int64_t(r) * C + c];
            cn->grad[r] += acc;
          }
        }
      });
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c)
      out.data()[int64_t(r) * C + c] = an->value[int64_t(r) * C + c] * cn->value[r];
  return out;
}

template <typename T>
Tensor<T> div_elem(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "div: shapes differ");
  auto an = a.node(), bn = b.node();
  Tensor<T> out = detail::make_op<T>(
      a.rows(), a.cols(), {an, bn}, [an, bn](TensorNode<T>& o) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (size_t i = 0; i < o.grad.size(); ++i)
            an->grad[i] += o.grad[i] / bn->value[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (size_t i = 0; i < o.grad.size(); ++i)
            bn->grad[i] -= o.grad[i] * an->value[i] / (bn->value[i] * bn->value[i]);
        }
      });
  for (int64_t i = 0; i < out.numel(); ++i)
    out.data()[i] = an->value[i] / bn->value[i];
  return out;
}

// ============================================================================
// Activations
// ============================================================================

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  auto an = a.node();
  Tensor<T> out = detail::make_op<T>(
      a.rows(), a.cols(), {an}, [an](TensorNode<T>& o) {
        an->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i)
          if (an->value[i] > T(0)) an->grad[i] += o.grad[i];
      });
  for (int64_t i = 0; i < out.numel(); ++i)
    out.data()[i] = an->value[i] > T(0) ? an->value[i] : T(0);
  return out;
}

/// Exact gelu: x * Phi(x) with Phi the standard normal CDF.
template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  auto an = a.node();
  constexpr T kInvSqrt2 = T(0.7071067811865475);
  constexpr T kInvSqrt2Pi = T(0.3989422804014327);
  Tensor<T> out = detail::make_op<T>(
      a.rows(), a.cols(), {an}, [an](TensorNode<T>& o) {
        an->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i) {
          T x = an->value[i];
          T cdf = T(0.5) * (T(1) + std::erf(x * kInvSqrt2));
          T pdf = kInvSqrt2Pi * std::exp(T(-0.5) * x * x);
          an->grad[i] += o.grad[i] * (cdf + x * pdf);
        }
      });
  for (int64_t i = 0; i < out.numel(); ++i) {
    T x = an->value[i];
    out.data()[i] = x * T(0.5) * (T(1) + std::erf(x * kInvSqrt2));
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  auto an = a.node();
  Tensor<T> out = detail::make_op<T>(
      a.rows(), a.cols(), {an}, [an](TensorNode<T>& o) {
        an->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i) {
          T s = o.value[i];
          an->grad[i] += o.grad[i] * s * (T(1) - s);
        }
      });
  for (int64_t i = 0; i < out.numel(); ++i) {
    T x = an->value[i];
    out.data()[i] = x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                              : std::exp(x) / (T(1) + std::exp(x));
  }
  return out;
}

/// Clamp to [lo, hi]; gradient passes through strictly inside the interval.
template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  auto an = a.node();
  Tensor<T> out = detail::make_op<T>(
      a.rows(), a.cols(), {an, }, [an, lo, hi](TensorNode<T>& o) {
        an->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i)
          if (an->value[i] > lo && an->value[i] < hi) an->grad[i] += o.grad[i];
      });
  for (int64_t i = 0; i < out.numel(); ++i)
    out.data()[i] = std::min(hi, std::max(lo, an->value[i]));
  return out;
}

template <typename T>
Tensor<T> clamp_min(const Tensor<T>& a, T lo) {
  return clamp(a, lo, std::numeric_limits<T>::max());
}

// ============================================================================
// Matrix multiply
// ============================================================================

namespace detail {

/// C(MxN) += A(MxK) * B(KxN), optionally transposing A or B in place.
/// Plain ikj loops; inputs are small enough that this vectorizes fine at -O3.
template <typename T>
void gemm_acc(const T* A, const T* B, T* C, int M, int K, int N, bool tA,
              bool tB) {
  if (!tA && !tB) {
    for (int i = 0; i < M; ++i) {
      const T* a = A + int64_t(i) * K;
      T* c = C + int64_t(i) * N;
      for (int k = 0; k < K; ++k) {
        T av = a[k];
        const T* b = B + int64_t(k) * N;
        for (int j = 0; j < N; ++j) c[j] += av * b[j];
      }
    }
  } else if (!tA && tB) {
    for (int i = 0; i < M; ++i) {
      const T* a = A + int64_t(i) * K;
      T* c = C + int64_t(i) * N;
      for (int j = 0; j < N; ++j) {
        const T* b = B + int64_t(j) * K;
        T acc = 0;
        for (int k = 0; k < K; ++k) acc += a[k] * b[k];
        c[j] += acc;
      }
    }
  } else if (tA && !tB) {
    for (int k = 0; k < K; ++k) {
      const T* a = A + int64_t(k) * M;
      const T* b = B + int64_t(k) * N;
      for (int i = 0; i < M; ++i) {
        T av = a[i];
        T* c = C + int64_t(i) * N;
        for (int j = 0; j < N; ++j) c[j] += av * b[j];
      }
    }
  } else {
    for (int i = 0; i < M; ++i) {
      T* c = C + int64_t(i) * N;
      for (int j = 0; j < N; ++j) {
        const T* b = B + int64_t(j) * K;
        T acc = 0;
        for (int k = 0; k < K; ++k) acc += A[int64_t(k) * M + i] * b[k];
        c[j] += acc;
      }
    }
  }
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool trans_a = false,
                 bool trans_b = false) {
  int M = trans_a ? a.cols() : a.rows();
  int K = trans_a ? a.rows() : a.cols();
  int Kb = trans_b ? b.cols() : b.rows();
  int N = trans_b ? b.rows() : b.cols();
  if (K != Kb) throw Error(ErrorCode::kShapeMismatch, "matmul: inner dims");
  auto an = a.node(), bn = b.node();
  Tensor<T> out = detail::make_op<T>(
      M, N, {an, bn}, [an, bn, M, K, N, trans_a, trans_b](TensorNode<T>& o) {
        // dA = dC * B^T (adjusted for transposes); dB = A^T * dC.
        if (an->requires_grad) {
          an->ensure_grad();
          if (!trans_a)
            detail::gemm_acc(o.grad.data(), bn->value.data(), an->grad.data(),
                             M, N, K, false, !trans_b);
          else
            detail::gemm_acc(bn->value.data(), o.grad.data(), an->grad.data(),
                             K, N, M, trans_b, true);
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          if (!trans_b)
            detail::gemm_acc(an->value.data(), o.grad.data(), bn->grad.data(),
                             K, M, N, !trans_a, false);
          else
            detail::gemm_acc(o.grad.data(), an->value.data(), bn->grad.data(),
                             N, M, K, true, trans_a);
        }
      });
  detail::gemm_acc(an->value.data(), bn->value.data(), out.data().data(), M, K,
                   N, trans_a, trans_b);
  return out;
}

// ============================================================================
// Reductions, shapes, rows
// ============================================================================

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  auto an = a.node();
  Tensor<T> out = detail::make_op<T>(1, 1, {an}, [an](TensorNode<T>& o) {
    an->ensure_grad();
    for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += o.grad[0];
  });
  T acc = 0;
  for (auto v : an->value) acc += v;
  out.data()[0] = acc;
  return out;
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
  return scale(sum_all(a), T(1) / T(a.numel()));
}

/// Column means over time: (T x d) -> (1 x d).
template <typename T>
Tensor<T> avg_pool_time(const Tensor<T>& a) {
  auto an = a.node();
  int R = a.rows(), C = a.cols();
  Tensor<T> out = detail::make_op<T>(1, C, {an}, [an, R, C](TensorNode<T>& o) {
    an->ensure_grad();
    T inv = T(1) / T(R);
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c) an->grad[int64_t(r) * C + c] += o.grad[c] * inv;
  });
  for (int c = 0; c < C; ++c) {
    T acc = 0;
    for (int r = 0; r < R; ++r) acc += an->value[int64_t(r) * C + c];
    out.data()[c] = acc / T(R);
  }
  return out;
}

/// Contiguous row slice [start, start+len).
template <typename T>
Tensor<T> rows(const Tensor<T>& a, int start, int len) {
  if (start < 0 || len < 0 || start + len > a.rows())
    throw Error(ErrorCode::kShapeMismatch, "rows: slice out of range");
  auto an = a.node();
  int C = a.cols();
  Tensor<T> out = detail::make_op<T>(
      len, C, {an}, [an, start, C](TensorNode<T>& o) {
        an->ensure_grad();
        for (int r = 0; r < o.rows; ++r)
          for (int c = 0; c < C; ++c)
            an->grad[int64_t(start + r) * C + c] += o.grad[int64_t(r) * C + c];
      });
  std::copy(an->value.begin() + int64_t(start) * C,
            an->value.begin() + int64_t(start + len) * C, out.data().begin());
  return out;
}

/// Contiguous column slice [start, start+len).
template <typename T>
Tensor<T> cols(const Tensor<T>& a, int start, int len) {
  if (start < 0 || len < 0 || start + len > a.cols())
    throw Error(ErrorCode::kShapeMismatch, "cols: slice out of range");
  auto an = a.node();
  int R = a.rows(), C = a.cols();
  Tensor<T> out = detail::make_op<T>(
      R, len, {an}, [an, start, R, C, len](TensorNode<T>& o) {
        an->ensure_grad();
        for (int r = 0; r < R; ++r)
          for (int c = 0; c < len; ++c)
            an->grad[int64_t(r) * C + start + c] += o.grad[int64_t(r) * len + c];
      });
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < len; ++c)
      out.data()[int64_t(r) * len + c] = an->value[int64_t(r) * C + start + c];
  return out;
}

template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.cols())
    throw Error(ErrorCode::kShapeMismatch, "concat_rows: col mismatch");
  auto an = a.node(), bn = b.node();
  int C = a.cols(), Ra = a.rows(), Rb = b.rows();
  Tensor<T> out = detail::make_op<T>(
      Ra + Rb, C, {an, bn}, [an, bn, Ra, Rb, C](TensorNode<T>& o) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (int64_t i = 0; i < int64_t(Ra) * C; ++i) an->grad[i] += o.grad[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (int64_t i = 0; i < int64_t(Rb) * C; ++i)
            bn->grad[i] += o.grad[int64_t(Ra) * C + i];
        }
      });
  std::copy(an->value.begin(), an->value.end(), out.data().begin());
  std::copy(bn->value.begin(), bn->value.end(),
            out.data().begin() + int64_t(Ra) * C);
  return out;
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw Error(ErrorCode::kShapeMismatch, "concat_cols: empty");
  int R = parts[0].rows();
  int Ctot = 0;
  std::vector<std::shared_ptr<TensorNode<T>>> ps;
  for (auto& p : parts) {
    if (p.rows() != R)
      throw Error(ErrorCode::kShapeMismatch, "concat_cols: row mismatch");
    Ctot += p.cols();
    ps.push_back(p.node());
  }
  auto parents = ps;
  Tensor<T> out = detail::make_op<T>(
      R, Ctot, std::move(parents), [ps, R, Ctot](TensorNode<T>& o) {
        int off = 0;
        for (auto& p : ps) {
          int pc = p->cols;
          if (p->requires_grad) {
            p->ensure_grad();
            for (int r = 0; r < R; ++r)
              for (int c = 0; c < pc; ++c)
                p->grad[int64_t(r) * pc + c] += o.grad[int64_t(r) * Ctot + off + c];
          }
          off += pc;
        }
      });
  int off = 0;
  for (auto& p : ps) {
    int pc = p->cols;
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < pc; ++c)
        out.data()[int64_t(r) * Ctot + off + c] = p->value[int64_t(r) * pc + c];
    off += pc;
  }
  return out;
}

/// Reinterpret as (rows x cols) without moving data.
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, int rows_, int cols_) {
  if (int64_t(rows_) * cols_ != a.numel())
    throw Error(ErrorCode::kShapeMismatch, "reshape: numel mismatch");
  auto an = a.node();
  Tensor<T> out = detail::make_op<T>(
      rows_, cols_, {an}, [an](TensorNode<T>& o) {
        an->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
      });
  out.data() = an->value;
  return out;
}

/// Gather rows of a table by integer index; backward scatter-adds.
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, const std::vector<int>& idx) {
  auto tn = table.node();
  int C = table.cols(), V = table.rows();
  for (int i : idx)
    if (i < 0 || i >= V)
      throw Error(ErrorCode::kShapeMismatch, "embedding: index out of range");
  Tensor<T> out = detail::make_op<T>(
      int(idx.size()), C, {tn}, [tn, idx, C](TensorNode<T>& o) {
        tn->ensure_grad();
        for (size_t r = 0; r < idx.size(); ++r)
          for (int c = 0; c < C; ++c)
            tn->grad[int64_t(idx[r]) * C + c] += o.grad[int64_t(r) * C + c];
      });
  for (size_t r = 0; r < idx.size(); ++r)
    for (int c = 0; c < C; ++c)
      out.data()[int64_t(r) * C + c] = tn->value[int64_t(idx[r]) * C + c];
  return out;
}

// ============================================================================
// Softmax / normalization / norms
// ============================================================================

/// Row-wise softmax (numerically stabilized by max subtraction).
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
  auto an = a.node();
  int R = a.rows(), C = a.cols();
  Tensor<T> out = detail::make_op<T>(
      R, C, {an}, [an, R, C](TensorNode<T>& o) {
        an->ensure_grad();
        for (int r = 0; r < R; ++r) {
          const T* y = o.value.data() + int64_t(r) * C;
          const T* dy = o.grad.data() + int64_t(r) * C;
          T dot = 0;
          for (int c = 0; c < C; ++c) dot += y[c] * dy[c];
          T* dx = an->grad.data() + int64_t(r) * C;
          for (int c = 0; c < C; ++c) dx[c] += y[c] * (dy[c] - dot);
        }
      });
  for (int r = 0; r < R; ++r) {
    const T* x = an->value.data() + int64_t(r) * C;
    T* y = out.data().data() + int64_t(r) * C;
    T mx = x[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, x[c]);
    T sum = 0;
    for (int c = 0; c < C; ++c) {
      y[c] = std::exp(x[c] - mx);
      sum += y[c];
    }
    T inv = T(1) / sum;
    for (int c = 0; c < C; ++c) y[c] *= inv;
  }
  return out;
}

/// Per-row (x - mean) / sqrt(var + eps), population variance over the row.
template <typename T>
Tensor<T> normalize_rows(const Tensor<T>& a, T eps) {
  auto an = a.node();
  int R = a.rows(), C = a.cols();
  Tensor<T> out = detail::make_op<T>(
      R, C, {an}, [an, R, C, eps](TensorNode<T>& o) {
        an->ensure_grad();
        for (int r = 0; r < R; ++r) {
          const T* x = an->value.data() + int64_t(r) * C;
          const T* y = o.value.data() + int64_t(r) * C;
          const T* dy = o.grad.data() + int64_t(r) * C;
          T mean = 0, var = 0;
          for (int c = 0; c < C; ++c) mean += x[c];
          mean /= T(C);
          for (int c = 0; c < C; ++c) var += (x[c] - mean) * (x[c] - mean);
          var /= T(C);
          T inv_std = T(1) / std::sqrt(var + eps);
          T mean_dy = 0, mean_dyy = 0;
          for (int c = 0; c < C; ++c) {
            mean_dy += dy[c];
            mean_dyy += dy[c] * y[c];
          }
          mean_dy /= T(C);
          mean_dyy /= T(C);
          T* dx = an->grad.data() + int64_t(r) * C;
          for (int c = 0; c < C; ++c)
            dx[c] += inv_std * (dy[c] - mean_dy - y[c] * mean_dyy);
        }
      });
  for (int r = 0; r < R; ++r) {
    const T* x = an->value.data() + int64_t(r) * C;
    T* y = out.data().data() + int64_t(r) * C;
    T mean = 0, var = 0;
    for (int c = 0; c < C; ++c) mean += x[c];
    mean /= T(C);
    for (int c = 0; c < C; ++c) var += (x[c] - mean) * (x[c] - mean);
    var /= T(C);
    T inv_std = T(1) / std::sqrt(var + eps);
    for (int c = 0; c < C; ++c) y[c] = (x[c] - mean) * inv_std;
  }
  return out;
}

/// Per-row L2 norm: (R x C) -> (R x 1). Gradient guarded near zero norm.
template <typename T>
Tensor<T> rowwise_l2norm(const Tensor<T>& a) {
  auto an = a.node();
  int R = a.rows(), C = a.cols();
  Tensor<T> out = detail::make_op<T>(
      R, 1, {an}, [an, R, C](TensorNode<T>& o) {
        an->ensure_grad();
        for (int r = 0; r < R; ++r) {
          T norm = std::max(o.value[r], T(1e-12));
          const T* x = an->value.data() + int64_t(r) * C;
          T* dx = an->grad.data() + int64_t(r) * C;
          for (int c = 0; c < C; ++c) dx[c] += o.grad[r] * x[c] / norm;
        }
      });
  for (int r = 0; r < R; ++r) {
    const T* x = an->value.data() + int64_t(r) * C;
    T acc = 0;
    for (int c = 0; c < C; ++c) acc += x[c] * x[c];
    out.data()[r] = std::sqrt(acc);
  }
  return out;
}

/// Sum over rows of the per-row L2 norm (the paper-style sequence L2 loss).
template <typename T>
Tensor<T> sum_rowwise_l2norm(const Tensor<T>& a) {
  return sum_all(rowwise_l2norm(a));
}

/// Frobenius/vector L2 norm of the whole tensor as a 1x1 scalar.
template <typename T>
Tensor<T> l2norm(const Tensor<T>& a) {
  return rowwise_l2norm(reshape(a, 1, int(a.numel())));
}

// ============================================================================
// Convolution (1-D temporal, zero 'same' padding) and dropout
// ============================================================================

/// x: (T x d_in), kernel: (k*d_in x d_out) laid out [tap][in][out], bias 1 x d_out.
/// Temporal cross-correlation with zero padding; k must be odd.
template <typename T>
Tensor<T> conv1d_same(const Tensor<T>& x, const Tensor<T>& kernel,
                      const Tensor<T>& bias, int k) {
  int Tt = x.rows(), din = x.cols();
  if (k < 1 || k % 2 == 0)
    throw Error(ErrorCode::kShapeMismatch, "conv1d: kernel width must be odd");
  if (kernel.rows() != k * din)
    throw Error(ErrorCode::kShapeMismatch, "conv1d: kernel/input dim mismatch");
  int dout = kernel.cols();
  if (bias.rows() != 1 || bias.cols() != dout)
    throw Error(ErrorCode::kShapeMismatch, "conv1d: bias shape");
  auto xn = x.node(), kn = kernel.node(), bn = bias.node();
  int half = k / 2;
  Tensor<T> out = detail::make_op<T>(
      Tt, dout, {xn, kn, bn}, [xn, kn, bn, Tt, din, dout, k, half](TensorNode<T>& o) {
        for (int t = 0; t < Tt; ++t) {
          const T* dy = o.grad.data() + int64_t(t) * dout;
          for (int tap = 0; tap < k; ++tap) {
            int src = t + tap - half;
            if (src < 0 || src >= Tt) continue;
            const T* xv = xn->value.data() + int64_t(src) * din;
            const T* kv = kn->value.data() + int64_t(tap) * din * dout;
            if (kn->requires_grad) {
              kn->ensure_grad();
              T* kg = kn->grad.data() + int64_t(tap) * din * dout;
              for (int i = 0; i < din; ++i) {
                T xi = xv[i];
                T* kgr = kg + int64_t(i) * dout;
                for (int j = 0; j < dout; ++j) kgr[j] += xi * dy[j];
              }
            }
            if (xn->requires_grad) {
              xn->ensure_grad();
              T* xg = xn->grad.data() + int64_t(src) * din;
              for (int i = 0; i < din; ++i) {
                const T* kr = kv + int64_t(i) * dout;
                T acc = 0;
                for (int j = 0; j < dout; ++j) acc += kr[j] * dy[j];
                xg[i] += acc;
              }
            }
          }
          if (bn->requires_grad) {
            bn->ensure_grad();
            for (int j = 0; j < dout; ++j) bn->grad[j] += dy[j];
          }
        }
      });
  for (int t = 0; t < Tt; ++t) {
    T* y = out.data().data() + int64_t(t) * dout;
    for (int j = 0; j < dout; ++j) y[j] = bn->value[j];
    for (int tap = 0; tap < k; ++tap) {
      int src = t + tap - half;
      if (src < 0 || src >= Tt) continue;
      const T* xv = xn->value.data() + int64_t(src) * din;
      const T* kv = kn->value.data() + int64_t(tap) * din * dout;
      for (int i = 0; i < din; ++i) {
        T xi = xv[i];
        const T* kr = kv + int64_t(i) * dout;
        for (int j = 0; j < dout; ++j) y[j] += xi * kr[j];
      }
    }
  }
  return out;
}

/// Counter-based dropout context: (seed, step) fixed per training step,
/// layer counter advanced per call so masks are order-independent.
struct DropoutCtx {
  uint64_t seed = 0;
  int64_t step = 0;
  int layer = 0;
  bool training = false;
};

template <typename T>
Tensor<T> dropout(const Tensor<T>& a, T p, DropoutCtx* ctx) {
  if (!ctx || !ctx->training || p <= T(0)) return a;
  int layer = ctx->layer++;
  auto an = a.node();
  T scale_keep = T(1) / (T(1) - p);
  auto mask = std::make_shared<std::vector<uint8_t>>(a.numel());
  {
    uint64_t base = hash3(ctx->seed, uint64_t(ctx->step), uint64_t(layer));
    for (int64_t i = 0; i < a.numel(); ++i)
      (*mask)[i] = u01(splitmix64(base ^ uint64_t(i) * 0x9e3779b97f4a7c15ULL)) >= double(p);
  }
  Tensor<T> out = detail::make_op<T>(
      a.rows(), a.cols(), {an}, [an, mask, scale_keep](TensorNode<T>& o) {
        an->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i)
          if ((*mask)[i]) an->grad[i] += o.grad[i] * scale_keep;
      });
  for (int64_t i = 0; i < a.numel(); ++i)
    out.data()[i] = (*mask)[i] ? an->value[i] * scale_keep : T(0);
  return out;
}

// ============================================================================
// Validation
// ============================================================================

template <typename T>
bool all_finite(const Tensor<T>& a) {
  for (auto v : a.data())
    if (!std::isfinite(double(v))) return false;
  return true;
}

template <typename T>
void check_finite(const Tensor<T>& a, const char* what) {
  if (!all_finite(a)) throw Error(ErrorCode::kNonFiniteValue, what);
}

}  // namespace rdance
