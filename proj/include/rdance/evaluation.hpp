#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "rdance/beats.hpp"
#include "rdance/errors.hpp"
#include "rdance/motion.hpp"

namespace rdance {

// ============================================================================
// Motion feature extractors.
//
// Self-contained stand-ins for the usual kinetic/geometric feature
// toolchains: kinetic = per-joint speed/acceleration statistics in the root
// frame plus root statistics; geometric = time-averaged boolean relational
// features over a fixed 16-entry list.
// ============================================================================

enum class FeatureKind { kKinetic, kGeometric };

struct FeatureVec {
  FeatureKind kind;
  std::vector<float> values;
};

/// 3*J + 3 dims: per-joint mean speed, mean acceleration magnitude, speed
/// variance (root-relative positions), then the same three for the root.
inline FeatureVec kinetic_features(const MotionClip& clip) {
  if (clip.T < 3)
    throw Error(ErrorCode::kTooShort, "kinetic features need T >= 3");
  const int J = clip.J;
  const int T = clip.T;
  std::vector<float> pos = fk_positions_all(clip);

  // root-relative joint positions; root kept separately
  std::vector<double> rel(size_t(T) * J * 3);
  std::vector<double> root(size_t(T) * 3);
  for (int t = 0; t < T; ++t) {
    const float* p = pos.data() + size_t(t) * J * 3;
    for (int c = 0; c < 3; ++c) root[size_t(t) * 3 + c] = p[c];
    for (int j = 0; j < J; ++j)
      for (int c = 0; c < 3; ++c)
        rel[(size_t(t) * J + j) * 3 + c] = double(p[j * 3 + c]) - p[c];
  }

  auto series_stats = [T](auto&& point_at, double* mean_speed,
                          double* mean_accel, double* speed_var) {
    std::vector<std::array<double, 3>> pts(T);
    for (int t = 0; t < T; ++t) pts[t] = point_at(t);
    std::vector<double> speed(T - 1);
    for (int t = 1; t < T; ++t) {
      double dx = pts[t][0] - pts[t - 1][0];
      double dy = pts[t][1] - pts[t - 1][1];
      double dz = pts[t][2] - pts[t - 1][2];
      speed[t - 1] = std::sqrt(dx * dx + dy * dy + dz * dz);
    }
    double ms = 0;
    for (double s : speed) ms += s;
    ms /= speed.size();
    double var = 0;
    for (double s : speed) var += (s - ms) * (s - ms);
    var /= speed.size();
    double ma = 0;
    for (int t = 1; t + 1 < T; ++t) {
      double ax = pts[t + 1][0] - 2 * pts[t][0] + pts[t - 1][0];
      double ay = pts[t + 1][1] - 2 * pts[t][1] + pts[t - 1][1];
      double az = pts[t + 1][2] - 2 * pts[t][2] + pts[t - 1][2];
      ma += std::sqrt(ax * ax + ay * ay + az * az);
    }
    ma /= (T - 2);
    *mean_speed = ms;
    *mean_accel = ma;
    *speed_var = var;
  };

  FeatureVec fv;
  fv.kind = FeatureKind::kKinetic;
  fv.values.resize(size_t(3) * J + 3);
  for (int j = 0; j < J; ++j) {
    double ms, ma, var;
    series_stats(
        [&](int t) {
          return std::array<double, 3>{rel[(size_t(t) * J + j) * 3],
                                       rel[(size_t(t) * J + j) * 3 + 1],
                                       rel[(size_t(t) * J + j) * 3 + 2]};
        },
        &ms, &ma, &var);
    fv.values[j] = float(ms);
    fv.values[J + j] = float(ma);
    fv.values[2 * J + j] = float(var);
  }
  double ms, ma, var;
  series_stats(
      [&](int t) {
        return std::array<double, 3>{root[size_t(t) * 3], root[size_t(t) * 3 + 1],
                                     root[size_t(t) * 3 + 2]};
      },
      &ms, &ma, &var);
  fv.values[3 * J] = float(ms);
  fv.values[3 * J + 1] = float(ma);
  fv.values[3 * J + 2] = float(var);
  return fv;
}

/// The fixed relational feature list (indices are part of the contract).
inline const std::vector<std::string>& geometric_feature_names() {
  static const std::vector<std::string> names = {
      "left_hand_above_head",    "right_hand_above_head",
      "both_hands_above_head",   "hands_together",
      "feet_crossed",            "arms_spread",
      "left_hand_above_shoulder", "right_hand_above_shoulder",
      "left_foot_raised",        "right_foot_raised",
      "spine_bent",              "root_low",
      "left_hand_forward",       "right_hand_forward",
      "wide_stance",             "hands_at_hip_level",
  };
  return names;
}

inline constexpr int kGeometricFeatureCount = 16;

/// Per-frame boolean relational predicates, time-averaged into [0, 1].
inline FeatureVec geometric_features(const MotionClip& clip) {
  if (clip.T < 1) throw Error(ErrorCode::kTooShort, "empty clip");
  constexpr int kHead = 15, kLWrist = 20, kRWrist = 21, kLShoulder = 16,
                kRShoulder = 17, kLFoot = 10, kRFoot = 11, kLHip = 1, kRHip = 2;
  FeatureVec fv;
  fv.kind = FeatureKind::kGeometric;
  fv.values.assign(kGeometricFeatureCount, 0.f);

  std::vector<float> pos(size_t(clip.J) * 3);
  for (int t = 0; t < clip.T; ++t) {
    fk_positions(clip, t, pos.data());
    auto P = [&](int j, int c) { return double(pos[size_t(j) * 3 + c]); };
    auto dist = [&](int a, int b) {
      double dx = P(a, 0) - P(b, 0), dy = P(a, 1) - P(b, 1), dz = P(a, 2) - P(b, 2);
      return std::sqrt(dx * dx + dy * dy + dz * dz);
    };
    double shoulder_w = dist(kLShoulder, kRShoulder);
    double root_y = P(0, 1);
    bool f[kGeometricFeatureCount];
    f[0] = P(kLWrist, 1) > P(kHead, 1);
    f[1] = P(kRWrist, 1) > P(kHead, 1);
    f[2] = f[0] && f[1];
    f[3] = dist(kLWrist, kRWrist) < shoulder_w;
    f[4] = P(kLFoot, 0) < P(kRFoot, 0);
    f[5] = dist(kLWrist, kRWrist) > 1.8 * shoulder_w;
    f[6] = P(kLWrist, 1) > P(kLShoulder, 1);
    f[7] = P(kRWrist, 1) > P(kRShoulder, 1);
    f[8] = P(kLFoot, 1) - P(kRFoot, 1) > 0.25;
    f[9] = P(kRFoot, 1) - P(kLFoot, 1) > 0.25;
    f[10] = P(kHead, 1) - root_y < 4.6;
    f[11] = root_y < 0.8;
    f[12] = P(kLWrist, 2) - P(0, 2) > 1.2;
    f[13] = P(kRWrist, 2) - P(0, 2) > 1.2;
    f[14] = std::abs(P(kLFoot, 0) - P(kRFoot, 0)) > 1.3 * dist(kLHip, kRHip);
    f[15] = std::abs(P(kLWrist, 1) - root_y) < 0.5 && std::abs(P(kRWrist, 1) - root_y) < 0.5;
    for (int i = 0; i < kGeometricFeatureCount; ++i)
      fv.values[i] += f[i] ? 1.f : 0.f;
  }
  for (auto& v : fv.values) v /= float(clip.T);
  return fv;
}

/// Kinetic + geometric concatenation (classifier input).
inline std::vector<float> combined_features(const MotionClip& clip) {
  FeatureVec k = kinetic_features(clip);
  FeatureVec g = geometric_features(clip);
  std::vector<float> out = k.values;
  out.insert(out.end(), g.values.begin(), g.values.end());
  return out;
}

// ============================================================================
// Frechet distance
// ============================================================================

namespace eval_detail {

/// Cyclic Jacobi eigensolver for symmetric matrices (values only).
inline std::vector<double> symmetric_eigenvalues(std::vector<double> A, int n) {
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += A[size_t(i) * n + j] * A[size_t(i) * n + j];
    if (off < 1e-22 * n * n) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double apq = A[size_t(p) * n + q];
        if (std::abs(apq) < 1e-300) continue;
        double app = A[size_t(p) * n + p], aqq = A[size_t(q) * n + q];
        double theta = (aqq - app) / (2 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1));
        double c = 1.0 / std::sqrt(t * t + 1);
        double s = t * c;
        for (int k = 0; k < n; ++k) {
          double akp = A[size_t(k) * n + p], akq = A[size_t(k) * n + q];
          A[size_t(k) * n + p] = c * akp - s * akq;
          A[size_t(k) * n + q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          double apk = A[size_t(p) * n + k], aqk = A[size_t(q) * n + k];
          A[size_t(p) * n + k] = c * apk - s * aqk;
          A[size_t(q) * n + k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (int i = 0; i < n; ++i) ev[i] = A[size_t(i) * n + i];
  return ev;
}

/// Eigen-decomposition with vectors (for the matrix square root).
inline void symmetric_eigen(std::vector<double> A, int n,
                            std::vector<double>& values,
                            std::vector<double>& vectors) {
  vectors.assign(size_t(n) * n, 0.0);
  for (int i = 0; i < n; ++i) vectors[size_t(i) * n + i] = 1.0;
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += A[size_t(i) * n + j] * A[size_t(i) * n + j];
    if (off < 1e-22 * n * n) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double apq = A[size_t(p) * n + q];
        if (std::abs(apq) < 1e-300) continue;
        double app = A[size_t(p) * n + p], aqq = A[size_t(q) * n + q];
        double theta = (aqq - app) / (2 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1));
        double c = 1.0 / std::sqrt(t * t + 1);
        double s = t * c;
        for (int k = 0; k < n; ++k) {
          double akp = A[size_t(k) * n + p], akq = A[size_t(k) * n + q];
          A[size_t(k) * n + p] = c * akp - s * akq;
          A[size_t(k) * n + q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          double apk = A[size_t(p) * n + k], aqk = A[size_t(q) * n + k];
          A[size_t(p) * n + k] = c * apk - s * aqk;
          A[size_t(q) * n + k] = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          double vkp = vectors[size_t(k) * n + p], vkq = vectors[size_t(k) * n + q];
          vectors[size_t(k) * n + p] = c * vkp - s * vkq;
          vectors[size_t(k) * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  values.resize(n);
  for (int i = 0; i < n; ++i) values[i] = A[size_t(i) * n + i];
}

struct Gaussian {
  std::vector<double> mean;
  std::vector<double> cov;  // d x d
  int dim = 0;
};

inline Gaussian fit_gaussian(const std::vector<std::vector<float>>& samples,
                             double ridge) {
  Gaussian g;
  g.dim = int(samples[0].size());
  const int d = g.dim;
  const int n = int(samples.size());
  g.mean.assign(d, 0.0);
  for (const auto& s : samples)
    for (int i = 0; i < d; ++i) g.mean[i] += s[i];
  for (int i = 0; i < d; ++i) g.mean[i] /= n;
  g.cov.assign(size_t(d) * d, 0.0);
  if (n > 1) {
    for (const auto& s : samples)
      for (int i = 0; i < d; ++i) {
        double di = double(s[i]) - g.mean[i];
        for (int j = i; j < d; ++j)
          g.cov[size_t(i) * d + j] += di * (double(s[j]) - g.mean[j]);
      }
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        double v = g.cov[size_t(i) * d + j] / (n - 1);
        g.cov[size_t(i) * d + j] = v;
        g.cov[size_t(j) * d + i] = v;
      }
  }
  for (int i = 0; i < d; ++i) g.cov[size_t(i) * d + i] += ridge;
  return g;
}

inline std::vector<double> mat_mul(const std::vector<double>& A,
                                   const std::vector<double>& B, int n) {
  std::vector<double> C(size_t(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      double a = A[size_t(i) * n + k];
      for (int j = 0; j < n; ++j) C[size_t(i) * n + j] += a * B[size_t(k) * n + j];
    }
  return C;
}

inline std::vector<double> sqrtm_psd(const std::vector<double>& A, int n) {
  std::vector<double> values, vectors;
  symmetric_eigen(A, n, values, vectors);
  std::vector<double> S(size_t(n) * n, 0.0);
  for (int k = 0; k < n; ++k) {
    double sv = std::sqrt(std::max(0.0, values[k]));
    for (int i = 0; i < n; ++i) {
      double vik = vectors[size_t(i) * n + k] * sv;
      for (int j = 0; j < n; ++j) S[size_t(i) * n + j] += vik * vectors[size_t(j) * n + k];
    }
  }
  return S;
}

}  // namespace eval_detail

/// ||mu_A - mu_B||^2 + Tr(S_A + S_B - 2 (S_A S_B)^{1/2}) with sample
/// covariances ridged by 1e-6 I and the square root taken by symmetric
/// eigendecomposition of sqrt(S_A) S_B sqrt(S_A).
inline double frechet_distance(const std::vector<std::vector<float>>& A,
                               const std::vector<std::vector<float>>& B,
                               double ridge = 1e-6) {
  if (A.empty() || B.empty())
    throw Error(ErrorCode::kTooFew, "frechet_distance needs non-empty sets");
  if (A[0].size() != B[0].size())
    throw Error(ErrorCode::kShapeMismatch, "frechet_distance: dim mismatch");
  using namespace eval_detail;
  Gaussian ga = fit_gaussian(A, ridge);
  Gaussian gb = fit_gaussian(B, ridge);
  const int d = ga.dim;

  double mean_term = 0;
  for (int i = 0; i < d; ++i) {
    double diff = ga.mean[i] - gb.mean[i];
    mean_term += diff * diff;
  }
  double tr_a = 0, tr_b = 0;
  for (int i = 0; i < d; ++i) {
    tr_a += ga.cov[size_t(i) * d + i];
    tr_b += gb.cov[size_t(i) * d + i];
  }

  std::vector<double> sa = sqrtm_psd(ga.cov, d);
  std::vector<double> inner = mat_mul(mat_mul(sa, gb.cov, d), sa, d);
  // symmetrize against round-off before the eigensolve
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      double v = 0.5 * (inner[size_t(i) * d + j] + inner[size_t(j) * d + i]);
      inner[size_t(i) * d + j] = v;
      inner[size_t(j) * d + i] = v;
    }
  std::vector<double> ev = symmetric_eigenvalues(std::move(inner), d);
  double tr_sqrt = 0;
  double scale = std::max(1.0, std::max(tr_a, tr_b));
  for (double v : ev) {
    if (!std::isfinite(v) || v < -1e-6 * scale)
      throw Error(ErrorCode::kDegenerateCovariance,
                  "negative/non-finite eigenvalue in covariance product");
    tr_sqrt += std::sqrt(std::max(0.0, v));
  }
  double fid = mean_term + tr_a + tr_b - 2.0 * tr_sqrt;
  if (!std::isfinite(fid))
    throw Error(ErrorCode::kDegenerateCovariance, "non-finite FID");
  return fid;
}

/// Mean Euclidean distance over all unordered pairs.
inline double diversity(const std::vector<std::vector<float>>& F) {
  if (F.size() < 2) throw Error(ErrorCode::kTooFew, "diversity needs >= 2 vectors");
  const int d = int(F[0].size());
  double acc = 0;
  int64_t pairs = 0;
  for (size_t i = 0; i < F.size(); ++i)
    for (size_t j = i + 1; j < F.size(); ++j) {
      double dist2 = 0;
      for (int c = 0; c < d; ++c) {
        double diff = double(F[i][c]) - F[j][c];
        dist2 += diff * diff;
      }
      acc += std::sqrt(dist2);
      ++pairs;
    }
  return acc / double(pairs);
}

// ============================================================================
// Beat alignment
// ============================================================================

/// (1/m) sum_i exp(-min_j (t_i - t_j)^2 / (2 sigma^2)), times in seconds.
/// Nearest music beat found by binary search over the sorted set.
inline double beat_align(const std::vector<double>& kinetic_beats,
                         std::vector<double> music_beats, double sigma = 1.0) {
  if (kinetic_beats.empty() || music_beats.empty())
    throw Error(ErrorCode::kEmptyBeatSet, "beat_align needs non-empty beat sets");
  std::sort(music_beats.begin(), music_beats.end());
  double acc = 0;
  for (double t : kinetic_beats) {
    auto it = std::lower_bound(music_beats.begin(), music_beats.end(), t);
    double best = std::numeric_limits<double>::infinity();
    if (it != music_beats.end()) best = std::min(best, std::abs(*it - t));
    if (it != music_beats.begin()) best = std::min(best, std::abs(*(it - 1) - t));
    acc += std::exp(-(best * best) / (2.0 * sigma * sigma));
  }
  return acc / double(kinetic_beats.size());
}

// ============================================================================
// Style classifier (multinomial logistic regression on combined features)
// ============================================================================

struct StyleClassifier {
  int classes = 0;
  int dim = 0;
  std::vector<double> W;     // classes x (dim + 1), last column bias
  std::vector<double> mean;  // feature standardization
  std::vector<double> stdev;

  std::vector<double> logits_of(const std::vector<float>& feat) const {
    std::vector<double> z(classes, 0.0);
    for (int c = 0; c < classes; ++c) {
      double acc = W[size_t(c) * (dim + 1) + dim];
      for (int i = 0; i < dim; ++i)
        acc += W[size_t(c) * (dim + 1) + i] * ((double(feat[i]) - mean[i]) / stdev[i]);
      z[c] = acc;
    }
    return z;
  }

  int predict(const std::vector<float>& feat) const {
    std::vector<double> z = logits_of(feat);
    return int(std::max_element(z.begin(), z.end()) - z.begin());
  }
};

/// Full-batch gradient training with L2 regularization; deterministic
/// (zero init, fixed iteration count).
inline StyleClassifier train_style_classifier(
    const std::vector<std::vector<float>>& features,
    const std::vector<int>& labels, int classes, int iterations = 400,
    double lr = 0.5, double l2 = 1e-3) {
  if (features.empty() || features.size() != labels.size())
    throw Error(ErrorCode::kTooFewClips, "bad classifier training set");
  if (classes < 2) throw Error(ErrorCode::kTooFewClips, "need >= 2 styles");
  std::vector<int> per_class(classes, 0);
  for (int l : labels) {
    if (l < 0 || l >= classes)
      throw Error(ErrorCode::kTooFewClips, "label outside class range");
    ++per_class[l];
  }
  for (int c = 0; c < classes; ++c)
    if (per_class[c] < 4)
      throw Error(ErrorCode::kTooFewClips,
                  "style " + std::to_string(c) + " has < 4 clips");

  StyleClassifier clf;
  clf.classes = classes;
  clf.dim = int(features[0].size());
  const int d = clf.dim;
  const int n = int(features.size());
  clf.mean.assign(d, 0.0);
  clf.stdev.assign(d, 0.0);
  for (const auto& f : features)
    for (int i = 0; i < d; ++i) clf.mean[i] += f[i];
  for (int i = 0; i < d; ++i) clf.mean[i] /= n;
  for (const auto& f : features)
    for (int i = 0; i < d; ++i) {
      double diff = double(f[i]) - clf.mean[i];
      clf.stdev[i] += diff * diff;
    }
  for (int i = 0; i < d; ++i)
    clf.stdev[i] = std::max(1e-8, std::sqrt(clf.stdev[i] / n));

  std::vector<std::vector<double>> X(n, std::vector<double>(d));
  for (int r = 0; r < n; ++r)
    for (int i = 0; i < d; ++i)
      X[r][i] = (double(features[r][i]) - clf.mean[i]) / clf.stdev[i];

  clf.W.assign(size_t(classes) * (d + 1), 0.0);
  std::vector<double> grad(clf.W.size());
  std::vector<double> z(classes), p(classes);
  for (int it = 0; it < iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (int r = 0; r < n; ++r) {
      double mx = -1e300;
      for (int c = 0; c < classes; ++c) {
        double acc = clf.W[size_t(c) * (d + 1) + d];
        for (int i = 0; i < d; ++i) acc += clf.W[size_t(c) * (d + 1) + i] * X[r][i];
        z[c] = acc;
        mx = std::max(mx, acc);
      }
      double sum = 0;
      for (int c = 0; c < classes; ++c) {
        p[c] = std::exp(z[c] - mx);
        sum += p[c];
      }
      for (int c = 0; c < classes; ++c) {
        double err = p[c] / sum - (labels[r] == c ? 1.0 : 0.0);
        for (int i = 0; i < d; ++i) grad[size_t(c) * (d + 1) + i] += err * X[r][i];
        grad[size_t(c) * (d + 1) + d] += err;
      }
    }
    for (size_t i = 0; i < clf.W.size(); ++i)
      clf.W[i] -= lr * (grad[i] / n + l2 * clf.W[i]);
  }
  return clf;
}

inline double style_accuracy(const StyleClassifier& clf,
                             const std::vector<std::vector<float>>& features,
                             const std::vector<int>& labels) {
  if (features.empty() || features.size() != labels.size())
    throw Error(ErrorCode::kTooFewClips, "bad accuracy set");
  int correct = 0;
  for (size_t i = 0; i < features.size(); ++i)
    if (clf.predict(features[i]) == labels[i]) ++correct;
  return double(correct) / double(features.size());
}

// ============================================================================
// Long-term FID curve
// ============================================================================

struct CurvePoint {
  double t_seconds = 0;
  double fid_k = 0;
};

/// One anchor every anchor_s seconds; at each anchor a window_s-second
/// window centered on it is cut from every generated clip and scored with
/// kinetic FID against windows pooled from the reference set. Only fully
/// contained windows are kept (an anchor whose window would cross a clip
/// boundary is dropped).
inline std::vector<CurvePoint> longterm_fid_curve(
    const std::vector<MotionClip>& generated,
    const std::vector<MotionClip>& reference, double anchor_s = 3.0,
    double window_s = 1.0) {
  if (generated.empty() || reference.empty())
    throw Error(ErrorCode::kTooFew, "need generated and reference clips");
  const int fps = generated[0].fps;
  const int w = std::max(3, int(std::lround(window_s * fps)));

  int min_T = generated[0].T;
  for (const auto& c : generated) min_T = std::min(min_T, c.T);
  if (min_T < w)
    throw Error(ErrorCode::kTooShort, "generated clips shorter than the window");

  // Reference windows, hop = half window.
  std::vector<std::vector<float>> ref_feats;
  for (const auto& c : reference)
    for (int start = 0; start + w <= c.T; start += std::max(1, w / 2))
      ref_feats.push_back(kinetic_features(c.slice(start, w)).values);
  if (ref_feats.empty())
    throw Error(ErrorCode::kTooShort, "reference clips shorter than the window");

  std::vector<CurvePoint> curve;
  for (int k = 1;; ++k) {
    int center = int(std::lround(k * anchor_s * fps));
    int start = center - w / 2;
    if (start < 0) continue;
    if (start + w > min_T) break;
    std::vector<std::vector<float>> gen_feats;
    for (const auto& c : generated)
      gen_feats.push_back(kinetic_features(c.slice(start, w)).values);
    CurvePoint pt;
    pt.t_seconds = k * anchor_s;
    pt.fid_k = frechet_distance(gen_feats, ref_feats);
    curve.push_back(pt);
  }
  return curve;
}

}  // namespace rdance
