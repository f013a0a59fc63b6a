#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "rdance/errors.hpp"
#include "rdance/motion.hpp"

namespace rdance {

struct BeatTrack {
  std::vector<uint8_t> flags;  // 1 = beat frame
  int fps = 20;

  int T() const { return int(flags.size()); }

  std::vector<int> frame_indices() const {
    std::vector<int> out;
    for (int t = 0; t < T(); ++t)
      if (flags[t]) out.push_back(t);
    return out;
  }

  std::vector<double> times_seconds() const {
    std::vector<double> out;
    for (int t = 0; t < T(); ++t)
      if (flags[t]) out.push_back(double(t) / fps);
    return out;
  }
};

/// Frames remaining until the next beat, capped at `cap`; `cap` doubles as
/// the no-future-beat sentinel.
struct TTASequence {
  std::vector<int> values;
  int cap = 40;
};

// ============================================================================
// Detection
// ============================================================================

/// Prominent strict local minima of a scalar series. A frame qualifies when
/// s[t] < both neighbors and s[t] <= neighborhood mean - prominence *
/// neighborhood std (window +-half_window). Earlier beats win min_separation
/// ties. Exposed separately so it can be driven with constructed series.
inline std::vector<uint8_t> detect_speed_minima(const std::vector<float>& s,
                                                int min_separation,
                                                float prominence,
                                                int half_window) {
  const int T = int(s.size());
  std::vector<uint8_t> flags(T, 0);
  int last = -1 - min_separation;
  for (int t = 1; t + 1 < T; ++t) {
    if (!(s[t] < s[t - 1] && s[t] < s[t + 1])) continue;
    int lo = std::max(0, t - half_window);
    int hi = std::min(T - 1, t + half_window);
    double mean = 0;
    for (int i = lo; i <= hi; ++i) mean += s[i];
    int n = hi - lo + 1;
    mean /= n;
    double var = 0;
    for (int i = lo; i <= hi; ++i) var += (s[i] - mean) * (s[i] - mean);
    double sd = std::sqrt(var / n);
    if (double(s[t]) > mean - double(prominence) * sd) continue;
    if (t - last < min_separation) continue;
    flags[t] = 1;
    last = t;
  }
  return flags;
}

/// Motion beats: prominent local minima of aggregate joint speed, a
/// pause/direction-change proxy for minima of joint deceleration.
inline BeatTrack motion_beats(const MotionClip& clip, int min_separation = 3,
                              float prominence = 0.5f) {
  if (clip.T < 3) throw Error(ErrorCode::kTooShort, "motion_beats needs T >= 3");
  std::vector<float> s = aggregate_joint_speed(clip);
  BeatTrack bt;
  bt.fps = clip.fps;
  bt.flags = detect_speed_minima(s, min_separation, prominence,
                                 std::max(1, clip.fps / 2));
  return bt;
}

/// Music onsets from a positive spectral-difference novelty function:
/// n_t = sum_d max(0, f[t][d] - f[t-1][d]), peaks above mean + k * std.
inline BeatTrack music_onsets(const MusicFeatureTrack& track,
                              int min_separation = 3, float k = 1.0f) {
  const int T = track.T;
  if (T < 2) throw Error(ErrorCode::kTooShort, "music_onsets needs T >= 2");
  std::vector<double> novelty(T, 0.0);
  for (int t = 1; t < T; ++t) {
    double acc = 0;
    const float* prev = track.row(t - 1);
    const float* cur = track.row(t);
    for (int d = 0; d < MusicFeatureTrack::kDim; ++d)
      acc += std::max(0.0, double(cur[d]) - prev[d]);
    novelty[t] = acc;
  }
  double mean = 0;
  for (double v : novelty) mean += v;
  mean /= T;
  double var = 0;
  for (double v : novelty) var += (v - mean) * (v - mean);
  double thresh = mean + double(k) * std::sqrt(var / T);

  BeatTrack bt;
  bt.fps = track.fps;
  bt.flags.assign(T, 0);
  int last = -1 - min_separation;
  for (int t = 1; t < T; ++t) {
    double left = novelty[t - 1];
    double right = t + 1 < T ? novelty[t + 1] : -1.0;
    if (!(novelty[t] > left && novelty[t] > right)) continue;
    if (novelty[t] <= thresh) continue;
    if (t - last < min_separation) continue;
    bt.flags[t] = 1;
    last = t;
  }
  return bt;
}

// ============================================================================
// Time-to-arrival encoding
// ============================================================================

inline TTASequence tta_encode(const BeatTrack& beats, int cap) {
  TTASequence tta;
  tta.cap = cap;
  const int T = beats.T();
  tta.values.assign(T, cap);
  int next = -1;
  for (int t = T - 1; t >= 0; --t) {
    if (beats.flags[t]) next = t;
    tta.values[t] = next < 0 ? cap : std::min(cap, next - t);
  }
  return tta;
}

/// Recall of annotated beats within +-tolerance frames (test/eval helper).
inline double beat_recall(const std::vector<uint8_t>& annotation,
                          const BeatTrack& detected, int tolerance = 1) {
  int total = 0, hit = 0;
  const int T = int(annotation.size());
  for (int t = 0; t < T; ++t) {
    if (!annotation[t]) continue;
    ++total;
    for (int dt = -tolerance; dt <= tolerance; ++dt) {
      int u = t + dt;
      if (u >= 0 && u < detected.T() && detected.flags[u]) {
        ++hit;
        break;
      }
    }
  }
  return total == 0 ? 1.0 : double(hit) / total;
}

}  // namespace rdance
