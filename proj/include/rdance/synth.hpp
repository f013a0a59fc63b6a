#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rdance/errors.hpp"
#include "rdance/motion.hpp"
#include "rdance/rng.hpp"

namespace rdance {

// ============================================================================
// Procedural dance/music generator.
//
// Motion is built on a warped beat-phase clock Phi(t): within each beat
// period the clock advances with rate (1 - cos u)(1 + 0.3 sin u), u = 2*pi*p,
// which is zero exactly at beat instants and asymmetric around them. Every
// joint angle is a sinusoid of Phi, so aggregate joint speed has one strict
// local minimum per beat, at the beat. Music gets per-style spectral means
// plus additive energy pulses at the same instants.
// ============================================================================

namespace synth_detail {

constexpr double kTwoPi = 6.283185307179586;

/// Integral of (1 - cos v)(1 + 0.3 sin v) over [0, u], normalized so one
/// beat period advances Phi by exactly 1.
inline double warp(double u) {
  double s = std::sin(u), c = std::cos(u);
  return (u - s + 0.3 * (1.0 - c) - 0.15 * s * s) / kTwoPi;
}

/// Beat-locked clock: increases by 1 per beat, derivative 0 at each beat.
inline double phase_clock(double t_seconds, double period_s) {
  double beats = t_seconds / period_s;
  double b = std::floor(beats);
  double p = beats - b;
  return b + warp(kTwoPi * p);
}

/// Rodrigues rotation about a unit axis, row-major 3x3.
inline void axis_angle(const float axis[3], double angle, float* R) {
  double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  double x = axis[0], y = axis[1], z = axis[2];
  R[0] = float(t * x * x + c);
  R[1] = float(t * x * y - s * z);
  R[2] = float(t * x * z + s * y);
  R[3] = float(t * x * y + s * z);
  R[4] = float(t * y * y + c);
  R[5] = float(t * y * z - s * x);
  R[6] = float(t * x * z - s * y);
  R[7] = float(t * y * z + s * x);
  R[8] = float(t * z * z + c);
}

struct JointWave {
  float axis[3];
  double amp;
  double freq;   // cycles per beat
  double phase;
  double base;
};

struct StyleMotif {
  std::vector<JointWave> waves;  // per joint
  double root_sway_x, root_sway_z, root_bob;
  double root_phase;
  // music
  float mfcc_mean[20];
  float chroma_profile[12];
};

/// Deterministic per-style tables; independent of clip seed so that all
/// clips of a style share one motif family.
inline StyleMotif style_motif(int style) {
  StyleMotif m;
  Rng rng(hash_combine(0x5374796c65ULL, uint64_t(style)));
  const double freqs[4] = {0.25, 0.5, 1.0, 2.0};
  m.waves.resize(Skeleton::kJoints);
  for (int j = 0; j < Skeleton::kJoints; ++j) {
    JointWave& w = m.waves[j];
    double ax = rng.uniform(-1, 1), ay = rng.uniform(-1, 1), az = rng.uniform(-1, 1);
    double n = std::sqrt(ax * ax + ay * ay + az * az);
    if (n < 1e-6) { ax = 1; n = 1; }
    w.axis[0] = float(ax / n);
    w.axis[1] = float(ay / n);
    w.axis[2] = float(az / n);
    bool emphasized = rng.uniform() < 0.45;
    w.amp = (0.15 + 0.85 * rng.uniform()) * (emphasized ? 1.0 : 0.25);
    w.freq = freqs[rng.below(4)];
    w.phase = rng.uniform(0, kTwoPi);
    w.base = rng.uniform(-0.35, 0.35);
  }
  m.root_sway_x = rng.uniform(0.15, 0.45);
  m.root_sway_z = rng.uniform(0.15, 0.45);
  m.root_bob = rng.uniform(0.02, 0.05);
  m.root_phase = rng.uniform(0, kTwoPi);
  for (int i = 0; i < 20; ++i) m.mfcc_mean[i] = float(rng.uniform(0.2, 1.2));
  for (int i = 0; i < 12; ++i) m.chroma_profile[i] = 0.05f;
  for (int k = 0; k < 3; ++k)
    m.chroma_profile[rng.below(12)] = float(rng.uniform(0.6, 1.0));
  return m;
}

}  // namespace synth_detail

/// Deterministic style-distinct dance clip plus matching music feature track
/// with ground-truth beat annotation. Aggregate joint speed has its local
/// minima exactly at the annotated beat frames.
inline std::pair<MotionClip, MusicFeatureTrack> synth_dance(int style,
                                                            double duration_s,
                                                            double bpm,
                                                            uint64_t seed,
                                                            int fps = 20) {
  using namespace synth_detail;
  if (style < 0 || style >= 256)
    throw Error(ErrorCode::kBadStyle, "style id " + std::to_string(style));
  if (bpm < 60.0 || bpm > 180.0)
    throw Error(ErrorCode::kBadStyle, "bpm outside [60, 180]");
  const int T = std::max(1, int(std::lround(duration_s * fps)));
  const double period_s = 60.0 / bpm;

  StyleMotif motif = style_motif(style);
  Rng jitter(hash3(0xC11Fu, uint64_t(style), seed));
  std::vector<double> amp(Skeleton::kJoints), base(Skeleton::kJoints);
  for (int j = 0; j < Skeleton::kJoints; ++j) {
    amp[j] = motif.waves[j].amp * jitter.uniform(0.85, 1.15);
    base[j] = motif.waves[j].base + 0.05 * jitter.normal();
  }
  double root_phase = motif.root_phase;
  double root_x0 = 0.2 * jitter.normal();
  double root_z0 = 0.2 * jitter.normal();

  MotionClip clip;
  clip.T = T;
  clip.fps = fps;
  clip.style = style;
  clip.clip_id = "synth_s" + std::to_string(style) + "_" + std::to_string(seed);
  clip.frames.resize(size_t(T) * clip.dim());
  for (int t = 0; t < T; ++t) {
    double phi = phase_clock(double(t) / fps, period_s);
    float* row = clip.row(t);
    for (int j = 0; j < Skeleton::kJoints; ++j) {
      const JointWave& w = motif.waves[j];
      double angle = base[j] + amp[j] * std::sin(kTwoPi * w.freq * phi + w.phase);
      axis_angle(w.axis, angle, row + j * 9);
    }
    float* root = row + Skeleton::kJoints * 9;
    root[0] = float(root_x0 + motif.root_sway_x * std::sin(kTwoPi * phi / 8.0 + root_phase));
    root[1] = float(0.95 + motif.root_bob * std::sin(kTwoPi * phi + root_phase));
    root[2] = float(root_z0 + motif.root_sway_z * std::cos(kTwoPi * phi / 8.0 + root_phase));
  }

  // Beat annotation: nearest frame to each beat instant.
  std::vector<uint8_t> beats(T, 0);
  for (int b = 0;; ++b) {
    int frame = int(std::lround(b * period_s * fps));
    if (frame >= T) break;
    beats[frame] = 1;
  }

  MusicFeatureTrack music;
  music.T = T;
  music.fps = fps;
  music.style = style;
  music.clip_id = clip.clip_id;
  music.frames.resize(size_t(T) * MusicFeatureTrack::kDim);
  // Slow per-dimension modulation so novelty away from pulses stays small.
  double mod_freq[MusicFeatureTrack::kDim], mod_phase[MusicFeatureTrack::kDim];
  for (int d = 0; d < MusicFeatureTrack::kDim; ++d) {
    mod_freq[d] = jitter.uniform(0.05, 0.3);
    mod_phase[d] = jitter.uniform(0, kTwoPi);
  }
  const float pulse_profile[6] = {2.5f, 2.0f, 1.5f, 1.0f, 0.8f, 0.5f};
  for (int t = 0; t < T; ++t) {
    float* row = music.row(t);
    double ts = double(t) / fps;
    double pulse = beats[t] ? 1.0 : (t > 0 && beats[t - 1] ? 0.4 : 0.0);
    for (int d = 0; d < 20; ++d) {
      double v = motif.mfcc_mean[d] * (1.0 + 0.18 * std::sin(kTwoPi * mod_freq[d] * ts + mod_phase[d]));
      if (d < 6) v += pulse * pulse_profile[d];
      row[d] = float(v);
    }
    for (int d = 0; d < 12; ++d) {
      double v = motif.chroma_profile[d] * (1.0 + 0.12 * std::sin(kTwoPi * mod_freq[20 + d] * ts + mod_phase[20 + d]));
      v += 0.25 * pulse * motif.chroma_profile[d];
      row[20 + d] = float(v);
    }
  }
  music.beat_annotation = std::move(beats);
  return {std::move(clip), std::move(music)};
}

}  // namespace rdance
