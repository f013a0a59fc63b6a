#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "rdance/errors.hpp"

namespace rdance {

// ============================================================================
// Pose / music data model.
//
// A motion frame is J flattened 3x3 rotation matrices (row-major) followed by
// the 3-D root position: D = J*9+3. Music frames are 32-D (20 MFCC-like +
// 12 chroma-like). All types are immutable-by-convention after construction.
// ============================================================================

struct MotionClip {
  std::vector<float> frames;  // T x D, row-major
  int T = 0;
  int J = 24;
  int fps = 20;
  int style = 0;
  std::string clip_id;

  int dim() const { return J * 9 + 3; }
  const float* row(int t) const { return frames.data() + size_t(t) * dim(); }
  float* row(int t) { return frames.data() + size_t(t) * dim(); }
  const float* rotation(int t, int j) const { return row(t) + j * 9; }
  const float* root(int t) const { return row(t) + J * 9; }
  double duration_s() const { return double(T) / fps; }

  MotionClip slice(int start, int len) const {
    MotionClip c;
    c.T = len;
    c.J = J;
    c.fps = fps;
    c.style = style;
    c.clip_id = clip_id;
    c.frames.assign(frames.begin() + size_t(start) * dim(),
                    frames.begin() + size_t(start + len) * dim());
    return c;
  }
};

struct MusicFeatureTrack {
  static constexpr int kDim = 32;   // 0..19 MFCC-like, 20..31 chroma-like
  static constexpr int kMfcc = 20;

  std::vector<float> frames;  // T x 32
  int T = 0;
  int fps = 20;
  int style = 0;
  std::optional<std::vector<uint8_t>> beat_annotation;
  std::string clip_id;

  const float* row(int t) const { return frames.data() + size_t(t) * kDim; }
  float* row(int t) { return frames.data() + size_t(t) * kDim; }

  MusicFeatureTrack slice(int start, int len) const {
    MusicFeatureTrack m;
    m.T = len;
    m.fps = fps;
    m.style = style;
    m.clip_id = clip_id;
    m.frames.assign(frames.begin() + size_t(start) * kDim,
                    frames.begin() + size_t(start + len) * kDim);
    if (beat_annotation)
      m.beat_annotation.emplace(beat_annotation->begin() + start,
                                beat_annotation->begin() + start + len);
    return m;
  }
};

struct ContactTrack {
  std::vector<uint8_t> labels;  // T x 2: left, right
  int T = 0;

  uint8_t left(int t) const { return labels[size_t(t) * 2]; }
  uint8_t right(int t) const { return labels[size_t(t) * 2 + 1]; }
};

// ============================================================================
// Skeleton (shipped as data): 24-joint chain with unit bone lengths, the
// standard left/right pairing, and the two contact joints.
// ============================================================================

struct Skeleton {
  static constexpr int kJoints = 24;
  std::array<int, kJoints> parent;
  std::array<std::array<float, 3>, kJoints> offset;  // unit-length bone vectors
  std::array<int, kJoints> mirror;                   // index of mirrored joint
  std::array<int, 2> feet;                           // left, right contact joints
};

inline const Skeleton& skeleton24() {
  static const Skeleton sk = [] {
    Skeleton s{};
    // parent indices
    const int par[24] = {-1, 0, 0, 0, 1,  2,  3,  4,  5,  6,  7,  8,
                         9,  9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};
    // bone directions (x: left, y: up, z: forward), normalized below
    const float dir[24][3] = {
        {0, 0, 0},      {1, -0.2f, 0},  {-1, -0.2f, 0}, {0, 1, 0},
        {0, -1, 0},     {0, -1, 0},     {0, 1, 0},      {0, -1, 0},
        {0, -1, 0},     {0, 1, 0},      {0, -0.3f, 1},  {0, -0.3f, 1},
        {0, 1, 0},      {1, 0.3f, 0},   {-1, 0.3f, 0},  {0, 1, 0},
        {1, 0, 0},      {-1, 0, 0},     {1, 0, 0},      {-1, 0, 0},
        {1, 0, 0},      {-1, 0, 0},     {1, 0, 0},      {-1, 0, 0}};
    const int pairs[9][2] = {{1, 2},   {4, 5},   {7, 8},   {10, 11}, {13, 14},
                             {16, 17}, {18, 19}, {20, 21}, {22, 23}};
    for (int j = 0; j < 24; ++j) {
      s.parent[j] = par[j];
      float n = std::sqrt(dir[j][0] * dir[j][0] + dir[j][1] * dir[j][1] +
                          dir[j][2] * dir[j][2]);
      if (n == 0) n = 1;
      s.offset[j] = {dir[j][0] / n, dir[j][1] / n, dir[j][2] / n};
      s.mirror[j] = j;
    }
    for (auto& pr : pairs) {
      s.mirror[pr[0]] = pr[1];
      s.mirror[pr[1]] = pr[0];
    }
    s.feet = {10, 11};
    return s;
  }();
  return sk;
}

// ============================================================================
// Forward kinematics
// ============================================================================

namespace detail {

inline void mat3_mul(const float* a, const float* b, float* out) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      out[i * 3 + j] = a[i * 3 + 0] * b[0 * 3 + j] + a[i * 3 + 1] * b[1 * 3 + j] +
                       a[i * 3 + 2] * b[2 * 3 + j];
}

inline void mat3_apply(const float* m, const float* v, float* out) {
  for (int i = 0; i < 3; ++i)
    out[i] = m[i * 3 + 0] * v[0] + m[i * 3 + 1] * v[1] + m[i * 3 + 2] * v[2];
}

}  // namespace detail

/// Global joint positions of one frame (J x 3, root included at index 0).
inline void fk_positions(const MotionClip& clip, int t, float* out_xyz) {
  const Skeleton& sk = skeleton24();
  if (clip.J != Skeleton::kJoints)
    throw Error(ErrorCode::kUnsupportedSkeleton,
                "forward kinematics defined for J=24");
  std::array<std::array<float, 9>, Skeleton::kJoints> glob;
  const float* root = clip.root(t);
  std::memcpy(glob[0].data(), clip.rotation(t, 0), 9 * sizeof(float));
  out_xyz[0] = root[0];
  out_xyz[1] = root[1];
  out_xyz[2] = root[2];
  for (int j = 1; j < Skeleton::kJoints; ++j) {
    int p = sk.parent[j];
    detail::mat3_mul(glob[p].data(), clip.rotation(t, j), glob[j].data());
    float off[3];
    detail::mat3_apply(glob[p].data(), sk.offset[j].data(), off);
    out_xyz[j * 3 + 0] = out_xyz[p * 3 + 0] + off[0];
    out_xyz[j * 3 + 1] = out_xyz[p * 3 + 1] + off[1];
    out_xyz[j * 3 + 2] = out_xyz[p * 3 + 2] + off[2];
  }
}

/// T x (J*3) global joint positions for the whole clip.
inline std::vector<float> fk_positions_all(const MotionClip& clip) {
  std::vector<float> pos(size_t(clip.T) * clip.J * 3);
  for (int t = 0; t < clip.T; ++t)
    fk_positions(clip, t, pos.data() + size_t(t) * clip.J * 3);
  return pos;
}

/// Mean over joints of per-joint positional speed (feature units per frame),
/// s[0] copied from s[1]. Needs T >= 2.
inline std::vector<float> aggregate_joint_speed(const MotionClip& clip) {
  if (clip.T < 2)
    throw Error(ErrorCode::kTooShort, "aggregate speed needs T >= 2");
  std::vector<float> pos = fk_positions_all(clip);
  const int J = clip.J;
  std::vector<float> s(clip.T);
  for (int t = 1; t < clip.T; ++t) {
    const float* a = pos.data() + size_t(t - 1) * J * 3;
    const float* b = pos.data() + size_t(t) * J * 3;
    double acc = 0;
    for (int j = 0; j < J; ++j) {
      double dx = double(b[j * 3]) - a[j * 3];
      double dy = double(b[j * 3 + 1]) - a[j * 3 + 1];
      double dz = double(b[j * 3 + 2]) - a[j * 3 + 2];
      acc += std::sqrt(dx * dx + dy * dy + dz * dz);
    }
    s[t] = float(acc / J);
  }
  s[0] = s[1];
  return s;
}

// ============================================================================
// File I/O: RDMC (motion) and RDMF (music)
// ============================================================================

namespace detail {

inline void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline bool read_u32(std::istream& is, uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
      (uint32_t(b[3]) << 24);
  return true;
}

inline void write_f32s(std::ostream& os, const float* data, size_t n) {
  static_assert(std::endian::native == std::endian::little,
                "RDMC/RDMF writer assumes a little-endian host");
  os.write(reinterpret_cast<const char*>(data), std::streamsize(n * 4));
}

inline bool read_f32s(std::istream& is, float* data, size_t n) {
  return bool(is.read(reinterpret_cast<char*>(data), std::streamsize(n * 4)));
}

inline void check_all_finite(const std::vector<float>& v, const std::string& path) {
  for (float x : v)
    if (!std::isfinite(x))
      throw Error(ErrorCode::kNonFiniteValue, "non-finite value in " + path);
}

}  // namespace detail

inline void save_motion(const MotionClip& clip, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::kIoFailure, "cannot open " + path);
  os.write("RDMC", 4);
  detail::write_u32(os, 1);  // version
  detail::write_u32(os, uint32_t(clip.J));
  detail::write_u32(os, uint32_t(clip.T));
  detail::write_u32(os, uint32_t(clip.fps));
  detail::write_u32(os, uint32_t(clip.style));
  detail::write_f32s(os, clip.frames.data(), clip.frames.size());
  if (!os) throw Error(ErrorCode::kIoFailure, "write failed: " + path);
}

inline MotionClip load_motion(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::kIoFailure, "cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "RDMC", 4) != 0)
    throw Error(ErrorCode::kBadMagic, path);
  uint32_t version, J, T, fps, style;
  if (!detail::read_u32(is, version) || !detail::read_u32(is, J) ||
      !detail::read_u32(is, T) || !detail::read_u32(is, fps) ||
      !detail::read_u32(is, style))
    throw Error(ErrorCode::kTruncatedFile, path);
  if (version != 1) throw Error(ErrorCode::kBadMagic, "unsupported version");
  if (J == 0 || T == 0 || fps == 0)
    throw Error(ErrorCode::kDimensionMismatch, "zero dimension in header");

  MotionClip clip;
  clip.J = int(J);
  clip.T = int(T);
  clip.fps = int(fps);
  clip.style = int(style);
  clip.clip_id = std::filesystem::path(path).stem().string();
  const uint64_t want = uint64_t(T) * clip.dim();
  clip.frames.resize(want);
  if (!detail::read_f32s(is, clip.frames.data(), want) || is.peek() != EOF) {
    // Distinguish a consistent-but-wrong row width from a ragged payload.
    is.clear();
    is.seekg(0, std::ios::end);
    uint64_t payload = uint64_t(is.tellg()) - 24;
    if (payload % (uint64_t(T) * 4) == 0 && payload / (uint64_t(T) * 4) != uint64_t(clip.dim()))
      throw Error(ErrorCode::kDimensionMismatch,
                  path + ": row width " + std::to_string(payload / (T * 4)) +
                      ", expected " + std::to_string(clip.dim()));
    throw Error(ErrorCode::kTruncatedFile, path);
  }
  detail::check_all_finite(clip.frames, path);
  return clip;
}

inline void save_music(const MusicFeatureTrack& track, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::kIoFailure, "cannot open " + path);
  os.write("RDMF", 4);
  detail::write_u32(os, 1);
  detail::write_u32(os, uint32_t(track.T));
  detail::write_u32(os, uint32_t(track.fps));
  detail::write_u32(os, uint32_t(track.style));
  unsigned char has_beats = track.beat_annotation ? 1 : 0;
  os.write(reinterpret_cast<const char*>(&has_beats), 1);
  detail::write_f32s(os, track.frames.data(), track.frames.size());
  if (track.beat_annotation)
    os.write(reinterpret_cast<const char*>(track.beat_annotation->data()),
             std::streamsize(track.beat_annotation->size()));
  if (!os) throw Error(ErrorCode::kIoFailure, "write failed: " + path);
}

inline MusicFeatureTrack load_music(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::kIoFailure, "cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "RDMF", 4) != 0)
    throw Error(ErrorCode::kBadMagic, path);
  uint32_t version, T, fps, style;
  unsigned char has_beats = 0;
  if (!detail::read_u32(is, version) || !detail::read_u32(is, T) ||
      !detail::read_u32(is, fps) || !detail::read_u32(is, style) ||
      !is.read(reinterpret_cast<char*>(&has_beats), 1))
    throw Error(ErrorCode::kTruncatedFile, path);
  if (version != 1) throw Error(ErrorCode::kBadMagic, "unsupported version");

  MusicFeatureTrack track;
  track.T = int(T);
  track.fps = int(fps);
  track.style = int(style);
  track.clip_id = std::filesystem::path(path).stem().string();
  track.frames.resize(size_t(T) * MusicFeatureTrack::kDim);
  if (!detail::read_f32s(is, track.frames.data(), track.frames.size()))
    throw Error(ErrorCode::kTruncatedFile, path);
  if (has_beats) {
    std::vector<uint8_t> beats(T);
    if (!is.read(reinterpret_cast<char*>(beats.data()), std::streamsize(T)))
      throw Error(ErrorCode::kTruncatedFile, path);
    for (auto b : beats)
      if (b > 1) throw Error(ErrorCode::kTruncatedFile, path + ": bad beat flag");
    track.beat_annotation = std::move(beats);
  }
  detail::check_all_finite(track.frames, path);
  return track;
}

// ============================================================================
// Validation / augmentation / contacts
// ============================================================================

/// Frobenius distance of R^T R from identity plus a positive-determinant
/// check; dataset ingestion enforces this, generated output is exempt.
inline bool rotations_valid(const MotionClip& clip, float tol = 1e-3f) {
  for (int t = 0; t < clip.T; ++t) {
    for (int j = 0; j < clip.J; ++j) {
      const float* R = clip.rotation(t, j);
      float g[9];
      for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k)
          g[i * 3 + k] = R[0 * 3 + i] * R[0 * 3 + k] + R[1 * 3 + i] * R[1 * 3 + k] +
                         R[2 * 3 + i] * R[2 * 3 + k];
      float fro = 0;
      for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) {
          float d = g[i * 3 + k] - (i == k ? 1.f : 0.f);
          fro += d * d;
        }
      if (std::sqrt(fro) >= tol) return false;
      float det = R[0] * (R[4] * R[8] - R[5] * R[7]) -
                  R[1] * (R[3] * R[8] - R[5] * R[6]) +
                  R[2] * (R[3] * R[7] - R[4] * R[6]);
      if (det <= 0) return false;
    }
  }
  return true;
}

/// Mirror augmentation: swap left/right joint blocks, conjugate every
/// rotation by S = diag(-1,1,1), negate root x. An involution.
inline MotionClip mirror_motion(const MotionClip& clip) {
  if (clip.J != Skeleton::kJoints)
    throw Error(ErrorCode::kUnsupportedSkeleton,
                "mirror pairing table defined for J=24 only");
  const Skeleton& sk = skeleton24();
  MotionClip out = clip;
  out.clip_id = clip.clip_id.empty() ? "" : clip.clip_id + "_mirror";
  for (int t = 0; t < clip.T; ++t) {
    for (int j = 0; j < clip.J; ++j) {
      const float* src = clip.rotation(t, sk.mirror[j]);
      float* dst = out.row(t) + j * 9;
      // S * R * S flips the sign of the off-diagonal x row/column entries.
      dst[0] = src[0];
      dst[1] = -src[1];
      dst[2] = -src[2];
      dst[3] = -src[3];
      dst[4] = src[4];
      dst[5] = src[5];
      dst[6] = -src[6];
      dst[7] = src[7];
      dst[8] = src[8];
    }
    float* root = out.row(t) + clip.J * 9;
    root[0] = -clip.root(t)[0];
  }
  return out;
}

/// Per-frame binary foot contact labels: 1 where the contact joint's global
/// positional speed is below the threshold. Frame 0 copies frame 1.
inline ContactTrack extract_foot_contacts(const MotionClip& clip,
                                          float speed_threshold = 0.05f) {
  if (clip.T < 2)
    throw Error(ErrorCode::kTooShort, "foot contacts need T >= 2");
  const Skeleton& sk = skeleton24();
  std::vector<float> pos = fk_positions_all(clip);
  const int J = clip.J;
  ContactTrack ct;
  ct.T = clip.T;
  ct.labels.assign(size_t(clip.T) * 2, 0);
  for (int t = 1; t < clip.T; ++t) {
    for (int f = 0; f < 2; ++f) {
      int j = sk.feet[f];
      const float* a = pos.data() + size_t(t - 1) * J * 3 + j * 3;
      const float* b = pos.data() + size_t(t) * J * 3 + j * 3;
      float dx = b[0] - a[0], dy = b[1] - a[1], dz = b[2] - a[2];
      float speed = std::sqrt(dx * dx + dy * dy + dz * dz);
      ct.labels[size_t(t) * 2 + f] = speed < speed_threshold ? 1 : 0;
    }
  }
  ct.labels[0] = ct.labels[2];
  ct.labels[1] = ct.labels[3];
  return ct;
}

/// Closest-rotation projection (polar decomposition by Newton iteration) of
/// every 3x3 block. Export-time cleanup only; training and metrics run on
/// raw generated features.
inline MotionClip orthonormalized(const MotionClip& clip) {
  MotionClip out = clip;
  for (int t = 0; t < clip.T; ++t) {
    for (int j = 0; j < clip.J; ++j) {
      double X[9];
      const float* R = clip.rotation(t, j);
      for (int i = 0; i < 9; ++i) X[i] = R[i];
      for (int iter = 0; iter < 12; ++iter) {
        // X <- 0.5 * (X + X^{-T})
        double inv[9];
        double det = X[0] * (X[4] * X[8] - X[5] * X[7]) -
                     X[1] * (X[3] * X[8] - X[5] * X[6]) +
                     X[2] * (X[3] * X[7] - X[4] * X[6]);
        if (std::abs(det) < 1e-12) break;
        double id = 1.0 / det;
        inv[0] = (X[4] * X[8] - X[5] * X[7]) * id;
        inv[1] = (X[2] * X[7] - X[1] * X[8]) * id;
        inv[2] = (X[1] * X[5] - X[2] * X[4]) * id;
        inv[3] = (X[5] * X[6] - X[3] * X[8]) * id;
        inv[4] = (X[0] * X[8] - X[2] * X[6]) * id;
        inv[5] = (X[2] * X[3] - X[0] * X[5]) * id;
        inv[6] = (X[3] * X[7] - X[4] * X[6]) * id;
        inv[7] = (X[1] * X[6] - X[0] * X[7]) * id;
        inv[8] = (X[0] * X[4] - X[1] * X[3]) * id;
        double next[9];
        // X^{-T}: transpose of inv
        next[0] = 0.5 * (X[0] + inv[0]);
        next[1] = 0.5 * (X[1] + inv[3]);
        next[2] = 0.5 * (X[2] + inv[6]);
        next[3] = 0.5 * (X[3] + inv[1]);
        next[4] = 0.5 * (X[4] + inv[4]);
        next[5] = 0.5 * (X[5] + inv[7]);
        next[6] = 0.5 * (X[6] + inv[2]);
        next[7] = 0.5 * (X[7] + inv[5]);
        next[8] = 0.5 * (X[8] + inv[8]);
        double diff = 0;
        for (int i = 0; i < 9; ++i) {
          diff += (next[i] - X[i]) * (next[i] - X[i]);
          X[i] = next[i];
        }
        if (diff < 1e-24) break;
      }
      float* dst = out.row(t) + j * 9;
      for (int i = 0; i < 9; ++i) dst[i] = float(X[i]);
    }
  }
  return out;
}

}  // namespace rdance
