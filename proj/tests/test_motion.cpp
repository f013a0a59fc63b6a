#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "rdance/motion.hpp"
#include "rdance/rng.hpp"
#include "rdance/synth.hpp"

using namespace rdance;

namespace {

MotionClip identity_clip(int T) {
  MotionClip c;
  c.T = T;
  c.frames.assign(size_t(T) * c.dim(), 0.f);
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < c.J; ++j) {
      float* R = c.row(t) + j * 9;
      R[0] = R[4] = R[8] = 1.f;
    }
  return c;
}

std::filesystem::path tmp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "rdance_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("save/load round-trips bit-exactly") {
  auto [clip, music] = synth_dance(1, 5.0, 120.0, 42);
  auto path = tmp_file("roundtrip.rdmc");
  save_motion(clip, path.string());
  MotionClip back = load_motion(path.string());
  REQUIRE(back.T == clip.T);
  REQUIRE(back.J == clip.J);
  CHECK(back.fps == clip.fps);
  CHECK(back.style == clip.style);
  CHECK(back.frames == clip.frames);
  CHECK(back.dim() == 219);

  // save-load-save produces byte-identical files
  auto path2 = tmp_file("roundtrip2.rdmc");
  save_motion(back, path2.string());
  std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), {});
  std::string sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
}

TEST_CASE("T=1 clip file size is header plus one 219-float row") {
  MotionClip c = identity_clip(1);
  auto path = tmp_file("single.rdmc");
  save_motion(c, path.string());
  // 4 magic + 5*4 header + 219*4 payload
  CHECK(std::filesystem::file_size(path) == 4 + 20 + 219 * 4);
}

TEST_CASE("bad magic rejected") {
  auto path = tmp_file("junk.rdmc");
  std::ofstream os(path, std::ios::binary);
  os << "NOPEnope";
  os.close();
  try {
    load_motion(path.string());
    FAIL("expected BadMagic");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kBadMagic);
  }
}

TEST_CASE("row width 218 with J=24 header is a dimension mismatch") {
  auto path = tmp_file("width218.rdmc");
  {
    std::ofstream os(path, std::ios::binary);
    os << "RDMC";
    auto u32 = [&](uint32_t v) { os.write(reinterpret_cast<char*>(&v), 4); };
    u32(1);
    u32(24);  // J -> D must be 219
    u32(4);   // T
    u32(20);
    u32(0);
    std::vector<float> payload(4 * 218, 0.f);
    os.write(reinterpret_cast<char*>(payload.data()),
             std::streamsize(payload.size() * 4));
  }
  try {
    load_motion(path.string());
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDimensionMismatch);
  }
}

TEST_CASE("ragged payload is truncated") {
  auto path = tmp_file("trunc.rdmc");
  {
    std::ofstream os(path, std::ios::binary);
    os << "RDMC";
    auto u32 = [&](uint32_t v) { os.write(reinterpret_cast<char*>(&v), 4); };
    u32(1);
    u32(24);
    u32(4);
    u32(20);
    u32(0);
    std::vector<float> payload(103, 0.f);  // not a whole number of rows
    os.write(reinterpret_cast<char*>(payload.data()),
             std::streamsize(payload.size() * 4));
  }
  try {
    load_motion(path.string());
    FAIL("expected TruncatedFile");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTruncatedFile);
  }
}

TEST_CASE("empty path raises IoFailure on save") {
  MotionClip c = identity_clip(1);
  try {
    save_motion(c, "");
    FAIL("expected IoFailure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIoFailure);
  }
}

TEST_CASE("loader rejects non-finite values") {
  MotionClip c = identity_clip(2);
  c.frames[5] = std::numeric_limits<float>::infinity();
  auto path = tmp_file("nonfinite.rdmc");
  save_motion(c, path.string());
  try {
    load_motion(path.string());
    FAIL("expected NonFiniteValue");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonFiniteValue);
  }
}

TEST_CASE("music save/load round-trip with beat annotation") {
  auto [clip, music] = synth_dance(0, 4.0, 100.0, 7);
  auto path = tmp_file("music.rdmf");
  save_music(music, path.string());
  MusicFeatureTrack back = load_music(path.string());
  CHECK(back.frames == music.frames);
  REQUIRE(back.beat_annotation.has_value());
  CHECK(*back.beat_annotation == *music.beat_annotation);
}

TEST_CASE("mirror: identity rotations, root x negates") {
  MotionClip c = identity_clip(3);
  for (int t = 0; t < 3; ++t) {
    c.row(t)[c.J * 9] = 1.f;  // root x
    c.row(t)[c.J * 9 + 1] = 0.5f;
  }
  MotionClip m = mirror_motion(c);
  for (int t = 0; t < 3; ++t) {
    for (int j = 0; j < c.J; ++j) {
      const float* R = m.rotation(t, j);
      CHECK(R[0] == 1.f);
      CHECK(R[4] == 1.f);
      CHECK(R[8] == 1.f);
      CHECK(R[1] == 0.f);
    }
    CHECK(m.root(t)[0] == -1.f);
    CHECK(m.root(t)[1] == 0.5f);
  }
}

TEST_CASE("mirror is an involution") {
  auto [clip, music] = synth_dance(2, 3.0, 110.0, 99);
  MotionClip mm = mirror_motion(mirror_motion(clip));
  REQUIRE(mm.frames.size() == clip.frames.size());
  for (size_t i = 0; i < clip.frames.size(); ++i)
    CHECK(std::abs(mm.frames[i] - clip.frames[i]) < 1e-6f);
}

TEST_CASE("mirror maps z-rotation at left wrist to -z-rotation at right wrist") {
  MotionClip c = identity_clip(1);
  const double theta = 0.7;
  float* R = c.row(0) + 20 * 9;  // left wrist
  R[0] = float(std::cos(theta));
  R[1] = float(-std::sin(theta));
  R[3] = float(std::sin(theta));
  R[4] = float(std::cos(theta));
  R[8] = 1.f;
  MotionClip m = mirror_motion(c);
  const float* Rr = m.rotation(0, 21);  // right wrist
  CHECK(Rr[0] == Catch::Approx(std::cos(theta)));
  CHECK(Rr[1] == Catch::Approx(std::sin(theta)));   // R_z(-theta)
  CHECK(Rr[3] == Catch::Approx(-std::sin(theta)));
  CHECK(Rr[4] == Catch::Approx(std::cos(theta)));
}

TEST_CASE("mirror preserves the rotation-validity invariant") {
  auto [clip, music] = synth_dance(3, 2.0, 90.0, 5);
  CHECK(rotations_valid(clip));
  CHECK(rotations_valid(mirror_motion(clip)));
}

TEST_CASE("foot contacts: stationary clip is all ones") {
  MotionClip c = identity_clip(10);
  ContactTrack ct = extract_foot_contacts(c, 0.01f);
  for (int t = 0; t < 10; ++t) {
    CHECK(ct.left(t) == 1);
    CHECK(ct.right(t) == 1);
  }
}

TEST_CASE("foot contacts: fast uniform root translation is all zeros") {
  MotionClip c = identity_clip(10);
  for (int t = 0; t < 10; ++t) c.row(t)[c.J * 9] = 0.5f * t;  // 0.5/frame
  ContactTrack ct = extract_foot_contacts(c, 0.01f);
  for (int t = 0; t < 10; ++t) {
    CHECK(ct.left(t) == 0);
    CHECK(ct.right(t) == 0);
  }
}

TEST_CASE("foot contacts: threshold crossing labels per frame, frame 0 copies") {
  // root speed 0.001 between frames 0-1, then 0.5 afterwards
  MotionClip c = identity_clip(3);
  c.row(1)[c.J * 9] = 0.001f;
  c.row(2)[c.J * 9] = 0.501f;
  ContactTrack ct = extract_foot_contacts(c, 0.01f);
  CHECK(ct.left(1) == 1);
  CHECK(ct.left(2) == 0);
  CHECK(ct.left(0) == ct.left(1));
}

TEST_CASE("foot contacts require two frames") {
  MotionClip c = identity_clip(1);
  try {
    extract_foot_contacts(c, 0.01f);
    FAIL("expected TooShort");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTooShort);
  }
}

TEST_CASE("mirror rejects unsupported skeletons") {
  MotionClip c;
  c.J = 10;
  c.T = 1;
  c.frames.assign(size_t(c.dim()), 0.f);
  try {
    mirror_motion(c);
    FAIL("expected UnsupportedSkeleton");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnsupportedSkeleton);
  }
}

TEST_CASE("orthonormalized projects perturbed blocks back to rotations") {
  auto [clip, music] = synth_dance(1, 2.0, 100.0, 3);
  MotionClip noisy = clip;
  Rng rng(4);
  for (auto& v : noisy.frames) v += float(0.02 * rng.uniform(-1, 1));
  CHECK(!rotations_valid(noisy, 1e-3f));
  MotionClip fixed = orthonormalized(noisy);
  CHECK(rotations_valid(fixed, 1e-3f));
}
