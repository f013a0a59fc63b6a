#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rdance/beats.hpp"
#include "rdance/rng.hpp"
#include "rdance/synth.hpp"

using namespace rdance;

namespace {

/// Brute-force per-frame forward scan (independent oracle for tta_encode).
std::vector<int> tta_brute_force(const std::vector<uint8_t>& flags, int cap) {
  const int T = int(flags.size());
  std::vector<int> out(T, cap);
  for (int t = 0; t < T; ++t) {
    int found = -1;
    for (int u = t; u < T; ++u)
      if (flags[u]) {
        found = u;
        break;
      }
    out[t] = found < 0 ? cap : std::min(cap, found - t);
  }
  return out;
}

}  // namespace

TEST_CASE("tta_encode worked example") {
  BeatTrack bt;
  bt.flags = {1, 0, 0, 1, 0};
  TTASequence tta = tta_encode(bt, 8);
  CHECK(tta.values == std::vector<int>{0, 2, 1, 0, 8});
}

TEST_CASE("tta_encode all ones / all zeros") {
  BeatTrack ones;
  ones.flags.assign(6, 1);
  CHECK(tta_encode(ones, 8).values == std::vector<int>(6, 0));
  BeatTrack zeros;
  zeros.flags.assign(6, 0);
  CHECK(tta_encode(zeros, 8).values == std::vector<int>(6, 8));
}

TEST_CASE("tta_encode matches brute force on 1000 random tracks") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    int T = 1 + int(rng.below(120));
    int cap = 1 + int(rng.below(50));
    BeatTrack bt;
    bt.flags.resize(T);
    double density = rng.uniform(0.0, 0.4);
    for (int t = 0; t < T; ++t) bt.flags[t] = rng.uniform() < density ? 1 : 0;
    TTASequence got = tta_encode(bt, cap);
    CHECK(got.values == tta_brute_force(bt.flags, cap));
    // invariant: zero exactly at beat frames (when a future beat exists)
    for (int t = 0; t < T; ++t)
      if (bt.flags[t]) CHECK(got.values[t] == 0);
  }
}

TEST_CASE("speed minima detector: direct definition") {
  std::vector<float> s = {1.0f, 0.1f, 1.0f};
  auto flags = detect_speed_minima(s, 1, 0.0f, 2);
  CHECK(flags == std::vector<uint8_t>{0, 1, 0});
}

TEST_CASE("constant velocity clip yields no beats") {
  std::vector<float> s(50, 0.7f);
  auto flags = detect_speed_minima(s, 1, 0.0f, 10);
  for (auto f : flags) CHECK(f == 0);
}

TEST_CASE("min separation respected, earlier beat wins") {
  // double dip at 5 and 8, separation 5 suppresses the later one
  std::vector<float> s(20, 1.0f);
  s[5] = 0.0f;
  s[8] = 0.05f;
  auto flags = detect_speed_minima(s, 5, 0.5f, 6);
  CHECK(flags[5] == 1);
  CHECK(flags[8] == 0);
  auto loose = detect_speed_minima(s, 2, 0.5f, 6);
  CHECK(loose[5] == 1);
  CHECK(loose[8] == 1);
}

TEST_CASE("minima positions invariant under uniform scaling of the series") {
  Rng rng(8);
  std::vector<float> s(120);
  for (auto& v : s) v = float(rng.uniform(0.1, 2.0));
  auto base = detect_speed_minima(s, 3, 0.5f, 10);
  for (float c : {0.01f, 3.f, 250.f}) {
    std::vector<float> scaled(s.size());
    for (size_t i = 0; i < s.size(); ++i) scaled[i] = s[i] * c;
    CHECK(detect_speed_minima(scaled, 3, 0.5f, 10) == base);
  }
}

TEST_CASE("motion_beats TooShort below 3 frames") {
  MotionClip c;
  c.T = 2;
  c.frames.assign(size_t(2) * c.dim(), 0.f);
  for (int t = 0; t < 2; ++t)
    for (int j = 0; j < 24; ++j) {
      float* R = c.row(t) + j * 9;
      R[0] = R[4] = R[8] = 1.f;
    }
  try {
    motion_beats(c);
    FAIL("expected TooShort");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTooShort);
  }
}

TEST_CASE("music onsets: constant features produce no beats") {
  MusicFeatureTrack m;
  m.T = 40;
  m.frames.assign(size_t(40) * 32, 0.5f);
  BeatTrack bt = music_onsets(m);
  for (auto f : bt.flags) CHECK(f == 0);
}

TEST_CASE("music onsets: single step increase at frame 5") {
  MusicFeatureTrack m;
  m.T = 10;
  m.frames.assign(size_t(10) * 32, 0.2f);
  for (int t = 5; t < 10; ++t)
    for (int d = 0; d < 32; ++d) m.frames[size_t(t) * 32 + d] = 1.0f;
  BeatTrack bt = music_onsets(m, 3, 1.0f);
  for (int t = 0; t < 10; ++t) CHECK(int(bt.flags[t]) == (t == 5 ? 1 : 0));
}

TEST_CASE("music onsets respect min separation") {
  auto [clip, music] = synth_dance(0, 15.0, 120.0, 3);
  for (int sep : {3, 7, 15}) {
    BeatTrack bt = music_onsets(music, sep, 1.0f);
    int last = -1000;
    for (int t = 0; t < bt.T(); ++t)
      if (bt.flags[t]) {
        CHECK(t - last >= sep);
        last = t;
      }
  }
}

TEST_CASE("motion beats respect min separation") {
  auto [clip, music] = synth_dance(1, 15.0, 120.0, 4);
  for (int sep : {3, 8}) {
    BeatTrack bt = motion_beats(clip, sep, 0.5f);
    int last = -1000;
    for (int t = 0; t < bt.T(); ++t)
      if (bt.flags[t]) {
        CHECK(t - last >= sep);
        last = t;
      }
  }
}
