#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rdance/beats.hpp"
#include "rdance/motion.hpp"
#include "rdance/synth.hpp"

using namespace rdance;

TEST_CASE("beat annotation at 120 bpm / 20 fps lands every 10 frames") {
  auto [clip, music] = synth_dance(0, 3.0, 120.0, 1);
  REQUIRE(music.beat_annotation.has_value());
  const auto& beats = *music.beat_annotation;
  REQUIRE(int(beats.size()) == 60);
  for (int t = 0; t < 60; ++t)
    CHECK(int(beats[t]) == (t % 10 == 0 ? 1 : 0));
}

TEST_CASE("same style and seed reproduce identical outputs") {
  auto [c1, m1] = synth_dance(1, 4.0, 95.0, 77);
  auto [c2, m2] = synth_dance(1, 4.0, 95.0, 77);
  CHECK(c1.frames == c2.frames);
  CHECK(m1.frames == m2.frames);
  CHECK(*m1.beat_annotation == *m2.beat_annotation);
}

TEST_CASE("different styles give different mean pose trajectories") {
  auto [c0, m0] = synth_dance(0, 4.0, 100.0, 5);
  auto [c1, m1] = synth_dance(1, 4.0, 100.0, 5);
  double l2 = 0;
  for (size_t i = 0; i < c0.frames.size(); ++i) {
    double d = double(c0.frames[i]) - c1.frames[i];
    l2 += d * d;
  }
  CHECK(std::sqrt(l2) > 1.0);
}

TEST_CASE("style outside range rejected") {
  try {
    synth_dance(-1, 2.0, 100.0, 0);
    FAIL("expected BadStyle");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kBadStyle);
  }
  CHECK_THROWS_AS(synth_dance(0, 2.0, 50.0, 0), Error);  // bpm below 60
}

TEST_CASE("generated rotations satisfy the orthonormality invariant") {
  auto [clip, music] = synth_dance(4, 3.0, 140.0, 8);
  CHECK(rotations_valid(clip));
}

TEST_CASE("motion beats recover >= 90% of annotations across styles/tempi") {
  for (int style : {0, 1, 2}) {
    for (double bpm : {75.0, 100.0, 132.0}) {
      auto [clip, music] = synth_dance(style, 20.0, bpm, style * 31 + int(bpm));
      BeatTrack detected = motion_beats(clip);
      double recall = beat_recall(*music.beat_annotation, detected, 1);
      INFO("style " << style << " bpm " << bpm << " recall " << recall);
      CHECK(recall >= 0.9);
    }
  }
}

TEST_CASE("music onsets recover >= 90% of annotations") {
  for (int style : {0, 3}) {
    for (double bpm : {80.0, 120.0}) {
      auto [clip, music] = synth_dance(style, 20.0, bpm, style + int(bpm));
      BeatTrack detected = music_onsets(music);
      double recall = beat_recall(*music.beat_annotation, detected, 1);
      INFO("style " << style << " bpm " << bpm << " recall " << recall);
      CHECK(recall >= 0.9);
    }
  }
}

TEST_CASE("aggregate speed minima sit exactly on annotated beats") {
  auto [clip, music] = synth_dance(2, 10.0, 120.0, 13);
  std::vector<float> s = aggregate_joint_speed(clip);
  const auto& ann = *music.beat_annotation;
  // every annotated beat (except frame 0) is a strict local minimum
  int checked = 0;
  for (int t = 2; t + 1 < clip.T; ++t) {
    if (!ann[t]) continue;
    CHECK(s[t] < s[t - 1]);
    CHECK(s[t] < s[t + 1]);
    ++checked;
  }
  CHECK(checked >= 18);
}
