#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdance/beats.hpp"
#include "rdance/errors.hpp"
#include "rdance/motion.hpp"
#include "rdance/synth.hpp"

namespace rdance {

// ============================================================================
// Manifest + loaded dataset.
//
// Manifest JSON: {"styles": ["name", ...],
//                 "clips": [{"id", "motion", "music", "style"}, ...]}
// with style as an index into the vocabulary and paths relative to the
// manifest file.
// ============================================================================

struct ManifestEntry {
  std::string id;
  std::string motion_path;
  std::string music_path;
  int style = 0;
};

struct DatasetManifest {
  std::vector<std::string> styles;
  std::vector<ManifestEntry> clips;

  static DatasetManifest load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error(ErrorCode::kIoFailure, "cannot open manifest " + path);
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kBadConfig, std::string("manifest parse: ") + e.what());
    }
    DatasetManifest m;
    for (const auto& s : j.at("styles")) m.styles.push_back(s.get<std::string>());
    for (const auto& c : j.at("clips")) {
      ManifestEntry e;
      e.id = c.at("id").get<std::string>();
      e.motion_path = c.at("motion").get<std::string>();
      e.music_path = c.at("music").get<std::string>();
      e.style = c.at("style").get<int>();
      if (e.style < 0 || e.style >= int(m.styles.size()))
        throw Error(ErrorCode::kBadConfig,
                    "clip " + e.id + " style outside vocabulary");
      m.clips.push_back(std::move(e));
    }
    return m;
  }

  void save(const std::string& path) const {
    nlohmann::json j;
    j["styles"] = styles;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : clips)
      arr.push_back({{"id", c.id},
                     {"motion", c.motion_path},
                     {"music", c.music_path},
                     {"style", c.style}});
    j["clips"] = arr;
    std::ofstream os(path);
    if (!os) throw Error(ErrorCode::kIoFailure, "cannot write manifest " + path);
    os << j.dump(2) << "\n";
  }
};

class Dataset {
 public:
  static Dataset load(const std::string& manifest_path,
                      float contact_threshold = 0.05f) {
    Dataset ds;
    ds.manifest_ = DatasetManifest::load(manifest_path);
    auto base = std::filesystem::path(manifest_path).parent_path();
    for (const auto& e : ds.manifest_.clips) {
      MotionClip clip = load_motion((base / e.motion_path).string());
      clip.clip_id = e.id;
      clip.style = e.style;
      if (!rotations_valid(clip))
        throw Error(ErrorCode::kInvalidRotation,
                    "clip " + e.id + " has invalid rotation blocks");
      MusicFeatureTrack music = load_music((base / e.music_path).string());
      music.clip_id = e.id;
      music.style = e.style;
      ds.contacts_.push_back(extract_foot_contacts(clip, contact_threshold));
      ds.motions_.push_back(std::move(clip));
      ds.musics_.push_back(std::move(music));
    }
    ds.index_styles();
    return ds;
  }

  int size() const { return int(motions_.size()); }
  int style_count() const { return int(manifest_.styles.size()); }
  const DatasetManifest& manifest() const { return manifest_; }
  const MotionClip& motion(int i) const { return motions_[i]; }
  const MusicFeatureTrack& music(int i) const { return musics_[i]; }
  const ContactTrack& contact(int i) const { return contacts_[i]; }

  const std::vector<int>& clips_of_style(int style) const {
    static const std::vector<int> empty;
    auto it = by_style_.find(style);
    return it == by_style_.end() ? empty : it->second;
  }

  /// In-memory construction (tests).
  static Dataset from_clips(std::vector<MotionClip> motions,
                            std::vector<MusicFeatureTrack> musics,
                            std::vector<std::string> style_names,
                            float contact_threshold = 0.05f) {
    Dataset ds;
    ds.manifest_.styles = std::move(style_names);
    for (size_t i = 0; i < motions.size(); ++i) {
      ds.contacts_.push_back(extract_foot_contacts(motions[i], contact_threshold));
      ds.manifest_.clips.push_back({motions[i].clip_id, "", "", motions[i].style});
      ds.motions_.push_back(std::move(motions[i]));
      ds.musics_.push_back(std::move(musics[i]));
    }
    ds.index_styles();
    return ds;
  }

 private:
  void index_styles() {
    for (int i = 0; i < int(motions_.size()); ++i)
      by_style_[motions_[i].style].push_back(i);
  }

  DatasetManifest manifest_;
  std::vector<MotionClip> motions_;
  std::vector<MusicFeatureTrack> musics_;
  std::vector<ContactTrack> contacts_;
  std::map<int, std::vector<int>> by_style_;
};

// ============================================================================
// Synthetic corpus writer (the desk-scale dataset)
// ============================================================================

/// S*N motion/music pairs plus manifest.json under out_dir. Deterministic
/// given the seed; per-clip tempo varies over [72, 126] bpm.
inline DatasetManifest write_synth_dataset(int styles, int clips_per_style,
                                           double seconds,
                                           const std::string& out_dir,
                                           uint64_t seed) {
  if (styles < 1 || clips_per_style < 1)
    throw Error(ErrorCode::kBadConfig, "need at least one style and one clip");
  std::filesystem::create_directories(out_dir);
  DatasetManifest manifest;
  for (int s = 0; s < styles; ++s)
    manifest.styles.push_back("style" + std::to_string(s));
  auto base = std::filesystem::path(out_dir);
  for (int s = 0; s < styles; ++s) {
    for (int c = 0; c < clips_per_style; ++c) {
      uint64_t clip_seed = hash3(seed, uint64_t(s), uint64_t(c));
      double bpm = 72.0 + 6.0 * double(clip_seed % 10);
      auto [clip, music] = synth_dance(s, seconds, bpm, clip_seed);
      std::string id = "s" + std::to_string(s) + "_c" + std::to_string(c);
      clip.clip_id = id;
      music.clip_id = id;
      save_motion(clip, (base / (id + ".rdmc")).string());
      save_music(music, (base / (id + ".rdmf")).string());
      manifest.clips.push_back({id, id + ".rdmc", id + ".rdmf", s});
    }
  }
  manifest.save((base / "manifest.json").string());
  return manifest;
}

/// Loads every *.rdmc in a directory, with its *.rdmf sidecar when present.
struct EvalClip {
  MotionClip motion;
  std::optional<MusicFeatureTrack> music;
};

inline std::vector<EvalClip> load_clip_dir(const std::string& dir) {
  std::vector<std::filesystem::path> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.path().extension() == ".rdmc") paths.push_back(entry.path());
  std::sort(paths.begin(), paths.end());
  std::vector<EvalClip> out;
  for (const auto& p : paths) {
    EvalClip ec;
    ec.motion = load_motion(p.string());
    auto music_path = p;
    music_path.replace_extension(".rdmf");
    if (std::filesystem::exists(music_path))
      ec.music = load_music(music_path.string());
    out.push_back(std::move(ec));
  }
  return out;
}

}  // namespace rdance
