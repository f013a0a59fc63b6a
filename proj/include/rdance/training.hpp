#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdance/beats.hpp"
#include "rdance/checkpoint.hpp"
#include "rdance/config.hpp"
#include "rdance/dataset.hpp"
#include "rdance/errors.hpp"
#include "rdance/generator.hpp"
#include "rdance/long_history.hpp"
#include "rdance/style_encoder.hpp"

namespace rdance {

// ============================================================================
// Unpaired training scheme.
//
// A batch item pairs a target motion window with: beat context identified
// from the target *motion* (never its music), style exemplars sampled from
// *other* clips of the same style label, a same-style random history slice,
// and foot-contact targets. The music of the target clip at the target time
// indices is never read; only style labels link the modalities. The paired
// ablation relaxes exactly this: the exemplar becomes the target's own
// aligned music slice.
// ============================================================================

/// Everything the generator stack needs, built in one deterministic order.
template <typename T>
struct DanceModel {
  GeneratorConfig cfg;
  StyleEncoder<T> music_encoder;
  StyleEncoder<T> motion_encoder;
  LongHistoryEncoder<T> history_encoder;
  Generator<T> generator;

  DanceModel(ModelParams<T>& params, const GeneratorConfig& config,
             uint64_t init_seed)
      : cfg(config) {
    Rng rng(hash_combine(0x1217ULL, init_seed));
    if (cfg.fusion == FusionMode::kCln) {
      music_encoder =
          StyleEncoder<T>(params, "style.music", MusicFeatureTrack::kDim,
                          cfg.d_model, cfg.heads, cfg.ffn, cfg.w_style,
                          T(cfg.dropout), rng);
      motion_encoder =
          StyleEncoder<T>(params, "style.motion", cfg.input_dim(), cfg.d_model,
                          cfg.heads, cfg.ffn, cfg.w_style, T(cfg.dropout), rng);
    }
    if (cfg.long_history)
      history_encoder = LongHistoryEncoder<T>(params, "hist", cfg.input_dim(),
                                              cfg.d_model, rng);
    generator = Generator<T>(params, cfg, rng);
  }

  /// H_style from one music and one motion exemplar slice.
  Tensor<T> style_embedding_of(const MusicFeatureTrack& music_ex,
                               const MotionClip& motion_ex,
                               DropoutCtx* ctx) const {
    Tensor<T> hm = music_encoder.forward(to_tensor<T>(music_ex), ctx);
    Tensor<T> hx = motion_encoder.forward(to_tensor<T>(motion_ex), ctx);
    return style_embedding(hm, hx);
  }
};

/// Training history slice length: enough for several key windows.
inline int training_history_length(const GeneratorConfig& cfg) {
  return std::max(2 * cfg.window_m + cfg.horizon, 4 * cfg.fps);
}

struct BatchItem {
  int target_index = -1;
  int win_start = 0;
  std::vector<uint8_t> beat_flags;     // over the w_ctx+n window, from motion
  MusicFeatureTrack music_exemplar;    // w_style frames
  MotionClip motion_exemplar;          // w_style frames
  MotionClip history;                  // training_history_length frames
  std::vector<float> contact_targets;  // n x 2
  std::string target_id, music_exemplar_id, motion_exemplar_id, history_id;
  int music_exemplar_offset = 0;
};

struct TripletSample {
  MusicFeatureTrack anchor, positive, negative;
  bool valid = false;
};

struct TrainBatch {
  std::vector<BatchItem> items;
  TripletSample triplet;
};

namespace train_detail {

/// Same-style clip indices excluding one clip, with a minimum length.
inline std::vector<int> eligible_pool(const Dataset& ds, int style,
                                      int banned_index, int min_frames,
                                      bool use_music_length) {
  std::vector<int> out;
  for (int i : ds.clips_of_style(style)) {
    if (i == banned_index) continue;
    int len = use_music_length ? ds.music(i).T : ds.motion(i).T;
    if (len >= min_frames) out.push_back(i);
  }
  return out;
}

}  // namespace train_detail

/// One unpaired batch. The target clip's music is reachable only through the
/// paired ablation; the exemplar samplers exclude the target clip entirely.
inline TrainBatch build_batch(const Dataset& ds, const RunConfig& cfg,
                              Rng& rng) {
  const GeneratorConfig& m = cfg.model;
  const int window = m.w_ctx + m.horizon;
  const int hist_len = training_history_length(m);

  std::vector<int> targets;
  for (int i = 0; i < ds.size(); ++i)
    if (ds.motion(i).T >= window) targets.push_back(i);
  if (targets.empty())
    throw Error(ErrorCode::kNoEligibleClip, "no clip long enough for a window");

  TrainBatch batch;
  for (int b = 0; b < cfg.train.batch; ++b) {
    BatchItem item;
    item.target_index = targets[rng.below(targets.size())];
    const MotionClip& target = ds.motion(item.target_index);
    item.target_id = target.clip_id;
    item.win_start = int(rng.below(uint64_t(target.T - window + 1)));

    MotionClip win = target.slice(item.win_start, window);
    item.beat_flags = motion_beats(win).flags;

    const ContactTrack& ct = ds.contact(item.target_index);
    item.contact_targets.resize(size_t(m.horizon) * 2);
    for (int r = 0; r < m.horizon; ++r) {
      int t = item.win_start + m.w_ctx + r;
      item.contact_targets[size_t(r) * 2] = ct.left(t);
      item.contact_targets[size_t(r) * 2 + 1] = ct.right(t);
    }

    if (cfg.train.scheme == TrainScheme::kPaired) {
      // paired ablation: the target's own aligned music slice
      const MusicFeatureTrack& mus = ds.music(item.target_index);
      int start = std::min(item.win_start, std::max(0, mus.T - m.w_style));
      item.music_exemplar = mus.slice(start, m.w_style);
      item.music_exemplar_id = mus.clip_id;
      item.music_exemplar_offset = start;
    } else {
      auto pool = train_detail::eligible_pool(ds, target.style,
                                              item.target_index, m.w_style, true);
      if (pool.empty())
        throw Error(ErrorCode::kNoEligibleClip,
                    "style " + std::to_string(target.style) +
                        " needs a second clip for music exemplars");
      int pick = pool[rng.below(pool.size())];
      const MusicFeatureTrack& mus = ds.music(pick);
      item.music_exemplar_offset = int(rng.below(uint64_t(mus.T - m.w_style + 1)));
      item.music_exemplar = mus.slice(item.music_exemplar_offset, m.w_style);
      item.music_exemplar_id = mus.clip_id;
    }

    {
      auto pool = train_detail::eligible_pool(ds, target.style,
                                              item.target_index, m.w_style, false);
      if (pool.empty())
        throw Error(ErrorCode::kNoEligibleClip,
                    "style " + std::to_string(target.style) +
                        " needs a second clip for motion exemplars");
      int pick = pool[rng.below(pool.size())];
      const MotionClip& mo = ds.motion(pick);
      int off = int(rng.below(uint64_t(mo.T - m.w_style + 1)));
      item.motion_exemplar = mo.slice(off, m.w_style);
      item.motion_exemplar_id = mo.clip_id;
    }

    if (m.long_history) {
      item.history = sample_history_slice(ds, target.style, hist_len, rng);
      item.history_id = item.history.clip_id;
    }
    batch.items.push_back(std::move(item));
  }

  // One triplet per step, on an independent draw.
  if (ds.style_count() >= 2) {
    std::vector<int> anchor_styles;
    for (int s = 0; s < ds.style_count(); ++s)
      if (ds.clips_of_style(s).size() >= 2) anchor_styles.push_back(s);
    if (!anchor_styles.empty()) {
      int a_style = anchor_styles[rng.below(anchor_styles.size())];
      const auto& same = ds.clips_of_style(a_style);
      int ai = same[rng.below(same.size())];
      auto pos_pool = train_detail::eligible_pool(ds, a_style, ai, m.w_style, true);
      std::vector<int> neg_pool;
      for (int i = 0; i < ds.size(); ++i)
        if (ds.motion(i).style != a_style && ds.music(i).T >= m.w_style)
          neg_pool.push_back(i);
      if (!pos_pool.empty() && !neg_pool.empty() && ds.music(ai).T >= m.w_style) {
        auto slice_of = [&](int idx) {
          const MusicFeatureTrack& mus = ds.music(idx);
          int off = int(rng.below(uint64_t(mus.T - m.w_style + 1)));
          return mus.slice(off, m.w_style);
        };
        batch.triplet.anchor = slice_of(ai);
        batch.triplet.positive = slice_of(pos_pool[rng.below(pos_pool.size())]);
        batch.triplet.negative = slice_of(neg_pool[rng.below(neg_pool.size())]);
        batch.triplet.valid = true;
      }
    }
  }
  return batch;
}

// ============================================================================
// Losses
// ============================================================================

/// Eq-style pose reconstruction: sum over predicted frames of the per-frame
/// L2 norm of the feature difference.
template <typename T>
Tensor<T> loss_rec(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw Error(ErrorCode::kShapeMismatch, "loss_rec: shape mismatch");
  return sum_rowwise_l2norm(sub(pred, target));
}

/// Foot-contact loss on logistic probabilities vs binary labels.
template <typename T>
Tensor<T> loss_foot(const Tensor<T>& pred_logits, const Tensor<T>& target) {
  if (pred_logits.rows() != target.rows() || pred_logits.cols() != target.cols())
    throw Error(ErrorCode::kShapeMismatch, "loss_foot: shape mismatch");
  return sum_rowwise_l2norm(sub(sigmoid(pred_logits), target));
}

struct LossReport {
  double l_rec = 0, l_foot = 0, l_trip = 0, total = 0, lr = 0;
  int64_t step = 0;
};

template <typename T>
Tensor<T> total_loss(const Tensor<T>& rec, const Tensor<T>& foot,
                     const Tensor<T>& trip, T lambda_rec, T lambda_foot,
                     T lambda_trip) {
  return add(add(scale(rec, lambda_rec), scale(foot, lambda_foot)),
             scale(trip, lambda_trip));
}

// ============================================================================
// Training loop
// ============================================================================

struct TrainResult {
  std::vector<LossReport> log;
  std::string final_checkpoint;
  bool aborted = false;
  std::string note;
};

/// Forward pass of one batch; returns (loss graph, report numbers).
template <typename T>
Tensor<T> batch_loss(const DanceModel<T>& model, const Dataset& ds,
                     const RunConfig& cfg, const TrainBatch& batch,
                     DropoutCtx* ctx, LossReport* report) {
  const GeneratorConfig& m = model.cfg;
  Tensor<T> rec_sum = Tensor<T>::scalar(0);
  Tensor<T> foot_sum = Tensor<T>::scalar(0);
  for (const BatchItem& item : batch.items) {
    const MotionClip& target = ds.motion(item.target_index);
    MotionClip window = target.slice(item.win_start, m.w_ctx + m.horizon);
    Tensor<T> window_t = to_tensor<T>(window);
    Tensor<T> context = rows(window_t, 0, m.w_ctx);
    Tensor<T> future = rows(window_t, m.w_ctx, m.horizon);

    BeatTrack bt;
    bt.fps = m.fps;
    bt.flags = item.beat_flags;
    TTASequence tta = tta_encode(bt, m.tta_cap);

    Tensor<T> h_style, music_tokens;
    if (m.fusion == FusionMode::kCln)
      h_style = model.style_embedding_of(item.music_exemplar,
                                         item.motion_exemplar, ctx);
    else
      music_tokens = to_tensor<T>(item.music_exemplar);

    Tensor<T> e_hist;
    if (m.long_history)
      e_hist = model.history_encoder
                   .encode(to_tensor<T>(item.history), m.window_m, m.horizon)
                   .e_hist;

    GeneratorOutput<T> out =
        model.generator.step(context, tta.values, e_hist, h_style, music_tokens, ctx);

    std::vector<T> ct(item.contact_targets.begin(), item.contact_targets.end());
    Tensor<T> contact_t = Tensor<T>::from_data(m.horizon, 2, std::move(ct));
    rec_sum = add(rec_sum, loss_rec(out.poses, future));
    foot_sum = add(foot_sum, loss_foot(out.contact_logits, contact_t));
  }
  T inv_b = T(1) / T(batch.items.size());
  Tensor<T> rec = scale(rec_sum, inv_b);
  Tensor<T> foot = scale(foot_sum, inv_b);

  Tensor<T> trip = Tensor<T>::scalar(0);
  if (batch.triplet.valid && m.fusion == FusionMode::kCln)
    trip = triplet_loss(model.music_encoder, to_tensor<T>(batch.triplet.anchor),
                        to_tensor<T>(batch.triplet.positive),
                        to_tensor<T>(batch.triplet.negative),
                        T(cfg.train.margin), ctx);

  Tensor<T> total = total_loss(rec, foot, trip, T(cfg.train.lambda_rec),
                               T(cfg.train.lambda_foot), T(cfg.train.lambda_trip));
  if (report) {
    report->l_rec = double(rec.item());
    report->l_foot = double(foot.item());
    report->l_trip = double(trip.item());
    report->total = double(total.item());
  }
  return total;
}

inline TrainResult train(const Dataset& ds, const RunConfig& cfg,
                         const std::string& out_dir,
                         bool echo_progress = false) {
  std::filesystem::create_directories(out_dir);
  ModelParams<float> params;
  DanceModel<float> model(params, cfg.model, cfg.train.seed);

  std::ofstream log_os(std::filesystem::path(out_dir) / "train_log.jsonl");
  TrainResult result;
  std::string last_good;

  for (int64_t step = 1; step <= cfg.train.iters; ++step) {
    Rng rng(hash3(0x7261696eULL, cfg.train.seed, uint64_t(step)));
    TrainBatch batch = build_batch(ds, cfg, rng);
    DropoutCtx ctx{cfg.train.seed, step, 0, true};

    LossReport report;
    report.step = step;
    report.lr = cfg.lr_at(step);
    params.zero_grad();
    Tensor<float> loss = batch_loss(model, ds, cfg, batch, &ctx, &report);
    if (!all_finite(loss)) {
      result.aborted = true;
      result.note = "non-finite loss at step " + std::to_string(step);
      break;
    }
    loss.backward();
    try {
      params.adam_step(float(report.lr));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kNonFiniteGrad) {
        result.aborted = true;
        result.note = e.what();
        break;
      }
      throw;
    }

    nlohmann::json line = {{"step", report.step},   {"l_rec", report.l_rec},
                           {"l_foot", report.l_foot}, {"l_trip", report.l_trip},
                           {"total", report.total},   {"lr", report.lr}};
    log_os << line.dump() << "\n";
    result.log.push_back(report);
    if (echo_progress && step % 100 == 0)
      std::fprintf(stderr, "step %lld  l_rec %.4f  total %.4f\n",
                   (long long)step, report.l_rec, report.total);

    if (cfg.train.checkpoint_every > 0 && step % cfg.train.checkpoint_every == 0) {
      std::string p = (std::filesystem::path(out_dir) /
                       ("ckpt_" + std::to_string(step) + ".rdck"))
                          .string();
      save_checkpoint(params, cfg, cfg.train.seed, p);
      last_good = p;
    }
  }

  std::string final_path = (std::filesystem::path(out_dir) / "final.rdck").string();
  if (!result.aborted) {
    save_checkpoint(params, cfg, cfg.train.seed, final_path);
    result.final_checkpoint = final_path;
  } else {
    result.final_checkpoint = last_good;
  }
  log_os.flush();
  return result;
}

/// Moving average of l_rec over the trailing `window` steps ending at step
/// `at` (1-based).
inline double smoothed_l_rec(const std::vector<LossReport>& log, int64_t at,
                             int64_t window = 500) {
  double acc = 0;
  int64_t count = 0;
  for (const auto& r : log)
    if (r.step > at - window && r.step <= at) {
      acc += r.l_rec;
      ++count;
    }
  return count ? acc / count : 0.0;
}

inline double smoothed_total(const std::vector<LossReport>& log, int64_t at,
                             int64_t window = 500) {
  double acc = 0;
  int64_t count = 0;
  for (const auto& r : log)
    if (r.step > at - window && r.step <= at) {
      acc += r.total;
      ++count;
    }
  return count ? acc / count : 0.0;
}

}  // namespace rdance
