#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rdance/beats.hpp"
#include "rdance/errors.hpp"
#include "rdance/long_history.hpp"
#include "rdance/motion.hpp"
#include "rdance/nn.hpp"
#include "rdance/style_encoder.hpp"
#include "rdance/tensor.hpp"

namespace rdance {

// ============================================================================
// Transformer motion generator.
//
// Input tokens: linear(pad_motion) + sinusoidal positions + learned padding
// embedding + learned time-to-arrival beat embedding. Style fuses through
// conditional layer normalization at every norm site (time-agnostic); the
// long-history embedding fuses through a multimodal adaptation gate after a
// configured layer, applied to the final n (prediction) positions. Two heads
// read the last n positions: absolute pose features and foot-contact logits.
// ============================================================================

enum class FusionMode { kCln, kMt };
enum class TrainScheme { kUnpaired, kPaired };

struct GeneratorConfig {
  int layers = 12;
  int heads = 10;
  int d_model = 640;
  int ffn = 1920;
  int horizon = 7;      // n
  int window_m = 10;    // long-history key window
  int w_ctx = 40;       // generator context frames
  int w_style = 40;     // style exemplar frames (2 s at 20 fps)
  int mag_layer = 3;    // MAG applied after this (1-based) layer
  float mag_beta = 1.0f;
  int tta_cap = 40;     // C; beat embedding table has C+1 rows
  float dropout = 0.1f;
  FusionMode fusion = FusionMode::kCln;
  bool long_history = true;
  bool residual_head = false;
  int joints = 24;
  int fps = 20;
  int history_cap = 1200;  // most recent frames kept during rollout

  int input_dim() const { return joints * 9 + 3; }

  void validate() const {
    if (layers < 1) throw Error(ErrorCode::kBadConfig, "layers < 1");
    if (d_model % heads != 0)
      throw Error(ErrorCode::kBadConfig, "d_model not divisible by heads");
    if (long_history && (mag_layer < 1 || mag_layer >= layers))
      throw Error(ErrorCode::kBadConfig, "mag_layer must be in [1, layers)");
    if (horizon < 1) throw Error(ErrorCode::kBadConfig, "horizon < 1");
    if (w_ctx < 1) throw Error(ErrorCode::kBadConfig, "w_ctx < 1");
    if (tta_cap < 1) throw Error(ErrorCode::kBadConfig, "tta_cap < 1");
    if (w_style < 1) throw Error(ErrorCode::kBadConfig, "w_style < 1");
  }
};

/// Repeat the last frame n times. Mask is 0 on real rows, 1 on padded rows.
struct PaddedMotion {
  std::vector<float> frames;  // (w+n) x dim
  std::vector<int> pad_mask;  // length w+n
  int rows = 0;
  int dim = 0;
};

inline PaddedMotion pad_motion(const float* frames, int w, int dim, int n) {
  if (w < 1) throw Error(ErrorCode::kShapeMismatch, "pad_motion: empty context");
  PaddedMotion p;
  p.rows = w + n;
  p.dim = dim;
  p.frames.resize(size_t(w + n) * dim);
  std::copy(frames, frames + size_t(w) * dim, p.frames.begin());
  for (int r = w; r < w + n; ++r)
    std::copy(frames + size_t(w - 1) * dim, frames + size_t(w) * dim,
              p.frames.begin() + size_t(r) * dim);
  p.pad_mask.assign(w + n, 0);
  for (int r = w; r < w + n; ++r) p.pad_mask[r] = 1;
  return p;
}

// ============================================================================
// Conditional layer normalization
// ============================================================================

/// One norm site: plain layer norm plus, in CLN mode, two one-hidden-layer
/// MLPs predicting dgamma/dbeta from the pooled style embedding.
template <typename T>
struct ClnSite {
  LayerNormParams<T> ln;
  Linear<T> gamma_h, gamma_o, beta_h, beta_o;
  bool conditional = false;

  static ClnSite create(ModelParams<T>& p, const std::string& path, int d,
                        int d_style, int hidden, bool conditional, Rng& rng) {
    ClnSite s;
    s.conditional = conditional;
    s.ln = LayerNormParams<T>::create(p, path + ".ln", d);
    if (conditional) {
      s.gamma_h = Linear<T>::create(p, path + ".dgamma.h", d_style, hidden, rng);
      s.gamma_o = Linear<T>::create(p, path + ".dgamma.o", hidden, d, rng);
      s.beta_h = Linear<T>::create(p, path + ".dbeta.h", d_style, hidden, rng);
      s.beta_o = Linear<T>::create(p, path + ".dbeta.o", hidden, d, rng);
    }
    return s;
  }

  /// style_pooled: 1 x d_style (ignored unless conditional).
  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& style_pooled) const {
    Tensor<T> xhat = normalize_rows(x, ln.eps);
    if (!conditional || !style_pooled.defined())
      return add_row(mul_row(xhat, ln.gamma), ln.beta);
    Tensor<T> dgamma = gamma_o.forward(relu(gamma_h.forward(style_pooled)));
    Tensor<T> dbeta = beta_o.forward(relu(beta_h.forward(style_pooled)));
    return add_row(mul_row(xhat, add(ln.gamma, dgamma)), add(ln.beta, dbeta));
  }
};

/// Standalone CLN per the norm-site formula (testing surface).
template <typename T>
Tensor<T> cln(const Tensor<T>& x, const Tensor<T>& h_style, const ClnSite<T>& site) {
  Tensor<T> pooled = avg_pool_time(h_style);
  return site.forward(x, pooled);
}

// ============================================================================
// Multimodal adaptation gate
// ============================================================================

template <typename T>
struct MagParams {
  Tensor<T> W_g;  // 2d x d
  Tensor<T> b_g;  // 1 x 1 (scalar)
  Tensor<T> W_h;  // d x d
  Tensor<T> b_h;  // 1 x 1 (scalar)

  static MagParams create(ModelParams<T>& p, const std::string& path, int d,
                          Rng& rng) {
    MagParams m;
    m.W_g = p.add(path + ".W_g", xavier_uniform<T>(2 * d, d, 2 * d, d, rng));
    m.b_g = p.add(path + ".b_g", Tensor<T>::zeros(1, 1));
    m.W_h = p.add(path + ".W_h", xavier_uniform<T>(d, d, d, d, rng));
    m.b_h = p.add(path + ".b_h", Tensor<T>::zeros(1, 1));
    return m;
  }
};

/// g = relu(W_g [z; e] + b_g); h = g * (W_h e) + b_h;
/// alpha = min(beta * ||z|| / ||h||, 1); out = z + alpha * h.
/// z and e_hist must both be (n x d); rows pair positionally.
template <typename T>
Tensor<T> mag_fuse(const Tensor<T>& z, const Tensor<T>& e_hist,
                   const MagParams<T>& mp, T beta_hyper) {
  if (z.rows() != e_hist.rows() || z.cols() != e_hist.cols())
    throw Error(ErrorCode::kShapeMismatch, "mag_fuse: z/e shape mismatch");
  Tensor<T> ze = concat_cols<T>({z, e_hist});
  Tensor<T> g = relu(add_scalar(matmul(ze, mp.W_g), mp.b_g));
  Tensor<T> h = add_scalar(mul(g, matmul(e_hist, mp.W_h)), mp.b_h);
  Tensor<T> ratio = div_elem(rowwise_l2norm(z), clamp_min(rowwise_l2norm(h), T(1e-8)));
  Tensor<T> alpha = clamp(scale(ratio, beta_hyper), T(0), T(1));
  return add(z, mul_col(h, alpha));
}

// ============================================================================
// Generator
// ============================================================================

template <typename T>
struct GeneratorOutput {
  Tensor<T> poses;           // n x (J*9+3)
  Tensor<T> contact_logits;  // n x 2
};

template <typename T>
struct GeneratorLayer {
  MultiHeadAttention<T> attn;
  FeedForward<T> ffn;
  ClnSite<T> norm1, norm2;

  static GeneratorLayer create(ModelParams<T>& p, const std::string& path,
                               const GeneratorConfig& cfg, Rng& rng) {
    GeneratorLayer l;
    bool conditional = cfg.fusion == FusionMode::kCln;
    l.attn = MultiHeadAttention<T>::create(p, path + ".attn", cfg.d_model,
                                           cfg.heads, T(cfg.dropout), rng);
    l.ffn = FeedForward<T>::create(p, path + ".ffn", cfg.d_model, cfg.ffn,
                                   T(cfg.dropout), rng);
    l.norm1 = ClnSite<T>::create(p, path + ".norm1", cfg.d_model, cfg.d_model,
                                 cfg.ffn, conditional, rng);
    l.norm2 = ClnSite<T>::create(p, path + ".norm2", cfg.d_model, cfg.d_model,
                                 cfg.ffn, conditional, rng);
    return l;
  }

  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& style_pooled,
                    DropoutCtx* ctx) const {
    Tensor<T> h = norm1.forward(add(x, attn.forward(x, x, x, ctx)), style_pooled);
    return norm2.forward(add(h, ffn.forward(h, ctx)), style_pooled);
  }
};

template <typename T>
class Generator {
 public:
  Generator() = default;

  Generator(ModelParams<T>& params, const GeneratorConfig& cfg, Rng& rng)
      : cfg_(cfg) {
    cfg.validate();
    in_proj_ = Linear<T>::create(params, "gen.in", cfg.input_dim(), cfg.d_model, rng);
    e_pad_ = params.add("gen.e_pad",
                        xavier_uniform<T>(2, cfg.d_model, 2, cfg.d_model, rng));
    e_beat_ = params.add("gen.e_beat",
                         xavier_uniform<T>(cfg.tta_cap + 1, cfg.d_model,
                                           cfg.tta_cap + 1, cfg.d_model, rng));
    for (int l = 0; l < cfg.layers; ++l)
      layers_.push_back(GeneratorLayer<T>::create(
          params, "gen.layer" + std::to_string(l), cfg, rng));
    if (cfg.long_history)
      mag_ = MagParams<T>::create(params, "gen.mag", cfg.d_model, rng);
    if (cfg.fusion == FusionMode::kMt)
      music_proj_ = Linear<T>::create(params, "gen.music_in",
                                      MusicFeatureTrack::kDim, cfg.d_model, rng);
    pose_head_ = Linear<T>::create(params, "gen.pose_head", cfg.d_model,
                                   cfg.input_dim(), rng);
    contact_head_ = Linear<T>::create(params, "gen.contact_head", cfg.d_model, 2, rng);
  }

  const GeneratorConfig& config() const { return cfg_; }
  const MagParams<T>& mag() const { return mag_; }

  /// One future-n prediction. context: w_ctx x D motion frames; tta: beat
  /// time-to-arrival over w_ctx+horizon positions; e_hist: n x d_model or
  /// undefined (treated as absent memory); h_style: w_style x d_model in CLN
  /// mode; music: extra conditioning tokens in MT mode.
  GeneratorOutput<T> step(const Tensor<T>& context, const std::vector<int>& tta,
                          const Tensor<T>& e_hist, const Tensor<T>& h_style,
                          const Tensor<T>& music, DropoutCtx* ctx) const {
    const int w = context.rows();
    const int n = cfg_.horizon;
    if (context.cols() != cfg_.input_dim())
      throw Error(ErrorCode::kShapeMismatch, "generator: context width");
    if (int(tta.size()) != w + n)
      throw Error(ErrorCode::kShapeMismatch, "generator: tta length");

    const int D = cfg_.input_dim();
    Tensor<T> pad_t;
    {
      std::vector<T> buf(size_t(w + n) * D);
      const auto& src = context.data();
      std::copy(src.begin(), src.end(), buf.begin());
      for (int r = w; r < w + n; ++r)
        std::copy(src.begin() + size_t(w - 1) * D, src.end(),
                  buf.begin() + size_t(r) * D);
      pad_t = Tensor<T>::from_data(w + n, D, std::move(buf));
    }
    std::vector<int> pad_mask(w + n, 0);
    for (int r = w; r < w + n; ++r) pad_mask[r] = 1;

    std::vector<int> tta_idx(tta.size());
    for (size_t i = 0; i < tta.size(); ++i)
      tta_idx[i] = std::clamp(tta[i], 0, cfg_.tta_cap);

    Tensor<T> tok = add(in_proj_.forward(pad_t),
                        sinusoidal_positions<T>(0, w + n, cfg_.d_model));
    tok = add(tok, embedding(e_pad_, pad_mask));
    tok = add(tok, embedding(e_beat_, tta_idx));

    Tensor<T> x = tok;
    if (cfg_.fusion == FusionMode::kMt) {
      if (!music.defined())
        throw Error(ErrorCode::kShapeMismatch, "mt fusion requires music tokens");
      Tensor<T> mtok = add(music_proj_.forward(music),
                           sinusoidal_positions<T>(w + n, music.rows(), cfg_.d_model));
      x = concat_rows(tok, mtok);
    }

    Tensor<T> style_pooled;
    if (cfg_.fusion == FusionMode::kCln) {
      if (!h_style.defined())
        throw Error(ErrorCode::kShapeMismatch, "cln fusion requires style embedding");
      style_pooled = avg_pool_time(h_style);
    }

    for (int l = 0; l < cfg_.layers; ++l) {
      x = layers_[l].forward(x, style_pooled, ctx);
      if (cfg_.long_history && l + 1 == cfg_.mag_layer) {
        Tensor<T> eh = e_hist.defined()
                           ? e_hist
                           : Tensor<T>::zeros(n, cfg_.d_model);
        Tensor<T> pre = rows(x, 0, w);
        Tensor<T> last = rows(x, w, n);
        Tensor<T> fused = mag_fuse(last, eh, mag_, T(cfg_.mag_beta));
        Tensor<T> tail;
        if (x.rows() > w + n) tail = rows(x, w + n, x.rows() - w - n);
        x = concat_rows(pre, fused);
        if (tail.defined()) x = concat_rows(x, tail);
      }
    }

    Tensor<T> out_positions = rows(x, w, n);
    GeneratorOutput<T> out;
    out.poses = pose_head_.forward(out_positions);
    if (cfg_.residual_head) {
      Tensor<T> base = rows(pad_t, w, n);
      out.poses = add(out.poses, base);
    }
    out.contact_logits = contact_head_.forward(out_positions);
    if (!all_finite(out.poses) || !all_finite(out.contact_logits))
      throw Error(ErrorCode::kNonFiniteActivation, "generator step");
    return out;
  }

 private:
  GeneratorConfig cfg_;
  Linear<T> in_proj_, music_proj_, pose_head_, contact_head_;
  Tensor<T> e_pad_, e_beat_;
  std::vector<GeneratorLayer<T>> layers_;
  MagParams<T> mag_;
};

// ============================================================================
// Autoregressive rollout
// ============================================================================

struct RolloutResult {
  MotionClip clip;
  ContactTrack contacts;
  bool completed = true;
  std::string note;
};

namespace detail {

template <typename T>
Tensor<T> rollout_history_embedding(const LongHistoryEncoder<T>& hist_enc,
                                    const std::vector<float>& frames, int T_cur,
                                    int dim, const GeneratorConfig& cfg) {
  int usable = std::min(T_cur, cfg.history_cap);
  if (!sufficient_history(usable, cfg.window_m, cfg.horizon)) return {};
  const float* start = frames.data() + size_t(T_cur - usable) * dim;
  std::vector<T> buf(size_t(usable) * dim);
  for (size_t i = 0; i < buf.size(); ++i) buf[i] = T(start[i]);
  Tensor<T> X = Tensor<T>::from_data(usable, dim, std::move(buf));
  return hist_enc.encode(X, cfg.window_m, cfg.horizon).e_hist;
}

}  // namespace detail

/// Deterministic autoregressive generation. Reads only the beat track and
/// the style embedding; music features never enter this path. stride may be
/// 1 (paper-faithful: keep the first predicted frame) up to horizon.
template <typename T>
RolloutResult rollout(const Generator<T>& gen,
                      const LongHistoryEncoder<T>& hist_enc,
                      const MotionClip& seed_motion, const BeatTrack& beats,
                      const Tensor<T>& h_style, int total_frames, int stride) {
  const GeneratorConfig& cfg = gen.config();
  const int D = cfg.input_dim();
  const int n = cfg.horizon;
  if (stride < 1 || stride > n)
    throw Error(ErrorCode::kBadConfig, "stride must be in [1, horizon]");
  if (seed_motion.T < cfg.w_ctx)
    throw Error(ErrorCode::kTooShort, "seed motion shorter than w_ctx");
  if (total_frames <= seed_motion.T)
    throw Error(ErrorCode::kBadConfig, "total_frames must exceed seed length");

  NoGradGuard no_grad;

  // TTA over the whole timeline; positions past the beat track get the cap.
  BeatTrack padded_beats = beats;
  if (padded_beats.flags.size() < size_t(total_frames + n))
    padded_beats.flags.resize(size_t(total_frames + n), 0);
  TTASequence tta = tta_encode(padded_beats, cfg.tta_cap);

  RolloutResult res;
  res.clip.J = cfg.joints;
  res.clip.fps = cfg.fps;
  res.clip.style = seed_motion.style;
  res.clip.clip_id = seed_motion.clip_id + "_gen";
  res.clip.frames.assign(seed_motion.frames.begin(),
                         seed_motion.frames.begin() + size_t(seed_motion.T) * D);
  res.contacts.labels.assign(size_t(seed_motion.T) * 2, 0);

  int T_cur = seed_motion.T;
  while (T_cur < total_frames) {
    Tensor<T> e_hist;
    if (cfg.long_history)
      e_hist = detail::rollout_history_embedding<T>(hist_enc, res.clip.frames,
                                                    T_cur, D, cfg);
    std::vector<T> ctx_buf(size_t(cfg.w_ctx) * D);
    const float* cstart = res.clip.frames.data() + size_t(T_cur - cfg.w_ctx) * D;
    for (size_t i = 0; i < ctx_buf.size(); ++i) ctx_buf[i] = T(cstart[i]);
    Tensor<T> context = Tensor<T>::from_data(cfg.w_ctx, D, std::move(ctx_buf));

    std::vector<int> tta_slice(tta.values.begin() + (T_cur - cfg.w_ctx),
                               tta.values.begin() + (T_cur + n));
    GeneratorOutput<T> out;
    try {
      out = gen.step(context, tta_slice, e_hist, h_style, {}, nullptr);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kNonFiniteActivation) {
        res.completed = false;
        res.note = e.what();
        break;
      }
      throw;
    }
    int take = std::min(stride, total_frames - T_cur);
    for (int r = 0; r < take; ++r) {
      for (int c = 0; c < D; ++c)
        res.clip.frames.push_back(float(out.poses(r, c)));
      for (int c = 0; c < 2; ++c) {
        double logit = double(out.contact_logits(r, c));
        res.contacts.labels.push_back(logit > 0 ? 1 : 0);
      }
    }
    T_cur += take;
  }
  res.clip.T = T_cur;
  res.contacts.T = T_cur;
  return res;
}

/// MT-fusion ablation rollout: same loop, but the aligned music window rides
/// along as extra tokens (this baseline has no beat/style disentanglement).
template <typename T>
RolloutResult rollout_mt(const Generator<T>& gen,
                         const LongHistoryEncoder<T>& hist_enc,
                         const MotionClip& seed_motion, const BeatTrack& beats,
                         const MusicFeatureTrack& music, int total_frames,
                         int stride) {
  const GeneratorConfig& cfg = gen.config();
  if (cfg.fusion != FusionMode::kMt)
    throw Error(ErrorCode::kBadConfig, "rollout_mt requires an mt-fusion model");
  const int D = cfg.input_dim();
  const int n = cfg.horizon;
  if (stride < 1 || stride > n)
    throw Error(ErrorCode::kBadConfig, "stride must be in [1, horizon]");
  if (seed_motion.T < cfg.w_ctx)
    throw Error(ErrorCode::kTooShort, "seed motion shorter than w_ctx");

  NoGradGuard no_grad;
  BeatTrack padded_beats = beats;
  if (padded_beats.flags.size() < size_t(total_frames + n))
    padded_beats.flags.resize(size_t(total_frames + n), 0);
  TTASequence tta = tta_encode(padded_beats, cfg.tta_cap);

  RolloutResult res;
  res.clip.J = cfg.joints;
  res.clip.fps = cfg.fps;
  res.clip.style = seed_motion.style;
  res.clip.clip_id = seed_motion.clip_id + "_gen";
  res.clip.frames.assign(seed_motion.frames.begin(),
                         seed_motion.frames.begin() + size_t(seed_motion.T) * D);
  res.contacts.labels.assign(size_t(seed_motion.T) * 2, 0);

  int T_cur = seed_motion.T;
  while (T_cur < total_frames) {
    Tensor<T> e_hist;
    if (cfg.long_history)
      e_hist = detail::rollout_history_embedding<T>(hist_enc, res.clip.frames,
                                                    T_cur, D, cfg);
    std::vector<T> ctx_buf(size_t(cfg.w_ctx) * D);
    const float* cstart = res.clip.frames.data() + size_t(T_cur - cfg.w_ctx) * D;
    for (size_t i = 0; i < ctx_buf.size(); ++i) ctx_buf[i] = T(cstart[i]);
    Tensor<T> context = Tensor<T>::from_data(cfg.w_ctx, D, std::move(ctx_buf));

    std::vector<int> tta_slice(tta.values.begin() + (T_cur - cfg.w_ctx),
                               tta.values.begin() + (T_cur + n));
    int m_lo = std::max(0, std::min(T_cur - cfg.w_ctx, music.T - (cfg.w_ctx + n)));
    int m_len = std::min(cfg.w_ctx + n, music.T - m_lo);
    Tensor<T> mtok = to_tensor<T>(music.slice(m_lo, m_len));

    GeneratorOutput<T> out;
    try {
      out = gen.step(context, tta_slice, e_hist, {}, mtok, nullptr);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kNonFiniteActivation) {
        res.completed = false;
        res.note = e.what();
        break;
      }
      throw;
    }
    int take = std::min(stride, total_frames - T_cur);
    for (int r = 0; r < take; ++r) {
      for (int c = 0; c < D; ++c)
        res.clip.frames.push_back(float(out.poses(r, c)));
      for (int c = 0; c < 2; ++c)
        res.contacts.labels.push_back(double(out.contact_logits(r, c)) > 0 ? 1 : 0);
    }
    T_cur += take;
  }
  res.clip.T = T_cur;
  res.contacts.T = T_cur;
  return res;
}

}  // namespace rdance
