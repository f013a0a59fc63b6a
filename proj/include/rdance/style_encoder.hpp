#pragma once

#include <string>
#include <vector>

#include "rdance/errors.hpp"
#include "rdance/motion.hpp"
#include "rdance/nn.hpp"
#include "rdance/tensor.hpp"

namespace rdance {

// ============================================================================
// Style exemplar encoders.
//
// Music and motion exemplars (fixed w_style-frame slices) pass through an
// input projection, sinusoidal positions, and a 3-layer bidirectional
// transformer. Both encoders share the architecture; only the input width
// differs. The integrated style embedding is the elementwise sum.
// ============================================================================

template <typename T>
class StyleEncoder {
 public:
  static constexpr int kLayers = 3;

  StyleEncoder() = default;

  StyleEncoder(ModelParams<T>& params, const std::string& path, int input_dim,
               int d_model, int heads, int ffn, int w_style, T dropout_p,
               Rng& rng)
      : input_dim_(input_dim), d_model_(d_model), w_style_(w_style) {
    in_proj_ = Linear<T>::create(params, path + ".in", input_dim, d_model, rng);
    for (int l = 0; l < kLayers; ++l)
      layers_.push_back(EncoderLayer<T>::create(
          params, path + ".layer" + std::to_string(l), d_model, heads, ffn,
          dropout_p, rng));
  }

  int w_style() const { return w_style_; }
  int d_model() const { return d_model_; }

  /// Raw features (w_style x input_dim) -> embedding (w_style x d_model).
  Tensor<T> forward(const Tensor<T>& slice, DropoutCtx* ctx) const {
    if (slice.rows() != w_style_ || slice.cols() != input_dim_)
      throw Error(ErrorCode::kBadLength,
                  "style exemplar must be " + std::to_string(w_style_) + " x " +
                      std::to_string(input_dim_));
    Tensor<T> h = add(in_proj_.forward(slice),
                      sinusoidal_positions<T>(0, w_style_, d_model_));
    for (const auto& layer : layers_) h = layer.forward(h, ctx);
    return h;
  }

 private:
  int input_dim_ = 0, d_model_ = 0, w_style_ = 0;
  Linear<T> in_proj_;
  std::vector<EncoderLayer<T>> layers_;
};

template <typename T>
Tensor<T> to_tensor(const MusicFeatureTrack& slice) {
  std::vector<T> data(slice.frames.size());
  for (size_t i = 0; i < data.size(); ++i) data[i] = T(slice.frames[i]);
  return Tensor<T>::from_data(slice.T, MusicFeatureTrack::kDim, std::move(data));
}

template <typename T>
Tensor<T> to_tensor(const MotionClip& slice) {
  std::vector<T> data(slice.frames.size());
  for (size_t i = 0; i < data.size(); ++i) data[i] = T(slice.frames[i]);
  return Tensor<T>::from_data(slice.T, slice.dim(), std::move(data));
}

/// H_style = H_music + H_motion (elementwise).
template <typename T>
Tensor<T> style_embedding(const Tensor<T>& h_music, const Tensor<T>& h_motion) {
  return add(h_music, h_motion);
}

/// Hinge triplet loss on mean-pooled music embeddings:
/// max(||a-p|| - ||a-n|| + margin, 0).
template <typename T>
Tensor<T> triplet_loss(const StyleEncoder<T>& music_encoder,
                       const Tensor<T>& anchor, const Tensor<T>& positive,
                       const Tensor<T>& negative, T margin, DropoutCtx* ctx) {
  Tensor<T> a = avg_pool_time(music_encoder.forward(anchor, ctx));
  Tensor<T> p = avg_pool_time(music_encoder.forward(positive, ctx));
  Tensor<T> n = avg_pool_time(music_encoder.forward(negative, ctx));
  Tensor<T> d_pos = rowwise_l2norm(sub(a, p));  // 1x1
  Tensor<T> d_neg = rowwise_l2norm(sub(a, n));
  return relu(add_const(sub(d_pos, d_neg), margin));
}

/// The same hinge on raw embedding vectors (shared by tests and training).
template <typename T>
Tensor<T> triplet_hinge(const Tensor<T>& a, const Tensor<T>& p,
                        const Tensor<T>& n, T margin) {
  return relu(add_const(sub(rowwise_l2norm(sub(a, p)), rowwise_l2norm(sub(a, n))), margin));
}

}  // namespace rdance
