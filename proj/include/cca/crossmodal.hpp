#pragma once

// Text-classifier logits and bidirectional cross-attention fusion.
//
//   l2 = tau * Q Wtᵀ + gamma * Q Wt* + eta * Q* Wtᵀ
//   Wt* = (softmax(s * Wt Xᵀ) X)ᵀ     text rows attend over the K/V features X
//   Q*  = softmax(s * Q Wtᵀ) Wt        query rows attend over the text rows
//
// Softmax is taken per row, over the attended (key) axis.

#include <filesystem>

#include "cca/types.hpp"

namespace cca {

inline constexpr double kDefaultGamma = 0.5;
inline constexpr double kDefaultEta = 0.5;

struct CrossModalHead {
  Mat text_weights;  // N x C
  double gamma = kDefaultGamma;
  double eta = kDefaultEta;
  double clip_scale = 1.0;
  double attn_scale = 1.0;

  std::size_t n_classes() const { return static_cast<std::size_t>(text_weights.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(text_weights.cols()); }
};

/// K/V source for the text-side attention: the current batch while training,
/// the cache features at evaluation time.
struct FusionContext {
  Mat kv_features;  // |X| x C
};

// The three l2 components before weighting, each B x N.
struct CrossModalTerms {
  Mat clip;
  Mat text_fused;
  Mat image_fused;
};

Mat softmax_rows(const Mat& scores);

/// N x |X| attention of text rows over the context features.
Mat text_attention(const CrossModalHead& head, const FusionContext& ctx);
/// B x N attention of query rows over the text rows.
Mat image_attention(const Mat& query, const CrossModalHead& head);

Mat clip_logits(const Mat& query, const CrossModalHead& head);
/// C x N
Mat fuse_text(const CrossModalHead& head, const FusionContext& ctx);
/// B x C
Mat fuse_image(const Mat& query, const CrossModalHead& head);

CrossModalTerms crossmodal_terms(const Mat& query, const CrossModalHead& head,
                                 const FusionContext& ctx);
Mat assemble_l2(const CrossModalTerms& terms, double gamma, double eta);
Mat crossmodal_logits(const Mat& query, const CrossModalHead& head, const FusionContext& ctx);

/// Writes text_weights.ccaf and head.json into `dir`.
void save_head(const CrossModalHead& head, const std::filesystem::path& dir);
CrossModalHead load_head(const std::filesystem::path& dir);

}  // namespace cca
