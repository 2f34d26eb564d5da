#pragma once

// Disentangled cache model: one-hot label cache over disentangled keys with a
// trainable M x M key adapter, exponential affinity kernel and logit mixing.

#include <filesystem>

#include "cca/featurepack.hpp"
#include "cca/ica.hpp"
#include "cca/types.hpp"

namespace cca {

inline constexpr double kDefaultBeta = 5.5;
inline constexpr double kDefaultAlpha = 1.0;

struct CacheModel {
  Mat keys;     // NK x M, rows unit-norm
  Mat values;   // N x NK, one-hot columns
  Mat adapter;  // M x M
  double beta = kDefaultBeta;
  double alpha = kDefaultAlpha;

  std::size_t n_classes() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(keys.cols()); }
};

/// Maps raw features into the cache key space. With a model this is the
/// normalized ICA transform; without one (the no-ICA ablation) it is plain
/// row normalization of the raw features.
Mat disentangle(const IcaModel* ica, const Mat& features);

CacheModel build_cache(const FewShotTask& task, const IcaModel* ica);

/// keys * adapter; not re-normalized.
Mat adapted_keys(const CacheModel& cache);

/// exp(-beta (1 - query_d * adapted_keysᵀ)), B x NK.
Mat affinity(const Mat& query_d, const CacheModel& cache);
Mat affinity(const Mat& query_d, const CacheModel& cache, double beta);

/// S * valuesᵀ, B x N.
Mat cache_logits(const Mat& affinities, const CacheModel& cache);

/// alpha * l1 + l2.
Mat combine_logits(const Mat& l1, const Mat& l2, double alpha);

/// Writes keys.ccaf, values.ccaf, adapter.ccaf and cache.json into `dir`.
void save_cache(const CacheModel& cache, const std::filesystem::path& dir);
CacheModel load_cache(const std::filesystem::path& dir);

}  // namespace cca
