#pragma once

// Fine-tuning of the cache adapter W_c and the text classifier W_t with
// cross-entropy + l1(W_c), exact analytic gradients and plain SGD.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <random>
#include <vector>

#include "cca/adapter.hpp"
#include "cca/crossmodal.hpp"
#include "cca/featurepack.hpp"
#include "cca/ica.hpp"
#include "cca/types.hpp"

namespace cca {

struct AblationFlags {
  bool no_ica = false;
  bool fix_cache_adapter = false;
  bool fix_text_classifier = false;
  bool no_fusion = false;
};

struct TrainConfig {
  int epochs = 20;
  std::size_t batch_size = 128;
  double lr_cache = 1e-3;
  double lr_text = 1e-4;
  double l1_lambda = 1e-4;
  std::uint64_t seed = 0;
  bool shuffle = true;

  double alpha = kDefaultAlpha;
  double beta = kDefaultBeta;
  double gamma = kDefaultGamma;
  double eta = kDefaultEta;
  double clip_scale = 1.0;
  double attn_scale = 1.0;

  AblationFlags ablation;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
/// Keys absent from `j` keep the values already in `config`.
void merge_json(const nlohmann::json& j, TrainConfig& config);

/// One minibatch. `raw` holds unit-norm encoder features (B x C) for the
/// cross-modal path; `disentangled` holds the same rows in cache key space.
struct Batch {
  Mat raw;
  Mat disentangled;
  LabelVector labels;
};

struct TrainState {
  CacheModel cache;
  CrossModalHead head;
  int epoch = 0;
  std::vector<double> loss_trace;
  std::mt19937_64 rng;
};

struct Gradients {
  Mat cache;  // M x M
  Mat text;   // N x C
};

/// Cache from the task (and ICA unless the no_ica ablation is set), text
/// weights from text_init, hyperparameters from the config. no_fusion zeroes
/// gamma and eta.
TrainState init_state(const FewShotTask& task, const IcaModel* ica, const TrainConfig& config);

/// Rows `indices` of the task's cache split as a batch.
Batch cache_batch(const FewShotTask& task, const CacheModel& cache,
                  const std::vector<std::size_t>& indices);

/// alpha * l1 + l2 with the batch itself as fusion context.
Mat forward(const TrainState& state, const Batch& batch);
Mat forward(const TrainState& state, const Batch& batch, const FusionContext& ctx);

/// Mean cross-entropy over the batch.
double cross_entropy(const Mat& logits, const LabelVector& labels);
/// cross_entropy + lambda * sum |W_c|.
double loss(const Mat& logits, const LabelVector& labels, const TrainState& state, double lambda);

/// Gradients of loss() at the batch-as-context forward. Freeze flags in the
/// config zero the corresponding gradient.
Gradients backward(const TrainState& state, const Batch& batch, const TrainConfig& config);

/// Throws NumericFailure on a non-finite gradient.
void sgd_step(TrainState& state, const Gradients& grads, const TrainConfig& config);

TrainState train(const FewShotTask& task, const IcaModel* ica, const TrainConfig& config);

struct GradCheckReport {
  double cache_error = 0.0;
  double text_error = 0.0;
  double max_error() const { return std::max(cache_error, text_error); }
};

/// Worst relative error |a - n| / max(|a|, |n|, 1e-8) between the analytic
/// gradient and central differences of loss() with the given step.
GradCheckReport finite_diff_check(const TrainState& state, const Batch& batch,
                                  const TrainConfig& config, double step);
/// Same, against caller-provided analytic gradients.
GradCheckReport finite_diff_check(const TrainState& state, const Batch& batch,
                                  const TrainConfig& config, double step,
                                  const Gradients& analytic);

struct Checkpoint {
  CacheModel cache;
  CrossModalHead head;
  bool disentangled = true;
};

/// Cache and head files plus train_log.json (per-epoch loss, config, seed).
void save_checkpoint(const TrainState& state, const TrainConfig& config,
                     const std::filesystem::path& dir, const nlohmann::json& extra = {});
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace cca
