#pragma once

// Inductive evaluation and validation-set grid search over (alpha, beta,
// gamma, eta).

#include <vector>

#include "cca/adapter.hpp"
#include "cca/crossmodal.hpp"
#include "cca/featurepack.hpp"
#include "cca/ica.hpp"
#include "cca/types.hpp"

namespace cca {

struct Hyperparams {
  double alpha = kDefaultAlpha;
  double beta = kDefaultBeta;
  double gamma = kDefaultGamma;
  double eta = kDefaultEta;

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

struct SearchGrid {
  std::vector<double> alpha;
  std::vector<double> beta;
  std::vector<double> gamma;
  std::vector<double> eta;

  /// alpha 0.5..10 (step 0.5), beta 1..10 (step 0.5), gamma/eta 0..1 (step 0.05).
  static SearchGrid defaults();
  void validate() const;
};

enum class SearchMode {
  TwoPass,  // alpha x beta at the head's gamma/eta, then gamma x eta at the best alpha/beta;
            // only second-pass rows are eligible as the best point
  Full,     // full Cartesian product
};

/// A labelled split in both feature spaces.
struct EvalSplit {
  Mat raw;           // unit-norm encoder features
  Mat disentangled;  // cache key space
  LabelVector labels;
};

EvalSplit make_split(const Mat& features, const LabelVector& labels, const IcaModel* ica);

/// Everything needed for inductive inference: the fusion context is fixed to
/// the cache features, so every query row is scored independently.
struct Predictor {
  CacheModel cache;
  CrossModalHead head;
  FusionContext context;
};

Predictor make_predictor(CacheModel cache, CrossModalHead head, const Mat& cache_features);

/// Final logits for every split row, computed in chunks of `batch_size` rows
/// (0 means a single chunk).
Mat predict_logits(const Predictor& p, const EvalSplit& split, const Hyperparams& hp,
                   std::size_t batch_size = 0);

/// Row argmax, ties resolved toward the lowest class index.
std::vector<std::size_t> argmax_rows(const Mat& logits);

double accuracy(const std::vector<std::size_t>& predicted, const LabelVector& labels);

/// Top-1 accuracy. Throws InvalidArgument on an empty split.
double evaluate(const Predictor& p, const EvalSplit& split, const Hyperparams& hp,
                std::size_t batch_size = 0);

struct SearchRow {
  Hyperparams params;
  double accuracy = 0.0;
};

struct SearchResult {
  Hyperparams best;
  double best_accuracy = 0.0;
  std::vector<SearchRow> table;  // evaluation order
};

/// Exhaustive evaluation; the best point is the first maximizer in table order.
SearchResult grid_search(const Predictor& p, const EvalSplit& split, const SearchGrid& grid,
                         SearchMode mode = SearchMode::TwoPass);

}  // namespace cca
