#include "cca/search.hpp"

#include "cca/error.hpp"

namespace cca {

namespace {

std::vector<double> linspace_step(double start, double step, int count) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(start + step * i);
  return out;
}

Mat l1_for(const Predictor& p, const Mat& disentangled, double beta) {
  return cache_logits(affinity(disentangled, p.cache, beta), p.cache);
}

Mat final_logits(const Mat& l1, const CrossModalTerms& terms, const Hyperparams& hp) {
  return combine_logits(l1, assemble_l2(terms, hp.gamma, hp.eta), hp.alpha);
}

}  // namespace

SearchGrid SearchGrid::defaults() {
  SearchGrid g;
  g.alpha = linspace_step(0.5, 0.5, 20);
  g.beta = linspace_step(1.0, 0.5, 19);
  g.gamma = linspace_step(0.0, 0.05, 21);
  g.eta = linspace_step(0.0, 0.05, 21);
  return g;
}

void SearchGrid::validate() const {
  if (alpha.empty() || beta.empty() || gamma.empty() || eta.empty())
    throw Error(ErrorKind::InvalidArgument, "search grid: every axis needs at least one value");
  for (double b : beta)
    if (!(b > 0.0)) throw Error(ErrorKind::InvalidArgument, "search grid: beta values must be > 0");
}

EvalSplit make_split(const Mat& features, const LabelVector& labels, const IcaModel* ica) {
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    throw Error(ErrorKind::DimensionMismatch, "make_split: features/labels row count differ");
  EvalSplit split;
  split.raw = l2_normalize_rows(features);
  split.disentangled = disentangle(ica, features);
  split.labels = labels;
  return split;
}

Predictor make_predictor(CacheModel cache, CrossModalHead head, const Mat& cache_features) {
  if (static_cast<std::size_t>(cache_features.cols()) != head.dim())
    throw Error(ErrorKind::DimensionMismatch, "make_predictor: cache features have " +
                                                  std::to_string(cache_features.cols()) +
                                                  " columns, head expects " +
                                                  std::to_string(head.dim()));
  if (cache.n_classes() != head.n_classes())
    throw Error(ErrorKind::DimensionMismatch, "make_predictor: cache and head disagree on N");
  return Predictor{std::move(cache), std::move(head), FusionContext{cache_features}};
}

Mat predict_logits(const Predictor& p, const EvalSplit& split, const Hyperparams& hp,
                   std::size_t batch_size) {
  const Eigen::Index n = split.raw.rows();
  if (batch_size == 0 || static_cast<Eigen::Index>(batch_size) >= n) {
    return final_logits(l1_for(p, split.disentangled, hp.beta),
                        crossmodal_terms(split.raw, p.head, p.context), hp);
  }
  Mat out(n, static_cast<Eigen::Index>(p.head.n_classes()));
  const auto step = static_cast<Eigen::Index>(batch_size);
  for (Eigen::Index start = 0; start < n; start += step) {
    const Eigen::Index rows = std::min(step, n - start);
    const Mat raw = split.raw.middleRows(start, rows);
    const Mat dis = split.disentangled.middleRows(start, rows);
    out.middleRows(start, rows) =
        final_logits(l1_for(p, dis, hp.beta), crossmodal_terms(raw, p.head, p.context), hp);
  }
  return out;
}

std::vector<std::size_t> argmax_rows(const Mat& logits) {
  std::vector<std::size_t> out(static_cast<std::size_t>(logits.rows()), 0);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < logits.cols(); ++j)
      if (logits(i, j) > logits(i, best)) best = j;
    out[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
  }
  return out;
}

double accuracy(const std::vector<std::size_t>& predicted, const LabelVector& labels) {
  if (labels.empty()) throw Error(ErrorKind::InvalidArgument, "accuracy: empty split");
  if (predicted.size() != labels.size())
    throw Error(ErrorKind::DimensionMismatch, "accuracy: prediction/label count differ");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double evaluate(const Predictor& p, const EvalSplit& split, const Hyperparams& hp,
                std::size_t batch_size) {
  if (split.labels.empty()) throw Error(ErrorKind::InvalidArgument, "evaluate: empty split");
  return accuracy(argmax_rows(predict_logits(p, split, hp, batch_size)), split.labels);
}

SearchResult grid_search(const Predictor& p, const EvalSplit& split, const SearchGrid& grid,
                         SearchMode mode) {
  grid.validate();
  if (split.labels.empty()) throw Error(ErrorKind::InvalidArgument, "grid_search: empty split");

  // l2 does not depend on alpha or beta, l1 only on beta.
  const CrossModalTerms terms = crossmodal_terms(split.raw, p.head, p.context);
  std::vector<Mat> l1_by_beta;
  l1_by_beta.reserve(grid.beta.size());
  for (double beta : grid.beta) l1_by_beta.push_back(l1_for(p, split.disentangled, beta));

  SearchResult result;
  bool have_best = false;
  // Only rows that are grid points may become the reported best.
  auto score = [&](std::size_t beta_idx, const Hyperparams& hp, bool candidate) {
    const double acc = accuracy(argmax_rows(final_logits(l1_by_beta[beta_idx], terms, hp)),
                                split.labels);
    result.table.push_back({hp, acc});
    if (candidate && (!have_best || acc > result.best_accuracy)) {
      have_best = true;
      result.best = hp;
      result.best_accuracy = acc;
    }
    return acc;
  };

  if (mode == SearchMode::Full) {
    for (double alpha : grid.alpha)
      for (std::size_t bi = 0; bi < grid.beta.size(); ++bi)
        for (double gamma : grid.gamma)
          for (double eta : grid.eta) score(bi, {alpha, grid.beta[bi], gamma, eta}, true);
    return result;
  }

  std::size_t best_beta_idx = 0;
  double best_alpha = grid.alpha.front();
  double pass_best = -1.0;
  for (double alpha : grid.alpha) {
    for (std::size_t bi = 0; bi < grid.beta.size(); ++bi) {
      const double acc = score(bi, {alpha, grid.beta[bi], p.head.gamma, p.head.eta}, false);
      if (acc > pass_best) {
        pass_best = acc;
        best_beta_idx = bi;
        best_alpha = alpha;
      }
    }
  }
  for (double gamma : grid.gamma)
    for (double eta : grid.eta)
      score(best_beta_idx, {best_alpha, grid.beta[best_beta_idx], gamma, eta}, true);
  return result;
}

}  // namespace cca
