#include "cca/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cca/error.hpp"

namespace cca {

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorKind::InvalidArgument, "train: epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorKind::InvalidArgument, "train: batch_size must be >= 1");
  if (!(lr_cache > 0.0) || !(lr_text > 0.0))
    throw Error(ErrorKind::InvalidArgument, "train: learning rates must be > 0");
  if (!(l1_lambda >= 0.0)) throw Error(ErrorKind::InvalidArgument, "train: l1_lambda must be >= 0");
  if (!(beta > 0.0)) throw Error(ErrorKind::InvalidArgument, "train: beta must be > 0");
  if (!(alpha >= 0.0) || !(gamma >= 0.0) || !(eta >= 0.0))
    throw Error(ErrorKind::InvalidArgument, "train: alpha, gamma, eta must be >= 0");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"lr_cache", c.lr_cache},
      {"lr_text", c.lr_text},
      {"l1_lambda", c.l1_lambda},
      {"seed", c.seed},
      {"shuffle", c.shuffle},
      {"alpha", c.alpha},
      {"beta", c.beta},
      {"gamma", c.gamma},
      {"eta", c.eta},
      {"clip_scale", c.clip_scale},
      {"attn_scale", c.attn_scale},
      {"no_ica", c.ablation.no_ica},
      {"fix_cache_adapter", c.ablation.fix_cache_adapter},
      {"fix_text_classifier", c.ablation.fix_text_classifier},
      {"no_fusion", c.ablation.no_fusion},
  };
}

void merge_json(const nlohmann::json& j, TrainConfig& c) {
  auto take = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  try {
    take("epochs", c.epochs);
    take("batch_size", c.batch_size);
    take("lr_cache", c.lr_cache);
    take("lr_text", c.lr_text);
    take("l1_lambda", c.l1_lambda);
    take("seed", c.seed);
    take("shuffle", c.shuffle);
    take("alpha", c.alpha);
    take("beta", c.beta);
    take("gamma", c.gamma);
    take("eta", c.eta);
    take("clip_scale", c.clip_scale);
    take("attn_scale", c.attn_scale);
    take("no_ica", c.ablation.no_ica);
    take("fix_cache_adapter", c.ablation.fix_cache_adapter);
    take("fix_text_classifier", c.ablation.fix_text_classifier);
    take("no_fusion", c.ablation.no_fusion);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, "train config: " + std::string(e.what()));
  }
}

TrainState init_state(const FewShotTask& task, const IcaModel* ica, const TrainConfig& config) {
  config.validate();
  if (!config.ablation.no_ica && ica == nullptr)
    throw Error(ErrorKind::InvalidArgument, "train: an ICA model is required unless no_ica is set");
  TrainState state;
  state.cache = build_cache(task, config.ablation.no_ica ? nullptr : ica);
  state.cache.alpha = config.alpha;
  state.cache.beta = config.beta;
  state.head.text_weights = task.text_init;
  state.head.gamma = config.ablation.no_fusion ? 0.0 : config.gamma;
  state.head.eta = config.ablation.no_fusion ? 0.0 : config.eta;
  state.head.clip_scale = config.clip_scale;
  state.head.attn_scale = config.attn_scale;
  state.rng.seed(config.seed);
  return state;
}

Batch cache_batch(const FewShotTask& task, const CacheModel& cache,
                  const std::vector<std::size_t>& indices) {
  Batch batch;
  const auto b = static_cast<Eigen::Index>(indices.size());
  batch.raw.resize(b, task.cache_features.cols());
  batch.disentangled.resize(b, cache.keys.cols());
  batch.labels.resize(indices.size());
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto src = static_cast<Eigen::Index>(indices[static_cast<std::size_t>(i)]);
    batch.raw.row(i) = task.cache_features.row(src);
    batch.disentangled.row(i) = cache.keys.row(src);
    batch.labels[static_cast<std::size_t>(i)] = task.cache_labels[static_cast<std::size_t>(src)];
  }
  return batch;
}

namespace {

// Intermediates of one forward pass, reused by the backward pass.
struct ForwardPass {
  Mat affinities;      // B x NK
  Mat l1;              // B x N
  Mat text_attention;  // N x |X|
  Mat query_context;   // B x |X|, Q Xᵀ
  Mat image_attention; // B x N
  Mat text_gram;       // N x N, Wt Wtᵀ
  Mat logits;          // B x N
};

ForwardPass run_forward(const TrainState& state, const Batch& batch, const FusionContext& ctx) {
  const CacheModel& cache = state.cache;
  const CrossModalHead& head = state.head;
  if (batch.raw.rows() != batch.disentangled.rows())
    throw Error(ErrorKind::DimensionMismatch, "forward: raw and disentangled batch sizes differ");

  ForwardPass f;
  f.affinities = affinity(batch.disentangled, cache);
  f.l1 = cache_logits(f.affinities, cache);
  f.text_attention = text_attention(head, ctx);
  f.query_context = batch.raw * ctx.kv_features.transpose();
  f.image_attention = image_attention(batch.raw, head);
  f.text_gram = head.text_weights * head.text_weights.transpose();

  CrossModalTerms terms;
  terms.clip = clip_logits(batch.raw, head);
  terms.text_fused = batch.raw * (f.text_attention * ctx.kv_features).transpose();
  terms.image_fused = f.image_attention * f.text_gram;
  f.logits = combine_logits(f.l1, assemble_l2(terms, head.gamma, head.eta), cache.alpha);
  return f;
}

// Backprop through a row softmax: dZ = P .* (dP - rowsum(dP .* P)).
Mat softmax_rows_backward(const Mat& probs, const Mat& d_probs) {
  const Vec inner = probs.cwiseProduct(d_probs).rowwise().sum();
  return probs.cwiseProduct(d_probs.colwise() - inner);
}

Mat l1_subgradient(const Mat& w) {
  return w.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Gradients analytic_gradients(const TrainState& state, const Batch& batch, const FusionContext& ctx,
                             double lambda) {
  const CacheModel& cache = state.cache;
  const CrossModalHead& head = state.head;
  const ForwardPass f = run_forward(state, batch, ctx);
  const auto b = static_cast<double>(batch.raw.rows());

  // dLoss/dlogits for mean cross-entropy.
  Mat d_logits = softmax_rows(f.logits);
  for (std::size_t i = 0; i < batch.labels.size(); ++i)
    d_logits(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(batch.labels[i])) -= 1.0;
  d_logits /= b;

  Gradients g;

  // Cache path: l1 = S Lᵀ, S = exp(-beta (1 - Qd (keys Wc)ᵀ)).
  const Mat d_affinity = cache.alpha * d_logits * cache.values;
  const Mat d_dots = cache.beta * d_affinity.cwiseProduct(f.affinities);
  const Mat d_adapted = d_dots.transpose() * batch.disentangled;  // NK x M
  g.cache = cache.keys.transpose() * d_adapted + lambda * l1_subgradient(cache.adapter);

  // Text path, first term: tau Q Wtᵀ.
  g.text = head.clip_scale * d_logits.transpose() * batch.raw;

  // Second term: gamma (Q Xᵀ) P1ᵀ with P1 = softmax(s Wt Xᵀ).
  if (head.gamma != 0.0) {
    const Mat d_p1 = head.gamma * d_logits.transpose() * f.query_context;
    const Mat d_z1 = softmax_rows_backward(f.text_attention, d_p1);
    g.text += head.attn_scale * d_z1 * ctx.kv_features;
  }

  // Third term: eta P2 (Wt Wtᵀ) with P2 = softmax(s Q Wtᵀ).
  if (head.eta != 0.0) {
    const Mat d_gram = head.eta * f.image_attention.transpose() * d_logits;
    g.text += (d_gram + d_gram.transpose()) * head.text_weights;
    const Mat d_p2 = head.eta * d_logits * f.text_gram;
    const Mat d_z2 = softmax_rows_backward(f.image_attention, d_p2);
    g.text += head.attn_scale * d_z2.transpose() * batch.raw;
  }
  return g;
}

double relative_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

}  // namespace

Mat forward(const TrainState& state, const Batch& batch) {
  return forward(state, batch, FusionContext{batch.raw});
}

Mat forward(const TrainState& state, const Batch& batch, const FusionContext& ctx) {
  return run_forward(state, batch, ctx).logits;
}

double cross_entropy(const Mat& logits, const LabelVector& labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size())
    throw Error(ErrorKind::DimensionMismatch, "cross_entropy: logits/labels row count differ");
  if (labels.empty()) throw Error(ErrorKind::InvalidArgument, "cross_entropy: empty batch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const auto y = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]);
    if (y >= logits.cols())
      throw Error(ErrorKind::InvalidArgument, "cross_entropy: label out of range");
    const double peak = logits.row(i).maxCoeff();
    const double lse = peak + std::log((logits.row(i).array() - peak).exp().sum());
    total += lse - logits(i, y);
  }
  return total / static_cast<double>(logits.rows());
}

double loss(const Mat& logits, const LabelVector& labels, const TrainState& state, double lambda) {
  return cross_entropy(logits, labels) + lambda * state.cache.adapter.cwiseAbs().sum();
}

Gradients backward(const TrainState& state, const Batch& batch, const TrainConfig& config) {
  Gradients g = analytic_gradients(state, batch, FusionContext{batch.raw}, config.l1_lambda);
  if (config.ablation.fix_cache_adapter) g.cache.setZero();
  if (config.ablation.fix_text_classifier) g.text.setZero();
  return g;
}

void sgd_step(TrainState& state, const Gradients& grads, const TrainConfig& config) {
  auto check = [](const Mat& g, const char* name) {
    if (!g.allFinite()) {
      std::ostringstream msg;
      msg << "sgd_step: non-finite gradient for " << name << " (" << g.rows() << "x" << g.cols()
          << ", max |finite entry| "
          << g.unaryExpr([](double v) { return std::isfinite(v) ? std::abs(v) : 0.0; }).maxCoeff()
          << ")";
      throw Error(ErrorKind::NumericFailure, msg.str());
    }
  };
  check(grads.cache, "W_c");
  check(grads.text, "W_t");
  if (!config.ablation.fix_cache_adapter) state.cache.adapter -= config.lr_cache * grads.cache;
  if (!config.ablation.fix_text_classifier) state.head.text_weights -= config.lr_text * grads.text;
}

TrainState train(const FewShotTask& task, const IcaModel* ica, const TrainConfig& config) {
  TrainState state = init_state(task, ica, config);
  std::vector<std::size_t> order(static_cast<std::size_t>(task.cache_features.rows()));
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle) std::shuffle(order.begin(), order.end(), state.rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(stop));
      const Batch batch = cache_batch(task, state.cache, idx);
      const Mat logits = forward(state, batch);
      epoch_loss += loss(logits, batch.labels, state, config.l1_lambda) *
                    static_cast<double>(idx.size());
      sgd_step(state, backward(state, batch, config), config);
    }
    epoch_loss /= static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss))
      throw Error(ErrorKind::NumericFailure, "train: non-finite loss at epoch " +
                                                 std::to_string(epoch));
    state.loss_trace.push_back(epoch_loss);
    state.epoch = epoch + 1;
  }
  return state;
}

GradCheckReport finite_diff_check(const TrainState& state, const Batch& batch,
                                  const TrainConfig& config, double step) {
  const Gradients analytic =
      analytic_gradients(state, batch, FusionContext{batch.raw}, config.l1_lambda);
  return finite_diff_check(state, batch, config, step, analytic);
}

GradCheckReport finite_diff_check(const TrainState& state, const Batch& batch,
                                  const TrainConfig& config, double step,
                                  const Gradients& analytic) {
  TrainState probe = state;
  auto objective = [&]() { return loss(forward(probe, batch), batch.labels, probe, config.l1_lambda); };
  auto worst = [&](Mat& param, const Mat& grad) {
    double err = 0.0;
    for (Eigen::Index i = 0; i < param.rows(); ++i) {
      for (Eigen::Index j = 0; j < param.cols(); ++j) {
        const double saved = param(i, j);
        param(i, j) = saved + step;
        const double up = objective();
        param(i, j) = saved - step;
        const double down = objective();
        param(i, j) = saved;
        err = std::max(err, relative_error(grad(i, j), (up - down) / (2.0 * step)));
      }
    }
    return err;
  };
  GradCheckReport report;
  report.cache_error = worst(probe.cache.adapter, analytic.cache);
  report.text_error = worst(probe.head.text_weights, analytic.text);
  return report;
}

void save_checkpoint(const TrainState& state, const TrainConfig& config,
                     const std::filesystem::path& dir, const nlohmann::json& extra) {
  save_cache(state.cache, dir);
  save_head(state.head, dir);
  nlohmann::json log;
  log["config"] = to_json(config);
  log["seed"] = config.seed;
  log["epochs_run"] = state.epoch;
  log["loss_trace"] = state.loss_trace;
  log["disentangled"] = !config.ablation.no_ica;
  for (const auto& [key, value] : extra.items()) log[key] = value;
  std::ofstream out(dir / "train_log.json");
  if (!out) throw Error(ErrorKind::Io, "cannot write " + (dir / "train_log.json").string());
  out << log.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  Checkpoint ckpt;
  ckpt.cache = load_cache(dir);
  ckpt.head = load_head(dir);
  std::ifstream in(dir / "train_log.json");
  if (!in) throw Error(ErrorKind::Io, "cannot open " + (dir / "train_log.json").string());
  try {
    nlohmann::json log;
    in >> log;
    ckpt.disentangled = log.at("disentangled").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, "train_log.json: " + std::string(e.what()));
  }
  if (ckpt.head.n_classes() != ckpt.cache.n_classes())
    throw Error(ErrorKind::DimensionMismatch, "checkpoint: head and cache disagree on N");
  return ckpt;
}

}  // namespace cca
