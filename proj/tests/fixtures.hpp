#pragma once

// Small synthetic problems shared by the trainer, search and acceptance tests.

#include <numeric>
#include <random>

#include "cca/featurepack.hpp"
#include "cca/ica.hpp"
#include "cca/synth.hpp"
#include "cca/trainer.hpp"

namespace fixture {

struct Problem {
  cca::GenerativeSpec spec;
  cca::FewShotTask task;
  cca::IcaModel ica;
};

inline cca::GenerativeSpec labelled_spec(std::size_t n_classes, std::size_t m_true, std::size_t dim,
                                         std::uint64_t seed, double offset = 1.0) {
  cca::GenerativeSpec spec = cca::make_spec(m_true, dim, cca::LatentDist::Laplace, offset, seed);
  spec.label_rule.latents = {0, 1};
  spec.label_rule.weights = {1.0, 1.0};
  spec.label_rule.thresholds = cca::balanced_thresholds(spec, n_classes);
  return spec;
}

inline Problem make_problem(std::size_t n_classes, std::size_t shots, std::size_t m_true,
                            std::size_t dim, std::uint64_t seed, std::size_t n_val = 200,
                            std::size_t n_test = 400, std::size_t n_source = 10000) {
  Problem p;
  p.spec = labelled_spec(n_classes, m_true, dim, seed);
  cca::TaskSizes sizes;
  sizes.shots = shots;
  sizes.n_val = n_val;
  sizes.n_test = n_test;
  p.task = cca::make_task(p.spec, sizes);
  const cca::Mat source = cca::l2_normalize_rows(cca::sample(p.spec, n_source, 5).features);
  cca::IcaConfig cfg;
  cfg.n_components = m_true;
  cfg.seed = seed;
  p.ica = cca::fit_ica(source, cfg);
  return p;
}

// The small gradient-check instance: every hyperparameter nonzero, weights off
// their initial values so no |W| term sits at a kink.
struct GradInstance {
  cca::TrainConfig config;
  cca::TrainState state;
  cca::Batch batch;
};

inline GradInstance grad_instance(std::uint64_t seed, double lambda = 1e-2) {
  const Problem p = make_problem(4, 2, 6, 12, seed, 0, 0, 2000);
  GradInstance g;
  g.config.alpha = 1.3;
  g.config.beta = 2.0;
  g.config.gamma = 0.7;
  g.config.eta = 0.4;
  g.config.attn_scale = 2.0;
  g.config.clip_scale = 3.0;
  g.config.l1_lambda = lambda;
  g.config.seed = seed;
  g.state = cca::init_state(p.task, &p.ica, g.config);
  std::mt19937_64 rng(seed + 1000);
  std::normal_distribution<double> jitter(0.0, 0.05);
  for (auto* w : {&g.state.cache.adapter, &g.state.head.text_weights})
    for (Eigen::Index i = 0; i < w->rows(); ++i)
      for (Eigen::Index j = 0; j < w->cols(); ++j) (*w)(i, j) += jitter(rng);
  g.batch = cca::cache_batch(p.task, g.state.cache, {0, 3, 4, 6, 7});
  return g;
}

inline std::vector<std::size_t> iota(std::size_t n, std::size_t start = 0) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), start);
  return v;
}

}  // namespace fixture
