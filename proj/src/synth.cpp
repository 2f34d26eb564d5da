#include "cca/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "cca/error.hpp"

namespace cca {

namespace {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

// Draws latent/feature rows one at a time from a single stream.
class RowSampler {
 public:
  RowSampler(const GenerativeSpec& spec, std::uint64_t stream)
      : spec_(spec), rng_(make_rng(spec.seed, stream)) {}

  void draw(Eigen::Ref<RowVec> z, Eigen::Ref<RowVec> x) {
    for (std::size_t i = 0; i < spec_.n_latents; ++i)
      z(static_cast<Eigen::Index>(i)) = draw_latent(spec_.latent[i]);
    x = z * spec_.mixing.transpose() + spec_.offset.transpose();
    if (spec_.hypersphere) {
      const double norm = x.norm();
      if (norm > 0.0) x /= norm;
    }
  }

 private:
  double draw_latent(LatentDist d) {
    switch (d) {
      case LatentDist::Laplace: {
        // Inverse CDF with scale 1/sqrt(2) for unit variance.
        const double u = uniform_(rng_) - 0.5;
        const double b = 1.0 / std::sqrt(2.0);
        return -b * (u < 0 ? -1.0 : 1.0) * std::log1p(-2.0 * std::abs(u));
      }
      case LatentDist::Uniform:
        return std::sqrt(3.0) * (2.0 * uniform_(rng_) - 1.0);
      case LatentDist::Gaussian:
        return normal_(rng_);
    }
    return 0.0;
  }

  const GenerativeSpec& spec_;
  std::mt19937_64 rng_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

Vec column_std(const Mat& m, const char* what) {
  const Mat centered = m.rowwise() - m.colwise().mean();
  Vec sd = (centered.array().square().colwise().sum() / static_cast<double>(m.rows()))
               .sqrt()
               .transpose();
  for (Eigen::Index j = 0; j < sd.size(); ++j)
    if (!(sd(j) > 0.0))
      throw Error(ErrorKind::InvalidArgument, std::string("recovery_score: ") + what +
                                                  " column " + std::to_string(j) +
                                                  " has zero variance");
  return sd;
}

}  // namespace

LatentDist parse_latent_dist(const std::string& name) {
  if (name == "laplace") return LatentDist::Laplace;
  if (name == "uniform") return LatentDist::Uniform;
  if (name == "gaussian") return LatentDist::Gaussian;
  throw Error(ErrorKind::InvalidArgument, "unknown latent distribution '" + name + "'");
}

const char* to_string(LatentDist d) {
  switch (d) {
    case LatentDist::Laplace: return "laplace";
    case LatentDist::Uniform: return "uniform";
    case LatentDist::Gaussian: return "gaussian";
  }
  return "unknown";
}

void GenerativeSpec::validate() const {
  const auto m = static_cast<Eigen::Index>(n_latents);
  const auto c = static_cast<Eigen::Index>(ambient_dim);
  if (m < 1 || c < m)
    throw Error(ErrorKind::InvalidArgument, "synth: need 1 <= n_latents <= ambient_dim");
  if (latent.size() != n_latents)
    throw Error(ErrorKind::InvalidArgument, "synth: one latent distribution per latent required");
  if (mixing.rows() != c || mixing.cols() != m)
    throw Error(ErrorKind::DimensionMismatch, "synth: mixing must be ambient_dim x n_latents");
  if (offset.size() != c)
    throw Error(ErrorKind::DimensionMismatch, "synth: offset must have ambient_dim entries");
  const double ortho = (mixing.transpose() * mixing - Mat::Identity(m, m)).cwiseAbs().maxCoeff();
  if (ortho > 1e-6)
    throw Error(ErrorKind::InvalidArgument, "synth: mixing columns are not orthonormal");

  const LabelRule& r = label_rule;
  if (r.latents.size() != r.weights.size())
    throw Error(ErrorKind::InvalidArgument, "synth: label rule latents/weights length differ");
  if (r.latents.size() > (n_latents + 1) / 2)
    throw Error(ErrorKind::InvalidArgument, "synth: label rule must touch at most ceil(M/2) latents");
  for (std::size_t idx : r.latents)
    if (idx >= n_latents)
      throw Error(ErrorKind::InvalidArgument, "synth: label rule latent index " +
                                                  std::to_string(idx) + " out of range");
  if (!std::is_sorted(r.thresholds.begin(), r.thresholds.end()))
    throw Error(ErrorKind::InvalidArgument, "synth: label thresholds must be ascending");
}

Mat random_orthonormal_columns(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  auto rng = make_rng(seed, 0x6d6978);
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat g(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ() * Mat::Identity(g.rows(), g.cols());
  // Fix column signs so the factorization is unique.
  const Mat r = qr.matrixQR().topRows(g.cols()).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  return q;
}

GenerativeSpec make_spec(std::size_t n_latents, std::size_t ambient_dim, LatentDist dist,
                         double offset_scale, std::uint64_t seed) {
  if (n_latents < 1 || ambient_dim < n_latents)
    throw Error(ErrorKind::InvalidArgument, "synth: need 1 <= n_latents <= ambient_dim");
  GenerativeSpec spec;
  spec.n_latents = n_latents;
  spec.ambient_dim = ambient_dim;
  spec.latent.assign(n_latents, dist);
  spec.mixing = random_orthonormal_columns(ambient_dim, n_latents, seed);
  auto rng = make_rng(seed, 0x6f6666);
  std::normal_distribution<double> normal(0.0, offset_scale);
  spec.offset.resize(static_cast<Eigen::Index>(ambient_dim));
  for (Eigen::Index i = 0; i < spec.offset.size(); ++i)
    spec.offset(i) = offset_scale > 0.0 ? normal(rng) : 0.0;
  spec.seed = seed;
  return spec;
}

std::size_t apply_label_rule(const LabelRule& rule, const Eigen::Ref<const RowVec>& z) {
  double score = 0.0;
  for (std::size_t i = 0; i < rule.latents.size(); ++i)
    score += rule.weights[i] * z(static_cast<Eigen::Index>(rule.latents[i]));
  std::size_t label = 0;
  for (double t : rule.thresholds) label += score >= t ? 1 : 0;
  return label;
}

Sample sample(const GenerativeSpec& spec, std::size_t n, std::uint64_t stream) {
  spec.validate();
  Sample s;
  const auto rows = static_cast<Eigen::Index>(n);
  s.latents.resize(rows, static_cast<Eigen::Index>(spec.n_latents));
  s.features.resize(rows, static_cast<Eigen::Index>(spec.ambient_dim));
  s.labels.resize(n);
  RowSampler sampler(spec, stream);
  RowVec z(s.latents.cols()), x(s.features.cols());
  for (Eigen::Index i = 0; i < rows; ++i) {
    sampler.draw(z, x);
    s.latents.row(i) = z;
    s.features.row(i) = x;
    s.labels[static_cast<std::size_t>(i)] = apply_label_rule(spec.label_rule, z);
  }
  return s;
}

std::vector<double> balanced_thresholds(const GenerativeSpec& spec, std::size_t n_classes,
                                        std::size_t n_pilot) {
  if (n_classes < 2) return {};
  GenerativeSpec pilot_spec = spec;
  pilot_spec.label_rule.thresholds.clear();
  const Sample pilot = sample(pilot_spec, n_pilot, 0x70696c6f74);
  std::vector<double> scores(n_pilot);
  for (std::size_t i = 0; i < n_pilot; ++i) {
    double score = 0.0;
    for (std::size_t k = 0; k < spec.label_rule.latents.size(); ++k)
      score += spec.label_rule.weights[k] *
               pilot.latents(static_cast<Eigen::Index>(i),
                             static_cast<Eigen::Index>(spec.label_rule.latents[k]));
    scores[i] = score;
  }
  std::sort(scores.begin(), scores.end());
  std::vector<double> thresholds;
  for (std::size_t q = 1; q < n_classes; ++q) thresholds.push_back(scores[q * n_pilot / n_classes]);
  return thresholds;
}

std::vector<std::size_t> solve_assignment(const Mat& cost) {
  // Hungarian method with row/column potentials, 1-based internally.
  const auto n = static_cast<std::size_t>(cost.rows());
  if (cost.cols() != cost.rows())
    throw Error(ErrorKind::DimensionMismatch, "solve_assignment: cost matrix must be square");
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) -
                           u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> result(n);
  for (std::size_t j = 1; j <= n; ++j) result[match[j] - 1] = j - 1;
  return result;
}

double recovery_score(const Mat& recovered, const Mat& truth) {
  if (recovered.rows() != truth.rows())
    throw Error(ErrorKind::DimensionMismatch, "recovery_score: sample counts differ");
  if (recovered.rows() < 2)
    throw Error(ErrorKind::InvalidArgument, "recovery_score: need at least two samples");
  const double n = static_cast<double>(truth.rows());
  const Vec sd_hat = column_std(recovered, "recovered");
  const Vec sd_true = column_std(truth, "true");
  const Mat a = recovered.rowwise() - recovered.colwise().mean();
  const Mat b = truth.rowwise() - truth.colwise().mean();
  const Mat corr = (sd_hat.cwiseInverse().asDiagonal() * (a.transpose() * b) *
                    sd_true.cwiseInverse().asDiagonal()) /
                   n;

  const Eigen::Index size = std::max(corr.rows(), corr.cols());
  Mat cost = Mat::Zero(size, size);
  cost.topLeftCorner(corr.rows(), corr.cols()) = -corr.cwiseAbs();
  const auto assignment = solve_assignment(cost);
  double total = 0.0;
  for (Eigen::Index i = 0; i < corr.rows(); ++i) {
    const auto j = static_cast<Eigen::Index>(assignment[static_cast<std::size_t>(i)]);
    if (j < corr.cols()) total += std::abs(corr(i, j));
  }
  return total / static_cast<double>(truth.cols());
}

double amari_index(const Mat& p) {
  if (p.rows() != p.cols() || p.rows() == 0)
    throw Error(ErrorKind::DimensionMismatch, "amari_index: matrix must be square and non-empty");
  const Mat a = p.cwiseAbs();
  const Vec row_max = a.rowwise().maxCoeff();
  const RowVec col_max = a.colwise().maxCoeff();
  if (row_max.minCoeff() == 0.0 || col_max.minCoeff() == 0.0)
    throw Error(ErrorKind::InvalidArgument, "amari_index: all-zero row or column");
  const double rows_term = ((a.rowwise().sum().array() / row_max.array()) - 1.0).sum();
  const double cols_term = ((a.colwise().sum().array() / col_max.array()) - 1.0).sum();
  return (rows_term + cols_term) / (2.0 * static_cast<double>(p.rows()));
}

FewShotTask make_task(const GenerativeSpec& spec, const TaskSizes& sizes) {
  spec.validate();
  const std::size_t n_classes = spec.label_rule.n_classes();
  if (sizes.shots == 0 || sizes.n_text == 0)
    throw Error(ErrorKind::InvalidArgument, "synth: shots and n_text must be positive");
  const auto c = static_cast<Eigen::Index>(spec.ambient_dim);
  const auto m = static_cast<Eigen::Index>(spec.n_latents);

  // Fills `per_class` rows of every class by rejection from one stream.
  auto draw_balanced = [&](std::size_t per_class, std::uint64_t stream, Mat& features,
                           LabelVector& labels) {
    RowSampler sampler(spec, stream);
    features.resize(static_cast<Eigen::Index>(per_class * n_classes), c);
    labels.clear();
    std::vector<std::size_t> counts(n_classes, 0);
    RowVec z(m), x(c);
    const std::size_t budget = 1000 * per_class * n_classes + 100000;
    for (std::size_t tries = 0; labels.size() < per_class * n_classes; ++tries) {
      if (tries >= budget)
        throw Error(ErrorKind::InvalidArgument, "synth: could not fill every class by rejection");
      sampler.draw(z, x);
      const std::size_t y = apply_label_rule(spec.label_rule, z);
      if (counts[y] == per_class) continue;
      ++counts[y];
      features.row(static_cast<Eigen::Index>(labels.size())) = x;
      labels.push_back(y);
    }
  };

  FewShotTask task;
  task.n_classes = n_classes;
  task.shots = sizes.shots;
  Mat cache;
  draw_balanced(sizes.shots, 1, cache, task.cache_labels);
  task.cache_features = l2_normalize_rows(cache);

  Mat text;
  LabelVector text_labels;
  draw_balanced(sizes.n_text, 2, text, text_labels);
  text = l2_normalize_rows(text);
  task.text_init = Mat::Zero(static_cast<Eigen::Index>(n_classes), c);
  for (std::size_t i = 0; i < text_labels.size(); ++i)
    task.text_init.row(static_cast<Eigen::Index>(text_labels[i])) +=
        text.row(static_cast<Eigen::Index>(i));
  task.text_init = l2_normalize_rows(task.text_init);

  if (sizes.n_val > 0) {
    const Sample val = sample(spec, sizes.n_val, 3);
    task.val_features = l2_normalize_rows(val.features);
    task.val_labels = val.labels;
  }
  if (sizes.n_test > 0) {
    const Sample test = sample(spec, sizes.n_test, 4);
    task.test_features = l2_normalize_rows(test.features);
    task.test_labels = test.labels;
  }
  for (std::size_t k = 0; k < n_classes; ++k) task.class_names.push_back("class_" + std::to_string(k));
  validate_task(task);
  return task;
}

SynthJob parse_synth_job(const nlohmann::json& j) {
  SynthJob job;
  try {
    const auto m = j.at("n_latents").get<std::size_t>();
    const auto c = j.at("ambient_dim").get<std::size_t>();
    const auto seed = j.value("seed", std::uint64_t{0});
    const auto n_classes = j.at("n_classes").get<std::size_t>();
    if (m < 1 || c < m)
      throw Error(ErrorKind::InvalidArgument, "synth: need 1 <= n_latents <= ambient_dim");
    if (n_classes < 2) throw Error(ErrorKind::InvalidArgument, "synth: n_classes must be >= 2");

    LatentDist dist = LatentDist::Laplace;
    if (j.contains("latent") && j["latent"].is_string())
      dist = parse_latent_dist(j["latent"].get<std::string>());
    job.spec = make_spec(m, c, dist, j.value("offset_scale", 1.0), seed);
    if (j.contains("latent") && j["latent"].is_array()) {
      job.spec.latent.clear();
      for (const auto& name : j["latent"]) job.spec.latent.push_back(parse_latent_dist(name.get<std::string>()));
    }
    if (j.contains("offset")) {
      const auto off = j["offset"].get<std::vector<double>>();
      if (off.size() != c) throw Error(ErrorKind::InvalidArgument, "synth: offset length must equal ambient_dim");
      job.spec.offset = Eigen::Map<const Vec>(off.data(), static_cast<Eigen::Index>(c));
    }
    job.spec.hypersphere = j.value("hypersphere", false);

    const auto& rule = j.at("label_rule");
    job.spec.label_rule.latents = rule.at("latents").get<std::vector<std::size_t>>();
    job.spec.label_rule.weights = rule.contains("weights")
                                      ? rule["weights"].get<std::vector<double>>()
                                      : std::vector<double>(job.spec.label_rule.latents.size(), 1.0);
    job.spec.validate();
    if (rule.contains("thresholds")) {
      job.spec.label_rule.thresholds = rule["thresholds"].get<std::vector<double>>();
      if (job.spec.label_rule.n_classes() != n_classes)
        throw Error(ErrorKind::InvalidArgument, "synth: label_rule.thresholds must have n_classes - 1 entries");
    } else {
      job.spec.label_rule.thresholds = balanced_thresholds(job.spec, n_classes);
    }
    job.spec.validate();

    job.sizes.shots = j.at("shots").get<std::size_t>();
    job.sizes.n_val = j.value("n_val", job.sizes.n_val);
    job.sizes.n_test = j.value("n_test", job.sizes.n_test);
    job.sizes.n_text = j.value("n_text", job.sizes.n_text);
    job.n_source = j.value("n_source", job.n_source);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, "synth spec: " + std::string(e.what()));
  }
  return job;
}

std::filesystem::path write_synth_job(const SynthJob& job, const std::filesystem::path& dir) {
  const FewShotTask task = make_task(job.spec, job.sizes);
  const auto manifest = save_task(task, dir);
  if (job.n_source > 0) {
    const Sample source = sample(job.spec, job.n_source, 5);
    write_matrix(l2_normalize_rows(source.features), dir / "source.ccaf");
    write_matrix(source.latents, dir / "source_latents.ccaf");
  }
  write_matrix(job.spec.mixing, dir / "mixing.ccaf");
  write_matrix(job.spec.offset.transpose(), dir / "offset.ccaf");

  nlohmann::json meta;
  meta["n_latents"] = job.spec.n_latents;
  meta["ambient_dim"] = job.spec.ambient_dim;
  std::vector<std::string> latent;
  for (LatentDist d : job.spec.latent) latent.emplace_back(to_string(d));
  meta["latent"] = latent;
  meta["label_rule"] = {{"latents", job.spec.label_rule.latents},
                        {"weights", job.spec.label_rule.weights},
                        {"thresholds", job.spec.label_rule.thresholds}};
  meta["hypersphere"] = job.spec.hypersphere;
  meta["seed"] = job.spec.seed;
  meta["n_source"] = job.n_source;
  std::ofstream out(dir / "synth.json");
  if (!out) throw Error(ErrorKind::Io, "cannot write " + (dir / "synth.json").string());
  out << meta.dump(2) << '\n';
  return manifest;
}

}  // namespace cca
