#include "cca/ica.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>

#include "cca/error.hpp"
#include "cca/featurepack.hpp"

namespace cca {

Nonlinearity parse_nonlinearity(const std::string& name) {
  if (name == "logcosh") return Nonlinearity::LogCosh;
  if (name == "cube") return Nonlinearity::Cube;
  throw Error(ErrorKind::InvalidArgument, "unknown nonlinearity '" + name + "'");
}

const char* to_string(Nonlinearity g) {
  return g == Nonlinearity::LogCosh ? "logcosh" : "cube";
}

void IcaConfig::validate(std::size_t input_dim) const {
  if (n_components < 1 || n_components > input_dim)
    throw Error(ErrorKind::InvalidArgument, "ica: n_components " + std::to_string(n_components) +
                                                " must lie in [1, " + std::to_string(input_dim) +
                                                "]");
  if (!(tolerance > 0.0)) throw Error(ErrorKind::InvalidArgument, "ica: tolerance must be > 0");
  if (max_iterations < 1)
    throw Error(ErrorKind::InvalidArgument, "ica: max_iterations must be >= 1");
}

Whitening fit_whitening(const Mat& samples, std::size_t n_components) {
  const auto n = samples.rows();
  const auto c = samples.cols();
  const auto m = static_cast<Eigen::Index>(n_components);
  if (m < 1 || m > c)
    throw Error(ErrorKind::InvalidArgument, "fit_whitening: M=" + std::to_string(m) +
                                                " must lie in [1, " + std::to_string(c) + "]");
  if (n <= m)
    throw Error(ErrorKind::InvalidArgument, "fit_whitening: need more samples (" +
                                                std::to_string(n) + ") than components (" +
                                                std::to_string(m) + ")");

  Whitening w;
  w.mean = samples.colwise().mean().transpose();
  const Mat centered = samples.rowwise() - w.mean.transpose();
  const Mat cov = (centered.transpose() * centered) / static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
  if (eig.info() != Eigen::Success)
    throw Error(ErrorKind::NumericFailure, "fit_whitening: eigendecomposition failed");

  // Eigen returns ascending eigenvalues; take the top M in descending order.
  w.matrix.resize(m, c);
  w.eigenvalues.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index src = c - 1 - i;
    const double lambda = eig.eigenvalues()(src);
    if (lambda < 1e-10)
      throw Error(ErrorKind::RankDeficient,
                  "fit_whitening: component " + std::to_string(i) + " has eigenvalue " +
                      std::to_string(lambda) + " < 1e-10 (data rank is below M)");
    w.eigenvalues(i) = lambda;
    w.matrix.row(i) = eig.eigenvectors().col(src).transpose() / std::sqrt(lambda);
  }
  return w;
}

Mat symmetric_decorrelate(const Mat& w) {
  const Mat gram = w * w.transpose();
  Eigen::SelfAdjointEigenSolver<Mat> eig(gram);
  if (eig.info() != Eigen::Success)
    throw Error(ErrorKind::NumericFailure, "symmetric_decorrelate: eigendecomposition failed");
  const Vec& s = eig.eigenvalues();
  const double largest = s.cwiseAbs().maxCoeff();
  if (!(largest > 0.0) || s.minCoeff() <= largest * 1e-14)
    throw Error(ErrorKind::Singular, "symmetric_decorrelate: matrix is singular");
  const Mat& u = eig.eigenvectors();
  return u * s.cwiseSqrt().cwiseInverse().asDiagonal() * u.transpose() * w;
}

Mat random_orthogonal(std::size_t m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto dim = static_cast<Eigen::Index>(m);
  Mat w(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) w(i, j) = normal(rng);
  return symmetric_decorrelate(w);
}

FastIcaResult fastica_fit(const Mat& whitened, const IcaConfig& config) {
  const auto m = whitened.cols();
  config.validate(static_cast<std::size_t>(m));
  if (static_cast<std::size_t>(m) != config.n_components)
    throw Error(ErrorKind::DimensionMismatch, "fastica_fit: data has " + std::to_string(m) +
                                                  " columns, config asks for " +
                                                  std::to_string(config.n_components));
  const double n = static_cast<double>(whitened.rows());

  FastIcaResult result;
  Mat w = random_orthogonal(config.n_components, config.seed);
  Mat g(whitened.rows(), m);
  for (int it = 1; it <= config.max_iterations; ++it) {
    const Mat projected = whitened * w.transpose();  // n x M
    Vec mean_dg(m);
    if (config.nonlinearity == Nonlinearity::LogCosh) {
      g = projected.array().tanh().matrix();
      mean_dg = (1.0 - g.array().square()).colwise().mean().transpose();
    } else {
      g = projected.array().cube().matrix();
      mean_dg = (3.0 * projected.array().square()).colwise().mean().transpose();
    }
    const Mat updated = (g.transpose() * whitened) / n - mean_dg.asDiagonal() * w;
    const Mat next = symmetric_decorrelate(updated);

    const double lim =
        ((next.cwiseProduct(w).rowwise().sum().array().abs() - 1.0).abs()).maxCoeff();
    w = next;
    result.iterations = it;
    if (lim < config.tolerance) {
      result.converged = true;
      break;
    }
  }
  result.rotation = std::move(w);
  return result;
}

IcaModel fit_ica(const Mat& samples, const IcaConfig& config) {
  config.validate(static_cast<std::size_t>(samples.cols()));
  Whitening white = fit_whitening(samples, config.n_components);
  const Mat whitened = (samples.rowwise() - white.mean.transpose()) * white.matrix.transpose();
  FastIcaResult fit = fastica_fit(whitened, config);

  IcaModel model;
  model.config = config;
  model.mean = std::move(white.mean);
  model.whitening = std::move(white.matrix);
  model.rotation = std::move(fit.rotation);
  model.iterations = fit.iterations;
  model.converged = fit.converged;
  return model;
}

Mat unmixing_matrix(const IcaModel& model) {
  return (model.rotation * model.whitening).transpose();
}

Mat transform(const IcaModel& model, const Mat& features, bool normalize) {
  if (static_cast<std::size_t>(features.cols()) != model.input_dim())
    throw Error(ErrorKind::DimensionMismatch, "transform: features have " +
                                                  std::to_string(features.cols()) +
                                                  " columns, model expects " +
                                                  std::to_string(model.input_dim()));
  Mat out = (features.rowwise() - model.mean.transpose()) * unmixing_matrix(model);
  return normalize ? l2_normalize_rows(out) : out;
}

void save_ica(const IcaModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_matrix(model.mean.transpose(), dir / "mean.ccaf");
  write_matrix(model.whitening, dir / "whitening.ccaf");
  write_matrix(model.rotation, dir / "rotation.ccaf");
  nlohmann::json j;
  j["input_dim"] = model.input_dim();
  j["n_components"] = model.n_components();
  j["nonlinearity"] = to_string(model.config.nonlinearity);
  j["tolerance"] = model.config.tolerance;
  j["max_iterations"] = model.config.max_iterations;
  j["seed"] = model.config.seed;
  j["iterations"] = model.iterations;
  j["converged"] = model.converged;
  std::ofstream out(dir / "ica.json");
  if (!out) throw Error(ErrorKind::Io, "cannot write " + (dir / "ica.json").string());
  out << j.dump(2) << '\n';
}

IcaModel load_ica(const std::filesystem::path& dir) {
  std::ifstream in(dir / "ica.json");
  if (!in) throw Error(ErrorKind::Io, "cannot open " + (dir / "ica.json").string());
  IcaModel model;
  try {
    nlohmann::json j;
    in >> j;
    model.config.n_components = j.at("n_components").get<std::size_t>();
    model.config.nonlinearity = parse_nonlinearity(j.at("nonlinearity").get<std::string>());
    model.config.tolerance = j.at("tolerance").get<double>();
    model.config.max_iterations = j.at("max_iterations").get<int>();
    model.config.seed = j.at("seed").get<std::uint64_t>();
    model.iterations = j.at("iterations").get<int>();
    model.converged = j.at("converged").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, "ica.json: " + std::string(e.what()));
  }
  const Mat mean = read_matrix(dir / "mean.ccaf");
  model.whitening = read_matrix(dir / "whitening.ccaf");
  model.rotation = read_matrix(dir / "rotation.ccaf");
  const auto m = static_cast<Eigen::Index>(model.config.n_components);
  if (mean.rows() != 1 || mean.cols() != model.whitening.cols() || model.whitening.rows() != m ||
      model.rotation.rows() != m || model.rotation.cols() != m)
    throw Error(ErrorKind::DimensionMismatch, "ica model packs in " + dir.string() +
                                                  " have inconsistent shapes");
  model.mean = mean.row(0).transpose();
  return model;
}

}  // namespace cca
