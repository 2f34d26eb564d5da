#pragma once

// Linear ICA: centering, PCA whitening to M components and parallel
// fixed-point FastICA with symmetric decorrelation.
//
// Data layout throughout is rows-of-samples (n x C). With
//   whitened = (X - mean) * whiteningᵀ          (n x M, identity covariance)
//   sources  = whitened * rotationᵀ             (n x M)
// the unmixing matrix is U = (rotation * whitening)ᵀ (C x M), so that
// sources = (X - mean) * U.

#include <cstdint>
#include <filesystem>
#include <string>

#include "cca/types.hpp"

namespace cca {

enum class Nonlinearity { LogCosh, Cube };

Nonlinearity parse_nonlinearity(const std::string& name);
const char* to_string(Nonlinearity g);

struct IcaConfig {
  std::size_t n_components = 0;
  Nonlinearity nonlinearity = Nonlinearity::LogCosh;
  double tolerance = 1e-4;
  int max_iterations = 200;
  std::uint64_t seed = 0;

  void validate(std::size_t input_dim) const;
};

struct Whitening {
  Vec mean;             // C
  Mat matrix;           // M x C
  Vec eigenvalues;      // M, descending
};

struct FastIcaResult {
  Mat rotation;  // M x M, orthogonal
  int iterations = 0;
  bool converged = false;
};

struct IcaModel {
  IcaConfig config;
  Vec mean;       // C
  Mat whitening;  // M x C
  Mat rotation;   // M x M
  int iterations = 0;
  bool converged = false;

  std::size_t input_dim() const { return static_cast<std::size_t>(whitening.cols()); }
  std::size_t n_components() const { return static_cast<std::size_t>(whitening.rows()); }
};

/// Covariance is the biased (1/n) sample covariance. Throws RankDeficient when
/// any of the top M eigenvalues falls below 1e-10.
Whitening fit_whitening(const Mat& samples, std::size_t n_components);

/// (W Wᵀ)^{-1/2} W via the eigendecomposition of W Wᵀ.
Mat symmetric_decorrelate(const Mat& w);

/// Seeded random orthogonal M x M start.
Mat random_orthogonal(std::size_t m, std::uint64_t seed);

FastIcaResult fastica_fit(const Mat& whitened, const IcaConfig& config);

/// fit_whitening followed by fastica_fit.
IcaModel fit_ica(const Mat& samples, const IcaConfig& config);

/// C x M unmixing matrix.
Mat unmixing_matrix(const IcaModel& model);

/// (F - mean) U, optionally with each output row L2-normalized.
Mat transform(const IcaModel& model, const Mat& features, bool normalize = true);

/// Writes mean.ccaf, whitening.ccaf, rotation.ccaf and ica.json into `dir`.
void save_ica(const IcaModel& model, const std::filesystem::path& dir);
IcaModel load_ica(const std::filesystem::path& dir);

}  // namespace cca
