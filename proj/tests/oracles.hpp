#pragma once

// Independent reference computations used to freeze expected values. Nothing
// here calls into the library's numeric paths.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

namespace oracle {

using Mat = Eigen::MatrixXd;

inline Mat random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                         double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

inline Mat unit_rows(Mat m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) s += m(i, j) * m(i, j);
    s = std::sqrt(s);
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) /= s;
  }
  return m;
}

/// Biased (1/n) sample covariance by explicit loops.
inline Mat sample_covariance(const Mat& x) {
  const Eigen::Index n = x.rows(), c = x.cols();
  std::vector<double> mean(static_cast<std::size_t>(c), 0.0);
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) mean[j] += x(i, j);
    mean[j] /= static_cast<double>(n);
  }
  Mat cov = Mat::Zero(c, c);
  for (Eigen::Index a = 0; a < c; ++a)
    for (Eigen::Index b = 0; b < c; ++b) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) s += (x(i, a) - mean[a]) * (x(i, b) - mean[b]);
      cov(a, b) = s / static_cast<double>(n);
    }
  return cov;
}

/// Orthogonal polar factor U Vᵀ of W = U S Vᵀ, which equals (W Wᵀ)^{-1/2} W.
inline Mat polar_factor(const Mat& w) {
  Eigen::JacobiSVD<Mat> svd(w, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

/// Max over permutations of the mean matched |entry| of a square matrix.
inline double brute_force_assignment_mean(const Mat& abs_corr) {
  std::vector<int> perm(static_cast<std::size_t>(abs_corr.cols()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0.0;
  do {
    double s = 0.0;
    for (Eigen::Index i = 0; i < abs_corr.rows(); ++i) s += abs_corr(i, perm[i]);
    best = std::max(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(abs_corr.cols());
}

/// |Pearson| correlation of two columns by explicit sums.
inline double abs_pearson(const Mat& a, Eigen::Index ca, const Mat& b, Eigen::Index cb) {
  const Eigen::Index n = a.rows();
  double ma = 0, mb = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    ma += a(i, ca);
    mb += b(i, cb);
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    sab += (a(i, ca) - ma) * (b(i, cb) - mb);
    saa += (a(i, ca) - ma) * (a(i, ca) - ma);
    sbb += (b(i, cb) - mb) * (b(i, cb) - mb);
  }
  return std::abs(sab / std::sqrt(saa * sbb));
}

/// Per-class sum of affinities: out[i][n] = sum_{j : labels[j] == n} s[i][j].
inline Mat per_class_sums(const Mat& s, const std::vector<std::size_t>& labels, std::size_t n) {
  Mat out = Mat::Zero(s.rows(), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    for (Eigen::Index j = 0; j < s.cols(); ++j)
      out(i, static_cast<Eigen::Index>(labels[static_cast<std::size_t>(j)])) += s(i, j);
  return out;
}

/// Scoped temporary directory.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("cca_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace oracle
