#pragma once

// Binary "CCAF" pack format and few-shot task assembly.
//
// Pack layout (little-endian, no padding):
//   offset  size  field
//   0       4     magic "CCAF"
//   4       4     u32 format version (= 1)
//   8       8     u64 rows
//   16      8     u64 cols
//   24      4     u32 dtype code (= 1, float32)
//   28      4*n   row-major float32 payload
//
// Label vectors are stored as packs with cols == 1 whose floats hold exact
// small non-negative integers.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cca/types.hpp"

namespace cca {

inline constexpr char kPackMagic[4] = {'C', 'C', 'A', 'F'};
inline constexpr std::uint32_t kPackVersion = 1;
inline constexpr std::uint32_t kDtypeFloat32 = 1;
inline constexpr std::size_t kPackHeaderBytes = 28;

/// Dense row-major float32 matrix; every entry finite.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t cols);
  FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  static FeatureMatrix from_dense(const Mat& m);
  Mat to_dense() const;

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }

  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  std::span<const float> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const float> data() const { return data_; }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

using LabelVector = std::vector<std::size_t>;

struct FewShotTask {
  std::size_t n_classes = 0;
  std::size_t shots = 0;
  Mat cache_features;  // NK x C
  LabelVector cache_labels;
  Mat text_init;  // N x C
  Mat val_features;
  LabelVector val_labels;
  Mat test_features;
  LabelVector test_labels;
  std::vector<std::string> class_names;

  std::size_t dim() const { return static_cast<std::size_t>(cache_features.cols()); }
};

void write_pack(const FeatureMatrix& matrix, const std::filesystem::path& path);
FeatureMatrix read_pack(const std::filesystem::path& path);

// Convenience wrappers for double matrices and label vectors.
void write_matrix(const Mat& matrix, const std::filesystem::path& path);
Mat read_matrix(const std::filesystem::path& path);
void write_labels(const LabelVector& labels, const std::filesystem::path& path);
LabelVector read_labels(const std::filesystem::path& path);

/// N x (labels.size()) one-hot matrix; column j has a 1 at row labels[j].
Mat one_hot(const LabelVector& labels, std::size_t n_classes);

/// Throws ErrorKind::ZeroRow on an all-zero row.
Mat l2_normalize_rows(const Mat& matrix);

/// Parse the JSON manifest, read every referenced pack (paths relative to the
/// manifest's directory), re-normalize feature rows and check invariants.
/// The val_* and test_* keys are optional.
FewShotTask load_task(const std::filesystem::path& manifest_path);

/// Writes packs plus manifest.json into `dir`. Returns the manifest path.
std::filesystem::path save_task(const FewShotTask& task, const std::filesystem::path& dir);

void validate_task(const FewShotTask& task);

}  // namespace cca
