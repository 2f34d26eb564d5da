#include "cca/featurepack.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <sstream>

#include "cca/error.hpp"

namespace cca {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void check_finite(std::span<const float> data, const std::string& where) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw Error(ErrorKind::NonFinite,
                  where + ": non-finite entry at flat index " + std::to_string(i));
    }
  }
}

}  // namespace

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error(ErrorKind::DimensionMismatch,
                "FeatureMatrix: data length " + std::to_string(data_.size()) +
                    " != rows*cols " + std::to_string(rows_ * cols_));
  }
  check_finite(data_, "FeatureMatrix");
}

FeatureMatrix FeatureMatrix::from_dense(const Mat& m) {
  std::vector<float> data(static_cast<std::size_t>(m.size()));
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data[k++] = static_cast<float>(m(r, c));
  return FeatureMatrix(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()),
                       std::move(data));
}

Mat FeatureMatrix::to_dense() const {
  Mat m(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = (*this)(r, c);
  return m;
}

void write_pack(const FeatureMatrix& matrix, const std::filesystem::path& path) {
  check_finite(matrix.data(), "write_pack");
  std::string bytes;
  bytes.reserve(kPackHeaderBytes + 4 * matrix.data().size());
  bytes.append(kPackMagic, 4);
  put_u32(bytes, kPackVersion);
  put_u64(bytes, matrix.rows());
  put_u64(bytes, matrix.cols());
  put_u32(bytes, kDtypeFloat32);
  for (float f : matrix.data()) put_u32(bytes, std::bit_cast<std::uint32_t>(f));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

FeatureMatrix read_pack(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open pack: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kPackMagic, 4) != 0)
    throw Error(ErrorKind::BadMagic, name + ": bad magic");
  if (bytes.size() < kPackHeaderBytes)
    throw Error(ErrorKind::Truncated, name + ": truncated header");

  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kPackVersion)
    throw Error(ErrorKind::UnsupportedVersion,
                name + ": unsupported version " + std::to_string(version));
  const std::uint64_t rows = get_u64(bytes.data() + 8);
  const std::uint64_t cols = get_u64(bytes.data() + 16);
  const std::uint32_t dtype = get_u32(bytes.data() + 24);
  if (dtype != kDtypeFloat32)
    throw Error(ErrorKind::UnsupportedDtype,
                name + ": unsupported dtype " + std::to_string(dtype));

  const std::size_t payload = bytes.size() - kPackHeaderBytes;
  if (cols != 0 && rows > payload / 4 / cols)
    throw Error(ErrorKind::Truncated, name + ": header declares " + std::to_string(rows) + "x" +
                                          std::to_string(cols) + " but payload holds " +
                                          std::to_string(payload) + " bytes");
  const std::size_t n = static_cast<std::size_t>(rows * cols);
  if (payload != 4 * n)
    throw Error(ErrorKind::Truncated, name + ": payload is " + std::to_string(payload) +
                                          " bytes, expected " + std::to_string(4 * n));

  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i)
    data[i] = std::bit_cast<float>(get_u32(bytes.data() + kPackHeaderBytes + 4 * i));
  check_finite(data, name);
  return FeatureMatrix(rows, cols, std::move(data));
}

void write_matrix(const Mat& matrix, const std::filesystem::path& path) {
  write_pack(FeatureMatrix::from_dense(matrix), path);
}

Mat read_matrix(const std::filesystem::path& path) { return read_pack(path).to_dense(); }

void write_labels(const LabelVector& labels, const std::filesystem::path& path) {
  std::vector<float> data(labels.begin(), labels.end());
  write_pack(FeatureMatrix(labels.size(), 1, std::move(data)), path);
}

LabelVector read_labels(const std::filesystem::path& path) {
  const FeatureMatrix m = read_pack(path);
  if (m.cols() != 1)
    throw Error(ErrorKind::DimensionMismatch,
                path.string() + ": label pack must have cols == 1, got " + std::to_string(m.cols()));
  LabelVector labels(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const float v = m(i, 0);
    if (v < 0.0f || v != std::floor(v) || v > 16777216.0f)
      throw Error(ErrorKind::InvalidArgument,
                  path.string() + ": label " + std::to_string(i) + " is not a small integer");
    labels[i] = static_cast<std::size_t>(v);
  }
  return labels;
}

Mat one_hot(const LabelVector& labels, std::size_t n_classes) {
  Mat out = Mat::Zero(static_cast<Eigen::Index>(n_classes), static_cast<Eigen::Index>(labels.size()));
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] >= n_classes)
      throw Error(ErrorKind::InvalidArgument, "one_hot: label " + std::to_string(labels[j]) +
                                                  " out of range for " + std::to_string(n_classes) +
                                                  " classes");
    out(static_cast<Eigen::Index>(labels[j]), static_cast<Eigen::Index>(j)) = 1.0;
  }
  return out;
}

Mat l2_normalize_rows(const Mat& matrix) {
  Mat out = matrix;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double norm = out.row(r).norm();
    if (norm == 0.0)
      throw Error(ErrorKind::ZeroRow, "l2_normalize_rows: row " + std::to_string(r) + " is zero");
    out.row(r) /= norm;
  }
  return out;
}

void validate_task(const FewShotTask& task) {
  const auto n = static_cast<Eigen::Index>(task.n_classes);
  const auto k = static_cast<Eigen::Index>(task.shots);
  if (task.n_classes == 0 || task.shots == 0)
    throw Error(ErrorKind::InvalidArgument, "task: n_classes and shots must be positive");
  if (task.cache_features.rows() != n * k)
    throw Error(ErrorKind::ShotCount, "task: cache pack has " +
                                          std::to_string(task.cache_features.rows()) +
                                          " rows, expected N*K = " + std::to_string(n * k));
  if (task.cache_labels.size() != static_cast<std::size_t>(n * k))
    throw Error(ErrorKind::ShotCount, "task: cache label count " +
                                          std::to_string(task.cache_labels.size()) +
                                          " != N*K");
  std::vector<std::size_t> counts(task.n_classes, 0);
  for (std::size_t l : task.cache_labels) {
    if (l >= task.n_classes)
      throw Error(ErrorKind::InvalidArgument, "task: cache label " + std::to_string(l) +
                                                  " out of range");
    ++counts[l];
  }
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] != task.shots)
      throw Error(ErrorKind::ShotCount, "task: class " + std::to_string(c) + " has " +
                                            std::to_string(counts[c]) + " shots, expected " +
                                            std::to_string(task.shots));
  if (task.text_init.rows() != n)
    throw Error(ErrorKind::DimensionMismatch, "task: text_init has " +
                                                  std::to_string(task.text_init.rows()) +
                                                  " rows, expected " + std::to_string(n));

  const Eigen::Index dim = task.cache_features.cols();
  auto check_cols = [&](const Mat& m, const char* what) {
    if (m.rows() > 0 && m.cols() != dim)
      throw Error(ErrorKind::DimensionMismatch, std::string("task: ") + what + " has " +
                                                    std::to_string(m.cols()) + " cols, cache has " +
                                                    std::to_string(dim));
  };
  check_cols(task.text_init, "text_init");
  check_cols(task.val_features, "val_features");
  check_cols(task.test_features, "test_features");

  auto check_split = [&](const Mat& f, const LabelVector& l, const char* what) {
    if (static_cast<std::size_t>(f.rows()) != l.size())
      throw Error(ErrorKind::DimensionMismatch, std::string("task: ") + what +
                                                    " features/labels row count differ");
    for (std::size_t v : l)
      if (v >= task.n_classes)
        throw Error(ErrorKind::InvalidArgument, std::string("task: ") + what + " label " +
                                                    std::to_string(v) + " out of range");
  };
  check_split(task.val_features, task.val_labels, "val");
  check_split(task.test_features, task.test_labels, "test");

  if (!task.class_names.empty() && task.class_names.size() != task.n_classes)
    throw Error(ErrorKind::InvalidArgument, "task: class_names has " +
                                                std::to_string(task.class_names.size()) +
                                                " entries, expected " +
                                                std::to_string(task.n_classes));
}

FewShotTask load_task(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorKind::Io, "cannot open manifest: " + manifest_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, "manifest parse error: " + std::string(e.what()));
  }
  const auto base = manifest_path.parent_path();
  auto resolve = [&](const std::string& key) {
    if (!j.contains(key) || !j[key].is_string())
      throw Error(ErrorKind::InvalidArgument, "manifest: missing string key '" + key + "'");
    return base / j[key].get<std::string>();
  };

  FewShotTask task;
  try {
    task.n_classes = j.at("n_classes").get<std::size_t>();
    task.shots = j.at("shots").get<std::size_t>();
    if (j.contains("class_names"))
      task.class_names = j["class_names"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, "manifest: " + std::string(e.what()));
  }

  task.cache_features = l2_normalize_rows(read_matrix(resolve("cache_features")));
  task.cache_labels = read_labels(resolve("cache_labels"));
  task.text_init = l2_normalize_rows(read_matrix(resolve("text_init")));
  if (j.contains("val_features")) {
    task.val_features = l2_normalize_rows(read_matrix(resolve("val_features")));
    task.val_labels = read_labels(resolve("val_labels"));
  }
  if (j.contains("test_features")) {
    task.test_features = l2_normalize_rows(read_matrix(resolve("test_features")));
    task.test_labels = read_labels(resolve("test_labels"));
  }
  validate_task(task);
  return task;
}

std::filesystem::path save_task(const FewShotTask& task, const std::filesystem::path& dir) {
  validate_task(task);
  std::filesystem::create_directories(dir);
  write_matrix(task.cache_features, dir / "cache_features.ccaf");
  write_labels(task.cache_labels, dir / "cache_labels.ccaf");
  write_matrix(task.text_init, dir / "text_init.ccaf");
  nlohmann::json j;
  j["n_classes"] = task.n_classes;
  j["shots"] = task.shots;
  j["cache_features"] = "cache_features.ccaf";
  j["cache_labels"] = "cache_labels.ccaf";
  j["text_init"] = "text_init.ccaf";
  if (task.val_features.rows() > 0) {
    write_matrix(task.val_features, dir / "val_features.ccaf");
    write_labels(task.val_labels, dir / "val_labels.ccaf");
    j["val_features"] = "val_features.ccaf";
    j["val_labels"] = "val_labels.ccaf";
  }
  if (task.test_features.rows() > 0) {
    write_matrix(task.test_features, dir / "test_features.ccaf");
    write_labels(task.test_labels, dir / "test_labels.ccaf");
    j["test_features"] = "test_features.ccaf";
    j["test_labels"] = "test_labels.ccaf";
  }
  j["class_names"] = task.class_names;
  const auto manifest = dir / "manifest.json";
  std::ofstream out(manifest);
  if (!out) throw Error(ErrorKind::Io, "cannot write manifest: " + manifest.string());
  out << j.dump(2) << '\n';
  return manifest;
}

}  // namespace cca
