#include "cca/adapter.hpp"

#include <fstream>
#include <json.hpp>

#include "cca/error.hpp"

namespace cca {

Mat disentangle(const IcaModel* ica, const Mat& features) {
  return ica ? transform(*ica, features, true) : l2_normalize_rows(features);
}

CacheModel build_cache(const FewShotTask& task, const IcaModel* ica) {
  if (ica && ica->input_dim() != task.dim())
    throw Error(ErrorKind::DimensionMismatch, "build_cache: ICA model expects " +
                                                  std::to_string(ica->input_dim()) +
                                                  "-d features, task has " +
                                                  std::to_string(task.dim()));
  CacheModel cache;
  cache.keys = disentangle(ica, task.cache_features);
  cache.values = one_hot(task.cache_labels, task.n_classes);
  cache.adapter = Mat::Identity(cache.keys.cols(), cache.keys.cols());
  return cache;
}

Mat adapted_keys(const CacheModel& cache) { return cache.keys * cache.adapter; }

Mat affinity(const Mat& query_d, const CacheModel& cache) {
  return affinity(query_d, cache, cache.beta);
}

Mat affinity(const Mat& query_d, const CacheModel& cache, double beta) {
  if (query_d.cols() != cache.keys.cols())
    throw Error(ErrorKind::DimensionMismatch, "affinity: query has " +
                                                  std::to_string(query_d.cols()) +
                                                  " columns, keys have " +
                                                  std::to_string(cache.keys.cols()));
  const Mat dots = query_d * adapted_keys(cache).transpose();
  return (-beta * (1.0 - dots.array())).exp().matrix();
}

Mat cache_logits(const Mat& affinities, const CacheModel& cache) {
  if (affinities.cols() != cache.values.cols())
    throw Error(ErrorKind::DimensionMismatch, "cache_logits: affinity has " +
                                                  std::to_string(affinities.cols()) +
                                                  " columns, cache holds " +
                                                  std::to_string(cache.values.cols()));
  return affinities * cache.values.transpose();
}

Mat combine_logits(const Mat& l1, const Mat& l2, double alpha) {
  if (l1.rows() != l2.rows() || l1.cols() != l2.cols())
    throw Error(ErrorKind::DimensionMismatch, "combine_logits: shape mismatch");
  return alpha * l1 + l2;
}

void save_cache(const CacheModel& cache, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_matrix(cache.keys, dir / "keys.ccaf");
  write_matrix(cache.values, dir / "values.ccaf");
  write_matrix(cache.adapter, dir / "adapter.ccaf");
  nlohmann::json j;
  j["alpha"] = cache.alpha;
  j["beta"] = cache.beta;
  std::ofstream out(dir / "cache.json");
  if (!out) throw Error(ErrorKind::Io, "cannot write " + (dir / "cache.json").string());
  out << j.dump(2) << '\n';
}

CacheModel load_cache(const std::filesystem::path& dir) {
  CacheModel cache;
  cache.keys = read_matrix(dir / "keys.ccaf");
  cache.values = read_matrix(dir / "values.ccaf");
  cache.adapter = read_matrix(dir / "adapter.ccaf");
  std::ifstream in(dir / "cache.json");
  if (!in) throw Error(ErrorKind::Io, "cannot open " + (dir / "cache.json").string());
  try {
    nlohmann::json j;
    in >> j;
    cache.alpha = j.at("alpha").get<double>();
    cache.beta = j.at("beta").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, "cache.json: " + std::string(e.what()));
  }
  const auto m = cache.keys.cols();
  if (cache.adapter.rows() != m || cache.adapter.cols() != m ||
      cache.values.cols() != cache.keys.rows())
    throw Error(ErrorKind::DimensionMismatch, "cache packs in " + dir.string() +
                                                  " have inconsistent shapes");
  return cache;
}

}  // namespace cca
