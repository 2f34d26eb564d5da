#include <doctest.h>

#include <fstream>
#include <functional>
#include <iterator>
#include <json.hpp>

#include "cca/error.hpp"
#include "cca/featurepack.hpp"
#include "oracles.hpp"

using namespace cca;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected a cca::Error");
  return ErrorKind::Io;
}

void write_manifest(const std::filesystem::path& dir, const nlohmann::json& j) {
  std::ofstream(dir / "manifest.json") << j.dump();
}

}  // namespace

TEST_SUITE("featurepack") {
  TEST_CASE("pack sizes follow the header arithmetic") {
    oracle::TempDir tmp("pack");
    write_pack(FeatureMatrix(1, 2, {1.0f, 2.0f}), tmp.path() / "a.ccaf");
    CHECK(std::filesystem::file_size(tmp.path() / "a.ccaf") == 36);
    write_pack(FeatureMatrix(0, 5), tmp.path() / "b.ccaf");
    CHECK(std::filesystem::file_size(tmp.path() / "b.ccaf") == 28);
    const FeatureMatrix empty = read_pack(tmp.path() / "b.ccaf");
    CHECK(empty.rows() == 0);
    CHECK(empty.cols() == 5);
  }

  TEST_CASE("header fields are little-endian at fixed offsets") {
    oracle::TempDir tmp("hdr");
    write_pack(FeatureMatrix(1, 2, {1.0f, 2.0f}), tmp.path() / "a.ccaf");
    const std::string b = slurp(tmp.path() / "a.ccaf");
    const std::string expected_header("CCAF\x01\x00\x00\x00"
                                      "\x01\x00\x00\x00\x00\x00\x00\x00"
                                      "\x02\x00\x00\x00\x00\x00\x00\x00"
                                      "\x01\x00\x00\x00",
                                      28);
    CHECK(b.substr(0, 28) == expected_header);
    // 1.0f = 0x3f800000, 2.0f = 0x40000000
    CHECK(b.substr(28) == std::string("\x00\x00\x80\x3f\x00\x00\x00\x40", 8));
  }

  TEST_CASE("round trip is value- and byte-identical") {
    oracle::TempDir tmp("rt");
    const FeatureMatrix m = FeatureMatrix::from_dense(oracle::random_matrix(7, 5, 11));
    write_pack(m, tmp.path() / "a.ccaf");
    const FeatureMatrix back = read_pack(tmp.path() / "a.ccaf");
    CHECK(back == m);
    write_pack(back, tmp.path() / "b.ccaf");
    CHECK(slurp(tmp.path() / "a.ccaf") == slurp(tmp.path() / "b.ccaf"));
  }

  TEST_CASE("golden file decodes to the known values") {
    const FeatureMatrix g = read_pack(std::filesystem::path(CCA_TEST_DATA_DIR) / "golden_2x3.ccaf");
    REQUIRE(g.rows() == 2);
    REQUIRE(g.cols() == 3);
    CHECK(g(0, 0) == 1.0f);
    CHECK(g(0, 1) == -2.5f);
    CHECK(g(0, 2) == 0.15625f);
    CHECK(g(1, 0) == 3.0e-8f);
    CHECK(g(1, 1) == 65504.0f);
    CHECK(g(1, 2) == 0.0f);
    CHECK(std::signbit(g(1, 2)));
  }

  TEST_CASE("reader error kinds are distinct") {
    oracle::TempDir tmp("err");
    const auto good = tmp.path() / "good.ccaf";
    write_pack(FeatureMatrix(10, 2), good);
    const std::string bytes = slurp(good);

    std::string bad = bytes;
    bad.replace(0, 4, "XXXX");
    spit(tmp.path() / "magic.ccaf", bad);
    CHECK(kind_of([&] { read_pack(tmp.path() / "magic.ccaf"); }) == ErrorKind::BadMagic);

    bad = bytes;
    bad[4] = 2;
    spit(tmp.path() / "ver.ccaf", bad);
    CHECK(kind_of([&] { read_pack(tmp.path() / "ver.ccaf"); }) == ErrorKind::UnsupportedVersion);

    bad = bytes;
    bad[24] = 2;
    spit(tmp.path() / "dtype.ccaf", bad);
    CHECK(kind_of([&] { read_pack(tmp.path() / "dtype.ccaf"); }) == ErrorKind::UnsupportedDtype);

    // Declares 10 rows but holds 5.
    spit(tmp.path() / "short.ccaf", bytes.substr(0, 28 + 5 * 2 * 4));
    CHECK(kind_of([&] { read_pack(tmp.path() / "short.ccaf"); }) == ErrorKind::Truncated);

    bad = bytes;
    const std::string nan("\x00\x00\xc0\x7f", 4);
    bad.replace(28, 4, nan);
    spit(tmp.path() / "nan.ccaf", bad);
    CHECK(kind_of([&] { read_pack(tmp.path() / "nan.ccaf"); }) == ErrorKind::NonFinite);

    CHECK(kind_of([&] { read_pack(tmp.path() / "missing.ccaf"); }) == ErrorKind::Io);
  }

  TEST_CASE("one_hot places a single 1 per column") {
    const Mat oh = one_hot({0, 2, 1}, 3);
    Mat expected(3, 3);
    expected << 1, 0, 0,
                0, 0, 1,
                0, 1, 0;
    CHECK(oh == expected);
    CHECK(one_hot({0}, 1) == Mat::Ones(1, 1));
    CHECK_THROWS_AS(one_hot({0, 3}, 3), Error);
  }

  TEST_CASE("one_hot of a K-shot split: column sums 1, L Lᵀ = K I") {
    for (std::size_t n : {1u, 3u, 5u}) {
      for (std::size_t k : {1u, 4u}) {
        LabelVector labels;
        for (std::size_t c = 0; c < n; ++c)
          for (std::size_t s = 0; s < k; ++s) labels.push_back(c);
        std::mt19937 rng(static_cast<unsigned>(n * 10 + k));
        std::shuffle(labels.begin(), labels.end(), rng);
        const Mat oh = one_hot(labels, n);
        CHECK(oh.colwise().sum().isApproxToConstant(1.0));
        CHECK(oh.rowwise().sum().isApproxToConstant(static_cast<double>(k)));
        const Mat gram = oh * oh.transpose();
        CHECK(gram.isApprox(static_cast<double>(k) * Mat::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))));
      }
    }
  }

  TEST_CASE("l2_normalize_rows") {
    Mat m(1, 2);
    m << 3, 4;
    const Mat u = l2_normalize_rows(m);
    CHECK(u(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(u(0, 1) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(l2_normalize_rows(u).isApprox(u, 1e-12));

    const Mat r = oracle::random_matrix(20, 9, 5, 3.0);
    const Mat n1 = l2_normalize_rows(r);
    for (Eigen::Index i = 0; i < n1.rows(); ++i) CHECK(std::abs(n1.row(i).norm() - 1.0) < 1e-6);
    CHECK((l2_normalize_rows(n1) - n1).cwiseAbs().maxCoeff() < 1e-6);

    CHECK(kind_of([] { l2_normalize_rows(Mat::Zero(1, 2)); }) == ErrorKind::ZeroRow);
  }

  TEST_CASE("load_task assembles and validates a manifest") {
    oracle::TempDir tmp("task");
    const auto& d = tmp.path();
    write_matrix(oracle::random_matrix(6, 8, 1), d / "cache.ccaf");
    write_labels({0, 0, 1, 1, 2, 2}, d / "cache_labels.ccaf");
    write_matrix(oracle::random_matrix(3, 8, 2), d / "text.ccaf");
    write_matrix(oracle::random_matrix(4, 8, 3), d / "test.ccaf");
    write_labels({0, 1, 2, 1}, d / "test_labels.ccaf");
    nlohmann::json j = {{"n_classes", 3},
                        {"shots", 2},
                        {"cache_features", "cache.ccaf"},
                        {"cache_labels", "cache_labels.ccaf"},
                        {"text_init", "text.ccaf"},
                        {"test_features", "test.ccaf"},
                        {"test_labels", "test_labels.ccaf"},
                        {"class_names", {"a", "b", "c"}}};
    write_manifest(d, j);
    const FewShotTask task = load_task(d / "manifest.json");
    CHECK(task.cache_features.rows() == 6);
    CHECK(task.cache_features.cols() == 8);
    CHECK(task.val_features.rows() == 0);
    CHECK(task.test_labels == LabelVector{0, 1, 2, 1});
    for (Eigen::Index i = 0; i < task.cache_features.rows(); ++i)
      CHECK(std::abs(task.cache_features.row(i).norm() - 1.0) < 1e-6);

    SUBCASE("shot-count violation") {
      write_matrix(oracle::random_matrix(5, 8, 1), d / "cache.ccaf");
      CHECK(kind_of([&] { load_task(d / "manifest.json"); }) == ErrorKind::ShotCount);
    }
    SUBCASE("dimension mismatch") {
      write_matrix(oracle::random_matrix(6, 16, 1), d / "cache.ccaf");
      CHECK(kind_of([&] { load_task(d / "manifest.json"); }) == ErrorKind::DimensionMismatch);
    }
    SUBCASE("unbalanced shots") {
      write_labels({0, 0, 0, 1, 2, 2}, d / "cache_labels.ccaf");
      CHECK(kind_of([&] { load_task(d / "manifest.json"); }) == ErrorKind::ShotCount);
    }
    SUBCASE("missing file") {
      std::filesystem::remove(d / "text.ccaf");
      CHECK(kind_of([&] { load_task(d / "manifest.json"); }) == ErrorKind::Io);
    }
  }

  TEST_CASE("save_task output loads back") {
    oracle::TempDir tmp("save");
    FewShotTask t;
    t.n_classes = 2;
    t.shots = 2;
    t.cache_features = oracle::unit_rows(oracle::random_matrix(4, 3, 9));
    t.cache_labels = {1, 0, 0, 1};
    t.text_init = oracle::unit_rows(oracle::random_matrix(2, 3, 10));
    t.class_names = {"x", "y"};
    const FewShotTask back = load_task(save_task(t, tmp.path()));
    CHECK(back.cache_labels == t.cache_labels);
    CHECK(back.class_names == t.class_names);
    CHECK((back.cache_features - t.cache_features).cwiseAbs().maxCoeff() < 1e-6);
  }
}
