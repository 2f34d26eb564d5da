#include <doctest.h>

#include <cmath>

#include "cca/adapter.hpp"
#include "cca/error.hpp"
#include "oracles.hpp"

using namespace cca;

namespace {

CacheModel small_cache(const Mat& keys, const LabelVector& labels, std::size_t n) {
  CacheModel c;
  c.keys = keys;
  c.values = one_hot(labels, n);
  c.adapter = Mat::Identity(keys.cols(), keys.cols());
  return c;
}

Mat row(std::initializer_list<double> v) {
  Mat m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index j = 0;
  for (double x : v) m(0, j++) = x;
  return m;
}

}  // namespace

TEST_SUITE("adapter") {
  TEST_CASE("affinity closed forms") {
    CacheModel c = small_cache(row({1, 0}), {0}, 1);

    // Identical unit vectors give exp(0) = 1 for any beta.
    for (double beta : {0.5, 1.0, 5.5, 10.0}) CHECK(affinity(row({1, 0}), c, beta)(0, 0) == doctest::Approx(1.0));
    // Orthogonal unit vectors at the default beta: exp(-5.5).
    CHECK(affinity(row({0, 1}), c)(0, 0) == doctest::Approx(0.004086771438464067).epsilon(1e-12));
    // Antipodal at beta = 1: exp(-2).
    CHECK(affinity(row({-1, 0}), c, 1.0)(0, 0) == doctest::Approx(0.1353352832366127).epsilon(1e-12));
    // Strictly positive and bounded by e^0 for unit inputs.
    const Mat q = oracle::unit_rows(oracle::random_matrix(20, 6, 3));
    const Mat k = oracle::unit_rows(oracle::random_matrix(9, 6, 4));
    const Mat a = affinity(q, small_cache(k, {0, 0, 0, 1, 1, 1, 2, 2, 2}, 3), 3.0);
    CHECK(a.minCoeff() > 0.0);
    CHECK(a.maxCoeff() <= 1.0 + 1e-12);
    CHECK_THROWS_AS(affinity(Mat::Ones(1, 3), c), Error);
  }

  TEST_CASE("adapter matrix acts on the keys") {
    const Mat k = oracle::unit_rows(oracle::random_matrix(6, 4, 7));
    const Mat q = oracle::unit_rows(oracle::random_matrix(5, 4, 8));
    CacheModel c = small_cache(k, {0, 0, 1, 1, 2, 2}, 3);
    const Mat base = affinity(q, c, 2.0);

    // Identity adapter: element-wise exp(-beta (1 - q.k)).
    for (Eigen::Index i = 0; i < q.rows(); ++i)
      for (Eigen::Index j = 0; j < k.rows(); ++j) {
        double dot = 0;
        for (Eigen::Index t = 0; t < 4; ++t) dot += q(i, t) * k(j, t);
        CHECK(base(i, j) == doctest::Approx(std::exp(-2.0 * (1.0 - dot))).epsilon(1e-12));
      }

    // 2I doubles every dot product.
    c.adapter = 2.0 * Mat::Identity(4, 4);
    const Mat doubled = affinity(q, c, 2.0);
    for (Eigen::Index i = 0; i < q.rows(); ++i)
      for (Eigen::Index j = 0; j < k.rows(); ++j) {
        const double dot = 1.0 + std::log(base(i, j)) / 2.0;
        CHECK(doubled(i, j) == doctest::Approx(std::exp(-2.0 * (1.0 - 2.0 * dot))).epsilon(1e-10));
      }

    // A permutation adapter equals permuting the key columns.
    Mat p = Mat::Zero(4, 4);
    p(0, 2) = p(1, 0) = p(2, 3) = p(3, 1) = 1.0;
    c.adapter = p;
    CacheModel permuted = small_cache(k * p, {0, 0, 1, 1, 2, 2}, 3);
    CHECK((affinity(q, c, 2.0) - affinity(q, permuted, 2.0)).cwiseAbs().maxCoeff() < 1e-14);
  }

  TEST_CASE("cache logits are per-class affinity sums") {
    const LabelVector labels = {2, 0, 1, 1, 0, 2, 2, 0, 1};
    const Mat k = oracle::unit_rows(oracle::random_matrix(9, 5, 11));
    const Mat q = oracle::unit_rows(oracle::random_matrix(7, 5, 12));
    CacheModel c = small_cache(k, labels, 3);
    const Mat a = affinity(q, c);
    const Mat l1 = cache_logits(a, c);
    CHECK((l1 - oracle::per_class_sums(a, labels, 3)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK_THROWS_AS(cache_logits(Mat::Ones(7, 4), c), Error);
  }

  TEST_CASE("combine_logits") {
    const Mat l1 = oracle::random_matrix(3, 4, 1);
    const Mat l2 = oracle::random_matrix(3, 4, 2);
    CHECK(combine_logits(l1, l2, 0.0) == l2);
    CHECK((combine_logits(l1, l2, 2.5) - (2.5 * l1 + l2)).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(combine_logits(l1, Mat::Ones(3, 3), 1.0), Error);
  }

  TEST_CASE("build_cache shapes and identity adapter") {
    FewShotTask t;
    t.n_classes = 3;
    t.shots = 2;
    t.cache_features = oracle::unit_rows(oracle::random_matrix(6, 5, 13));
    t.cache_labels = {0, 1, 2, 0, 1, 2};
    t.text_init = oracle::unit_rows(oracle::random_matrix(3, 5, 14));
    const CacheModel c = build_cache(t, nullptr);
    CHECK(c.keys.rows() == 6);
    CHECK(c.keys.cols() == 5);
    CHECK(c.values.rows() == 3);
    CHECK(c.values.cols() == 6);
    CHECK(c.adapter == Mat::Identity(5, 5));
    CHECK(c.beta == 5.5);
    CHECK(c.alpha == 1.0);
    CHECK((c.keys - t.cache_features).cwiseAbs().maxCoeff() < 1e-14);

    IcaModel wrong;
    wrong.whitening = Mat::Identity(4, 4);
    CHECK_THROWS_AS(build_cache(t, &wrong), Error);
  }

  TEST_CASE("cache save/load round trip") {
    oracle::TempDir tmp("cache");
    CacheModel c = small_cache(oracle::unit_rows(oracle::random_matrix(4, 3, 5)), {0, 1, 0, 1}, 2);
    c.adapter(0, 1) = 0.25;
    c.beta = 3.0;
    save_cache(c, tmp.path());
    const CacheModel back = load_cache(tmp.path());
    CHECK(back.beta == 3.0);
    CHECK(back.adapter(0, 1) == 0.25);
    CHECK(back.values == c.values);
  }
}
