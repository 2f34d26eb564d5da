#include <doctest.h>

#include <algorithm>

#include "cca/error.hpp"
#include "cca/search.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace cca;

namespace {

struct Setup {
  fixture::Problem problem;
  Predictor predictor;
  EvalSplit val;
  EvalSplit test;
};

Setup make_setup(std::uint64_t seed) {
  Setup s{fixture::make_problem(4, 8, 8, 16, seed, 120, 130, 3000), {}, {}, {}};
  const FewShotTask& t = s.problem.task;
  CrossModalHead head;
  head.text_weights = t.text_init;
  s.predictor = make_predictor(build_cache(t, &s.problem.ica), head, t.cache_features);
  s.val = make_split(t.val_features, t.val_labels, &s.problem.ica);
  s.test = make_split(t.test_features, t.test_labels, &s.problem.ica);
  return s;
}

SearchGrid small_grid() {
  SearchGrid g;
  g.alpha = {0.5, 1.0, 2.0};
  g.beta = {1.0, 5.5};
  g.gamma = {0.0, 0.5};
  g.eta = {0.0, 0.25, 0.5};
  return g;
}

}  // namespace

TEST_SUITE("search") {
  TEST_CASE("argmax ties go to the lowest class index") {
    Mat l(3, 3);
    l << 1, 1, 0,
         0, 2, 2,
         5, 5, 5;
    CHECK(argmax_rows(l) == std::vector<std::size_t>{0, 1, 0});
    CHECK(accuracy({0, 1, 2}, {0, 1, 1}) == doctest::Approx(2.0 / 3.0));
  }

  TEST_CASE("default grid sizes") {
    const SearchGrid g = SearchGrid::defaults();
    CHECK(g.alpha.size() == 20);
    CHECK(g.beta.size() == 19);
    CHECK(g.gamma.size() == 21);
    CHECK(g.eta.size() == 21);
    CHECK(g.alpha.back() == doctest::Approx(10.0));
    CHECK(g.beta.back() == doctest::Approx(10.0));
    CHECK(g.gamma.back() == doctest::Approx(1.0));
    SearchGrid bad = g;
    bad.beta = {0.0};
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = g;
    bad.eta.clear();
    CHECK_THROWS_AS(bad.validate(), Error);
  }

  TEST_CASE("a single-point grid reports that point") {
    const Setup s = make_setup(1);
    SearchGrid g;
    g.alpha = {1.5};
    g.beta = {4.0};
    g.gamma = {0.3};
    g.eta = {0.2};
    for (SearchMode mode : {SearchMode::TwoPass, SearchMode::Full}) {
      const SearchResult r = grid_search(s.predictor, s.val, g, mode);
      CHECK(r.best == Hyperparams{1.5, 4.0, 0.3, 0.2});
      CHECK(r.best_accuracy == evaluate(s.predictor, s.val, r.best));
    }
  }

  TEST_CASE("best is the first maximizer over grid points and re-evaluates exactly") {
    const Setup s = make_setup(2);
    for (SearchMode mode : {SearchMode::TwoPass, SearchMode::Full}) {
      const SearchResult r = grid_search(s.predictor, s.val, small_grid(), mode);
      REQUIRE(r.table.size() == (mode == SearchMode::Full ? 36u : 6u + 6u));
      // Two-pass: the first six rows score the head's own gamma/eta.
      const auto begin = r.table.begin() + (mode == SearchMode::Full ? 0 : 6);
      double top = 0.0;
      for (auto it = begin; it != r.table.end(); ++it) top = std::max(top, it->accuracy);
      CHECK(r.best_accuracy == top);
      const auto first = std::find_if(begin, r.table.end(),
                                      [&](const SearchRow& row) { return row.accuracy == top; });
      CHECK(first->params == r.best);
      // The head's gamma/eta lie on the grid, so nothing in the table beats the best.
      for (const auto& row : r.table) CHECK(row.accuracy <= r.best_accuracy);
      CHECK(evaluate(s.predictor, s.val, r.best) == r.best_accuracy);
      for (const auto& row : r.table) CHECK(evaluate(s.predictor, s.val, row.params) == row.accuracy);
    }
  }

  TEST_CASE("the default grid is at least as good as the default point") {
    const Setup s = make_setup(3);
    const SearchResult r = grid_search(s.predictor, s.val, SearchGrid::defaults());
    CHECK(r.table.size() == 20u * 19u + 21u * 21u);
    CHECK(r.best_accuracy >= evaluate(s.predictor, s.val, Hyperparams{}));
  }

  TEST_CASE("a two-way tie resolves to the earlier grid point") {
    // Every class holds the same cache keys, so l1 adds one constant per row
    // and alpha cannot move any argmax.
    Setup s = make_setup(4);
    const Mat k = s.predictor.cache.keys.topRows(1);
    s.predictor.cache.keys = k.replicate(s.predictor.cache.keys.rows(), 1);
    SearchGrid g;
    g.alpha = {2.0, 1.0};
    g.beta = {5.5};
    g.gamma = {0.5};
    g.eta = {0.5};
    const SearchResult r = grid_search(s.predictor, s.val, g, SearchMode::Full);
    REQUIRE(r.table.size() == 2);
    REQUIRE(r.table[0].accuracy == r.table[1].accuracy);
    CHECK(r.best.alpha == 2.0);

    g.alpha = {1.0, 2.0};
    CHECK(grid_search(s.predictor, s.val, g, SearchMode::Full).best.alpha == 1.0);
  }

  TEST_CASE("logits and accuracy do not depend on the evaluation batch size") {
    const Setup s = make_setup(5);
    const Hyperparams hp{1.0, 5.5, 0.5, 0.5};
    const Mat full = predict_logits(s.predictor, s.test, hp);
    const double acc = evaluate(s.predictor, s.test, hp);
    for (std::size_t b : {1u, 7u, 128u}) {
      CHECK((predict_logits(s.predictor, s.test, hp, b) - full).cwiseAbs().maxCoeff() < 1e-6);
      CHECK(evaluate(s.predictor, s.test, hp, b) == acc);
    }
  }

  TEST_CASE("evaluation rejects an empty split") {
    const Setup s = make_setup(6);
    EvalSplit empty;
    empty.raw = Mat(0, 16);
    empty.disentangled = Mat(0, 8);
    CHECK_THROWS_AS(evaluate(s.predictor, empty, Hyperparams{}), Error);
    CHECK_THROWS_AS(grid_search(s.predictor, empty, small_grid()), Error);
  }
}
