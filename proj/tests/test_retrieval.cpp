#include <doctest.h>

#include <cmath>
#include <random>

#include "glrtml/errors.hpp"
#include "glrtml/glrt_mg.hpp"
#include "glrtml/retrieval.hpp"
#include "test_support.hpp"

using namespace glrtml;
using namespace glrtml::retrieval;

namespace {

Mat from_rows(const std::vector<Vec>& rows) {
  Mat m(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

}  // namespace

TEST_CASE("score_matrix shape and consistency with the scorer") {
  const std::vector<Vec> queries{{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}};
  const std::vector<Vec> gallery{{1.0, 0.0}, {2.0, 0.0}, {0.0, 3.0}, {1.0, -1.0}};
  glrt_mg::MgModel model;
  model.form = numerics::SymMatrix::diagonal({-1.0, -2.0});

  auto scorer = [&](const Vec& q, const Vec& g) {
    Vec diff{q[0] - g[0], q[1] - g[1]};
    return glrt_mg::mg_score(model, diff);
  };
  const Mat scores = score_matrix(queries, gallery, scorer);
  CHECK(scores.rows == 3);
  CHECK(scores.cols == 4);
  CHECK(scores(0, 0) == 0.0);  // identical vectors, zero diff
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(scores(i, j) == scorer(queries[i], gallery[j]));
}

TEST_CASE("cosine_score_matrix hand values") {
  const std::vector<Vec> q{{1.0, 1.0}, {2.0, 0.0}, {0.0, 0.0}};
  const std::vector<Vec> g{{1.0, 0.0}, {0.0, 5.0}, {3.0, 3.0}};
  const Mat m = cosine_score_matrix(q, g);
  CHECK(m(1, 0) == doctest::Approx(1.0));               // parallel
  CHECK(m(1, 1) == doctest::Approx(0.0));               // orthogonal
  CHECK(m(0, 0) == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(m(2, 0) == 0.0);                                // zero vector convention
}

TEST_CASE("average_precision hand rankings") {
  CHECK(average_precision(Vec{2.0, 1.0}, std::vector<char>{1, 0}) == doctest::Approx(1.0));
  CHECK(average_precision(Vec{2.0, 1.0}, std::vector<char>{0, 1}) == doctest::Approx(0.5));
  CHECK(average_precision(Vec{3.0, 2.0, 1.0}, std::vector<char>{1, 0, 1}) ==
        doctest::Approx(5.0 / 6.0));
}

TEST_CASE("average_precision matches the brute-force definition") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 2 + rng() % 12;
    Vec scores(n);
    std::vector<char> rel(n);
    // Scores on a coarse grid so ties genuinely occur.
    for (auto& s : scores) s = static_cast<double>(rng() % 8) / 4.0;
    bool any = false;
    for (auto& r : rel) {
      r = rng() % 3 == 0 ? 1 : 0;
      any |= r == 1;
    }
    if (!any) rel[rng() % n] = 1;
    const double got = average_precision(scores, rel);
    const double expect = test_support::brute_force_ap(
        scores, std::vector<char>(rel.begin(), rel.end()));
    CHECK(got == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("metrics on a perfect and a mixed run") {
  // Two queries, each with its relevant items ranked on top.
  std::vector<Vec> rows{{5.0, 4.0, 1.0, 0.0}, {9.0, 2.0, 1.0, 0.5}};
  RetrievalRun run;
  run.scores = from_rows(rows);
  run.relevance = {{1, 1, 0, 0}, {1, 0, 0, 0}};
  run.k_list = {2};
  const Metrics m = metrics(run);
  CHECK(m.map == doctest::Approx(1.0));
  CHECK(m.recall_at.at(2) == doctest::Approx(1.0));
  CHECK(m.precision_at.at(2) == doctest::Approx(0.75));  // (2/2 + 1/2)/2
  CHECK(m.evaluated == 2);
  CHECK(m.unanswerable == 0);

  // Single query, 2 relevant of 4, both in the top 2.
  RetrievalRun run2;
  run2.scores = from_rows({{5.0, 4.0, 1.0, 0.0}});
  run2.relevance = {{1, 1, 0, 0}};
  run2.k_list = {2};
  const Metrics m2 = metrics(run2);
  CHECK(m2.recall_at.at(2) == doctest::Approx(1.0));
  CHECK(m2.precision_at.at(2) == doctest::Approx(1.0));
}

TEST_CASE("tied scores fall back to gallery order") {
  RetrievalRun run;
  run.scores = from_rows({{1.0, 1.0, 1.0}});
  run.relevance = {{0, 1, 0}};
  run.k_list = {1};
  const Metrics m = metrics(run);
  // Gallery index order puts the irrelevant item first.
  CHECK(m.map == doctest::Approx(0.5));
  CHECK(m.precision_at.at(1) == doctest::Approx(0.0));
}

TEST_CASE("unanswerable queries are excluded and counted") {
  RetrievalRun run;
  run.scores = from_rows({{1.0, 0.0}, {1.0, 0.0}});
  run.relevance = {{1, 0}, {0, 0}};
  const Metrics m = metrics(run);
  CHECK(m.evaluated == 1);
  CHECK(m.unanswerable == 1);
  CHECK(m.map == doctest::Approx(1.0));
  CHECK(std::isnan(m.per_query_ap[1]));
}

TEST_CASE("make_run marks distractors irrelevant") {
  const std::vector<int> qlabels{0, -1};
  const std::vector<int> glabels{0, -1, 1};
  RetrievalRun run = make_run(Mat(2, 3), qlabels, glabels);
  CHECK(run.relevance[0] == std::vector<char>{1, 0, 0});
  CHECK(run.relevance[1] == std::vector<char>{0, 0, 0});  // distractor query
}

TEST_CASE("map is invariant under strictly increasing score transforms") {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t nq = 3;
    const std::size_t ng = 8;
    Mat scores(nq, ng);
    // Grid scores: transforms keep distinct values distinct.
    for (auto& s : scores.a) s = static_cast<double>(rng() % 32) / 8.0;
    std::vector<std::vector<char>> rel(nq, std::vector<char>(ng, 0));
    for (auto& row : rel) row[rng() % ng] = 1;

    RetrievalRun base;
    base.scores = scores;
    base.relevance = rel;
    base.k_list = {3};

    RetrievalRun mapped = base;
    for (auto& s : mapped.scores.a) s = std::atan(s) + 3.0 * s;

    const Metrics m0 = metrics(base);
    const Metrics m1 = metrics(mapped);
    CHECK(m0.map == m1.map);
    CHECK(m0.recall_at.at(3) == m1.recall_at.at(3));
    CHECK(m0.precision_at.at(3) == m1.precision_at.at(3));
  }
}

TEST_CASE("noclip glrt scores and full llr produce identical metrics") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t d = 4;

  std::vector<Vec> pos_diffs(60, Vec(d)), neg_diffs(60, Vec(d));
  for (auto& v : pos_diffs)
    for (auto& x : v) x = 0.6 * gauss(rng);
  for (auto& v : neg_diffs)
    for (auto& x : v) x = 1.7 * gauss(rng);
  const auto s1 = glrt_mg::estimate_cov(pos_diffs, 1e-6);
  const auto s0 = glrt_mg::estimate_cov(neg_diffs, 1e-6);
  const auto model = glrt_mg::build_mg_model(s1, s0, numerics::ClipMode::NoClip, 1e-6);
  const glrt_mg::MgLlrScorer llr(s1, s0);

  std::vector<Vec> queries(6, Vec(d)), gallery(20, Vec(d));
  for (auto& v : queries)
    for (auto& x : v) x = gauss(rng);
  for (auto& v : gallery)
    for (auto& x : v) x = gauss(rng);
  std::vector<int> qlab(6), glab(20);
  for (auto& l : qlab) l = static_cast<int>(rng() % 3);
  for (auto& l : glab) l = static_cast<int>(rng() % 3);

  auto diff_of = [&](const Vec& q, const Vec& g) {
    Vec diff(d);
    for (std::size_t i = 0; i < d; ++i) diff[i] = q[i] - g[i];
    return diff;
  };
  const Mat m_clip = score_matrix(queries, gallery, [&](const Vec& q, const Vec& g) {
    return glrt_mg::mg_score(model, diff_of(q, g));
  });
  const Mat m_llr = score_matrix(queries, gallery, [&](const Vec& q, const Vec& g) {
    return llr.score(diff_of(q, g));
  });

  const Metrics a = metrics(make_run(m_clip, qlab, glab, {5}));
  const Metrics b = metrics(make_run(m_llr, qlab, glab, {5}));
  CHECK(a.map == b.map);
  CHECK(a.recall_at.at(5) == b.recall_at.at(5));
  CHECK(a.precision_at.at(5) == b.precision_at.at(5));
}

TEST_CASE("roc_curve endpoints separation and chance level") {
  // Perfect separation exposes a (0,1) operating point.
  Vec pos(200), neg(200);
  for (std::size_t i = 0; i < 200; ++i) {
    pos[i] = 10.0 + static_cast<double>(i % 7);
    neg[i] = -10.0 - static_cast<double>(i % 5);
  }
  const RocCurve sep = roc_curve(pos, neg, 101);
  bool found = false;
  for (std::size_t i = 0; i < sep.p_fa.size(); ++i)
    if (sep.p_fa[i] == 0.0 && sep.p_d[i] == 1.0) found = true;
  CHECK(found);
  CHECK(sep.p_fa.back() == doctest::Approx(1.0));
  CHECK(sep.p_d.back() == doctest::Approx(1.0));
  for (std::size_t i = 1; i < sep.p_fa.size(); ++i) {
    CHECK(sep.p_fa[i] >= sep.p_fa[i - 1]);
    CHECK(sep.p_d[i] >= sep.p_d[i - 1]);
  }

  // Identical distributions track the diagonal.
  std::mt19937_64 rng(13);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec same(20000);
  for (auto& v : same) v = gauss(rng);
  const RocCurve chance = roc_curve(same, same, 101);
  for (std::size_t i = 0; i < chance.p_fa.size(); ++i)
    CHECK(std::abs(chance.p_d[i] - chance.p_fa[i]) < 1e-12);  // same list, same rates

  CHECK_THROWS_AS(roc_curve(Vec{}, Vec{1.0}, 11), EmptyInput);
}

TEST_CASE("glrt roc dominates cosine roc under anisotropic hypotheses") {
  // Pairs share a class center; the shared covariance is strongly
  // anisotropic so cosine is dominated by the nuisance direction.
  std::mt19937_64 rng(17);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t d = 6;
  Vec axis_sd{3.0, 1.0, 0.5, 0.5, 0.5, 0.5};  // anisotropy 6 in sd, 36 in variance

  const std::size_t n = 20000;
  Vec glrt_pos, glrt_neg, cos_pos, cos_neg;
  numerics::SymMatrix sigma1(d), sigma0(d);
  for (std::size_t i = 0; i < d; ++i) {
    sigma1.set(i, i, 2.0 * axis_sd[i] * axis_sd[i]);
    sigma0.set(i, i, 2.0 * axis_sd[i] * axis_sd[i] + 2.0 * 4.0);  // center spread 2.0 sd
  }
  const glrt_mg::MgLlrScorer scorer(sigma1, sigma0);

  auto draw_pair = [&](bool paired) {
    Vec c1(d), c2(d);
    for (auto& v : c1) v = 2.0 * gauss(rng);
    if (paired)
      c2 = c1;
    else
      for (auto& v : c2) v = 2.0 * gauss(rng);
    Vec q(d), g(d);
    for (std::size_t i = 0; i < d; ++i) {
      q[i] = c1[i] + axis_sd[i] * gauss(rng);
      g[i] = c2[i] + axis_sd[i] * gauss(rng);
    }
    return std::make_pair(q, g);
  };

  for (std::size_t rep = 0; rep < n; ++rep) {
    for (bool paired : {true, false}) {
      const auto [q, g] = draw_pair(paired);
      Vec diff(d);
      for (std::size_t i = 0; i < d; ++i) diff[i] = q[i] - g[i];
      const double s_glrt = scorer.score(diff);
      const double s_cos =
          numerics::dot(q, g) / (numerics::norm2(q) * numerics::norm2(g));
      if (paired) {
        glrt_pos.push_back(s_glrt);
        cos_pos.push_back(s_cos);
      } else {
        glrt_neg.push_back(s_glrt);
        cos_neg.push_back(s_cos);
      }
    }
  }

  const RocCurve rg = roc_curve(glrt_pos, glrt_neg, 201);
  const RocCurve rc = roc_curve(cos_pos, cos_neg, 201);
  for (double pfa = 0.05; pfa < 0.96; pfa += 0.05)
    CHECK(roc_pd_at_pfa(rg, pfa) >= roc_pd_at_pfa(rc, pfa) - 0.02);
}
