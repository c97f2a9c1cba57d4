#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ctial/adaptation.hpp"
#include "ctial/learners.hpp"
#include "ctial/metrics.hpp"
#include "ctial/rng.hpp"

using namespace ctial;

namespace {

Matrix random_matrix(Index rows, Index cols, Xoshiro256StarStar& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.gaussian();
  return m;
}

// Two-class blobs in 6 dimensions; target is the same class structure with a
// constant covariate shift applied to every row.
struct DomainPair {
  Matrix Xs, Xt;
  std::vector<int> ys, yt;
};

DomainPair shifted_domains(std::uint64_t seed, bool shift_target) {
  Xoshiro256StarStar rng(seed);
  const Index per_class = 30, f = 6;
  DomainPair d;
  d.Xs.resize(2 * per_class, f);
  d.Xt.resize(2 * per_class, f);
  Vector offset(f);
  offset << 3.0, 1.0, -2.0, 0.5, 0.0, 0.0;
  for (int c = 0; c < 2; ++c)
    for (Index i = 0; i < per_class; ++i) {
      const Index r = c * per_class + i;
      for (Index j = 0; j < f; ++j) {
        const double center = (j == 0 ? (c == 0 ? -2.0 : 2.0) : 0.0);
        d.Xs(r, j) = center + rng.gaussian();
        d.Xt(r, j) = center + rng.gaussian() + (shift_target ? offset[j] : 0.0);
      }
      d.ys.push_back(c);
      d.yt.push_back(c);
    }
  return d;
}

const ClassifierFactory kFactory = [](const Matrix& X, const std::vector<int>& y,
                                      int n_classes) {
  return fit_classifier(X, y, n_classes, 10.0);
};

}  // namespace

TEST_CASE("mmd is the squared distance between domain means", "[adaptation]") {
  Matrix A(2, 2), B(2, 2);
  A << 0, 0, 2, 4;  // mean (1, 2)
  B << 4, 6, 4, 6;  // mean (4, 6)
  REQUIRE(mmd(A, B) == Catch::Approx(25.0).margin(1e-12));
  REQUIRE(mmd(A, A) == 0.0);

  Xoshiro256StarStar rng(5);
  const Matrix P = random_matrix(13, 4, rng);
  const Matrix Q = random_matrix(9, 4, rng);
  double direct = 0.0;
  for (Index j = 0; j < 4; ++j) {
    const double gap = P.col(j).mean() - Q.col(j).mean();
    direct += gap * gap;
  }
  REQUIRE(mmd(P, Q) == Catch::Approx(direct).margin(1e-12));

  REQUIRE_THROWS_AS(mmd(Matrix(0, 2), B), Error);
  REQUIRE_THROWS_AS(mmd(A, Matrix::Ones(2, 3)), Error);
}

TEST_CASE("tca projection has expected shape and fixed signs", "[adaptation]") {
  const DomainPair d = shifted_domains(1, true);
  const LinearProjection proj = tca_fit(d.Xs, d.Xt, 3, 1.0);
  REQUIRE(proj.matrix.rows() == 6);
  REQUIRE(proj.matrix.cols() == 3);
  REQUIRE(proj.kind == AdaptationKind::TCA);
  REQUIRE_FALSE(proj.balance_factor.has_value());
  for (Index c = 0; c < 3; ++c) {
    Index at = 0;
    proj.matrix.col(c).cwiseAbs().maxCoeff(&at);
    REQUIRE(proj.matrix(at, c) > 0.0);
  }
  // Deterministic refit.
  const LinearProjection again = tca_fit(d.Xs, d.Xt, 3, 1.0);
  REQUIRE((again.matrix - proj.matrix).cwiseAbs().maxCoeff() == 0.0);

  const Matrix Zs = proj.apply(d.Xs);
  REQUIRE(Zs.rows() == d.Xs.rows());
  REQUIRE(Zs.cols() == 3);
  REQUIRE_THROWS_AS(proj.apply(Matrix::Ones(4, 5)), Error);
}

TEST_CASE("tca shrinks the domain mean gap against an equal-dim pca slice", "[adaptation]") {
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const DomainPair d = shifted_domains(seed, true);
    const Index dims = 2;
    const LinearProjection proj = tca_fit(d.Xs, d.Xt, dims, 1.0);
    const double tca_gap = mmd(proj.apply(d.Xs), proj.apply(d.Xt));

    Matrix stacked(d.Xs.rows() + d.Xt.rows(), d.Xs.cols());
    stacked.topRows(d.Xs.rows()) = d.Xs;
    stacked.bottomRows(d.Xt.rows()) = d.Xt;
    const PCAProjection pca = fit_pca(stacked, 1.0);
    REQUIRE(pca.dim() >= dims);
    const Matrix slice = pca.components.leftCols(dims);
    const auto project = [&](const Matrix& X) {
      return ((X.rowwise() - pca.mean.transpose()) * slice).eval();
    };
    const double pca_gap = mmd(project(d.Xs), project(d.Xt));
    if (tca_gap < pca_gap) ++wins;
  }
  REQUIRE(wins >= 8);
}

TEST_CASE("tca validates its inputs", "[adaptation]") {
  const DomainPair d = shifted_domains(2, true);
  REQUIRE_THROWS_AS(tca_fit(Matrix(0, 6), d.Xt, 2, 1.0), Error);
  REQUIRE_THROWS_AS(tca_fit(d.Xs, Matrix::Ones(3, 5), 2, 1.0), Error);
  REQUIRE_THROWS_AS(tca_fit(d.Xs, d.Xt, 0, 1.0), Error);
  REQUIRE_THROWS_AS(tca_fit(d.Xs, d.Xt, 7, 1.0), Error);  // beyond feature count
  REQUIRE_THROWS_AS(tca_fit(d.Xs, d.Xt, 2, 0.0), Error);

  // Rank-deficient data cannot supply more directions than its rank.
  Xoshiro256StarStar rng(3);
  Matrix low_s = random_matrix(20, 6, rng);
  Matrix low_t = random_matrix(20, 6, rng);
  for (Index c = 2; c < 6; ++c) {
    low_s.col(c) = low_s.col(0);
    low_t.col(c) = low_t.col(0);
  }
  REQUIRE_THROWS_AS(tca_fit(low_s, low_t, 5, 1.0), Error);
}

TEST_CASE("bda at balance 1 with one iteration reduces to tca", "[adaptation]") {
  const DomainPair d = shifted_domains(4, true);
  const LinearProjection tca = tca_fit(d.Xs, d.Xt, 2, 1.0);
  const BdaResult bda = bda_fit(d.Xs, d.ys, d.Xt, 2, 2, 1, {1.0}, kFactory, 1.0);
  // Weight 1 on the marginal term zeroes every class-conditional term, so
  // the discrepancy matrix and hence the directions coincide with TCA's.
  REQUIRE((bda.projection.matrix - tca.matrix).cwiseAbs().maxCoeff() < 1e-9);
  REQUIRE(bda.projection.kind == AdaptationKind::BDA);
  REQUIRE(bda.projection.balance_factor == 1.0);
  REQUIRE(bda.balance_factor == 1.0);
}

TEST_CASE("bda evaluates the whole balance grid and keeps the minimum", "[adaptation]") {
  const DomainPair d = shifted_domains(6, true);
  const std::vector<double> grid = {0.25, 0.5, 0.75};
  const BdaResult r = bda_fit(d.Xs, d.ys, d.Xt, 2, 2, 2, grid, kFactory, 1.0);
  REQUIRE(r.objective_by_factor.size() == 3);
  double best = r.objective_by_factor[0];
  std::size_t best_at = 0;
  for (std::size_t i = 1; i < 3; ++i)
    if (r.objective_by_factor[i] < best) {
      best = r.objective_by_factor[i];
      best_at = i;
    }
  REQUIRE(r.selected_objective == best);
  REQUIRE(r.balance_factor == grid[best_at]);

  // Deterministic rerun, including the classifier.
  const BdaResult again = bda_fit(d.Xs, d.ys, d.Xt, 2, 2, 2, grid, kFactory, 1.0);
  REQUIRE((again.projection.matrix - r.projection.matrix).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(again.selected_objective == r.selected_objective);
}

TEST_CASE("bda keeps usable class structure in the adapted space", "[adaptation]") {
  // The shift overlaps the class axis, so suppressing it necessarily costs
  // separation: the surviving class signal lives in directions only partly
  // aligned with the class axis. Expect well above chance (0.5), not the
  // raw-space optimum.
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const DomainPair d = shifted_domains(seed, true);
    const BdaResult r = bda_fit(d.Xs, d.ys, d.Xt, 2, 3, 3, {0.3, 0.6, 0.9}, kFactory, 1.0);
    const Matrix As = d.Xs * r.projection.matrix;
    REQUIRE(bca(d.ys, r.classifier.predict(As)) > 0.8);
  }
}

TEST_CASE("bda validates inputs and the balance grid", "[adaptation]") {
  const DomainPair d = shifted_domains(9, true);
  REQUIRE_THROWS_AS(bda_fit(Matrix(0, 6), {}, d.Xt, 2, 2, 1, {0.5}, kFactory), Error);
  REQUIRE_THROWS_AS(bda_fit(d.Xs, d.ys, Matrix::Ones(5, 4), 2, 2, 1, {0.5}, kFactory), Error);
  REQUIRE_THROWS_AS(bda_fit(d.Xs, {0, 1}, d.Xt, 2, 2, 1, {0.5}, kFactory), Error);
  REQUIRE_THROWS_AS(bda_fit(d.Xs, d.ys, d.Xt, 2, 2, 0, {0.5}, kFactory), Error);
  REQUIRE_THROWS_AS(bda_fit(d.Xs, d.ys, d.Xt, 2, 2, 1, {}, kFactory), Error);
  REQUIRE_THROWS_AS(bda_fit(d.Xs, d.ys, d.Xt, 2, 2, 1, {1.5}, kFactory), Error);
  REQUIRE_THROWS_AS(bda_fit(d.Xs, d.ys, d.Xt, 2, 2, 1, {-0.1}, kFactory), Error);
  // Declared class 2 never appears in the source labels.
  REQUIRE_THROWS_AS(bda_fit(d.Xs, d.ys, d.Xt, 3, 2, 1, {0.5}, kFactory), Error);
}

TEST_CASE("bda transfer beats direct transfer across a covariate shift", "[adaptation]") {
  // The shift carries the target across the direct decision boundary, so
  // plain transfer collapses toward chance while the aligned space stays
  // usable.
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const DomainPair d = shifted_domains(seed, true);
    const double direct_bca = bca(d.yt, kFactory(d.Xs, d.ys, 2).predict(d.Xt));
    const BdaResult r = bda_fit(d.Xs, d.ys, d.Xt, 2, 3, 3, {0.5, 0.9}, kFactory, 1.0);
    const double bda_bca = bca(d.yt, r.classifier.predict(d.Xt * r.projection.matrix));
    if (bda_bca >= direct_bca) ++wins;
  }
  REQUIRE(wins >= 8);
}

TEST_CASE("bda stays near direct transfer when domains already agree", "[adaptation]") {
  // With identically distributed domains there is nothing to align, and the
  // sampling noise in the discrepancy term can cost a little class signal:
  // noise-level losses are acceptable, large regressions are not.
  int at_least_as_good = 0;
  double worst_loss = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const DomainPair d = shifted_domains(seed, false);
    const double direct_bca = bca(d.yt, kFactory(d.Xs, d.ys, 2).predict(d.Xt));
    const BdaResult r = bda_fit(d.Xs, d.ys, d.Xt, 2, 3, 3, {0.5, 0.9}, kFactory, 1.0);
    const double bda_bca = bca(d.yt, r.classifier.predict(d.Xt * r.projection.matrix));
    if (bda_bca >= direct_bca) ++at_least_as_good;
    worst_loss = std::max(worst_loss, direct_bca - bda_bca);
  }
  REQUIRE(at_least_as_good >= 7);
  REQUIRE(worst_loss <= 0.1);
}
