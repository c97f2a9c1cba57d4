#pragma once

// Cross-corpus feature alignment with a linear kernel: maximum mean
// discrepancy, transfer component analysis (marginal alignment), and
// balanced distribution adaptation (marginal + class-conditional alignment
// with pseudo-labeled target data).

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ctial/common.hpp"
#include "ctial/learners.hpp"

namespace ctial {

/// Squared distance between the mean rows of two sample sets.
inline double mmd(const Matrix& A, const Matrix& B) {
  if (A.rows() == 0 || B.rows() == 0) throw Error("mmd: empty input");
  if (A.cols() != B.cols()) throw Error("mmd: column count mismatch");
  return (A.colwise().mean() - B.colwise().mean()).squaredNorm();
}

enum class AdaptationKind { TCA, BDA };

/// Learned alignment map. Applied identically to source and target rows;
/// columns are generalized eigenvectors with signs fixed so the
/// largest-magnitude entry of each column is positive.
struct LinearProjection {
  Matrix matrix;  // F x d
  AdaptationKind kind = AdaptationKind::TCA;
  std::optional<double> balance_factor;  // BDA only

  Matrix apply(const Matrix& X) const {
    if (X.cols() != matrix.rows())
      throw Error("LinearProjection: feature count mismatch");
    return X * matrix;
  }
};

namespace detail {

/// Solves the shared alignment eigenproblem: maximize projected variance of
/// the stacked data against the discrepancy-plus-ridge term. `scatter` is the
/// centered second-moment matrix X'HX and `discrepancy` is X'MX for the
/// alignment-specific M. Returns the d strongest directions, strongest first.
inline Matrix alignment_directions(const Matrix& scatter, const Matrix& discrepancy,
                                   Index d, double mu) {
  const Index F = scatter.rows();
  if (d < 1 || d > F)
    throw Error("adaptation: requested dimensionality " + std::to_string(d) +
                " outside [1, " + std::to_string(F) + "]");
  if (mu <= 0.0) throw Error("adaptation: regularizer must be positive");
  Matrix B = discrepancy;
  B.diagonal().array() += mu;
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> solver(scatter, B);
  if (solver.info() != Eigen::Success)
    throw Error("adaptation: generalized eigensolver failed");
  const Vector evals = solver.eigenvalues();  // ascending
  const double top = evals[F - 1];
  Index rank = 0;
  for (Index i = 0; i < F; ++i)
    if (evals[i] > std::max(top, 0.0) * 1e-9 && evals[i] > 0.0) ++rank;
  if (d > rank)
    throw Error("adaptation: requested dimensionality " + std::to_string(d) +
                " exceeds achievable rank " + std::to_string(rank));
  Matrix W(F, d);
  for (Index c = 0; c < d; ++c) W.col(c) = solver.eigenvectors().col(F - 1 - c);
  fix_column_signs(W);
  return W;
}

/// Centered second-moment matrix of the stacked rows, X'HX with
/// H = I - (1/n) 1 1'.
inline Matrix stacked_scatter(const Matrix& X) {
  const Vector mean = X.colwise().mean();
  const Matrix Xc = X.rowwise() - mean.transpose();
  return Xc.transpose() * Xc;
}

/// Membership vector of the marginal discrepancy term: +1/ns on source rows,
/// -1/nt on target rows, so e'X is the mean-difference direction.
inline Vector marginal_membership(Index ns, Index nt) {
  Vector e(ns + nt);
  e.head(ns).setConstant(1.0 / static_cast<double>(ns));
  e.tail(nt).setConstant(-1.0 / static_cast<double>(nt));
  return e;
}

}  // namespace detail

/// Marginal-distribution alignment. Projects source and target so the
/// projected domain means approach each other while retaining variance of
/// the stacked data.
inline LinearProjection tca_fit(const Matrix& Xs, const Matrix& Xt, Index d, double mu = 1.0) {
  if (Xs.rows() == 0 || Xt.rows() == 0) throw Error("tca_fit: empty input");
  if (Xs.cols() != Xt.cols()) throw Error("tca_fit: feature count mismatch");
  const Index ns = Xs.rows(), nt = Xt.rows();
  Matrix X(ns + nt, Xs.cols());
  X.topRows(ns) = Xs;
  X.bottomRows(nt) = Xt;
  const Vector e = detail::marginal_membership(ns, nt);
  // M = e e' / ||e e'||_F and ||e e'||_F = ||e||^2, so X'MX is a scaled
  // outer product of X'e.
  const Vector xe = X.transpose() * e;
  const Matrix discrepancy = (xe * xe.transpose()) / e.squaredNorm();
  LinearProjection proj;
  proj.matrix = detail::alignment_directions(detail::stacked_scatter(X), discrepancy, d, mu);
  proj.kind = AdaptationKind::TCA;
  return proj;
}

/// Trains a classifier from features and class indices; lets callers inject
/// their regularization policy into the BDA loop.
using ClassifierFactory =
    std::function<ClassifierModel(const Matrix& X, const std::vector<int>& y, int n_classes)>;

struct BdaResult {
  LinearProjection projection;
  ClassifierModel classifier;          // trained on adapted source features
  double balance_factor = 0.0;
  std::vector<double> objective_by_factor;  // aligned with the input grid
  double selected_objective = 0.0;
};

namespace detail {

/// One full BDA pass at a fixed balance factor. Pseudo-labels start from a
/// classifier on the unadapted features and are refreshed after each
/// projection update. Returns the final projection, classifier, and the
/// marginal-plus-conditional discrepancy of the adapted features.
struct BdaPass {
  LinearProjection projection;
  ClassifierModel classifier;
  double objective = 0.0;
};

inline Matrix rows_subset(const Matrix& X, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = X.row(rows[i]);
  return out;
}

inline BdaPass bda_single_factor(const Matrix& Xs, const std::vector<int>& ys,
                                 const Matrix& Xt, int n_classes, Index d, Index iterations,
                                 double balance, double mu,
                                 const ClassifierFactory& make_classifier,
                                 const std::vector<int>& initial_pseudo) {
  const Index ns = Xs.rows(), nt = Xt.rows();
  Matrix X(ns + nt, Xs.cols());
  X.topRows(ns) = Xs;
  X.bottomRows(nt) = Xt;
  const Matrix scatter = stacked_scatter(X);
  const Vector marginal = marginal_membership(ns, nt);

  std::vector<int> pseudo = initial_pseudo;
  BdaPass pass;
  Matrix As, At;
  for (Index it = 0; it < iterations; ++it) {
    // Membership vectors: index 0 is the marginal term, then one per class
    // with at least one pseudo-labeled target sample.
    std::vector<Vector> members;
    std::vector<double> weights;
    members.push_back(marginal);
    weights.push_back(balance);
    for (int c = 0; c < n_classes; ++c) {
      Index ns_c = 0, nt_c = 0;
      for (Index i = 0; i < ns; ++i)
        if (ys[static_cast<std::size_t>(i)] == c) ++ns_c;
      for (Index i = 0; i < nt; ++i)
        if (pseudo[static_cast<std::size_t>(i)] == c) ++nt_c;
      if (ns_c == 0)
        throw Error("bda_fit: class " + std::to_string(c) + " absent from source");
      if (nt_c == 0) continue;  // no conditional term this iteration
      Vector e = Vector::Zero(ns + nt);
      for (Index i = 0; i < ns; ++i)
        if (ys[static_cast<std::size_t>(i)] == c) e[i] = 1.0 / static_cast<double>(ns_c);
      for (Index i = 0; i < nt; ++i)
        if (pseudo[static_cast<std::size_t>(i)] == c)
          e[ns + i] = -1.0 / static_cast<double>(nt_c);
      members.push_back(std::move(e));
      weights.push_back(1.0 - balance);
    }
    // M = sum_k w_k e_k e_k', normalized by its Frobenius norm;
    // ||M||_F^2 = sum_kl w_k w_l (e_k' e_l)^2 via the membership Gram matrix.
    const std::size_t K = members.size();
    double frob_sq = 0.0;
    for (std::size_t a = 0; a < K; ++a)
      for (std::size_t b = 0; b < K; ++b) {
        const double g = members[a].dot(members[b]);
        frob_sq += weights[a] * weights[b] * g * g;
      }
    const double frob = std::sqrt(std::max(frob_sq, 0.0));
    if (frob == 0.0) throw Error("bda_fit: degenerate discrepancy term");
    Matrix discrepancy = Matrix::Zero(X.cols(), X.cols());
    for (std::size_t k = 0; k < K; ++k) {
      const Vector xe = X.transpose() * members[k];
      discrepancy.noalias() += (weights[k] / frob) * (xe * xe.transpose());
    }

    pass.projection.matrix = alignment_directions(scatter, discrepancy, d, mu);
    As = Xs * pass.projection.matrix;
    At = Xt * pass.projection.matrix;
    pass.classifier = make_classifier(As, ys, n_classes);
    pseudo = pass.classifier.predict(At);
  }
  pass.projection.kind = AdaptationKind::BDA;
  pass.projection.balance_factor = balance;

  // Selection objective: marginal plus per-class discrepancy of the adapted
  // features under the final pseudo-labels.
  pass.objective = mmd(As, At);
  for (int c = 0; c < n_classes; ++c) {
    std::vector<Index> src_rows, tgt_rows;
    for (Index i = 0; i < ns; ++i)
      if (ys[static_cast<std::size_t>(i)] == c) src_rows.push_back(i);
    for (Index i = 0; i < nt; ++i)
      if (pseudo[static_cast<std::size_t>(i)] == c) tgt_rows.push_back(i);
    if (src_rows.empty() || tgt_rows.empty()) continue;
    pass.objective += mmd(rows_subset(As, src_rows), rows_subset(At, tgt_rows));
  }
  return pass;
}

}  // namespace detail

/// Joint marginal and class-conditional alignment. Runs the iterative
/// pseudo-labeling loop once per balance-grid entry and keeps the factor with
/// the smallest adapted-space discrepancy (ties favor the earlier grid
/// entry). The balance factor weights the marginal term; 1 - factor weights
/// the class-conditional terms, so a factor of 1 reduces to marginal-only
/// alignment.
inline BdaResult bda_fit(const Matrix& Xs, const std::vector<int>& ys, const Matrix& Xt,
                         int n_classes, Index d, Index iterations,
                         const std::vector<double>& balance_grid,
                         const ClassifierFactory& make_classifier, double mu = 1.0) {
  if (Xs.rows() == 0 || Xt.rows() == 0) throw Error("bda_fit: empty input");
  if (Xs.cols() != Xt.cols()) throw Error("bda_fit: feature count mismatch");
  if (static_cast<Index>(ys.size()) != Xs.rows())
    throw Error("bda_fit: label count mismatch");
  if (iterations < 1) throw Error("bda_fit: iterations must be at least 1");
  if (balance_grid.empty()) throw Error("bda_fit: empty balance grid");
  for (double b : balance_grid)
    if (b < 0.0 || b > 1.0)
      throw Error("bda_fit: balance factor " + std::to_string(b) + " outside [0, 1]");
  for (int c = 0; c < n_classes; ++c)
    if (std::find(ys.begin(), ys.end(), c) == ys.end())
      throw Error("bda_fit: class " + std::to_string(c) + " absent from source");

  // Initial pseudo-labels come from a classifier on the unadapted features,
  // shared across the whole grid.
  const ClassifierModel initial = make_classifier(Xs, ys, n_classes);
  const std::vector<int> initial_pseudo = initial.predict(Xt);

  BdaResult result;
  bool have_best = false;
  for (double balance : balance_grid) {
    detail::BdaPass pass = detail::bda_single_factor(Xs, ys, Xt, n_classes, d, iterations,
                                                     balance, mu, make_classifier,
                                                     initial_pseudo);
    result.objective_by_factor.push_back(pass.objective);
    if (!have_best || pass.objective < result.selected_objective) {
      have_best = true;
      result.selected_objective = pass.objective;
      result.balance_factor = balance;
      result.projection = std::move(pass.projection);
      result.classifier = std::move(pass.classifier);
    }
  }
  return result;
}

}  // namespace ctial
