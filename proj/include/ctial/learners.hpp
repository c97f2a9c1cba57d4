#pragma once

// Base models for both tasks: multinomial logistic classifier, multi-output
// ridge regressor, PCA projection, and three-fold cross-validated selection
// of the regularization weight.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "ctial/common.hpp"
#include "ctial/metrics.hpp"
#include "ctial/rng.hpp"

namespace ctial {

// ---------------------------------------------------------------------------
// Multinomial logistic regression

/// Softmax classifier with affine scores. `inv_reg` is the C of the model:
/// the penalty weight used at fit time is 1/(C*N), matching an objective of
/// mean cross-entropy plus (1/(2*C*N))*||W||^2 with an unregularized bias.
struct ClassifierModel {
  Matrix weights;  // F x |E|
  Vector bias;     // |E|
  double inv_reg = 1.0;
  bool converged = false;
  int iterations = 0;

  Index n_classes() const { return bias.size(); }

  Matrix predict_proba(const Matrix& X) const {
    if (X.cols() != weights.rows())
      throw Error("predict_proba: feature dimension mismatch");
    Matrix scores = (X * weights).rowwise() + bias.transpose();
    scores.colwise() -= scores.rowwise().maxCoeff();
    Matrix probs = scores.array().exp().matrix();
    probs.array().colwise() /= probs.rowwise().sum().array();
    return probs;
  }

  /// Argmax class per row; ties break toward the lowest class index.
  std::vector<int> predict(const Matrix& X) const {
    const Matrix probs = predict_proba(X);
    std::vector<int> out(static_cast<std::size_t>(probs.rows()));
    for (Index i = 0; i < probs.rows(); ++i) {
      int best = 0;
      for (Index c = 1; c < probs.cols(); ++c)
        if (probs(i, c) > probs(i, best)) best = static_cast<int>(c);
      out[static_cast<std::size_t>(i)] = best;
    }
    return out;
  }
};

struct LogisticObjective {
  double value = 0.0;
  Matrix grad_weights;
  Vector grad_bias;
};

namespace detail {

inline Matrix softmax_rows(const Matrix& scores) {
  Matrix shifted = scores;
  shifted.colwise() -= shifted.rowwise().maxCoeff();
  Matrix probs = shifted.array().exp().matrix();
  probs.array().colwise() /= probs.rowwise().sum().array();
  return probs;
}

inline double logistic_loss_value(const Matrix& X, const std::vector<int>& y,
                                  const Matrix& weights, const Vector& bias,
                                  double lambda) {
  const Index n = X.rows();
  Matrix scores = (X * weights).rowwise() + bias.transpose();
  const Vector row_max = scores.rowwise().maxCoeff();
  scores.colwise() -= row_max;
  const Vector log_norm = scores.array().exp().rowwise().sum().log().matrix();
  double loss = 0.0;
  for (Index i = 0; i < n; ++i)
    loss += log_norm[i] - scores(i, y[static_cast<std::size_t>(i)]);
  loss /= static_cast<double>(n);
  loss += 0.5 * lambda * weights.squaredNorm();
  return loss;
}

}  // namespace detail

/// Mean cross-entropy objective with an L2 penalty of lambda/2 on the
/// weights, and its analytic gradient.
inline LogisticObjective logistic_objective(const Matrix& X, const std::vector<int>& y,
                                            const Matrix& weights, const Vector& bias,
                                            double lambda) {
  const Index n = X.rows();
  if (n == 0 || static_cast<Index>(y.size()) != n)
    throw Error("logistic_objective: label length != rows");
  Matrix scores = (X * weights).rowwise() + bias.transpose();
  const Vector row_max = scores.rowwise().maxCoeff();
  scores.colwise() -= row_max;
  Matrix probs = scores.array().exp().matrix();
  const Vector norm = probs.rowwise().sum();
  probs.array().colwise() /= norm.array();

  LogisticObjective out;
  out.value = 0.0;
  for (Index i = 0; i < n; ++i)
    out.value += std::log(norm[i]) - scores(i, y[static_cast<std::size_t>(i)]);
  out.value /= static_cast<double>(n);
  out.value += 0.5 * lambda * weights.squaredNorm();

  Matrix residual = probs;  // P - onehot(y)
  for (Index i = 0; i < n; ++i)
    residual(i, y[static_cast<std::size_t>(i)]) -= 1.0;
  out.grad_weights.noalias() = X.transpose() * residual / static_cast<double>(n);
  out.grad_weights += lambda * weights;
  out.grad_bias = residual.colwise().sum().transpose() / static_cast<double>(n);
  return out;
}

/// Full-batch gradient descent with backtracking (Armijo) line search on the
/// convex softmax objective. Stops when the gradient norm of the per-sample
/// objective drops to `tol` or after `max_iterations` steps; the model
/// reports which happened. `warm_start` seeds the iteration when its shape
/// matches, otherwise weights start at zero.
inline ClassifierModel fit_classifier(const Matrix& X, const std::vector<int>& y,
                                      Index n_classes, double inv_reg,
                                      const ClassifierModel* warm_start = nullptr,
                                      int max_iterations = 2000, double tol = 1e-5) {
  const Index n = X.rows();
  const Index f = X.cols();
  if (static_cast<Index>(y.size()) != n)
    throw Error("fit_classifier: label length != rows");
  if (inv_reg <= 0.0) throw Error("fit_classifier: inv_reg must be positive");
  std::vector<char> seen(static_cast<std::size_t>(n_classes), 0);
  for (int c : y) {
    if (c < 0 || c >= n_classes) throw Error("fit_classifier: class index out of range");
    seen[static_cast<std::size_t>(c)] = 1;
  }
  if (std::count(seen.begin(), seen.end(), char{1}) < 2)
    throw Error("fit_classifier: need at least two distinct classes in y");

  const double lambda = 1.0 / (inv_reg * static_cast<double>(n));

  ClassifierModel model;
  model.inv_reg = inv_reg;
  if (warm_start && warm_start->weights.rows() == f &&
      warm_start->weights.cols() == n_classes) {
    model.weights = warm_start->weights;
    model.bias = warm_start->bias;
  } else {
    model.weights = Matrix::Zero(f, n_classes);
    model.bias = Vector::Zero(n_classes);
  }

  constexpr double kArmijo = 1e-4;
  double step = 1.0;
  LogisticObjective obj = logistic_objective(X, y, model.weights, model.bias, lambda);
  int iter = 0;
  for (; iter < max_iterations; ++iter) {
    const double grad_norm = std::sqrt(obj.grad_weights.squaredNorm() +
                                       obj.grad_bias.squaredNorm());
    if (grad_norm <= tol) {
      model.converged = true;
      break;
    }
    const double decrement = obj.grad_weights.squaredNorm() + obj.grad_bias.squaredNorm();
    step = std::min(step * 2.0, 1e6);
    Matrix trial_w;
    Vector trial_b;
    double trial_value = std::numeric_limits<double>::infinity();
    while (true) {
      trial_w = model.weights - step * obj.grad_weights;
      trial_b = model.bias - step * obj.grad_bias;
      trial_value = detail::logistic_loss_value(X, y, trial_w, trial_b, lambda);
      if (trial_value <= obj.value - kArmijo * step * decrement) break;
      step *= 0.5;
      if (step < 1e-18) break;  // flat to machine precision
    }
    if (trial_value >= obj.value && step < 1e-18) {
      model.converged = true;
      break;
    }
    model.weights.swap(trial_w);
    model.bias.swap(trial_b);
    obj = logistic_objective(X, y, model.weights, model.bias, lambda);
  }
  model.iterations = iter;
  return model;
}

// ---------------------------------------------------------------------------
// Ridge regression

/// Multi-output linear model fit per dimension by ridge regression in closed
/// form on mean-centered data; the bias absorbs the means.
struct RegressorModel {
  Matrix weights;  // F x |D|
  Vector bias;     // |D|
  double alpha = 1.0;

  Matrix predict(const Matrix& X) const {
    if (X.cols() != weights.rows())
      throw Error("RegressorModel::predict: feature dimension mismatch");
    return (X * weights).rowwise() + bias.transpose();
  }
};

inline RegressorModel fit_regressor(const Matrix& X, const Matrix& Y, double alpha) {
  if (X.rows() != Y.rows()) throw Error("fit_regressor: row mismatch");
  if (X.rows() == 0) throw Error("fit_regressor: empty input");
  if (alpha <= 0.0) throw Error("fit_regressor: alpha must be positive");
  const Vector x_mean = X.colwise().mean();
  const Vector y_mean = Y.colwise().mean();
  const Matrix Xc = X.rowwise() - x_mean.transpose();
  const Matrix Yc = Y.rowwise() - y_mean.transpose();
  Matrix gram = Xc.transpose() * Xc;
  gram.diagonal().array() += alpha;
  RegressorModel model;
  model.alpha = alpha;
  model.weights = gram.ldlt().solve(Xc.transpose() * Yc);
  model.bias = y_mean - model.weights.transpose() * x_mean;
  return model;
}

// ---------------------------------------------------------------------------
// PCA

/// Centering + orthonormal projection onto the leading principal directions.
/// The retained dimension is the smallest d whose cumulative explained
/// variance reaches `variance_fraction`. Column signs are fixed by making
/// each column's largest-magnitude entry positive.
struct PCAProjection {
  Vector mean;        // F
  Matrix components;  // F x d
  double variance_fraction = 1.0;

  Index dim() const { return components.cols(); }

  Matrix project(const Matrix& X) const {
    if (X.cols() != mean.size()) throw Error("PCAProjection: feature dimension mismatch");
    return (X.rowwise() - mean.transpose()) * components;
  }

  Matrix reconstruct(const Matrix& Z) const {
    return (Z * components.transpose()).rowwise() + mean.transpose();
  }
};

namespace detail {

inline void fix_column_signs(Matrix& m) {
  for (Index c = 0; c < m.cols(); ++c) {
    Index at = 0;
    m.col(c).cwiseAbs().maxCoeff(&at);
    if (m(at, c) < 0.0) m.col(c) = -m.col(c);
  }
}

}  // namespace detail

inline PCAProjection fit_pca(const Matrix& X, double variance_fraction) {
  if (X.rows() < 2) throw Error("fit_pca: need at least two rows");
  if (variance_fraction <= 0.0 || variance_fraction > 1.0)
    throw Error("fit_pca: variance_fraction must be in (0, 1]");
  PCAProjection p;
  p.variance_fraction = variance_fraction;
  p.mean = X.colwise().mean();
  const Matrix Xc = X.rowwise() - p.mean.transpose();
  Eigen::BDCSVD<Matrix> svd(Xc, Eigen::ComputeThinV);
  const Vector sv = svd.singularValues();
  const double total = sv.squaredNorm();
  if (total <= 0.0) throw Error("fit_pca: data has zero variance");
  // numerical rank cutoff relative to the largest singular value
  const double cutoff = sv[0] * std::max(X.rows(), X.cols()) *
                        std::numeric_limits<double>::epsilon();
  Index rank = 0;
  while (rank < sv.size() && sv[rank] > cutoff) ++rank;
  double cum = 0.0;
  Index d = 0;
  while (d < rank) {
    cum += sv[d] * sv[d];
    ++d;
    if (cum / total >= variance_fraction) break;
  }
  p.components = svd.matrixV().leftCols(d);
  detail::fix_column_signs(p.components);
  return p;
}

// ---------------------------------------------------------------------------
// Cross-validated regularization selection

namespace detail {

/// Class-stratified fold assignment: indices of each class are shuffled, then
/// dealt round-robin across folds with a running counter shared between
/// classes so singleton classes spread out.
inline std::vector<int> stratified_folds(const std::vector<int>& y, Index n_classes,
                                         int n_folds, Xoshiro256StarStar& rng) {
  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < y.size(); ++i)
    by_class[static_cast<std::size_t>(y[i])].push_back(static_cast<Index>(i));
  std::vector<int> fold(y.size(), -1);
  int next = 0;
  for (auto& members : by_class) {
    shuffle(members, rng);
    for (Index i : members) fold[static_cast<std::size_t>(i)] = next++ % n_folds;
  }
  return fold;
}

inline std::vector<int> contiguous_shuffled_folds(Index n, int n_folds,
                                                  Xoshiro256StarStar& rng) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  shuffle(order, rng);
  std::vector<int> fold(static_cast<std::size_t>(n), -1);
  for (std::size_t pos = 0; pos < order.size(); ++pos)
    fold[static_cast<std::size_t>(order[pos])] =
        static_cast<int>(pos * static_cast<std::size_t>(n_folds) / order.size());
  return fold;
}

template <typename Select>
Matrix take_rows(const Matrix& X, const std::vector<int>& fold, Select keep) {
  Index count = 0;
  for (int f : fold)
    if (keep(f)) ++count;
  Matrix out(count, X.cols());
  Index r = 0;
  for (std::size_t i = 0; i < fold.size(); ++i)
    if (keep(fold[i])) out.row(r++) = X.row(static_cast<Index>(i));
  return out;
}

}  // namespace detail

/// Grid search for the classifier C maximizing mean validation-fold balanced
/// accuracy under stratified CV. Ties break toward the smaller grid value.
inline double select_classifier_reg(const Matrix& X, const std::vector<int>& y,
                                    Index n_classes, const std::vector<double>& grid,
                                    int n_folds, std::uint64_t fold_seed) {
  if (grid.empty()) throw Error("select_classifier_reg: empty grid");
  const Index n = X.rows();
  if (n < n_folds) throw Error("select_classifier_reg: fewer rows than folds");
  Xoshiro256StarStar rng(fold_seed);
  const std::vector<int> fold = detail::stratified_folds(y, n_classes, n_folds, rng);

  // every training fold must contain at least two classes
  for (int f = 0; f < n_folds; ++f) {
    std::vector<char> seen(static_cast<std::size_t>(n_classes), 0);
    int classes = 0, val_rows = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (fold[i] == f) {
        ++val_rows;
        continue;
      }
      if (!seen[static_cast<std::size_t>(y[i])]) {
        seen[static_cast<std::size_t>(y[i])] = 1;
        ++classes;
      }
    }
    if (classes < 2)
      throw Error("select_classifier_reg: training fold with fewer than two classes");
    if (val_rows == 0) throw Error("select_classifier_reg: empty validation fold");
  }

  std::vector<double> sorted_grid = grid;
  std::sort(sorted_grid.begin(), sorted_grid.end());
  // Fits within a fold warm-start from the previous grid value; adjacent
  // regularization levels have nearby optima, so this cuts CV cost without
  // affecting determinism.
  std::vector<double> scores(sorted_grid.size(), 0.0);
  for (int f = 0; f < n_folds; ++f) {
    const auto in_train = [f](int g) { return g != f; };
    const auto in_val = [f](int g) { return g == f; };
    const Matrix Xtr = detail::take_rows(X, fold, in_train);
    const Matrix Xva = detail::take_rows(X, fold, in_val);
    std::vector<int> ytr, yva;
    for (std::size_t i = 0; i < y.size(); ++i)
      (fold[i] == f ? yva : ytr).push_back(y[i]);
    ClassifierModel model;
    for (std::size_t g = 0; g < sorted_grid.size(); ++g) {
      model = fit_classifier(Xtr, ytr, n_classes, sorted_grid[g], g == 0 ? nullptr : &model);
      scores[g] += bca(yva, model.predict(Xva));
    }
  }
  double best_value = sorted_grid.front();
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < sorted_grid.size(); ++g) {
    const double score = scores[g] / n_folds;
    if (score > best_score + 1e-12) {
      best_score = score;
      best_value = sorted_grid[g];
    }
  }
  return best_value;
}

/// Grid search for the ridge alpha minimizing mean validation-fold RMSE
/// averaged over output dimensions, with contiguous-shuffled folds. Ties
/// break toward the smaller grid value.
inline double select_regressor_reg(const Matrix& X, const Matrix& Y,
                                   const std::vector<double>& grid, int n_folds,
                                   std::uint64_t fold_seed) {
  if (grid.empty()) throw Error("select_regressor_reg: empty grid");
  const Index n = X.rows();
  if (n < n_folds) throw Error("select_regressor_reg: fewer rows than folds");
  Xoshiro256StarStar rng(fold_seed);
  const std::vector<int> fold = detail::contiguous_shuffled_folds(n, n_folds, rng);

  std::vector<double> sorted_grid = grid;
  std::sort(sorted_grid.begin(), sorted_grid.end());
  double best_value = sorted_grid.front();
  double best_score = std::numeric_limits<double>::infinity();
  for (double alpha : sorted_grid) {
    double score_sum = 0.0;
    for (int f = 0; f < n_folds; ++f) {
      const auto in_train = [f](int g) { return g != f; };
      const auto in_val = [f](int g) { return g == f; };
      const Matrix Xtr = detail::take_rows(X, fold, in_train);
      const Matrix Ytr = detail::take_rows(Y, fold, in_train);
      const Matrix Xva = detail::take_rows(X, fold, in_val);
      const Matrix Yva = detail::take_rows(Y, fold, in_val);
      const RegressorModel model = fit_regressor(Xtr, Ytr, alpha);
      const Matrix pred = model.predict(Xva);
      double dim_mean = 0.0;
      for (Index d = 0; d < Yva.cols(); ++d)
        dim_mean += rmse(Yva.col(d), pred.col(d));
      score_sum += dim_mean / static_cast<double>(Yva.cols());
    }
    const double score = score_sum / n_folds;
    if (score < best_score - 1e-12) {
      best_score = score;
      best_value = alpha;
    }
  }
  return best_value;
}

}  // namespace ctial
