#pragma once

// Evaluation measures (balanced classification accuracy, RMSE, Pearson
// correlation) and statistical comparison (one-sided Wilcoxon signed-rank
// with Holm's step-down adjustment).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include "ctial/common.hpp"

namespace ctial {

/// Unweighted mean of per-class accuracies over the classes observed in
/// `truth`.
inline double bca(const std::vector<int>& truth, const std::vector<int>& pred) {
  if (truth.empty()) throw Error("bca: empty input");
  if (truth.size() != pred.size()) throw Error("bca: length mismatch");
  std::map<int, std::pair<Index, Index>> per_class;  // class -> (correct, total)
  for (std::size_t i = 0; i < truth.size(); ++i) {
    auto& [correct, total] = per_class[truth[i]];
    ++total;
    if (pred[i] == truth[i]) ++correct;
  }
  double sum = 0.0;
  for (const auto& [cls, counts] : per_class)
    sum += static_cast<double>(counts.first) / static_cast<double>(counts.second);
  return sum / static_cast<double>(per_class.size());
}

inline double rmse(const Vector& truth, const Vector& pred) {
  if (truth.size() == 0) throw Error("rmse: empty input");
  if (truth.size() != pred.size()) throw Error("rmse: length mismatch");
  return std::sqrt((truth - pred).squaredNorm() / static_cast<double>(truth.size()));
}

/// Pearson correlation; nullopt when either series has zero variance.
inline std::optional<double> pearson_cc(const Vector& truth, const Vector& pred) {
  if (truth.size() != pred.size()) throw Error("pearson_cc: length mismatch");
  if (truth.size() < 2) throw Error("pearson_cc: need at least two points");
  const Vector a = truth.array() - truth.mean();
  const Vector b = pred.array() - pred.mean();
  const double denom = std::sqrt(a.squaredNorm() * b.squaredNorm());
  if (denom == 0.0) return std::nullopt;
  return a.dot(b) / denom;
}

/// Metric values for one model state. Fields are present according to the
/// task; a missing cc entry marks a zero-variance series.
struct EvaluationReport {
  std::optional<double> bca;
  std::optional<Vector> rmse;                            // per dimension
  std::optional<std::vector<std::optional<double>>> cc;  // per dimension

  double rmse_mean() const {
    if (!rmse) throw Error("EvaluationReport: no rmse recorded");
    return rmse->mean();
  }
};

namespace detail {

/// Checks labeled/pool index sets partition [0, n) exactly.
inline void check_partition(Index n, const std::vector<Index>& labeled,
                            const std::vector<Index>& pool) {
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  const auto mark = [&seen, n](Index i) {
    if (i < 0 || i >= n) throw Error("evaluate_hybrid: index out of range");
    if (seen[static_cast<std::size_t>(i)])
      throw Error("evaluate_hybrid: index " + std::to_string(i) + " appears twice");
    seen[static_cast<std::size_t>(i)] = 1;
  };
  for (Index i : labeled) mark(i);
  for (Index i : pool) mark(i);
  for (Index i = 0; i < n; ++i)
    if (!seen[static_cast<std::size_t>(i)])
      throw Error("evaluate_hybrid: index " + std::to_string(i) + " missing");
}

}  // namespace detail

/// Whole-target-set classification metric: labeled samples count as
/// perfectly predicted (their ground truth stands in for a prediction) and
/// pool samples use the model predictions, matching a workflow where humans
/// label part of the corpus and the model the rest.
inline EvaluationReport evaluate_hybrid_classification(
    const std::vector<int>& truth_all, const std::vector<Index>& labeled_idx,
    const std::vector<Index>& pool_idx, const std::vector<int>& pool_pred) {
  const Index n = static_cast<Index>(truth_all.size());
  detail::check_partition(n, labeled_idx, pool_idx);
  if (pool_pred.size() != pool_idx.size())
    throw Error("evaluate_hybrid: pool prediction length mismatch");
  std::vector<int> pred = truth_all;
  for (std::size_t k = 0; k < pool_idx.size(); ++k)
    pred[static_cast<std::size_t>(pool_idx[k])] = pool_pred[k];
  EvaluationReport report;
  report.bca = bca(truth_all, pred);
  return report;
}

/// Regression counterpart: per-dimension RMSE and CC over the concatenation
/// of labeled ground truth and pool predictions.
inline EvaluationReport evaluate_hybrid_regression(const Matrix& truth_all,
                                                   const std::vector<Index>& labeled_idx,
                                                   const std::vector<Index>& pool_idx,
                                                   const Matrix& pool_pred) {
  const Index n = truth_all.rows();
  detail::check_partition(n, labeled_idx, pool_idx);
  if (pool_pred.rows() != static_cast<Index>(pool_idx.size()) ||
      pool_pred.cols() != truth_all.cols())
    throw Error("evaluate_hybrid: pool prediction shape mismatch");
  Matrix pred = truth_all;
  for (std::size_t k = 0; k < pool_idx.size(); ++k)
    pred.row(pool_idx[k]) = pool_pred.row(static_cast<Index>(k));
  EvaluationReport report;
  Vector rmse_per_dim(truth_all.cols());
  std::vector<std::optional<double>> cc_per_dim(static_cast<std::size_t>(truth_all.cols()));
  for (Index d = 0; d < truth_all.cols(); ++d) {
    rmse_per_dim[d] = rmse(truth_all.col(d), pred.col(d));
    cc_per_dim[static_cast<std::size_t>(d)] = pearson_cc(truth_all.col(d), pred.col(d));
  }
  report.rmse = std::move(rmse_per_dim);
  report.cc = std::move(cc_per_dim);
  return report;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank and Holm adjustment

struct WilcoxonResult {
  double p = 1.0;
  int n_used = 0;        // pairs remaining after zero-difference removal
  bool degenerate = false;  // all differences zero: no signal, p forced to 1
};

namespace detail {

/// Midranks of |d|, doubled so ties yield integers (rank 2.5 -> 5).
inline std::vector<std::int64_t> doubled_midranks(const std::vector<double>& abs_diff) {
  const std::size_t n = abs_diff.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&abs_diff](std::size_t a, std::size_t b) { return abs_diff[a] < abs_diff[b]; });
  std::vector<std::int64_t> doubled(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && abs_diff[order[j + 1]] == abs_diff[order[i]]) ++j;
    // ranks i+1 .. j+1 share midrank (i+j+2)/2; doubled: i+j+2
    const std::int64_t doubled_rank = static_cast<std::int64_t>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) doubled[order[k]] = doubled_rank;
    i = j + 1;
  }
  return doubled;
}

/// Exact tail count P(W+ >= observed) * 2^n by dynamic programming over the
/// distribution of the doubled positive-rank sum. Independent of the 2^n
/// enumeration route used as the test oracle.
inline double exact_tail_probability(const std::vector<std::int64_t>& doubled_ranks,
                                     std::int64_t observed_doubled) {
  std::int64_t total = 0;
  for (std::int64_t r : doubled_ranks) total += r;
  std::vector<std::uint64_t> count(static_cast<std::size_t>(total) + 1, 0);
  count[0] = 1;
  for (std::int64_t r : doubled_ranks)
    for (std::int64_t s = total; s >= r; --s)
      count[static_cast<std::size_t>(s)] += count[static_cast<std::size_t>(s - r)];
  std::uint64_t tail = 0;
  for (std::int64_t s = std::max<std::int64_t>(observed_doubled, 0); s <= total; ++s)
    tail += count[static_cast<std::size_t>(s)];
  const double denom = std::ldexp(1.0, static_cast<int>(doubled_ranks.size()));
  return static_cast<double>(tail) / denom;
}

inline double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace detail

/// One-sided signed-rank test of H1: a > b on paired samples. Zero
/// differences are dropped before ranking. Exact null distribution for up to
/// `exact_limit` effective pairs, normal approximation with tie-corrected
/// variance beyond that (no continuity correction).
inline WilcoxonResult wilcoxon_signed_rank_greater(const std::vector<double>& a,
                                                   const std::vector<double>& b,
                                                   std::size_t exact_limit = 12) {
  if (a.size() != b.size()) throw Error("wilcoxon: length mismatch");
  if (a.empty()) throw Error("wilcoxon: empty input");
  std::vector<double> diff;
  diff.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0.0) diff.push_back(d);
  }
  WilcoxonResult result;
  result.n_used = static_cast<int>(diff.size());
  if (diff.empty()) {
    result.p = 1.0;
    result.degenerate = true;
    return result;
  }
  if (diff.size() < 5)
    throw Error("wilcoxon: need at least 5 nonzero differences, got " +
                std::to_string(diff.size()));

  std::vector<double> abs_diff(diff.size());
  for (std::size_t i = 0; i < diff.size(); ++i) abs_diff[i] = std::abs(diff[i]);
  const std::vector<std::int64_t> doubled = detail::doubled_midranks(abs_diff);

  std::int64_t w_plus_doubled = 0;
  for (std::size_t i = 0; i < diff.size(); ++i)
    if (diff[i] > 0.0) w_plus_doubled += doubled[i];

  if (diff.size() <= exact_limit) {
    result.p = detail::exact_tail_probability(doubled, w_plus_doubled);
    return result;
  }

  const double n = static_cast<double>(diff.size());
  const double w_plus = static_cast<double>(w_plus_doubled) / 2.0;
  const double mean = n * (n + 1.0) / 4.0;
  double tie_term = 0.0;
  {
    std::vector<double> sorted = abs_diff;
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < sorted.size()) {
      std::size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      tie_term += t * t * t - t;
      i = j + 1;
    }
  }
  const double variance = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
  result.p = detail::normal_upper_tail((w_plus - mean) / std::sqrt(variance));
  return result;
}

/// Holm's step-down adjustment: monotone, capped at 1, order-preserving on
/// the sorted p-values.
inline std::vector<double> holm_adjust(const std::vector<double>& pvals) {
  const std::size_t m = pvals.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&pvals](std::size_t a, std::size_t b) { return pvals[a] < pvals[b]; });
  std::vector<double> adjusted(m, 0.0);
  double running_max = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double scaled = static_cast<double>(m - k) * pvals[order[k]];
    running_max = std::max(running_max, scaled);
    adjusted[order[k]] = std::min(1.0, running_max);
  }
  return adjusted;
}

}  // namespace ctial
