#pragma once

// Sample-selection strategies for pool-based active learning: cross-task
// inconsistency (CTI), uncertainty measures, greedy-sampling diversity, and
// their combinations.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "ctial/common.hpp"
#include "ctial/data.hpp"

namespace ctial {

enum class Strategy {
  Rand,
  Ent,
  LC,
  SourceMTiGS,
  CTIAL,
  EntCTIAL,
  LCCTIAL,
  MTiGS,
  SourceLC,
  CTiGS,
  MTiGSCTIAL,
  NRCMapping,
};

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Rand: return "Rand";
    case Strategy::Ent: return "Ent";
    case Strategy::LC: return "LC";
    case Strategy::SourceMTiGS: return "SourceMTiGS";
    case Strategy::CTIAL: return "CTIAL";
    case Strategy::EntCTIAL: return "EntCTIAL";
    case Strategy::LCCTIAL: return "LCCTIAL";
    case Strategy::MTiGS: return "MTiGS";
    case Strategy::SourceLC: return "SourceLC";
    case Strategy::CTiGS: return "CTiGS";
    case Strategy::MTiGSCTIAL: return "MTiGSCTIAL";
    case Strategy::NRCMapping: return "NRCMapping";
  }
  throw Error("strategy_name: invalid strategy");
}

inline Strategy strategy_from_name(const std::string& name) {
  static const std::map<std::string, Strategy> table = {
      {"Rand", Strategy::Rand},
      {"Ent", Strategy::Ent},
      {"LC", Strategy::LC},
      {"SourceMTiGS", Strategy::SourceMTiGS},
      {"CTIAL", Strategy::CTIAL},
      {"EntCTIAL", Strategy::EntCTIAL},
      {"LCCTIAL", Strategy::LCCTIAL},
      {"MTiGS", Strategy::MTiGS},
      {"SourceLC", Strategy::SourceLC},
      {"CTiGS", Strategy::CTiGS},
      {"MTiGSCTIAL", Strategy::MTiGSCTIAL},
      {"NRCMapping", Strategy::NRCMapping},
  };
  const auto it = table.find(name);
  if (it == table.end()) throw Error("unknown strategy name: " + name);
  return it->second;
}

/// NRCMapping predicts without querying; every other strategy selects pool
/// samples one at a time.
inline bool is_selector(Strategy s) { return s != Strategy::NRCMapping; }

// ---------------------------------------------------------------------------
// Score primitives

/// Expected dimensional value under the class probabilities: the convex
/// combination of lexicon rows, sum_e probs[e] * lex_rows.row(e).
inline Vector map_to_dimensional(const Vector& probs, const Matrix& lex_rows) {
  if (probs.size() != lex_rows.rows())
    throw Error("map_to_dimensional: probability length " + std::to_string(probs.size()) +
                " does not match lexicon row count " + std::to_string(lex_rows.rows()));
  if (std::abs(probs.sum() - 1.0) > 1e-6)
    throw Error("map_to_dimensional: probabilities sum to " + std::to_string(probs.sum()));
  return lex_rows.transpose() * probs;
}

/// Row-wise mapping for a batch of probability vectors.
inline Matrix map_all_to_dimensional(const Matrix& probs, const Matrix& lex_rows) {
  if (probs.cols() != lex_rows.rows())
    throw Error("map_all_to_dimensional: class count mismatch");
  for (Index i = 0; i < probs.rows(); ++i)
    if (std::abs(probs.row(i).sum() - 1.0) > 1e-6)
      throw Error("map_all_to_dimensional: row " + std::to_string(i) +
                  " is not a probability vector");
  return probs * lex_rows;
}

/// Cross-task inconsistency: distance between the dimensional prediction and
/// the lexicon-mapped value derived from the class probabilities.
inline double cti(const Vector& pred_dim, const Vector& mapped_dim) {
  if (pred_dim.size() != mapped_dim.size()) throw Error("cti: length mismatch");
  return (pred_dim - mapped_dim).norm();
}

/// Shannon entropy with natural log; probabilities are floored at 1e-12
/// inside the log so saturated softmax outputs stay finite.
inline double entropy(const Vector& probs) {
  double h = 0.0;
  for (Index e = 0; e < probs.size(); ++e)
    h -= probs[e] * std::log(std::max(probs[e], 1e-12));
  return h;
}

/// Prediction confidence: the largest class probability.
inline double confidence(const Vector& probs) {
  if (probs.size() == 0) throw Error("confidence: empty probability vector");
  return probs.maxCoeff();
}

/// Greedy-sampling distance, product form: over the labeled set, the minimum
/// of feature distance times the product of per-dimension label gaps.
inline double mtigs_distance(const Vector& x, const Vector& pred_dim,
                             const Matrix& labeled_features, const Matrix& labeled_dims) {
  if (labeled_features.rows() == 0) throw Error("mtigs_distance: empty labeled set");
  if (labeled_features.rows() != labeled_dims.rows())
    throw Error("mtigs_distance: labeled feature/label row mismatch");
  double best = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < labeled_features.rows(); ++j) {
    double label_factor = 1.0;
    for (Index d = 0; d < pred_dim.size(); ++d)
      label_factor *= std::abs(pred_dim[d] - labeled_dims(j, d));
    best = std::min(best, (x - labeled_features.row(j).transpose()).norm() * label_factor);
  }
  return best;
}

/// Variant weighting feature and label space equally: the label factor is the
/// Euclidean distance instead of the per-dimension product.
inline double mtigs_modified_distance(const Vector& x, const Vector& pred_dim,
                                      const Matrix& labeled_features,
                                      const Matrix& labeled_dims) {
  if (labeled_features.rows() == 0) throw Error("mtigs_modified_distance: empty labeled set");
  if (labeled_features.rows() != labeled_dims.rows())
    throw Error("mtigs_modified_distance: labeled feature/label row mismatch");
  double best = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < labeled_features.rows(); ++j) {
    const double label_factor = (pred_dim - labeled_dims.row(j).transpose()).norm();
    best = std::min(best, (x - labeled_features.row(j).transpose()).norm() * label_factor);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Batch scoring over the whole pool. `feature_dist(i, j)` holds the feature
// distance between pool sample i and labeled sample j, so callers can slice a
// precomputed all-pairs matrix instead of recomputing norms every iteration.

namespace detail {

inline void check_batch_shapes(const Matrix& feature_dist, const Matrix& pool_dims,
                               const Matrix& labeled_dims, const char* where) {
  if (feature_dist.cols() == 0) throw Error(std::string(where) + ": empty labeled set");
  if (feature_dist.rows() != pool_dims.rows() || feature_dist.cols() != labeled_dims.rows() ||
      pool_dims.cols() != labeled_dims.cols())
    throw Error(std::string(where) + ": shape mismatch");
}

inline double product_form_factor(const Matrix& pool_dims, Index i, const Matrix& labeled_dims,
                                  Index j) {
  double f = 1.0;
  for (Index d = 0; d < pool_dims.cols(); ++d)
    f *= std::abs(pool_dims(i, d) - labeled_dims(j, d));
  return f;
}

}  // namespace detail

/// Product-form greedy distances for every pool sample.
inline Vector mtigs_scores(const Matrix& feature_dist, const Matrix& pool_dims,
                           const Matrix& labeled_dims) {
  detail::check_batch_shapes(feature_dist, pool_dims, labeled_dims, "mtigs_scores");
  Vector scores(feature_dist.rows());
  for (Index i = 0; i < feature_dist.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < feature_dist.cols(); ++j)
      best = std::min(best,
                      feature_dist(i, j) * detail::product_form_factor(pool_dims, i, labeled_dims, j));
    scores[i] = best;
  }
  return scores;
}

/// Equal-weight greedy distances for every pool sample.
inline Vector mtigs_modified_scores(const Matrix& feature_dist, const Matrix& pool_dims,
                                    const Matrix& labeled_dims) {
  detail::check_batch_shapes(feature_dist, pool_dims, labeled_dims, "mtigs_modified_scores");
  Vector scores(feature_dist.rows());
  for (Index i = 0; i < feature_dist.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < feature_dist.cols(); ++j)
      best = std::min(best, feature_dist(i, j) *
                                (pool_dims.row(i) - labeled_dims.row(j)).norm());
    scores[i] = best;
  }
  return scores;
}

/// Class-restricted greedy distances: each pool sample is compared only with
/// labeled samples sharing its predicted emotion category (classes predicted
/// by the source classifier on both sides). A pool sample whose predicted
/// class has no labeled representative falls back to the full labeled set.
inline Vector ctigs_scores(const Matrix& feature_dist, const Matrix& pool_dims,
                           const Matrix& labeled_dims, const std::vector<int>& pool_classes,
                           const std::vector<int>& labeled_classes) {
  detail::check_batch_shapes(feature_dist, pool_dims, labeled_dims, "ctigs_scores");
  if (static_cast<Index>(pool_classes.size()) != feature_dist.rows() ||
      static_cast<Index>(labeled_classes.size()) != feature_dist.cols())
    throw Error("ctigs_scores: class vector length mismatch");
  std::map<int, std::vector<Index>> by_class;
  for (std::size_t j = 0; j < labeled_classes.size(); ++j)
    by_class[labeled_classes[j]].push_back(static_cast<Index>(j));
  Vector scores(feature_dist.rows());
  for (Index i = 0; i < feature_dist.rows(); ++i) {
    const auto it = by_class.find(pool_classes[static_cast<std::size_t>(i)]);
    double best = std::numeric_limits<double>::infinity();
    if (it != by_class.end()) {
      for (Index j : it->second)
        best = std::min(best, feature_dist(i, j) *
                                  detail::product_form_factor(pool_dims, i, labeled_dims, j));
    } else {
      for (Index j = 0; j < feature_dist.cols(); ++j)
        best = std::min(best, feature_dist(i, j) *
                                  detail::product_form_factor(pool_dims, i, labeled_dims, j));
    }
    scores[i] = best;
  }
  return scores;
}

// ---------------------------------------------------------------------------
// Selection

/// Scores aligned with the pool order; direction says whether larger values
/// are preferred.
struct ScoreVector {
  Vector values;
  bool higher_is_better = true;
};

/// Position of the best score; exact ties resolve to the lowest position,
/// which is the lowest pool index when scores follow the sorted pool order.
inline Index select_index(const ScoreVector& scores) {
  if (scores.values.size() == 0) throw Error("select_index: empty score vector");
  Index best = 0;
  for (Index i = 0; i < scores.values.size(); ++i) {
    if (!std::isfinite(scores.values[i]))
      throw Error("select_index: non-finite score at position " + std::to_string(i));
    if (scores.higher_is_better ? scores.values[i] > scores.values[best]
                                : scores.values[i] < scores.values[best])
      best = i;
  }
  return best;
}

/// Lexicon mapping applied to every sample with no training and no queries;
/// the whole estimate comes from the source classifier and the lexicon.
inline Matrix nrc_mapping_predict(const Matrix& probs, const Matrix& lex_rows) {
  return map_all_to_dimensional(probs, lex_rows);
}

}  // namespace ctial
