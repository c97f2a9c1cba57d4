#pragma once

// Synthetic emotion corpus with linked categorical and dimensional labels:
// each sample's dimensional label is its class's affective-norm vector plus
// noise, and features are an affine image of the dimensional label plus a
// class offset. Both label kinds are therefore learnable and mutually
// consistent, which is what the cross-task strategies exploit.

#include <string>
#include <vector>

#include "ctial/common.hpp"
#include "ctial/data.hpp"
#include "ctial/rng.hpp"

namespace ctial {

// Noise defaults are calibrated jointly: the overall feature scale places
// the ridge/logistic regularization grid {1..5000} in its effective range
// for pools from tens to hundreds of samples, feature_sigma vs offset_sigma
// sets classification difficulty, and dim_gain vs feature_sigma sets how
// well features encode the dimensional label.
struct SyntheticSpec {
  Index n = 1500;
  std::vector<std::string> classes = {"angry", "happy", "sad", "frustrated", "neutral"};
  double label_sigma = 0.85;   // dimensional-label noise around the class norm
  double feature_sigma = 0.4;  // per-coordinate feature noise
  double offset_sigma = 0.12;  // per-coordinate class-offset scale
  double dim_gain = 0.58;      // norm of each dimension's feature-map column
  Index feature_dim = 50;
  int n_groups = 5;  // synthetic "sessions", assigned round-robin
};

/// Deterministic corpus generation. Draw order from a single generator
/// seeded with `seed`: (1) the feature map A, row-major, feature_dim x |D|
/// entries scaled by dim_gain/sqrt(feature_dim); (2) per-class offsets, class-major,
/// |classes| x feature_dim entries scaled by offset_sigma; (3) per sample:
/// one class draw, |D| label-noise draws, feature_dim feature-noise draws.
inline Dataset generate_synthetic_corpus(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.n < 1) throw Error("generate_synthetic_corpus: n must be positive");
  if (spec.classes.empty()) throw Error("generate_synthetic_corpus: no classes given");
  if (spec.feature_dim < 1) throw Error("generate_synthetic_corpus: feature_dim must be positive");
  if (spec.label_sigma < 0.0 || spec.feature_sigma < 0.0 || spec.offset_sigma < 0.0)
    throw Error("generate_synthetic_corpus: negative noise scale");
  if (spec.n_groups < 1) throw Error("generate_synthetic_corpus: n_groups must be positive");

  const Interval target_interval{1.0, 5.0};
  const AffectiveNormLexicon lex = rescale_lexicon(nrc_vad_lexicon(), target_interval);
  const Matrix norms = lex.rows_for(spec.classes);  // throws on unknown class
  const Index D = norms.cols();
  const Index n_classes = static_cast<Index>(spec.classes.size());

  Xoshiro256StarStar rng(seed);
  Matrix A(spec.feature_dim, D);
  const double a_scale = spec.dim_gain / std::sqrt(static_cast<double>(spec.feature_dim));
  for (Index r = 0; r < spec.feature_dim; ++r)
    for (Index c = 0; c < D; ++c) A(r, c) = rng.gaussian() * a_scale;
  Matrix offsets(n_classes, spec.feature_dim);
  for (Index e = 0; e < n_classes; ++e)
    for (Index c = 0; c < spec.feature_dim; ++c)
      offsets(e, c) = rng.gaussian() * spec.offset_sigma;

  Dataset ds;
  ds.features.resize(spec.n, spec.feature_dim);
  Matrix dims(spec.n, D);
  std::vector<int> cats(static_cast<std::size_t>(spec.n));
  std::vector<int> groups(static_cast<std::size_t>(spec.n));
  for (Index i = 0; i < spec.n; ++i) {
    const int e = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_classes)));
    cats[static_cast<std::size_t>(i)] = e;
    for (Index d = 0; d < D; ++d) {
      const double v = norms(e, d) + rng.gaussian() * spec.label_sigma;
      dims(i, d) = std::min(std::max(v, target_interval.lo), target_interval.hi);
    }
    ds.features.row(i) = (A * dims.row(i).transpose()).transpose() + offsets.row(e);
    for (Index c = 0; c < spec.feature_dim; ++c)
      ds.features(i, c) += rng.gaussian() * spec.feature_sigma;
    groups[static_cast<std::size_t>(i)] = i % spec.n_groups + 1;
  }

  ds.cat_labels = std::move(cats);
  ds.dim_labels = std::move(dims);
  ds.group_ids = std::move(groups);
  ds.emotion_names = spec.classes;
  ds.dimension_names = {"valence", "arousal", "dominance"};
  ds.dim_interval = target_interval;
  ds.validate();
  return ds;
}

}  // namespace ctial
