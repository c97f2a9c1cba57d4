#pragma once

// Experiment orchestration: JSON configuration, shared preparation (feature
// spaces, adaptation, source model), the two active-learning loops, the
// strategy x seed suite with result persistence, and statistical summaries.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctial/acquisition.hpp"
#include "ctial/adaptation.hpp"
#include "ctial/common.hpp"
#include "ctial/csv.hpp"
#include "ctial/data.hpp"
#include "ctial/learners.hpp"
#include "ctial/metrics.hpp"
#include "ctial/rng.hpp"

namespace ctial {

enum class Direction { DEEtoCEC, CECtoDEE };

inline const char* direction_name(Direction d) {
  return d == Direction::DEEtoCEC ? "dee_to_cec" : "cec_to_dee";
}

inline Direction direction_from_name(const std::string& name) {
  if (name == "dee_to_cec") return Direction::DEEtoCEC;
  if (name == "cec_to_dee") return Direction::CECtoDEE;
  throw Error("unknown direction '" + name + "' (expected dee_to_cec or cec_to_dee)");
}

/// Strategies meaningful for a direction: classification-target runs use the
/// uncertainty and source-greedy families, regression-target runs use the
/// greedy and source-confidence families plus the non-AL lexicon mapping.
inline std::vector<Strategy> valid_strategies(Direction d) {
  if (d == Direction::DEEtoCEC)
    return {Strategy::Rand,  Strategy::Ent,      Strategy::LC,     Strategy::SourceMTiGS,
            Strategy::CTIAL, Strategy::EntCTIAL, Strategy::LCCTIAL};
  return {Strategy::NRCMapping, Strategy::Rand,  Strategy::MTiGS,     Strategy::SourceLC,
          Strategy::CTiGS,      Strategy::CTIAL, Strategy::MTiGSCTIAL};
}

struct AdaptationConfig {
  enum class Kind { None, TCA, BDA };
  Kind kind = Kind::None;
  Index dims = 30;
  double mu = 1.0;
  Index iterations = 10;  // BDA pseudo-label refreshes
  std::vector<double> balance_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
};

/// Where a dataset lives on disk and how to read its label columns.
struct DataFilesConfig {
  std::string features_path;
  std::string labels_path;
  LabelSchema schema;
};

struct ExperimentConfig {
  Direction direction = Direction::DEEtoCEC;
  std::vector<Strategy> strategies;
  Index n_initial = 20;
  Index budget = 200;
  std::vector<std::uint64_t> seeds;
  AdaptationConfig adaptation;
  double pca_variance = 0.9;
  std::vector<double> reg_grid = {1, 5, 10, 50, 100, 500, 1000, 5000};
  Index refit_cadence = 20;
  std::uint64_t fit_budget_warning = 200000;
  DataFilesConfig source;
  DataFilesConfig target;
  std::string lexicon_path;  // empty: built-in affective norms
  std::string output_dir = "out";
};

// ---------------------------------------------------------------------------
// Config parsing

namespace detail {

inline void check_keys(const nlohmann::json& obj, const std::vector<std::string>& allowed,
                       const std::string& where) {
  for (const auto& item : obj.items())
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
      throw Error("config: unknown key '" + item.key() + "' in " + where);
}

inline DataFilesConfig parse_data_files(const nlohmann::json& obj, const std::string& where) {
  check_keys(obj,
             {"features", "labels", "class_column", "dimension_columns", "group_column",
              "emotions", "dim_interval"},
             where);
  DataFilesConfig out;
  out.features_path = obj.at("features").get<std::string>();
  out.labels_path = obj.at("labels").get<std::string>();
  if (obj.contains("class_column"))
    out.schema.class_column = obj.at("class_column").get<std::string>();
  if (obj.contains("dimension_columns"))
    out.schema.dimension_columns = obj.at("dimension_columns").get<std::vector<std::string>>();
  if (obj.contains("group_column"))
    out.schema.group_column = obj.at("group_column").get<std::string>();
  if (obj.contains("emotions"))
    out.schema.emotions = obj.at("emotions").get<std::vector<std::string>>();
  if (obj.contains("dim_interval")) {
    const auto iv = obj.at("dim_interval").get<std::vector<double>>();
    if (iv.size() != 2) throw Error("config: dim_interval must be [lo, hi] in " + where);
    out.schema.dim_interval = {iv[0], iv[1]};
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  // "synthetic" belongs to the generate subcommand; tolerated here so one
  // config file can describe a whole generate-then-run workflow.
  detail::check_keys(j,
                     {"direction", "strategies", "n_initial", "budget", "seeds", "adaptation",
                      "pca_variance", "reg_grid", "refit_cadence", "fit_budget_warning",
                      "source", "target", "lexicon", "output_dir", "synthetic"},
                     "top level");
  ExperimentConfig cfg;
  cfg.direction = direction_from_name(j.at("direction").get<std::string>());
  for (const auto& name : j.at("strategies"))
    cfg.strategies.push_back(strategy_from_name(name.get<std::string>()));
  if (j.contains("n_initial")) cfg.n_initial = j.at("n_initial").get<Index>();
  if (j.contains("budget")) cfg.budget = j.at("budget").get<Index>();
  cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("adaptation")) {
    const auto& a = j.at("adaptation");
    detail::check_keys(a, {"kind", "dims", "mu", "iterations", "balance_grid"}, "adaptation");
    const std::string kind = a.at("kind").get<std::string>();
    if (kind == "none")
      cfg.adaptation.kind = AdaptationConfig::Kind::None;
    else if (kind == "tca")
      cfg.adaptation.kind = AdaptationConfig::Kind::TCA;
    else if (kind == "bda")
      cfg.adaptation.kind = AdaptationConfig::Kind::BDA;
    else
      throw Error("config: unknown adaptation kind '" + kind + "'");
    if (a.contains("dims"))
      cfg.adaptation.dims = a.at("dims").get<Index>();
    else if (cfg.adaptation.kind == AdaptationConfig::Kind::BDA)
      cfg.adaptation.dims = 40;
    if (a.contains("mu")) cfg.adaptation.mu = a.at("mu").get<double>();
    if (a.contains("iterations")) cfg.adaptation.iterations = a.at("iterations").get<Index>();
    if (a.contains("balance_grid"))
      cfg.adaptation.balance_grid = a.at("balance_grid").get<std::vector<double>>();
  }
  if (j.contains("pca_variance")) cfg.pca_variance = j.at("pca_variance").get<double>();
  if (j.contains("reg_grid")) cfg.reg_grid = j.at("reg_grid").get<std::vector<double>>();
  if (j.contains("refit_cadence")) cfg.refit_cadence = j.at("refit_cadence").get<Index>();
  if (j.contains("fit_budget_warning"))
    cfg.fit_budget_warning = j.at("fit_budget_warning").get<std::uint64_t>();
  cfg.source = detail::parse_data_files(j.at("source"), "source");
  cfg.target = detail::parse_data_files(j.at("target"), "target");
  if (j.contains("lexicon")) cfg.lexicon_path = j.at("lexicon").get<std::string>();
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::exception& e) {
    throw Error("config " + path + ": " + e.what());
  }
  try {
    return parse_experiment_config(j);
  } catch (const nlohmann::json::exception& e) {
    throw Error("config " + path + ": " + e.what());
  }
}

/// Structural validation plus data-dependent checks; returns human-readable
/// warnings (currently only the fit-budget guard).
inline std::vector<std::string> validate_experiment(const ExperimentConfig& cfg,
                                                    const Dataset& source,
                                                    const Dataset& target) {
  if (cfg.strategies.empty()) throw Error("config: no strategies listed");
  const std::vector<Strategy> valid = valid_strategies(cfg.direction);
  for (Strategy s : cfg.strategies) {
    if (std::find(valid.begin(), valid.end(), s) == valid.end())
      throw Error(std::string("config: strategy ") + strategy_name(s) +
                  " is not valid for direction " + direction_name(cfg.direction));
    if (std::count(cfg.strategies.begin(), cfg.strategies.end(), s) > 1)
      throw Error(std::string("config: duplicate strategy ") + strategy_name(s));
  }
  if (cfg.seeds.empty()) throw Error("config: no seeds listed");
  for (std::uint64_t s : cfg.seeds)
    if (std::count(cfg.seeds.begin(), cfg.seeds.end(), s) > 1)
      throw Error("config: duplicate seed " + std::to_string(s));
  if (cfg.n_initial < 1) throw Error("config: n_initial must be at least 1");
  if (cfg.budget < 0) throw Error("config: budget must be nonnegative");
  if (cfg.n_initial + cfg.budget > target.n())
    throw Error("config: budget " + std::to_string(cfg.budget) + " exceeds pool size " +
                std::to_string(target.n() - cfg.n_initial));
  if (cfg.pca_variance <= 0.0 || cfg.pca_variance > 1.0)
    throw Error("config: pca_variance must be in (0, 1]");
  if (cfg.reg_grid.empty()) throw Error("config: empty reg_grid");
  for (double v : cfg.reg_grid)
    if (v <= 0.0) throw Error("config: reg_grid values must be positive");
  if (cfg.refit_cadence < 1) throw Error("config: refit_cadence must be at least 1");
  if (cfg.adaptation.kind == AdaptationConfig::Kind::BDA &&
      cfg.direction != Direction::CECtoDEE)
    throw Error("config: BDA needs categorical source labels (direction cec_to_dee)");
  if (cfg.adaptation.kind != AdaptationConfig::Kind::None && cfg.adaptation.dims < 1)
    throw Error("config: adaptation dims must be at least 1");

  if (cfg.direction == Direction::DEEtoCEC) {
    if (!source.dim_labels) throw Error("config: source dataset lacks dimensional labels");
    if (!target.cat_labels) throw Error("config: target dataset lacks categorical labels");
  } else {
    if (!source.cat_labels) throw Error("config: source dataset lacks categorical labels");
    if (!target.dim_labels) throw Error("config: target dataset lacks dimensional labels");
  }
  if (source.feature_dim() != target.feature_dim())
    throw Error("config: source and target feature dimensionalities differ");

  std::vector<std::string> warnings;
  const std::uint64_t selectors = static_cast<std::uint64_t>(std::count_if(
      cfg.strategies.begin(), cfg.strategies.end(), [](Strategy s) { return is_selector(s); }));
  const std::uint64_t runs = selectors * cfg.seeds.size();
  const std::uint64_t cv_rounds = 1 + static_cast<std::uint64_t>(cfg.budget / cfg.refit_cadence);
  const std::uint64_t per_run = static_cast<std::uint64_t>(cfg.budget) + 1 +
                                cv_rounds * cfg.reg_grid.size() * 3;
  if (runs * per_run > cfg.fit_budget_warning)
    warnings.push_back("estimated model fits " + std::to_string(runs * per_run) +
                       " exceed fit_budget_warning " + std::to_string(cfg.fit_budget_warning) +
                       "; consider fewer seeds, a smaller budget, or a larger refit_cadence");
  return warnings;
}

// ---------------------------------------------------------------------------
// Shared preparation

/// Simulated annotator: answers label queries from the target dataset's held
/// ground truth.
struct Oracle {
  const std::vector<int>* cat = nullptr;
  const Matrix* dims = nullptr;

  int cat_label(Index i) const {
    if (!cat) throw Error("Oracle: no categorical ground truth");
    return (*cat)[static_cast<std::size_t>(i)];
  }
  Vector dim_label(Index i) const {
    if (!dims) throw Error("Oracle: no dimensional ground truth");
    return dims->row(i).transpose();
  }
};

/// Everything shared across strategies and seeds: the two feature spaces,
/// the adapted source model's predictions for every target sample, and the
/// cached pairwise feature distances used by the greedy-sampling family.
///
/// Two projections coexist deliberately: the within-task model, the greedy
/// feature distances, and all evaluation use a PCA of the target corpus
/// alone, while the source model lives in a PCA of the stacked corpora
/// followed by optional TCA/BDA alignment. Source predictions are computed
/// once here, from the adapted space, and never refreshed.
struct PreparedExperiment {
  Direction direction = Direction::DEEtoCEC;
  Matrix target_feats;  // target-PCA space, one row per target sample
  Matrix pairwise_dist;  // Euclidean distances between target_feats rows

  std::vector<int> target_cat;  // ground truth (classification target)
  Matrix target_dims;           // ground truth (regression target)
  std::vector<std::string> emotion_names;    // target classes (classification)
  std::vector<std::string> dimension_names;  // regression outputs / lexicon dims
  Interval dim_interval{1.0, 5.0};

  Matrix lex_rows;  // lexicon rows: target emotion order (DEEtoCEC) or source order

  Matrix source_dim_pred;           // DEEtoCEC: source regressor on all target samples
  Matrix source_cat_probs;          // CECtoDEE: source classifier probabilities
  Matrix source_mapped;             // CECtoDEE: lexicon-mapped source probabilities
  std::vector<int> source_cat_pred;  // CECtoDEE: source-predicted classes
  Vector source_conf;                // CECtoDEE: source prediction confidence

  Index target_pca_dim = 0;
  Index cross_pca_dim = 0;
  Index source_model_fits = 0;
  double source_reg = 0.0;
  std::optional<double> bda_balance;

  Oracle oracle() const {
    Oracle o;
    if (!target_cat.empty()) o.cat = &target_cat;
    if (target_dims.rows() > 0) o.dims = &target_dims;
    return o;
  }
};

namespace detail {

inline Matrix pairwise_distances(const Matrix& X) {
  const Vector sq = X.rowwise().squaredNorm();
  Matrix d2 = (-2.0 * X * X.transpose()).rowwise() + sq.transpose();
  d2.colwise() += sq;
  return d2.array().max(0.0).sqrt().matrix();
}

inline Matrix dist_slice(const Matrix& full, const std::vector<Index>& rows,
                         const std::vector<Index>& cols) {
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      out(static_cast<Index>(i), static_cast<Index>(j)) = full(rows[i], cols[j]);
  return out;
}

inline std::vector<int> elements_of(const std::vector<int>& all, const std::vector<Index>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (Index i : idx) out.push_back(all[static_cast<std::size_t>(i)]);
  return out;
}

inline Vector row_norms(const Matrix& M) {
  return M.rowwise().norm();
}

// Fold seed for the one-off source-model selection; per-run seeds start from
// the experiment seeds instead.
constexpr std::uint64_t kSourceFoldSeed = 0x5ec5eedull;

}  // namespace detail

inline PreparedExperiment prepare_experiment(const ExperimentConfig& cfg, const Dataset& source,
                                             const Dataset& target) {
  PreparedExperiment prep;
  prep.direction = cfg.direction;

  AffectiveNormLexicon lex =
      cfg.lexicon_path.empty() ? nrc_vad_lexicon() : load_lexicon(cfg.lexicon_path);
  const Interval cti_interval =
      cfg.direction == Direction::DEEtoCEC ? source.dim_interval : target.dim_interval;
  lex = rescale_lexicon(lex, cti_interval);
  prep.dim_interval = cti_interval;

  if (cfg.direction == Direction::DEEtoCEC) {
    prep.target_cat = *target.cat_labels;
    prep.emotion_names = target.emotion_names;
    prep.lex_rows = lex.rows_for(target.emotion_names);
    if (source.dim_labels->cols() != prep.lex_rows.cols())
      throw Error("prepare_experiment: source dimension count differs from lexicon");
    prep.dimension_names = source.dimension_names;
  } else {
    prep.target_dims = *target.dim_labels;
    prep.dimension_names = target.dimension_names;
    prep.lex_rows = lex.rows_for(source.emotion_names);
    if (target.dim_labels->cols() != prep.lex_rows.cols())
      throw Error("prepare_experiment: target dimension count differs from lexicon");
  }

  // Within-task space: PCA of the target corpus alone.
  const PCAProjection target_pca = fit_pca(target.features, cfg.pca_variance);
  prep.target_feats = target_pca.project(target.features);
  prep.target_pca_dim = target_pca.components.cols();
  prep.pairwise_dist = detail::pairwise_distances(prep.target_feats);

  // Cross-task space: PCA of the stacked corpora, then optional alignment.
  Matrix stacked(source.n() + target.n(), source.feature_dim());
  stacked.topRows(source.n()) = source.features;
  stacked.bottomRows(target.n()) = target.features;
  const PCAProjection cross_pca = fit_pca(stacked, cfg.pca_variance);
  prep.cross_pca_dim = cross_pca.components.cols();
  Matrix Zs = cross_pca.project(source.features);
  Matrix Zt = cross_pca.project(target.features);

  std::optional<ClassifierModel> bda_classifier;
  if (cfg.adaptation.kind == AdaptationConfig::Kind::TCA) {
    const LinearProjection proj = tca_fit(Zs, Zt, cfg.adaptation.dims, cfg.adaptation.mu);
    Zs = proj.apply(Zs);
    Zt = proj.apply(Zt);
  } else if (cfg.adaptation.kind == AdaptationConfig::Kind::BDA) {
    const std::vector<int>& ys = *source.cat_labels;
    const int n_classes = static_cast<int>(source.emotion_names.size());
    // Regularization for the loop's classifiers is selected once on the
    // unadapted source features; each BDA refresh then fits cold.
    const double c = select_classifier_reg(Zs, ys, n_classes, cfg.reg_grid, 3,
                                           detail::kSourceFoldSeed);
    const ClassifierFactory factory = [c](const Matrix& X, const std::vector<int>& y,
                                          int classes) {
      return fit_classifier(X, y, classes, c);
    };
    BdaResult bda = bda_fit(Zs, ys, Zt, n_classes, cfg.adaptation.dims,
                            cfg.adaptation.iterations, cfg.adaptation.balance_grid, factory,
                            cfg.adaptation.mu);
    prep.bda_balance = bda.balance_factor;
    prep.source_reg = c;
    Zs = bda.projection.apply(Zs);
    Zt = bda.projection.apply(Zt);
    bda_classifier = std::move(bda.classifier);
  }

  if (cfg.direction == Direction::DEEtoCEC) {
    const Matrix& Ys = *source.dim_labels;
    prep.source_reg = select_regressor_reg(Zs, Ys, cfg.reg_grid, 3, detail::kSourceFoldSeed);
    const RegressorModel model = fit_regressor(Zs, Ys, prep.source_reg);
    prep.source_model_fits = 1;
    prep.source_dim_pred = model.predict(Zt);
  } else {
    ClassifierModel model;
    if (bda_classifier) {
      model = std::move(*bda_classifier);
      prep.source_model_fits = 1;
    } else {
      const std::vector<int>& ys = *source.cat_labels;
      const int n_classes = static_cast<int>(source.emotion_names.size());
      prep.source_reg = select_classifier_reg(Zs, ys, n_classes, cfg.reg_grid, 3,
                                              detail::kSourceFoldSeed);
      model = fit_classifier(Zs, ys, n_classes, prep.source_reg);
      prep.source_model_fits = 1;
    }
    prep.source_cat_probs = model.predict_proba(Zt);
    prep.source_cat_pred = model.predict(Zt);
    prep.source_conf = prep.source_cat_probs.rowwise().maxCoeff();
    prep.source_mapped = map_all_to_dimensional(prep.source_cat_probs, prep.lex_rows);
  }
  return prep;
}

// ---------------------------------------------------------------------------
// Learning curves and the two loops

struct LearningCurve {
  Strategy strategy = Strategy::Rand;
  std::uint64_t seed = 0;
  std::vector<EvaluationReport> reports;  // budget + 1 entries, index = queries so far
  std::vector<Index> queried;             // budget entries (none for NRCMapping)
  Index initial_fits = 0;
  Index in_loop_fits = 0;
  Index cv_fits = 0;
};

namespace detail {

inline int distinct_classes(const std::vector<int>& y) {
  std::vector<int> u(y);
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  return static_cast<int>(u.size());
}

}  // namespace detail

/// Classification-target loop. The source regressor's dimensional estimates
/// are fixed inputs; the target classifier is refit after every query, and
/// its class probabilities drive the uncertainty and inconsistency scores.
/// A labeled set with fewer than two classes skips fitting and falls back to
/// uniform probabilities until a second class arrives.
inline LearningCurve run_dee_to_cec(const ExperimentConfig& cfg, const PreparedExperiment& prep,
                                    Strategy strategy, std::uint64_t seed) {
  if (prep.direction != Direction::DEEtoCEC)
    throw Error("run_dee_to_cec: preparation was for the other direction");
  const Index N = prep.target_feats.rows();
  const int n_classes = static_cast<int>(prep.emotion_names.size());
  const Oracle oracle = prep.oracle();

  LearningCurve curve;
  curve.strategy = strategy;
  curve.seed = seed;

  PoolState pool = init_pool(N, cfg.n_initial, derive_seed(seed, 0));
  Xoshiro256StarStar select_rng(derive_seed(seed, 1));
  const std::uint64_t fold_seed = derive_seed(seed, 2);

  const auto labeled_X = [&] { return detail::rows_subset(prep.target_feats, pool.labeled_idx); };
  const auto labeled_y = [&] { return detail::elements_of(prep.target_cat, pool.labeled_idx); };

  double inv_reg = *std::min_element(cfg.reg_grid.begin(), cfg.reg_grid.end());
  std::optional<ClassifierModel> model;
  const auto reselect = [&] {
    try {
      inv_reg = select_classifier_reg(labeled_X(), labeled_y(), n_classes, cfg.reg_grid, 3,
                                      fold_seed);
      curve.cv_fits += static_cast<Index>(cfg.reg_grid.size()) * 3;
    } catch (const Error&) {
      // keep the previous value when folds degenerate
    }
  };
  const auto refit = [&]() -> bool {
    const std::vector<int> y = labeled_y();
    if (detail::distinct_classes(y) < 2) return false;
    model = fit_classifier(labeled_X(), y, n_classes, inv_reg,
                           model.has_value() ? &*model : nullptr);
    return true;
  };
  const auto pool_probs = [&] {
    const Matrix Xp = detail::rows_subset(prep.target_feats, pool.pool_idx);
    if (model.has_value()) return model->predict_proba(Xp);
    return Matrix::Constant(Xp.rows(), n_classes, 1.0 / n_classes).eval();
  };
  const auto record = [&] {
    const Matrix probs = pool_probs();
    std::vector<int> pred(static_cast<std::size_t>(probs.rows()), 0);
    for (Index i = 0; i < probs.rows(); ++i) {
      Index at = 0;
      probs.row(i).maxCoeff(&at);
      pred[static_cast<std::size_t>(i)] = static_cast<int>(at);
    }
    curve.reports.push_back(evaluate_hybrid_classification(prep.target_cat, pool.labeled_idx,
                                                           pool.pool_idx, pred));
  };

  reselect();
  if (refit()) curve.initial_fits = 1;
  record();

  for (Index k = 1; k <= cfg.budget; ++k) {
    Index pos = 0;
    if (strategy == Strategy::Rand) {
      pos = static_cast<Index>(select_rng.below(pool.pool_idx.size()));
    } else {
      const Matrix probs = pool_probs();
      ScoreVector scores;
      switch (strategy) {
        case Strategy::Ent: {
          scores.values.resize(probs.rows());
          for (Index i = 0; i < probs.rows(); ++i)
            scores.values[i] = entropy(probs.row(i).transpose());
          break;
        }
        case Strategy::LC: {
          scores.values = probs.rowwise().maxCoeff();
          scores.higher_is_better = false;
          break;
        }
        case Strategy::SourceMTiGS: {
          // Greedy distances scored entirely from the source model: both the
          // pool and labeled sides use its dimensional estimates, since the
          // target task has no dimensional labels.
          scores.values = mtigs_scores(
              detail::dist_slice(prep.pairwise_dist, pool.pool_idx, pool.labeled_idx),
              detail::rows_subset(prep.source_dim_pred, pool.pool_idx),
              detail::rows_subset(prep.source_dim_pred, pool.labeled_idx));
          break;
        }
        case Strategy::CTIAL:
        case Strategy::EntCTIAL:
        case Strategy::LCCTIAL: {
          const Matrix mapped = map_all_to_dimensional(probs, prep.lex_rows);
          const Vector inconsistency = detail::row_norms(
              detail::rows_subset(prep.source_dim_pred, pool.pool_idx) - mapped);
          if (strategy == Strategy::CTIAL) {
            scores.values = inconsistency;
          } else if (strategy == Strategy::EntCTIAL) {
            scores.values.resize(probs.rows());
            for (Index i = 0; i < probs.rows(); ++i)
              scores.values[i] = inconsistency[i] * entropy(probs.row(i).transpose());
          } else {
            scores.values =
                (inconsistency.array() / probs.rowwise().maxCoeff().array()).matrix();
          }
          break;
        }
        default:
          throw Error(std::string("strategy ") + strategy_name(strategy) +
                      " is not valid for direction dee_to_cec");
      }
      pos = select_index(scores);
    }

    const Index q = pool.pool_idx[static_cast<std::size_t>(pos)];
    curve.queried.push_back(q);
    pool.acquire(q);
    pool.acquired_cat[q] = oracle.cat_label(q);

    if (k % cfg.refit_cadence == 0) reselect();
    if (refit()) ++curve.in_loop_fits;
    record();
  }
  return curve;
}

/// Regression-target loop. The source classifier's probabilities, their
/// lexicon mapping, predicted classes, and confidence are fixed inputs; the
/// target regressor is refit after every query. NRCMapping bypasses the loop
/// entirely: its estimate for every sample is the mapped source probability,
/// with no training and no queries.
inline LearningCurve run_cec_to_dee(const ExperimentConfig& cfg, const PreparedExperiment& prep,
                                    Strategy strategy, std::uint64_t seed) {
  if (prep.direction != Direction::CECtoDEE)
    throw Error("run_cec_to_dee: preparation was for the other direction");
  const Index N = prep.target_feats.rows();
  const Oracle oracle = prep.oracle();

  LearningCurve curve;
  curve.strategy = strategy;
  curve.seed = seed;

  if (strategy == Strategy::NRCMapping) {
    std::vector<Index> all(static_cast<std::size_t>(N));
    std::iota(all.begin(), all.end(), Index{0});
    const EvaluationReport report =
        evaluate_hybrid_regression(prep.target_dims, {}, all, prep.source_mapped);
    curve.reports.assign(static_cast<std::size_t>(cfg.budget) + 1, report);
    return curve;
  }

  PoolState pool = init_pool(N, cfg.n_initial, derive_seed(seed, 0));
  Xoshiro256StarStar select_rng(derive_seed(seed, 1));
  const std::uint64_t fold_seed = derive_seed(seed, 2);

  const auto labeled_X = [&] { return detail::rows_subset(prep.target_feats, pool.labeled_idx); };
  const auto labeled_Y = [&] { return detail::rows_subset(prep.target_dims, pool.labeled_idx); };

  double alpha = *std::min_element(cfg.reg_grid.begin(), cfg.reg_grid.end());
  const auto reselect = [&] {
    try {
      alpha = select_regressor_reg(labeled_X(), labeled_Y(), cfg.reg_grid, 3, fold_seed);
      curve.cv_fits += static_cast<Index>(cfg.reg_grid.size()) * 3;
    } catch (const Error&) {
      // keep the previous value when folds degenerate
    }
  };
  RegressorModel model;
  const auto record = [&] {
    const Matrix pred = model.predict(detail::rows_subset(prep.target_feats, pool.pool_idx));
    curve.reports.push_back(
        evaluate_hybrid_regression(prep.target_dims, pool.labeled_idx, pool.pool_idx, pred));
  };

  reselect();
  model = fit_regressor(labeled_X(), labeled_Y(), alpha);
  curve.initial_fits = 1;
  record();

  for (Index k = 1; k <= cfg.budget; ++k) {
    Index pos = 0;
    if (strategy == Strategy::Rand) {
      pos = static_cast<Index>(select_rng.below(pool.pool_idx.size()));
    } else {
      const Matrix pred_dims =
          model.predict(detail::rows_subset(prep.target_feats, pool.pool_idx));
      ScoreVector scores;
      switch (strategy) {
        case Strategy::MTiGS: {
          scores.values = mtigs_scores(
              detail::dist_slice(prep.pairwise_dist, pool.pool_idx, pool.labeled_idx),
              pred_dims, labeled_Y());
          break;
        }
        case Strategy::SourceLC: {
          scores.values = detail::rows_subset(prep.source_conf, pool.pool_idx);
          scores.higher_is_better = false;
          break;
        }
        case Strategy::CTiGS: {
          scores.values = ctigs_scores(
              detail::dist_slice(prep.pairwise_dist, pool.pool_idx, pool.labeled_idx),
              pred_dims, labeled_Y(),
              detail::elements_of(prep.source_cat_pred, pool.pool_idx),
              detail::elements_of(prep.source_cat_pred, pool.labeled_idx));
          break;
        }
        case Strategy::CTIAL: {
          scores.values = detail::row_norms(
              pred_dims - detail::rows_subset(prep.source_mapped, pool.pool_idx));
          break;
        }
        case Strategy::MTiGSCTIAL: {
          const Vector inconsistency = detail::row_norms(
              pred_dims - detail::rows_subset(prep.source_mapped, pool.pool_idx));
          const Vector diversity = mtigs_modified_scores(
              detail::dist_slice(prep.pairwise_dist, pool.pool_idx, pool.labeled_idx),
              pred_dims, labeled_Y());
          scores.values = (inconsistency.array() * diversity.array()).matrix();
          break;
        }
        default:
          throw Error(std::string("strategy ") + strategy_name(strategy) +
                      " is not valid for direction cec_to_dee");
      }
      pos = select_index(scores);
    }

    const Index q = pool.pool_idx[static_cast<std::size_t>(pos)];
    curve.queried.push_back(q);
    pool.acquire(q);
    pool.acquired_dim[q] = oracle.dim_label(q);

    if (k % cfg.refit_cadence == 0) reselect();
    model = fit_regressor(labeled_X(), labeled_Y(), alpha);
    ++curve.in_loop_fits;
    record();
  }
  return curve;
}

inline LearningCurve run_strategy(const ExperimentConfig& cfg, const PreparedExperiment& prep,
                                  Strategy strategy, std::uint64_t seed) {
  return cfg.direction == Direction::DEEtoCEC ? run_dee_to_cec(cfg, prep, strategy, seed)
                                              : run_cec_to_dee(cfg, prep, strategy, seed);
}

// ---------------------------------------------------------------------------
// Persistence: tidy curve rows, CSV files, JSON summary

struct CurveRow {
  std::string strategy;
  std::uint64_t seed = 0;
  Index iteration = 0;
  std::string metric;
  double value = 0.0;
};

/// Flattens one curve into tidy rows. Classification curves carry "bca";
/// regression curves carry per-dimension "rmse_*" and "cc_*" plus
/// "rmse_mean". An undefined correlation becomes NaN ("nan" in the CSV).
inline std::vector<CurveRow> curve_rows(const LearningCurve& curve,
                                        const std::vector<std::string>& dimension_names) {
  std::vector<CurveRow> rows;
  const std::string name = strategy_name(curve.strategy);
  for (std::size_t k = 0; k < curve.reports.size(); ++k) {
    const EvaluationReport& r = curve.reports[k];
    const Index it = static_cast<Index>(k);
    if (r.bca)
      rows.push_back({name, curve.seed, it, "bca", *r.bca});
    if (r.rmse) {
      for (Index d = 0; d < r.rmse->size(); ++d)
        rows.push_back({name, curve.seed, it,
                        "rmse_" + dimension_names[static_cast<std::size_t>(d)], (*r.rmse)[d]});
      rows.push_back({name, curve.seed, it, "rmse_mean", r.rmse_mean()});
    }
    if (r.cc) {
      for (std::size_t d = 0; d < r.cc->size(); ++d) {
        const std::optional<double>& c = (*r.cc)[d];
        rows.push_back({name, curve.seed, it, "cc_" + dimension_names[d],
                        c ? *c : std::numeric_limits<double>::quiet_NaN()});
      }
    }
  }
  return rows;
}

inline void write_curve_rows_csv(const std::string& path, const std::vector<CurveRow>& rows) {
  std::vector<std::vector<std::string>> cells;
  cells.reserve(rows.size());
  for (const CurveRow& r : rows)
    cells.push_back({r.strategy, std::to_string(r.seed), std::to_string(r.iteration), r.metric,
                     format_double(r.value)});
  write_csv(path, {"strategy", "seed", "iteration", "metric", "value"}, cells);
}

inline std::vector<CurveRow> read_curve_rows_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const std::size_t cs = t.column("strategy"), cd = t.column("seed"),
                    ci = t.column("iteration"), cm = t.column("metric"),
                    cv = t.column("value");
  std::vector<CurveRow> rows;
  rows.reserve(t.n_rows());
  for (std::size_t r = 0; r < t.n_rows(); ++r) {
    CurveRow row;
    row.strategy = t.rows[r][cs];
    row.seed = static_cast<std::uint64_t>(t.numeric(r, cd));
    row.iteration = static_cast<Index>(t.numeric(r, ci));
    row.metric = t.rows[r][cm];
    row.value = t.numeric(r, cv);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_queries_csv(const std::string& path,
                              const std::vector<LearningCurve>& curves) {
  std::vector<std::vector<std::string>> cells;
  for (const LearningCurve& c : curves)
    for (std::size_t k = 0; k < c.queried.size(); ++k)
      cells.push_back({strategy_name(c.strategy), std::to_string(c.seed),
                       std::to_string(k + 1), std::to_string(c.queried[k])});
  write_csv(path, {"strategy", "seed", "iteration", "queried_index"}, cells);
}

/// Per-iteration means for every strategy and metric, plus one-sided
/// Wilcoxon signed-rank comparisons on the primary metric ("bca" when
/// present, else "rmse_mean"), paired by seed. For each candidate strategy
/// and iteration, p-values against all other strategies form one family for
/// Holm's adjustment. Tests needing more nonzero differences than available
/// are reported as null.
inline nlohmann::ordered_json summarize_rows(const std::vector<CurveRow>& rows) {
  using ordered_json = nlohmann::ordered_json;
  if (rows.empty()) throw Error("summarize_rows: no curve rows");

  std::vector<std::string> strategies, metrics;
  std::vector<std::uint64_t> seeds;
  Index max_iter = 0;
  for (const CurveRow& r : rows) {
    if (std::find(strategies.begin(), strategies.end(), r.strategy) == strategies.end())
      strategies.push_back(r.strategy);
    if (std::find(metrics.begin(), metrics.end(), r.metric) == metrics.end())
      metrics.push_back(r.metric);
    if (std::find(seeds.begin(), seeds.end(), r.seed) == seeds.end()) seeds.push_back(r.seed);
    max_iter = std::max(max_iter, r.iteration);
  }
  std::sort(seeds.begin(), seeds.end());
  const std::size_t n_points = static_cast<std::size_t>(max_iter) + 1;
  const std::size_t n_seeds = seeds.size();

  const auto seed_pos = [&](std::uint64_t s) {
    return static_cast<std::size_t>(std::find(seeds.begin(), seeds.end(), s) - seeds.begin());
  };
  const auto strat_pos = [&](const std::string& s) {
    return static_cast<std::size_t>(std::find(strategies.begin(), strategies.end(), s) -
                                    strategies.begin());
  };
  const auto metric_pos = [&](const std::string& m) {
    return static_cast<std::size_t>(std::find(metrics.begin(), metrics.end(), m) -
                                    metrics.begin());
  };

  // values[strategy][metric][iteration][seed]
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::vector<std::vector<std::vector<double>>>> values(
      strategies.size(),
      std::vector<std::vector<std::vector<double>>>(
          metrics.size(), std::vector<std::vector<double>>(
                              n_points, std::vector<double>(n_seeds, nan))));
  for (const CurveRow& r : rows)
    values[strat_pos(r.strategy)][metric_pos(r.metric)][static_cast<std::size_t>(r.iteration)]
          [seed_pos(r.seed)] = r.value;

  ordered_json out;
  out["budget"] = max_iter;
  out["seeds"] = seeds;
  out["strategies"] = strategies;
  out["metrics"] = metrics;

  ordered_json means;
  for (std::size_t s = 0; s < strategies.size(); ++s) {
    ordered_json per_metric;
    for (std::size_t m = 0; m < metrics.size(); ++m) {
      std::vector<double> mean(n_points, nan);
      for (std::size_t k = 0; k < n_points; ++k) {
        double sum = 0.0;
        std::size_t cnt = 0;
        for (double v : values[s][m][k])
          if (!std::isnan(v)) {
            sum += v;
            ++cnt;
          }
        if (cnt > 0) mean[k] = sum / static_cast<double>(cnt);
      }
      per_metric[metrics[m]] = mean;  // NaN serializes as null
    }
    means[strategies[s]] = std::move(per_metric);
  }
  out["means"] = std::move(means);

  const bool classification =
      std::find(metrics.begin(), metrics.end(), "bca") != metrics.end();
  const std::string primary = classification ? "bca" : "rmse_mean";
  out["primary_metric"] = primary;
  out["orientation"] = classification ? "higher_better" : "lower_better";
  if (std::find(metrics.begin(), metrics.end(), primary) == metrics.end()) {
    out["significance"] = nullptr;
    out["note"] = "no primary metric present";
    return out;
  }
  if (n_seeds < 5 || strategies.size() < 2) {
    out["significance"] = nullptr;
    out["note"] = "significance needs at least 5 seeds and 2 strategies";
    return out;
  }

  const std::size_t pm = metric_pos(primary);
  ordered_json significance;
  for (std::size_t a = 0; a < strategies.size(); ++a) {
    ordered_json vs;
    // Collect raw p per opponent and iteration, then Holm-adjust across
    // opponents within each iteration.
    std::vector<std::vector<ordered_json>> raw(strategies.size(),
                                               std::vector<ordered_json>(n_points, nullptr));
    std::vector<std::vector<ordered_json>> adj = raw;
    for (std::size_t k = 0; k < n_points; ++k) {
      std::vector<double> family;
      std::vector<std::size_t> family_b;
      for (std::size_t b = 0; b < strategies.size(); ++b) {
        if (b == a) continue;
        const std::vector<double>& va = values[a][pm][k];
        const std::vector<double>& vb = values[b][pm][k];
        if (std::any_of(va.begin(), va.end(), [](double v) { return std::isnan(v); }) ||
            std::any_of(vb.begin(), vb.end(), [](double v) { return std::isnan(v); }))
          continue;
        try {
          const WilcoxonResult w = classification ? wilcoxon_signed_rank_greater(va, vb)
                                                  : wilcoxon_signed_rank_greater(vb, va);
          raw[b][k] = w.p;
          family.push_back(w.p);
          family_b.push_back(b);
        } catch (const Error&) {
          // too few nonzero differences: leave null
        }
      }
      const std::vector<double> holm = holm_adjust(family);
      for (std::size_t i = 0; i < family_b.size(); ++i) adj[family_b[i]][k] = holm[i];
    }
    for (std::size_t b = 0; b < strategies.size(); ++b) {
      if (b == a) continue;
      ordered_json entry;
      entry["p"] = raw[b];
      entry["p_holm"] = adj[b];
      vs[strategies[b]] = std::move(entry);
    }
    significance[strategies[a]] = std::move(vs);
  }
  out["significance"] = std::move(significance);
  return out;
}

// ---------------------------------------------------------------------------
// Suite execution

struct SuiteResult {
  std::vector<LearningCurve> curves;  // strategy-major in config order, then seed order
  nlohmann::ordered_json summary;
};

/// Runs every strategy x seed combination, flushing each finished run to
/// <output_dir>/runs/ immediately, then writes the merged curves.csv,
/// queries.csv, and summary.json. Runs are independent; `jobs` sets the
/// worker count. Output files are byte-identical across reruns of the same
/// config regardless of job count.
inline SuiteResult run_suite(const ExperimentConfig& cfg, const Dataset& source,
                             const Dataset& target, int jobs = 1,
                             const std::function<void(const LearningCurve&)>& on_complete = {}) {
  validate_experiment(cfg, source, target);
  const PreparedExperiment prep = prepare_experiment(cfg, source, target);

  namespace fs = std::filesystem;
  const fs::path out_dir(cfg.output_dir);
  fs::create_directories(out_dir / "runs");

  struct Item {
    Strategy strategy;
    std::uint64_t seed;
  };
  std::vector<Item> items;
  for (Strategy s : cfg.strategies)
    for (std::uint64_t seed : cfg.seeds) items.push_back({s, seed});

  std::vector<LearningCurve> curves(items.size());
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr first_error;

  const auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= items.size()) return;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (first_error) return;
      }
      try {
        LearningCurve curve = run_strategy(cfg, prep, items[i].strategy, items[i].seed);
        const fs::path run_path =
            out_dir / "runs" /
            (std::string(strategy_name(curve.strategy)) + "_seed" +
             std::to_string(curve.seed) + ".csv");
        write_curve_rows_csv(run_path.string(), curve_rows(curve, prep.dimension_names));
        if (on_complete) {
          std::lock_guard<std::mutex> lock(mu);
          on_complete(curve);
        }
        curves[i] = std::move(curve);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  const int n_workers = std::max(1, std::min<int>(jobs, static_cast<int>(items.size())));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  std::vector<CurveRow> all_rows;
  for (const LearningCurve& c : curves) {
    const std::vector<CurveRow> rows = curve_rows(c, prep.dimension_names);
    all_rows.insert(all_rows.end(), rows.begin(), rows.end());
  }
  write_curve_rows_csv((out_dir / "curves.csv").string(), all_rows);
  write_queries_csv((out_dir / "queries.csv").string(), curves);

  SuiteResult result;
  result.summary = summarize_rows(all_rows);
  {
    std::ofstream out(out_dir / "summary.json");
    if (!out) throw Error("cannot write " + (out_dir / "summary.json").string());
    out << result.summary.dump(2) << "\n";
  }
  result.curves = std::move(curves);
  return result;
}

/// Recomputes summary.json from a stored curves.csv.
inline nlohmann::ordered_json regenerate_summary(const std::string& out_dir) {
  namespace fs = std::filesystem;
  const fs::path dir(out_dir);
  const std::vector<CurveRow> rows = read_curve_rows_csv((dir / "curves.csv").string());
  nlohmann::ordered_json summary = summarize_rows(rows);
  std::ofstream out(dir / "summary.json");
  if (!out) throw Error("cannot write " + (dir / "summary.json").string());
  out << summary.dump(2) << "\n";
  return summary;
}

}  // namespace ctial
