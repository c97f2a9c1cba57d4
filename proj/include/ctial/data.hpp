#pragma once

// Datasets, label encodings, the affective-norm lexicon, and pool bookkeeping.
//
// On-disk formats:
//  - features: CSV, header row, every cell numeric, one row per sample
//  - labels:   CSV, header row; a schema assigns class / dimension / group
//              roles to columns by name
//  - lexicon:  JSON object {category: [scores...], "scale": [lo, hi]}

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctial/common.hpp"
#include "ctial/csv.hpp"
#include "ctial/rng.hpp"

namespace ctial {

/// Feature matrix plus whatever label kinds the corpus carries. A dataset may
/// hold categorical labels, dimensional labels, both, or neither; operations
/// declare which they need.
struct Dataset {
  Matrix features;  // N x F
  std::optional<std::vector<int>> cat_labels;   // class indices into emotion_names
  std::optional<Matrix> dim_labels;             // N x |D|, values in dim_interval
  std::optional<std::vector<int>> group_ids;    // session keys for split_by_groups
  std::vector<std::string> emotion_names;       // ordered E
  std::vector<std::string> dimension_names;     // ordered D
  Interval dim_interval{1.0, 5.0};

  Index n() const { return features.rows(); }
  Index feature_dim() const { return features.cols(); }
  Index n_classes() const { return static_cast<Index>(emotion_names.size()); }
  Index n_dims() const { return static_cast<Index>(dimension_names.size()); }

  void validate() const {
    const Index rows = n();
    if (cat_labels) {
      if (static_cast<Index>(cat_labels->size()) != rows)
        throw Error("Dataset: cat_labels length != feature rows");
      for (int c : *cat_labels)
        if (c < 0 || c >= static_cast<int>(emotion_names.size()))
          throw Error("Dataset: class index out of range: " + std::to_string(c));
    }
    if (dim_labels) {
      if (dim_labels->rows() != rows)
        throw Error("Dataset: dim_labels rows != feature rows");
      if (dim_labels->cols() != n_dims())
        throw Error("Dataset: dim_labels columns != dimension_names size");
      constexpr double kSlack = 1e-9;
      for (Index i = 0; i < dim_labels->rows(); ++i)
        for (Index j = 0; j < dim_labels->cols(); ++j)
          if (!dim_interval.contains((*dim_labels)(i, j), kSlack))
            throw Error("Dataset: dimensional label outside declared interval at row " +
                        std::to_string(i));
    }
    if (group_ids && static_cast<Index>(group_ids->size()) != rows)
      throw Error("Dataset: group_ids length != feature rows");
  }
};

/// Assigns roles to label-file columns and declares the emotion set.
struct LabelSchema {
  std::optional<std::string> class_column;
  std::vector<std::string> dimension_columns;
  std::optional<std::string> group_column;
  std::vector<std::string> emotions;  // declared order fixes the class indices
  Interval dim_interval{1.0, 5.0};
};

inline Dataset load_dataset(const std::string& features_path,
                            const std::string& labels_path,
                            const LabelSchema& schema) {
  const CsvTable fcsv = read_csv(features_path);
  const CsvTable lcsv = read_csv(labels_path);
  if (fcsv.n_rows() != lcsv.n_rows())
    throw ParseError(labels_path, 0, 0,
                     "row-count mismatch: features have " + std::to_string(fcsv.n_rows()) +
                         " rows, labels have " + std::to_string(lcsv.n_rows()));

  Dataset ds;
  ds.features = csv_numeric_matrix(fcsv);
  ds.dim_interval = schema.dim_interval;

  if (schema.class_column) {
    ds.emotion_names = schema.emotions;
    if (ds.emotion_names.empty())
      throw Error("LabelSchema: class_column set but no emotions declared");
    const std::size_t col = lcsv.column(*schema.class_column);
    std::vector<int> labels(lcsv.n_rows());
    for (std::size_t r = 0; r < lcsv.n_rows(); ++r) {
      const std::string& name = lcsv.rows[r][col];
      const auto it = std::find(ds.emotion_names.begin(), ds.emotion_names.end(), name);
      if (it == ds.emotion_names.end())
        throw ParseError(labels_path, r + 2, col + 1,
                         "unknown class name '" + name + "'");
      labels[r] = static_cast<int>(it - ds.emotion_names.begin());
    }
    ds.cat_labels = std::move(labels);
  }

  if (!schema.dimension_columns.empty()) {
    ds.dimension_names = schema.dimension_columns;
    Matrix dims(static_cast<Index>(lcsv.n_rows()),
                static_cast<Index>(schema.dimension_columns.size()));
    for (std::size_t d = 0; d < schema.dimension_columns.size(); ++d) {
      const std::size_t col = lcsv.column(schema.dimension_columns[d]);
      for (std::size_t r = 0; r < lcsv.n_rows(); ++r)
        dims(static_cast<Index>(r), static_cast<Index>(d)) = lcsv.numeric(r, col);
    }
    ds.dim_labels = std::move(dims);
  }

  if (schema.group_column) {
    const std::size_t col = lcsv.column(*schema.group_column);
    std::vector<int> groups(lcsv.n_rows());
    for (std::size_t r = 0; r < lcsv.n_rows(); ++r) {
      const double g = lcsv.numeric(r, col);
      groups[r] = static_cast<int>(g);
      if (static_cast<double>(groups[r]) != g)
        throw ParseError(labels_path, r + 2, col + 1, "group id must be an integer");
    }
    ds.group_ids = std::move(groups);
  }

  ds.validate();
  return ds;
}

/// Writes the dataset back to the two-file CSV layout. Numeric cells use
/// "%.17g" so a load/write/load cycle reproduces values exactly.
inline void write_dataset(const Dataset& ds, const std::string& features_path,
                          const std::string& labels_path) {
  std::vector<std::string> fheader(static_cast<std::size_t>(ds.feature_dim()));
  for (std::size_t c = 0; c < fheader.size(); ++c) fheader[c] = "f" + std::to_string(c);
  std::vector<std::vector<std::string>> frows(static_cast<std::size_t>(ds.n()));
  for (Index r = 0; r < ds.n(); ++r) {
    auto& row = frows[static_cast<std::size_t>(r)];
    row.resize(fheader.size());
    for (Index c = 0; c < ds.feature_dim(); ++c)
      row[static_cast<std::size_t>(c)] = format_double(ds.features(r, c));
  }
  write_csv(features_path, fheader, frows);

  std::vector<std::string> lheader;
  if (ds.cat_labels) lheader.push_back("class");
  for (const auto& d : ds.dimension_names) lheader.push_back(d);
  if (ds.group_ids) lheader.push_back("group");
  std::vector<std::vector<std::string>> lrows(static_cast<std::size_t>(ds.n()));
  for (Index r = 0; r < ds.n(); ++r) {
    auto& row = lrows[static_cast<std::size_t>(r)];
    if (ds.cat_labels)
      row.push_back(ds.emotion_names[static_cast<std::size_t>((*ds.cat_labels)[static_cast<std::size_t>(r)])]);
    if (ds.dim_labels)
      for (Index c = 0; c < ds.dim_labels->cols(); ++c)
        row.push_back(format_double((*ds.dim_labels)(r, c)));
    if (ds.group_ids)
      row.push_back(std::to_string((*ds.group_ids)[static_cast<std::size_t>(r)]));
  }
  write_csv(labels_path, lheader, lrows);
}

/// Schema matching what write_dataset emits for `ds`.
inline LabelSchema schema_for(const Dataset& ds) {
  LabelSchema schema;
  if (ds.cat_labels) {
    schema.class_column = "class";
    schema.emotions = ds.emotion_names;
  }
  schema.dimension_columns = ds.dimension_names;
  if (ds.group_ids) schema.group_column = "group";
  schema.dim_interval = ds.dim_interval;
  return schema;
}

// ---------------------------------------------------------------------------
// Affective-norm lexicon

/// Per-emotion-category dimensional scores on a declared interval.
struct AffectiveNormLexicon {
  std::map<std::string, Vector> entries;
  Interval scale{0.0, 1.0};

  const Vector& at(const std::string& category) const {
    const auto it = entries.find(category);
    if (it == entries.end())
      throw Error("lexicon has no entry for category '" + category + "'");
    return it->second;
  }

  bool covers(const std::vector<std::string>& categories) const {
    return std::all_of(categories.begin(), categories.end(),
                       [&](const auto& c) { return entries.count(c) > 0; });
  }

  /// Stacked score rows for the given categories, in the given order (|E| x |D|).
  Matrix rows_for(const std::vector<std::string>& categories) const {
    if (entries.empty()) throw Error("lexicon is empty");
    const Index dims = entries.begin()->second.size();
    Matrix rows(static_cast<Index>(categories.size()), dims);
    for (std::size_t e = 0; e < categories.size(); ++e) {
      const Vector& v = at(categories[e]);
      if (v.size() != dims) throw Error("lexicon rows have inconsistent widths");
      rows.row(static_cast<Index>(e)) = v.transpose();
    }
    return rows;
  }

  void validate() const {
    if (scale.hi <= scale.lo) throw Error("lexicon scale interval is degenerate");
    constexpr double kSlack = 1e-9;
    for (const auto& [name, scores] : entries)
      for (Index i = 0; i < scores.size(); ++i)
        if (!scale.contains(scores[i], kSlack))
          throw Error("lexicon score for '" + name + "' outside declared scale");
  }
};

/// Valence/arousal/dominance norms for eight common emotion categories, on
/// [0, 1]. Dimension order is valence, arousal, dominance.
inline AffectiveNormLexicon nrc_vad_lexicon() {
  AffectiveNormLexicon lex;
  lex.scale = {0.0, 1.0};
  const auto add = [&lex](const char* name, double v, double a, double d) {
    lex.entries[name] = (Vector(3) << v, a, d).finished();
  };
  add("angry", 0.122, 0.830, 0.604);
  add("happy", 1.000, 0.735, 0.772);
  add("sad", 0.225, 0.333, 0.149);
  add("disgusted", 0.051, 0.773, 0.274);
  add("fearful", 0.083, 0.482, 0.278);
  add("surprised", 0.784, 0.855, 0.539);
  add("frustrated", 0.080, 0.651, 0.255);
  add("neutral", 0.469, 0.184, 0.357);
  return lex;
}

/// Affine map of every score from the lexicon's interval onto `target`.
inline AffectiveNormLexicon rescale_lexicon(const AffectiveNormLexicon& lex,
                                            Interval target) {
  if (lex.scale.hi <= lex.scale.lo)
    throw Error("rescale_lexicon: degenerate source interval");
  if (target.hi <= target.lo)
    throw Error("rescale_lexicon: degenerate target interval");
  const double ratio = target.width() / lex.scale.width();
  AffectiveNormLexicon out;
  out.scale = target;
  for (const auto& [name, scores] : lex.entries)
    out.entries[name] = ((scores.array() - lex.scale.lo) * ratio + target.lo).matrix();
  return out;
}

inline AffectiveNormLexicon load_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path, 0, 0, e.what());
  }
  if (!j.is_object()) throw ParseError(path, 0, 0, "lexicon must be a JSON object");
  AffectiveNormLexicon lex;
  for (const auto& [key, value] : j.items()) {
    if (key == "scale") {
      if (!value.is_array() || value.size() != 2)
        throw ParseError(path, 0, 0, "\"scale\" must be [lo, hi]");
      lex.scale = {value[0].get<double>(), value[1].get<double>()};
      continue;
    }
    if (!value.is_array())
      throw ParseError(path, 0, 0, "entry '" + key + "' must be an array of scores");
    Vector scores(static_cast<Index>(value.size()));
    for (std::size_t i = 0; i < value.size(); ++i) scores[static_cast<Index>(i)] = value[i].get<double>();
    lex.entries[key] = std::move(scores);
  }
  lex.validate();
  return lex;
}

inline void write_lexicon(const AffectiveNormLexicon& lex, const std::string& path) {
  nlohmann::ordered_json j;
  for (const auto& [name, scores] : lex.entries) {
    std::vector<double> v(scores.data(), scores.data() + scores.size());
    j[name] = v;
  }
  j["scale"] = {lex.scale.lo, lex.scale.hi};
  std::ofstream out(path);
  if (!out) throw Error("cannot open file for writing: " + path);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Splits and pool bookkeeping

/// Session-wise partition: rows whose group id is in `source_groups` form the
/// first dataset, the rest the second. Row order is preserved within splits.
inline std::pair<Dataset, Dataset> split_by_groups(const Dataset& ds,
                                                   const std::set<int>& source_groups) {
  if (!ds.group_ids) throw Error("split_by_groups: dataset has no group ids");
  if (source_groups.empty()) throw Error("split_by_groups: empty group set");
  std::set<int> observed(ds.group_ids->begin(), ds.group_ids->end());
  for (int g : source_groups)
    if (!observed.count(g))
      throw Error("split_by_groups: unknown group id " + std::to_string(g));
  if (source_groups.size() >= observed.size())
    throw Error("split_by_groups: source groups must be a strict subset");

  std::vector<Index> first, second;
  for (Index i = 0; i < ds.n(); ++i) {
    if (source_groups.count((*ds.group_ids)[static_cast<std::size_t>(i)]))
      first.push_back(i);
    else
      second.push_back(i);
  }

  const auto take = [&ds](const std::vector<Index>& rows) {
    Dataset out;
    out.features.resize(static_cast<Index>(rows.size()), ds.feature_dim());
    if (ds.dim_labels)
      out.dim_labels = Matrix(static_cast<Index>(rows.size()), ds.dim_labels->cols());
    if (ds.cat_labels) out.cat_labels = std::vector<int>(rows.size());
    if (ds.group_ids) out.group_ids = std::vector<int>(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out.features.row(static_cast<Index>(r)) = ds.features.row(rows[r]);
      if (ds.dim_labels)
        out.dim_labels->row(static_cast<Index>(r)) = ds.dim_labels->row(rows[r]);
      if (ds.cat_labels)
        (*out.cat_labels)[r] = (*ds.cat_labels)[static_cast<std::size_t>(rows[r])];
      if (ds.group_ids)
        (*out.group_ids)[r] = (*ds.group_ids)[static_cast<std::size_t>(rows[r])];
    }
    out.emotion_names = ds.emotion_names;
    out.dimension_names = ds.dimension_names;
    out.dim_interval = ds.dim_interval;
    return out;
  };
  return {take(first), take(second)};
}

/// Partition of a target dataset into labeled set and unlabeled pool, mutated
/// one query at a time. Index vectors stay sorted ascending.
struct PoolState {
  std::vector<Index> labeled_idx;
  std::vector<Index> pool_idx;
  std::map<Index, int> acquired_cat;
  std::map<Index, Vector> acquired_dim;

  Index total() const {
    return static_cast<Index>(labeled_idx.size() + pool_idx.size());
  }

  bool in_pool(Index i) const {
    return std::binary_search(pool_idx.begin(), pool_idx.end(), i);
  }

  /// Moves one index from the pool to the labeled set.
  void acquire(Index q) {
    const auto it = std::lower_bound(pool_idx.begin(), pool_idx.end(), q);
    if (it == pool_idx.end() || *it != q)
      throw Error("PoolState::acquire: index " + std::to_string(q) + " not in pool");
    pool_idx.erase(it);
    labeled_idx.insert(std::lower_bound(labeled_idx.begin(), labeled_idx.end(), q), q);
  }
};

/// Uniform random initial labeled set of size n_initial; deterministic in the
/// seed (xoshiro256** via sample_without_replacement).
inline PoolState init_pool(Index n, Index n_initial, std::uint64_t seed) {
  if (n_initial < 0 || n_initial > n) throw Error("init_pool: n_initial out of range");
  Xoshiro256StarStar rng(seed);
  PoolState state;
  state.labeled_idx = sample_without_replacement(n, n_initial, rng);
  state.pool_idx.reserve(static_cast<std::size_t>(n - n_initial));
  std::size_t li = 0;
  for (Index i = 0; i < n; ++i) {
    if (li < state.labeled_idx.size() && state.labeled_idx[li] == i)
      ++li;
    else
      state.pool_idx.push_back(i);
  }
  return state;
}

inline PoolState init_pool(const Dataset& target, Index n_initial, std::uint64_t seed) {
  return init_pool(target.n(), n_initial, seed);
}

}  // namespace ctial
