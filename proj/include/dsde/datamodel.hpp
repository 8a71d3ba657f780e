#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dsde/ecdf.hpp"
#include "dsde/error.hpp"
#include "dsde/proportion.hpp"

namespace dsde {

enum class Label { ID, OOD, UNKNOWN };

inline const char* to_string(Label l) {
  switch (l) {
    case Label::ID: return "ID";
    case Label::OOD: return "OOD";
    case Label::UNKNOWN: return "UNKNOWN";
  }
  return "UNKNOWN";
}

inline std::optional<Label> label_from_string(const std::string& s) {
  if (s == "ID") return Label::ID;
  if (s == "OOD") return Label::OOD;
  if (s == "UNKNOWN") return Label::UNKNOWN;
  return std::nullopt;
}

// Long-form score record: one model's score for one sample of one dataset.
// Orientation contract: larger score = more in-distribution.
struct ScoreRow {
  std::string dataset_id;
  std::string sample_id;
  std::string model_id;
  double score = 0.0;
  Label label = Label::UNKNOWN;
};

struct ScoreTable {
  std::vector<ScoreRow> rows;
};

struct Violation {
  enum class Kind { DUPLICATE_KEY, NONFINITE_SCORE, RAGGED_COVERAGE };
  Kind kind;
  std::string dataset_id;
  std::string sample_id;
  std::string model_id;
  std::size_t row = 0;  // offending row index, or first row of the group
  std::string message;
};

inline const char* to_string(Violation::Kind k) {
  switch (k) {
    case Violation::Kind::DUPLICATE_KEY: return "DUPLICATE_KEY";
    case Violation::Kind::NONFINITE_SCORE: return "NONFINITE_SCORE";
    case Violation::Kind::RAGGED_COVERAGE: return "RAGGED_COVERAGE";
  }
  return "UNKNOWN";
}

// Checks key uniqueness, score finiteness, and rectangular coverage (every
// sample of a dataset is scored by the same model set). Reports all failures
// instead of aborting on the first.
inline std::vector<Violation> validate_table(const ScoreTable& table) {
  std::vector<Violation> out;

  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> seen;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const ScoreRow& r = table.rows[i];
    if (!std::isfinite(r.score)) {
      out.push_back({Violation::Kind::NONFINITE_SCORE, r.dataset_id, r.sample_id,
                     r.model_id, i, "score is not finite"});
    }
    auto key = std::make_tuple(r.dataset_id, r.sample_id, r.model_id);
    auto [it, inserted] = seen.emplace(std::move(key), i);
    if (!inserted) {
      out.push_back({Violation::Kind::DUPLICATE_KEY, r.dataset_id, r.sample_id,
                     r.model_id, i,
                     "duplicate (dataset, sample, model) key; first at row " +
                         std::to_string(it->second)});
    }
  }

  // Rectangular coverage per dataset: the model set must be identical
  // across samples, checked against the union of models in the dataset.
  std::map<std::string, std::set<std::string>> dataset_models;
  std::map<std::pair<std::string, std::string>, std::set<std::string>> sample_models;
  std::map<std::pair<std::string, std::string>, std::size_t> sample_first_row;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const ScoreRow& r = table.rows[i];
    dataset_models[r.dataset_id].insert(r.model_id);
    auto key = std::make_pair(r.dataset_id, r.sample_id);
    sample_models[key].insert(r.model_id);
    sample_first_row.emplace(key, i);
  }
  for (const auto& [key, models] : sample_models) {
    const auto& expected = dataset_models[key.first];
    if (models.size() == expected.size()) continue;
    for (const auto& m : expected) {
      if (models.count(m)) continue;
      out.push_back({Violation::Kind::RAGGED_COVERAGE, key.first, key.second, m,
                     sample_first_row[key],
                     "sample lacks a score from model " + m});
    }
  }
  return out;
}

// Dense dataset slice. Row order is first appearance of each sample_id,
// column order is lexicographic model_ids; both fixed for determinism.
struct ScoreMatrix {
  std::string dataset_id;
  std::vector<std::string> sample_ids;
  std::vector<std::string> model_ids;
  std::vector<double> scores;  // row-major, sample x model
  std::vector<Label> labels;   // per sample, from first-appearance row

  double at(std::size_t i, std::size_t j) const { return scores[i * model_ids.size() + j]; }
};

inline ScoreMatrix to_matrix(const ScoreTable& table, const std::string& dataset_id) {
  ScoreMatrix m;
  m.dataset_id = dataset_id;

  std::set<std::string> model_set;
  std::unordered_map<std::string, std::size_t> sample_index;
  for (const ScoreRow& r : table.rows) {
    if (r.dataset_id != dataset_id) continue;
    model_set.insert(r.model_id);
    if (sample_index.emplace(r.sample_id, m.sample_ids.size()).second) {
      m.sample_ids.push_back(r.sample_id);
      m.labels.push_back(r.label);
    }
  }
  if (m.sample_ids.empty())
    fail(ErrorCode::UNKNOWN_DATASET, "no rows for dataset " + dataset_id);

  m.model_ids.assign(model_set.begin(), model_set.end());
  std::unordered_map<std::string, std::size_t> model_index;
  for (std::size_t j = 0; j < m.model_ids.size(); ++j) model_index[m.model_ids[j]] = j;

  const std::size_t cols = m.model_ids.size();
  m.scores.assign(m.sample_ids.size() * cols, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::uint8_t> filled(m.scores.size(), 0);
  for (const ScoreRow& r : table.rows) {
    if (r.dataset_id != dataset_id) continue;
    const std::size_t idx = sample_index[r.sample_id] * cols + model_index[r.model_id];
    m.scores[idx] = r.score;
    filled[idx] = 1;
  }
  for (std::size_t i = 0; i < m.sample_ids.size(); ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (!filled[i * cols + j])
        fail(ErrorCode::RAGGED_COVERAGE, "sample " + m.sample_ids[i] +
                                             " lacks a score from model " + m.model_ids[j]);
    }
  }
  return m;
}

// Samples x models p-value matrix; same ordering rules as ScoreMatrix.
struct PValueMatrix {
  std::vector<std::string> sample_ids;
  std::vector<std::string> model_ids;
  std::vector<double> p;  // row-major
  std::vector<Label> labels;

  double at(std::size_t i, std::size_t j) const { return p[i * model_ids.size() + j]; }

  std::vector<std::pair<std::string, double>> row(std::size_t i) const {
    std::vector<std::pair<std::string, double>> out;
    out.reserve(model_ids.size());
    for (std::size_t j = 0; j < model_ids.size(); ++j)
      out.emplace_back(model_ids[j], at(i, j));
    return out;
  }
};

enum class Decision { ID, OOD };

inline const char* to_string(Decision d) { return d == Decision::ID ? "ID" : "OOD"; }

// Per-sample ensemble output: the decision, the rejection count k_hat, the
// null-proportion estimate behind it, and which models rejected.
struct Verdict {
  std::string sample_id;
  Decision decision = Decision::ID;
  std::optional<std::size_t> k_hat;   // 1-based rejection count; absent when ID
  double pi0_hat = 1.0;
  std::vector<std::string> flagged_models;  // the k_hat smallest p-values' models
  std::vector<double> sorted_pvalues;       // ascending
};

enum class Method { DSDE, BH, BY, BONFERRONI, STOREY_FIXED, NAIVE, VOTE };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::DSDE: return "dsde";
    case Method::BH: return "bh";
    case Method::BY: return "by";
    case Method::BONFERRONI: return "bonferroni";
    case Method::STOREY_FIXED: return "storey";
    case Method::NAIVE: return "naive";
    case Method::VOTE: return "vote";
  }
  return "?";
}

inline std::optional<Method> method_from_string(const std::string& s) {
  if (s == "dsde") return Method::DSDE;
  if (s == "bh") return Method::BH;
  if (s == "by") return Method::BY;
  if (s == "bonferroni") return Method::BONFERRONI;
  if (s == "storey") return Method::STOREY_FIXED;
  if (s == "naive") return Method::NAIVE;
  if (s == "vote") return Method::VOTE;
  return std::nullopt;
}

inline const char* to_string(Pi0Form f) {
  return f == Pi0Form::RATIO ? "ratio" : "literal";
}

inline std::optional<Pi0Form> pi0_form_from_string(const std::string& s) {
  if (s == "ratio") return Pi0Form::RATIO;
  if (s == "literal") return Pi0Form::LITERAL_EQ15;
  return std::nullopt;
}

inline const char* to_string(PValueMode m) {
  return m == PValueMode::LITERAL ? "literal" : "smoothed";
}

inline std::optional<PValueMode> pvalue_mode_from_string(const std::string& s) {
  if (s == "literal") return PValueMode::LITERAL;
  if (s == "smoothed") return PValueMode::SMOOTHED;
  return std::nullopt;
}

inline std::vector<double> default_alpha_grid() {
  std::vector<double> grid;
  grid.reserve(999);
  for (int i = 1; i <= 999; ++i) grid.push_back(static_cast<double>(i) / 1000.0);
  return grid;
}

// Knobs shared across the decision paths. Defaults follow the 7-model
// setting: alpha 0.05, beta 1, c_m 2/7 (c_m is library-size dependent and
// should be chosen per deployment). pi0_floor unset means 1/m at use time.
struct ExperimentConfig {
  double alpha = 0.05;
  double beta = 1.0;
  double c_m = 2.0 / 7.0;
  Method method = Method::DSDE;
  double vote_tau = 0.5;
  double storey_lambda = 0.5;
  PValueMode pvalue_mode = PValueMode::SMOOTHED;
  std::optional<double> pi0_floor;
  Pi0Form pi0_form = Pi0Form::RATIO;
  std::vector<double> alpha_grid = default_alpha_grid();

  double effective_pi0_floor(std::size_t m) const {
    if (pi0_floor) return *pi0_floor;
    return m == 0 ? 1.0 : 1.0 / static_cast<double>(m);
  }
};

inline void validate_config(const ExperimentConfig& cfg) {
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
    fail(ErrorCode::INVALID_CONFIG, "alpha must lie in (0, 1)");
  if (!(cfg.beta >= 0.5 && cfg.beta <= 1.0))
    fail(ErrorCode::INVALID_CONFIG, "beta must lie in [0.5, 1]");
  if (!(cfg.c_m > 0.0 && cfg.c_m < 1.0))
    fail(ErrorCode::INVALID_CONFIG, "c_m must lie in (0, 1)");
  if (!(cfg.vote_tau > 0.0 && cfg.vote_tau <= 1.0))
    fail(ErrorCode::INVALID_CONFIG, "vote_tau must lie in (0, 1]");
  if (!(cfg.storey_lambda > 0.0 && cfg.storey_lambda < 1.0))
    fail(ErrorCode::INVALID_CONFIG, "storey_lambda must lie in (0, 1)");
  if (cfg.pi0_floor && !(*cfg.pi0_floor >= 0.0 && *cfg.pi0_floor <= 1.0))
    fail(ErrorCode::INVALID_CONFIG, "pi0_floor must lie in [0, 1]");
  if (cfg.alpha_grid.empty())
    fail(ErrorCode::INVALID_CONFIG, "alpha_grid must be non-empty");
  for (std::size_t i = 0; i < cfg.alpha_grid.size(); ++i) {
    const double a = cfg.alpha_grid[i];
    if (!(a > 0.0 && a < 1.0))
      fail(ErrorCode::INVALID_CONFIG, "alpha_grid entries must lie in (0, 1)");
    if (i > 0 && !(a > cfg.alpha_grid[i - 1]))
      fail(ErrorCode::INVALID_CONFIG, "alpha_grid must be strictly increasing");
  }
}

// One out-of-distribution test population: per-model downward mean shifts
// relative to that model's in-distribution score distribution.
struct OodPopulation {
  std::string dataset_id = "ood_test";
  std::size_t n = 0;
  std::vector<double> shifts;  // one per model; 0 = indistinguishable from ID
};

// Generative spec for the synthetic validation suite: p-value mixtures
// (m0 uniform nulls + (m - m0) Beta(alt_shape, 1) alternatives) and
// score-level tables driving the full calibrate -> detect pipeline.
struct SyntheticScenario {
  std::size_t m = 1;
  std::size_t m0 = 1;
  double alt_shape = 0.1;          // Beta(a, 1) alternative shape, a in (0, 1)
  std::vector<double> id_means;    // per model; empty = all zero
  std::vector<OodPopulation> ood_pops;
  std::size_t n_calib = 0;
  std::size_t n_test_id = 0;
  std::size_t trials = 1;
  std::uint64_t seed = 0;
};

inline void validate_scenario(const SyntheticScenario& sc) {
  if (sc.m == 0) fail(ErrorCode::INVALID_SCENARIO, "m must be >= 1");
  if (sc.m0 > sc.m) fail(ErrorCode::INVALID_SCENARIO, "m0 must lie in [0, m]");
  if (sc.trials < 1) fail(ErrorCode::INVALID_SCENARIO, "trials must be >= 1");
  if (!(sc.alt_shape > 0.0 && sc.alt_shape <= 1.0))
    fail(ErrorCode::INVALID_SCENARIO, "alt_shape must lie in (0, 1]");
  if (!sc.id_means.empty() && sc.id_means.size() != sc.m)
    fail(ErrorCode::INVALID_SCENARIO, "id_means must have one entry per model");
  for (const auto& pop : sc.ood_pops) {
    if (pop.shifts.size() != sc.m)
      fail(ErrorCode::INVALID_SCENARIO,
           "population " + pop.dataset_id + " must have one shift per model");
  }
}

}  // namespace dsde
