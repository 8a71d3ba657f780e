#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dsde/datamodel.hpp"
#include "dsde/decision.hpp"
#include "dsde/error.hpp"
#include "dsde/parallel.hpp"
#include "dsde/pipeline.hpp"

namespace dsde {

// One cell block of the results table. Positives are ID samples: tpr is the
// fraction of ID kept, fpr the fraction of OoD wrongly kept.
struct MetricRow {
  std::string method;
  std::string dataset_id;
  double tpr = 0.0;
  double fpr = 0.0;
  double auroc = 0.0;
  double alpha_used = 0.0;
};

struct RocCurve {
  std::vector<std::pair<double, double>> points;  // (fpr, tpr), fpr ascending
  double area = 0.0;
};

struct ConfusionCounts {
  double tpr = 0.0;
  double fpr = 0.0;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
};

inline ConfusionCounts confusion(std::span<const Verdict> verdicts,
                                 const std::unordered_map<std::string, Label>& labels) {
  ConfusionCounts c;
  std::size_t id_kept = 0;
  std::size_t ood_kept = 0;
  for (const Verdict& v : verdicts) {
    const auto it = labels.find(v.sample_id);
    if (it == labels.end() || it->second == Label::UNKNOWN)
      fail(ErrorCode::UNLABELED_SAMPLE, "sample " + v.sample_id + " has no label");
    if (it->second == Label::ID) {
      ++c.n_id;
      if (v.decision == Decision::ID) ++id_kept;
    } else {
      ++c.n_ood;
      if (v.decision == Decision::ID) ++ood_kept;
    }
  }
  if (c.n_id == 0 || c.n_ood == 0)
    fail(ErrorCode::EMPTY_CLASS, "need at least one ID and one OoD sample");
  c.tpr = static_cast<double>(id_kept) / static_cast<double>(c.n_id);
  c.fpr = static_cast<double>(ood_kept) / static_cast<double>(c.n_ood);
  return c;
}

// Mann-Whitney AUROC: P(ID score > OoD score) + 0.5 P(tie). Equals the
// trapezoidal area under the score-threshold ROC.
inline double auroc_single(std::span<const double> id_scores,
                           std::span<const double> ood_scores) {
  if (id_scores.empty() || ood_scores.empty())
    fail(ErrorCode::EMPTY_CLASS, "need scores from both classes");
  std::vector<double> ood(ood_scores.begin(), ood_scores.end());
  std::sort(ood.begin(), ood.end());
  double wins = 0.0;
  for (double s : id_scores) {
    const auto lo = std::lower_bound(ood.begin(), ood.end(), s);
    const auto hi = std::upper_bound(lo, ood.end(), s);
    wins += static_cast<double>(lo - ood.begin());
    wins += 0.5 * static_cast<double>(hi - lo);
  }
  return wins / (static_cast<double>(id_scores.size()) *
                 static_cast<double>(ood.size()));
}

// Operating-characteristic sweep for a decision procedure: run the method at
// every alpha in the grid, collect (fpr, tpr), close the curve with (0,0)
// and (1,1), and take the trapezoidal area. Implemented via per-sample
// decision thresholds, which is exactly equivalent to re-deciding at each
// alpha but costs one pass per sample.
inline RocCurve ensemble_roc(const PValueMatrix& pm, const ExperimentConfig& cfg) {
  const std::size_t n = pm.sample_ids.size();
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
  for (Label l : pm.labels) {
    if (l == Label::ID) ++n_id;
    else if (l == Label::OOD) ++n_ood;
    else fail(ErrorCode::UNLABELED_SAMPLE, "roc sweep needs labeled samples");
  }
  if (n_id == 0 || n_ood == 0)
    fail(ErrorCode::EMPTY_CLASS, "need at least one ID and one OoD sample");

  std::vector<double> thresholds(n);
  parallel_for(n, [&](std::size_t i) {
    thresholds[i] = decision_threshold(pm.row(i), cfg);
  });

  // Sorting each class's thresholds turns every grid point into two binary
  // searches: decided OOD at level alpha iff threshold <= alpha.
  std::vector<double> id_thr;
  std::vector<double> ood_thr;
  id_thr.reserve(n_id);
  ood_thr.reserve(n_ood);
  for (std::size_t i = 0; i < n; ++i) {
    (pm.labels[i] == Label::ID ? id_thr : ood_thr).push_back(thresholds[i]);
  }
  std::sort(id_thr.begin(), id_thr.end());
  std::sort(ood_thr.begin(), ood_thr.end());

  RocCurve curve;
  curve.points.reserve(cfg.alpha_grid.size() + 2);
  curve.points.emplace_back(0.0, 0.0);
  for (double alpha : cfg.alpha_grid) {
    const auto rejected = [alpha](const std::vector<double>& thr) {
      return static_cast<std::size_t>(
          std::upper_bound(thr.begin(), thr.end(), alpha) - thr.begin());
    };
    const double tpr = 1.0 - static_cast<double>(rejected(id_thr)) /
                                 static_cast<double>(n_id);
    const double fpr = 1.0 - static_cast<double>(rejected(ood_thr)) /
                                 static_cast<double>(n_ood);
    curve.points.emplace_back(fpr, tpr);
  }
  curve.points.emplace_back(1.0, 1.0);
  std::sort(curve.points.begin(), curve.points.end());

  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& [x0, y0] = curve.points[i - 1];
    const auto& [x1, y1] = curve.points[i];
    area += (x1 - x0) * (y0 + y1) * 0.5;
  }
  curve.area = area;
  return curve;
}

namespace detail {

inline void check_split_labels(const ScoreMatrix& m, Label expected) {
  for (std::size_t i = 0; i < m.sample_ids.size(); ++i) {
    if (m.labels[i] == Label::UNKNOWN)
      fail(ErrorCode::UNLABELED_SAMPLE,
           "sample " + m.sample_ids[i] + " in dataset " + m.dataset_id +
               " has label UNKNOWN; metrics need ID/OOD labels");
    if (m.labels[i] != expected)
      fail(ErrorCode::UNLABELED_SAMPLE,
           "sample " + m.sample_ids[i] + " in dataset " + m.dataset_id +
               " is labeled " + to_string(m.labels[i]) + ", expected " +
               to_string(expected));
  }
}

inline PValueMatrix concat_matrices(const PValueMatrix& a, const PValueMatrix& b) {
  PValueMatrix out = a;
  out.sample_ids.insert(out.sample_ids.end(), b.sample_ids.begin(), b.sample_ids.end());
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  out.p.insert(out.p.end(), b.p.begin(), b.p.end());
  return out;
}

}  // namespace detail

// Full protocol: TPR on the ID test split at the configured alpha, FPR and
// sweep AUROC per OoD dataset, plus an unweighted Average row per method.
inline std::vector<MetricRow> run_experiment(const ScoreTable& scores,
                                             const CalibrationBank& bank,
                                             const std::string& id_dataset,
                                             const std::vector<std::string>& ood_datasets,
                                             const std::vector<Method>& methods,
                                             const ExperimentConfig& cfg) {
  validate_config(cfg);
  if (ood_datasets.empty())
    fail(ErrorCode::EMPTY_CLASS, "need at least one OoD dataset");

  const ScoreMatrix id_scores = to_matrix(scores, id_dataset);
  detail::check_split_labels(id_scores, Label::ID);
  const PValueMatrix id_pm = build_pvalue_matrix(id_scores, bank, cfg.pvalue_mode);

  std::vector<PValueMatrix> ood_pms;
  ood_pms.reserve(ood_datasets.size());
  for (const auto& ds : ood_datasets) {
    const ScoreMatrix m = to_matrix(scores, ds);
    detail::check_split_labels(m, Label::OOD);
    if (m.model_ids != id_scores.model_ids)
      fail(ErrorCode::RAGGED_COVERAGE,
           "dataset " + ds + " covers a different model set than " + id_dataset);
    ood_pms.push_back(build_pvalue_matrix(m, bank, cfg.pvalue_mode));
  }

  std::vector<MetricRow> rows;
  for (Method method : methods) {
    ExperimentConfig mcfg = cfg;
    mcfg.method = method;

    const std::vector<Verdict> id_verdicts = detect_all(id_pm, mcfg);
    std::size_t id_kept = 0;
    for (const Verdict& v : id_verdicts)
      if (v.decision == Decision::ID) ++id_kept;
    const double tpr = static_cast<double>(id_kept) /
                       static_cast<double>(id_verdicts.size());

    double fpr_sum = 0.0;
    double auc_sum = 0.0;
    for (std::size_t d = 0; d < ood_pms.size(); ++d) {
      const std::vector<Verdict> ood_verdicts = detect_all(ood_pms[d], mcfg);
      std::size_t ood_kept = 0;
      for (const Verdict& v : ood_verdicts)
        if (v.decision == Decision::ID) ++ood_kept;
      const double fpr = static_cast<double>(ood_kept) /
                         static_cast<double>(ood_verdicts.size());
      const RocCurve roc = ensemble_roc(detail::concat_matrices(id_pm, ood_pms[d]), mcfg);
      rows.push_back({std::string(to_string(method)), ood_datasets[d], tpr, fpr,
                      roc.area, cfg.alpha});
      fpr_sum += fpr;
      auc_sum += roc.area;
    }
    const auto n_ds = static_cast<double>(ood_pms.size());
    rows.push_back({std::string(to_string(method)), "Average", tpr, fpr_sum / n_ds,
                    auc_sum / n_ds, cfg.alpha});
  }
  return rows;
}

}  // namespace dsde
