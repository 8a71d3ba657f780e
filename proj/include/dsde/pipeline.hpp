#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dsde/datamodel.hpp"
#include "dsde/decision.hpp"
#include "dsde/ecdf.hpp"
#include "dsde/error.hpp"
#include "dsde/parallel.hpp"

namespace dsde {

// Scores -> p-values through each model's calibration ECDF.
inline PValueMatrix build_pvalue_matrix(const ScoreMatrix& scores,
                                        const CalibrationBank& bank,
                                        PValueMode mode) {
  PValueMatrix pm;
  pm.sample_ids = scores.sample_ids;
  pm.model_ids = scores.model_ids;
  pm.labels = scores.labels;
  pm.p.resize(scores.scores.size());

  std::vector<const EmpiricalCdf*> cdfs;
  cdfs.reserve(scores.model_ids.size());
  for (const auto& model : scores.model_ids) {
    auto it = bank.find(model);
    if (it == bank.end())
      fail(ErrorCode::MISSING_CALIBRATION, "no calibration for model " + model);
    cdfs.push_back(&it->second);
  }

  const std::size_t cols = pm.model_ids.size();
  parallel_for(pm.sample_ids.size(), [&](std::size_t i) {
    for (std::size_t j = 0; j < cols; ++j)
      pm.p[i * cols + j] = p_value(*cdfs[j], scores.at(i, j), mode);
  });
  return pm;
}

inline PValueMatrix build_pvalue_matrix(const ScoreTable& table,
                                        const std::string& dataset_id,
                                        const CalibrationBank& bank,
                                        PValueMode mode) {
  return build_pvalue_matrix(to_matrix(table, dataset_id), bank, mode);
}

// One verdict per sample, computed in parallel; output order matches the
// matrix row order regardless of worker count.
inline std::vector<Verdict> detect_all(const PValueMatrix& pm,
                                       const ExperimentConfig& cfg) {
  std::vector<Verdict> verdicts(pm.sample_ids.size());
  parallel_for(pm.sample_ids.size(), [&](std::size_t i) {
    verdicts[i] = decide(pm.row(i), cfg, pm.sample_ids[i]);
  });
  return verdicts;
}

}  // namespace dsde
