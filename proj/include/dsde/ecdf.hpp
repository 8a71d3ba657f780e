#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dsde/error.hpp"

namespace dsde {

enum class PValueMode {
  LITERAL,   // count(<= s) / n; can be exactly 0
  SMOOTHED,  // (count(<= s) + 1) / (n + 1); strictly positive
};

// Empirical CDF over a fixed calibration sample. Evaluation counts
// calibration scores <= s, so ties need no special handling.
struct EmpiricalCdf {
  std::vector<double> sorted_scores;  // ascending

  std::size_t n() const { return sorted_scores.size(); }
};

inline EmpiricalCdf build_ecdf(std::span<const double> scores) {
  if (scores.empty()) fail(ErrorCode::EMPTY_CALIBRATION, "no calibration scores");
  for (double s : scores) {
    if (!std::isfinite(s))
      fail(ErrorCode::NONFINITE_SCORE, "calibration score is not finite");
  }
  EmpiricalCdf cdf;
  cdf.sorted_scores.assign(scores.begin(), scores.end());
  std::sort(cdf.sorted_scores.begin(), cdf.sorted_scores.end());
  return cdf;
}

inline std::size_t count_leq(const EmpiricalCdf& cdf, double s) {
  return static_cast<std::size_t>(
      std::upper_bound(cdf.sorted_scores.begin(), cdf.sorted_scores.end(), s) -
      cdf.sorted_scores.begin());
}

inline double ecdf_eval(const EmpiricalCdf& cdf, double s) {
  return static_cast<double>(count_leq(cdf, s)) / static_cast<double>(cdf.n());
}

inline double p_value(const EmpiricalCdf& cdf, double score, PValueMode mode) {
  const std::size_t c = count_leq(cdf, score);
  const std::size_t n = cdf.n();
  if (mode == PValueMode::LITERAL)
    return static_cast<double>(c) / static_cast<double>(n);
  return static_cast<double>(c + 1) / static_cast<double>(n + 1);
}

// Smallest calibration score s with F(s) >= alpha; scores above it are
// declared in-distribution, which keeps the detector's TPR near 1 - alpha.
// The infimum is attained at the ceil(alpha * n)-th order statistic.
inline double tpr_threshold(const EmpiricalCdf& cdf, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    fail(ErrorCode::ALPHA_OUT_OF_RANGE, "alpha must lie in (0, 1]");
  const std::size_t n = cdf.n();
  auto k = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(n)));
  k = std::min(std::max<std::size_t>(k, 1), n);
  return cdf.sorted_scores[k - 1];
}

// One empirical CDF per model, keyed by model id. Map ordering keeps every
// iteration over models deterministic.
using CalibrationBank = std::map<std::string, EmpiricalCdf>;

}  // namespace dsde
