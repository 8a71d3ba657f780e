#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "dsde/error.hpp"

namespace dsde {

// Ascending p-values p_(1) <= ... <= p_(m). All order-statistic indices in
// this module are 1-based to keep them aligned with the usual notation.
struct SortedPValues {
  std::vector<double> values;

  std::size_t m() const { return values.size(); }
  // 1-based order statistic p_(i).
  double order(std::size_t i) const { return values[i - 1]; }
};

inline SortedPValues sort_pvalues(std::span<const double> pvals) {
  if (pvals.empty()) fail(ErrorCode::INDEX_OUT_OF_RANGE, "need at least one p-value");
  for (double p : pvals) {
    if (!(p >= 0.0 && p <= 1.0))
      fail(ErrorCode::INDEX_OUT_OF_RANGE, "p-values must lie in [0, 1]");
  }
  SortedPValues s;
  s.values.assign(pvals.begin(), pvals.end());
  std::sort(s.values.begin(), s.values.end());
  return s;
}

enum class Pi0Method { STOREY_FIXED, DOS_STOREY };

enum class Pi0Form {
  RATIO,         // Storey ratio evaluated at lambda = p_(k): (1 - k/m) / (1 - p_(k))
  LITERAL_EQ15,  // the printed product form: (1 - k/m) * (1 - p_(k))
};

struct Pi0Estimate {
  double value = 1.0;      // clipped to [floor, 1]
  Pi0Method method = Pi0Method::STOREY_FIXED;
  double lambda_used = 0.0;
  std::optional<std::size_t> changepoint;  // k_hat, DOS-Storey only
  double raw_value = 1.0;  // before clipping
};

inline double clip_pi0(double raw, double floor) {
  return std::min(1.0, std::max(floor, raw));
}

// Storey ratio estimator at a fixed threshold:
//   pi0(lambda) = #{p_j > lambda} / (m * (1 - lambda)).
// P-values above lambda are (mostly) nulls; rescaling the tail count by the
// null mass beyond lambda estimates the overall null proportion.
inline Pi0Estimate storey_pi0(const SortedPValues& p, double lambda, double floor) {
  if (!(lambda > 0.0 && lambda < 1.0))
    fail(ErrorCode::LAMBDA_OUT_OF_RANGE, "lambda must lie in (0, 1)");
  if (!(floor >= 0.0 && floor <= 1.0))
    fail(ErrorCode::LAMBDA_OUT_OF_RANGE, "floor must lie in [0, 1]");
  const auto first_above = std::upper_bound(p.values.begin(), p.values.end(), lambda);
  const auto count_above = static_cast<double>(p.values.end() - first_above);
  Pi0Estimate est;
  est.method = Pi0Method::STOREY_FIXED;
  est.lambda_used = lambda;
  est.raw_value = count_above / (static_cast<double>(p.m()) * (1.0 - lambda));
  est.value = clip_pi0(est.raw_value, floor);
  return est;
}

// Difference-of-slopes statistic d_beta(i) = (p_(2i) - 2 p_(i)) / i^beta.
// On the sorted p-value plot the slope roughly doubles past the point where
// alternatives give way to nulls, so d peaks near that change-point.
inline double dos_statistic(const SortedPValues& p, std::size_t i, double beta) {
  if (i < 1 || 2 * i > p.m())
    fail(ErrorCode::INDEX_OUT_OF_RANGE,
         "dos index must satisfy 1 <= i <= m/2, got i=" + std::to_string(i) +
             " with m=" + std::to_string(p.m()));
  return (p.order(2 * i) - 2.0 * p.order(i)) / std::pow(static_cast<double>(i), beta);
}

namespace detail {

// ceil(m * c_m) with a tolerance for c_m supplied as a rounded decimal
// (e.g. 2/7 entered as 0.2857... must still give a lower bound of 2).
inline std::size_t dos_range_low(std::size_t m, double c_m) {
  const double raw = static_cast<double>(m) * c_m;
  auto lo = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::max<std::size_t>(lo, 1);
}

}  // namespace detail

// Change-point estimate: argmax of d_beta(i) for i in
// [ceil(m * c_m), floor(m / 2)], ties resolved to the smallest index.
inline std::size_t dos_changepoint(const SortedPValues& p, double beta, double c_m) {
  if (!(c_m > 0.0 && c_m < 1.0))
    fail(ErrorCode::LAMBDA_OUT_OF_RANGE, "c_m must lie in (0, 1)");
  const std::size_t lo = detail::dos_range_low(p.m(), c_m);
  const std::size_t hi = p.m() / 2;
  if (lo > hi)
    fail(ErrorCode::EMPTY_SEARCH_RANGE,
         "no change-point candidates: [" + std::to_string(lo) + ", " +
             std::to_string(hi) + "] is empty (m=" + std::to_string(p.m()) + ")");
  std::size_t best = lo;
  double best_d = dos_statistic(p, lo, beta);
  for (std::size_t i = lo + 1; i <= hi; ++i) {
    const double d = dos_statistic(p, i, beta);
    if (d > best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

// DOS-Storey estimator: plug the change-point p-value into the Storey ratio.
// RATIO evaluates pi0(lambda) at lambda = p_(k): (1 - k/m) / (1 - p_(k)).
// LITERAL_EQ15 keeps the printed product form (1 - k/m) * (1 - p_(k)); the
// two disagree, and RATIO is the default for consistency with the fixed-
// lambda estimator. p_(k) = 1 makes the ratio degenerate; fall back to 1.
inline Pi0Estimate dos_storey_pi0(const SortedPValues& p, double beta, double c_m,
                                  Pi0Form form, double floor) {
  const std::size_t k = dos_changepoint(p, beta, c_m);
  const double m = static_cast<double>(p.m());
  const double pk = p.order(k);
  Pi0Estimate est;
  est.method = Pi0Method::DOS_STOREY;
  est.changepoint = k;
  est.lambda_used = pk;
  const double top = 1.0 - static_cast<double>(k) / m;
  if (form == Pi0Form::RATIO) {
    if (pk >= 1.0) {
      est.raw_value = 1.0;  // DEGENERATE_LAMBDA fallback
      est.value = 1.0;
      return est;
    }
    est.raw_value = top / (1.0 - pk);
  } else {
    est.raw_value = top * (1.0 - pk);
  }
  est.value = clip_pi0(est.raw_value, floor);
  return est;
}

}  // namespace dsde
