#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dsde/datamodel.hpp"
#include "dsde/error.hpp"
#include "dsde/proportion.hpp"

namespace dsde {

// Step-up rejection outcome over sorted p-values. Rejected ranks are always
// the contiguous prefix {1, ..., k_hat}.
struct RejectionResult {
  std::optional<std::size_t> k_hat;
  std::vector<double> q_values;  // monotone envelope, length m
  double pi0_used = 1.0;
};

namespace detail {

// Shared step-up core: raw q_i = mult * m * p_(i) / i, k_hat the largest
// rank with raw q <= alpha. Reported q-values take the running minimum from
// the top so they are monotone; both give the same k_hat.
inline RejectionResult step_up(const SortedPValues& p, double mult, double alpha) {
  const std::size_t m = p.m();
  RejectionResult res;
  res.pi0_used = mult;
  res.q_values.resize(m);
  std::optional<std::size_t> k;
  for (std::size_t i = 1; i <= m; ++i) {
    const double q_raw = mult * static_cast<double>(m) * p.order(i) /
                         static_cast<double>(i);
    res.q_values[i - 1] = q_raw;
    if (q_raw <= alpha) k = i;
  }
  for (std::size_t i = m; i-- > 1;)
    res.q_values[i - 1] = std::min(res.q_values[i - 1], res.q_values[i]);
  res.k_hat = k;
  return res;
}

}  // namespace detail

// Adaptive step-up at level alpha with a plug-in null-proportion estimate;
// pi0 = 1 reduces to plain Benjamini-Hochberg.
inline RejectionResult adaptive_bh(const SortedPValues& p, double pi0, double alpha) {
  if (!(pi0 >= 0.0 && pi0 <= 1.0))
    fail(ErrorCode::LAMBDA_OUT_OF_RANGE, "pi0 must lie in [0, 1]");
  if (!(alpha > 0.0 && alpha < 1.0))
    fail(ErrorCode::ALPHA_OUT_OF_RANGE, "alpha must lie in (0, 1)");
  return detail::step_up(p, pi0, alpha);
}

// One model's p-value, paired with its identity so sorting can never
// desynchronize ranks from models.
using ModelPValue = std::pair<std::string, double>;

namespace detail {

struct SortedInput {
  SortedPValues pvals;
  std::vector<std::string> models;  // aligned with pvals.values
};

inline SortedInput sort_input(std::span<const ModelPValue> input) {
  if (input.empty()) fail(ErrorCode::INDEX_OUT_OF_RANGE, "need at least one p-value");
  std::vector<ModelPValue> rows(input.begin(), input.end());
  for (const auto& [model, p] : rows) {
    if (!(p >= 0.0 && p <= 1.0))
      fail(ErrorCode::INDEX_OUT_OF_RANGE, "p-value for model " + model +
                                              " must lie in [0, 1]");
  }
  std::sort(rows.begin(), rows.end(), [](const ModelPValue& a, const ModelPValue& b) {
    if (a.second != b.second) return a.second < b.second;
    return a.first < b.first;
  });
  SortedInput out;
  out.pvals.values.reserve(rows.size());
  out.models.reserve(rows.size());
  for (auto& [model, p] : rows) {
    out.pvals.values.push_back(p);
    out.models.push_back(std::move(model));
  }
  return out;
}

// Models tied with p_(k) must stand or fall together: extend k past the tie
// run so flagged identities never depend on sort order.
inline std::size_t extend_ties(const SortedPValues& p, std::size_t k) {
  const double boundary = p.order(k);
  while (k < p.m() && p.order(k + 1) == boundary) ++k;
  return k;
}

inline Verdict make_verdict(const std::string& sample_id, const SortedInput& in,
                            std::optional<std::size_t> k, double pi0_hat) {
  Verdict v;
  v.sample_id = sample_id;
  v.sorted_pvalues = in.pvals.values;
  v.pi0_hat = pi0_hat;
  if (k && *k >= 1) {
    const std::size_t kk = extend_ties(in.pvals, *k);
    v.decision = Decision::OOD;
    v.k_hat = kk;
    v.flagged_models.assign(in.models.begin(),
                            in.models.begin() + static_cast<std::ptrdiff_t>(kk));
  }
  return v;
}

}  // namespace detail

// DOS-Storey detection ensemble: sort the per-model p-values, locate the
// change-point, estimate the null proportion there, then run the adaptive
// step-up. No qualifying rank means the sample is in-distribution. When the
// change-point search range is empty (m <= 1 or c_m too large) the estimate
// falls back to pi0 = 1, i.e. plain BH.
inline Verdict dsde_decide(std::span<const ModelPValue> pvals,
                           const ExperimentConfig& cfg,
                           const std::string& sample_id = {}) {
  const auto in = detail::sort_input(pvals);
  const double floor = cfg.effective_pi0_floor(in.pvals.m());
  double pi0 = 1.0;
  const std::size_t lo = detail::dos_range_low(in.pvals.m(), cfg.c_m);
  if (lo <= in.pvals.m() / 2) {
    pi0 = dos_storey_pi0(in.pvals, cfg.beta, cfg.c_m, cfg.pi0_form, floor).value;
  }
  const RejectionResult r = adaptive_bh(in.pvals, pi0, cfg.alpha);
  return detail::make_verdict(sample_id, in, r.k_hat, pi0);
}

// Plain Benjamini-Hochberg step-up: thresholds i * alpha / m.
inline Verdict bh_decide(std::span<const ModelPValue> pvals, double alpha,
                         const std::string& sample_id = {}) {
  const auto in = detail::sort_input(pvals);
  const RejectionResult r = adaptive_bh(in.pvals, 1.0, alpha);
  return detail::make_verdict(sample_id, in, r.k_hat, 1.0);
}

// Benjamini-Yekutieli: BH thresholds shrunk by the harmonic number H_m.
inline Verdict by_decide(std::span<const ModelPValue> pvals, double alpha,
                         const std::string& sample_id = {}) {
  const auto in = detail::sort_input(pvals);
  double harmonic = 0.0;
  for (std::size_t j = 1; j <= in.pvals.m(); ++j)
    harmonic += 1.0 / static_cast<double>(j);
  const RejectionResult r = detail::step_up(in.pvals, harmonic, alpha);
  return detail::make_verdict(sample_id, in, r.k_hat, 1.0);
}

// Bonferroni: reject every p <= alpha / m (boundary inclusive).
inline Verdict bonferroni_decide(std::span<const ModelPValue> pvals, double alpha,
                                 const std::string& sample_id = {}) {
  const auto in = detail::sort_input(pvals);
  const double cut = alpha / static_cast<double>(in.pvals.m());
  std::size_t k = 0;
  while (k < in.pvals.m() && in.pvals.order(k + 1) <= cut) ++k;
  return detail::make_verdict(sample_id, in,
                              k ? std::optional<std::size_t>(k) : std::nullopt, 1.0);
}

// Uncorrected: any single p <= alpha flags the sample.
inline Verdict naive_decide(std::span<const ModelPValue> pvals, double alpha,
                            const std::string& sample_id = {}) {
  const auto in = detail::sort_input(pvals);
  std::size_t k = 0;
  while (k < in.pvals.m() && in.pvals.order(k + 1) <= alpha) ++k;
  return detail::make_verdict(sample_id, in,
                              k ? std::optional<std::size_t>(k) : std::nullopt, 1.0);
}

// Majority vote: OOD when at least tau of the models reject at level alpha.
inline Verdict vote_decide(std::span<const ModelPValue> pvals, double alpha,
                           double tau, const std::string& sample_id = {}) {
  const auto in = detail::sort_input(pvals);
  std::size_t k = 0;
  while (k < in.pvals.m() && in.pvals.order(k + 1) <= alpha) ++k;
  const double frac = static_cast<double>(k) / static_cast<double>(in.pvals.m());
  if (k >= 1 && frac >= tau)
    return detail::make_verdict(sample_id, in, k, 1.0);
  return detail::make_verdict(sample_id, in, std::nullopt, 1.0);
}

// Adaptive step-up with the fixed-lambda Storey estimate.
inline Verdict storey_fixed_decide(std::span<const ModelPValue> pvals, double alpha,
                                   double lambda, double floor,
                                   const std::string& sample_id = {}) {
  const auto in = detail::sort_input(pvals);
  const double pi0 = storey_pi0(in.pvals, lambda, floor).value;
  const RejectionResult r = adaptive_bh(in.pvals, pi0, alpha);
  return detail::make_verdict(sample_id, in, r.k_hat, pi0);
}

// Smallest significance level at which the configured method would flag the
// sample as OOD: decide(alpha).decision == OOD exactly when this value is
// <= alpha. Step-up methods reject at some rank iff
// min_i pi0 * m * p_(i) / i <= alpha, and the plug-in pi0 does not depend on
// alpha, so one scalar per sample drives an entire ROC sweep.
inline double decision_threshold(std::span<const ModelPValue> pvals,
                                 const ExperimentConfig& cfg) {
  const auto in = detail::sort_input(pvals);
  const std::size_t m = in.pvals.m();
  const auto step_up_min = [&](double mult) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i <= m; ++i)
      best = std::min(best, mult * static_cast<double>(m) * in.pvals.order(i) /
                                static_cast<double>(i));
    return best;
  };
  switch (cfg.method) {
    case Method::BH:
      return step_up_min(1.0);
    case Method::BY: {
      double harmonic = 0.0;
      for (std::size_t j = 1; j <= m; ++j) harmonic += 1.0 / static_cast<double>(j);
      return step_up_min(harmonic);
    }
    case Method::BONFERRONI:
      return static_cast<double>(m) * in.pvals.order(1);
    case Method::NAIVE:
      return in.pvals.order(1);
    case Method::VOTE: {
      // need the r-th smallest p to clear alpha, r the least count with
      // r / m >= tau
      const double raw = cfg.vote_tau * static_cast<double>(m);
      auto r = static_cast<std::size_t>(std::ceil(raw - 1e-9));
      r = std::max<std::size_t>(r, 1);
      if (r > m) return std::numeric_limits<double>::infinity();
      return in.pvals.order(r);
    }
    case Method::STOREY_FIXED: {
      const double floor = cfg.effective_pi0_floor(m);
      return step_up_min(storey_pi0(in.pvals, cfg.storey_lambda, floor).value);
    }
    case Method::DSDE: {
      const double floor = cfg.effective_pi0_floor(m);
      double pi0 = 1.0;
      if (detail::dos_range_low(m, cfg.c_m) <= m / 2)
        pi0 = dos_storey_pi0(in.pvals, cfg.beta, cfg.c_m, cfg.pi0_form, floor).value;
      return step_up_min(pi0);
    }
  }
  fail(ErrorCode::INVALID_CONFIG, "unknown method");
}

inline Verdict decide(std::span<const ModelPValue> pvals, const ExperimentConfig& cfg,
                      const std::string& sample_id = {}) {
  switch (cfg.method) {
    case Method::DSDE: return dsde_decide(pvals, cfg, sample_id);
    case Method::BH: return bh_decide(pvals, cfg.alpha, sample_id);
    case Method::BY: return by_decide(pvals, cfg.alpha, sample_id);
    case Method::BONFERRONI: return bonferroni_decide(pvals, cfg.alpha, sample_id);
    case Method::NAIVE: return naive_decide(pvals, cfg.alpha, sample_id);
    case Method::VOTE: return vote_decide(pvals, cfg.alpha, cfg.vote_tau, sample_id);
    case Method::STOREY_FIXED:
      return storey_fixed_decide(pvals, cfg.alpha, cfg.storey_lambda,
                                 cfg.effective_pi0_floor(pvals.size()), sample_id);
  }
  fail(ErrorCode::INVALID_CONFIG, "unknown method");
}

}  // namespace dsde
