#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsde/datamodel.hpp"
#include "dsde/decision.hpp"
#include "dsde/error.hpp"
#include "dsde/parallel.hpp"
#include "dsde/proportion.hpp"
#include "dsde/rng.hpp"

namespace dsde {

// One draw of the p-value mixture: m0 Uniform(0,1) nulls followed by
// m - m0 Beta(alt_shape, 1) alternatives (stochastically small, CDF x^a).
inline std::vector<double> gen_pvalues(const SyntheticScenario& sc, Rng& rng) {
  validate_scenario(sc);
  std::vector<double> p;
  p.reserve(sc.m);
  for (std::size_t j = 0; j < sc.m0; ++j) p.push_back(rng.uniform());
  for (std::size_t j = sc.m0; j < sc.m; ++j) p.push_back(rng.beta_a1(sc.alt_shape));
  return p;
}

namespace detail {

inline std::string padded_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%06zu", prefix, i);
  return buf;
}

}  // namespace detail

// Score-level generator exercising the whole calibrate -> detect pipeline.
// Model j's ID scores are Normal(id_mean_j, 1); an OoD population shifts the
// mean down by shift_j. Draw order is fixed (model-major: calibration, ID
// test, then each population), so a seed pins the table bit-for-bit.
inline ScoreTable gen_scores(const SyntheticScenario& sc) {
  validate_scenario(sc);
  Rng rng(sc.seed);
  ScoreTable table;

  for (std::size_t j = 0; j < sc.m; ++j) {
    const std::string model = detail::padded_id("model", j);
    const double mean = sc.id_means.empty() ? 0.0 : sc.id_means[j];
    for (std::size_t i = 0; i < sc.n_calib; ++i) {
      table.rows.push_back({"calibration", detail::padded_id("cal", i), model,
                            mean + rng.normal(), Label::ID});
    }
    for (std::size_t i = 0; i < sc.n_test_id; ++i) {
      table.rows.push_back({"id_test", detail::padded_id("id", i), model,
                            mean + rng.normal(), Label::ID});
    }
    for (std::size_t pidx = 0; pidx < sc.ood_pops.size(); ++pidx) {
      const OodPopulation& pop = sc.ood_pops[pidx];
      const std::string prefix = "ood" + std::to_string(pidx) + "_";
      for (std::size_t i = 0; i < pop.n; ++i) {
        table.rows.push_back({pop.dataset_id, detail::padded_id(prefix.c_str(), i),
                              model, mean - pop.shifts[j] + rng.normal(), Label::OOD});
      }
    }
  }
  return table;
}

// Exhaustive step-up oracle: scan candidate ranks from m down and take the
// first k whose raw q-value pi0 * m * p_(k) / k clears alpha. Returns the
// rejection count (0 = retain everything). Kept deliberately independent of
// the production step-up path.
inline std::size_t bruteforce_stepup_oracle(std::span<const double> pvals, double alpha,
                                            double pi0) {
  std::vector<double> p(pvals.begin(), pvals.end());
  std::sort(p.begin(), p.end());
  const auto m = static_cast<double>(p.size());
  for (std::size_t k = p.size(); k >= 1; --k) {
    if (pi0 * m * p[k - 1] / static_cast<double>(k) <= alpha) return k;
  }
  return 0;
}

// Fraction of all-null samples a combination scheme keeps as ID.
struct NullRateReport {
  std::string method;
  std::size_t m = 0;
  double alpha = 0.0;
  std::size_t trials = 0;
  double observed_id_rate = 0.0;
  std::optional<double> analytic_id_rate;
  double mc_stderr = 0.0;
  std::uint64_t seed = 0;
};

inline std::optional<double> analytic_null_id_rate(Method method, std::size_t m,
                                                   double alpha) {
  switch (method) {
    case Method::NAIVE:
      return std::pow(1.0 - alpha, static_cast<double>(m));
    case Method::BONFERRONI:
      return std::pow(1.0 - alpha / static_cast<double>(m), static_cast<double>(m));
    case Method::BH:
      // P(any rejection) = alpha under the independent global null
      return 1.0 - alpha;
    default:
      return std::nullopt;
  }
}

// Simulates i.i.d. Uniform(0,1) p-vectors (an ID sample seen by independent
// detectors) and records how often the method keeps the sample. Trial t uses
// substream t of the seed, so results are identical at any thread count.
inline NullRateReport mc_null_rate(Method method, std::size_t m, double alpha,
                                   std::size_t trials, std::uint64_t seed,
                                   const ExperimentConfig& base_cfg = {}) {
  if (m == 0) fail(ErrorCode::INVALID_SCENARIO, "m must be >= 1");
  if (trials < 1) fail(ErrorCode::INVALID_SCENARIO, "trials must be >= 1");

  ExperimentConfig cfg = base_cfg;
  cfg.method = method;
  cfg.alpha = alpha;
  validate_config(cfg);

  std::vector<std::string> model_ids;
  model_ids.reserve(m);
  for (std::size_t j = 0; j < m; ++j) model_ids.push_back(detail::padded_id("model", j));

  std::vector<std::uint8_t> kept(trials, 0);
  parallel_for(trials, [&](std::size_t t) {
    Rng rng = Rng::substream(seed, t);
    std::vector<ModelPValue> pvals;
    pvals.reserve(m);
    for (std::size_t j = 0; j < m; ++j) pvals.emplace_back(model_ids[j], rng.uniform());
    kept[t] = decide(pvals, cfg).decision == Decision::ID ? 1 : 0;
  });

  std::size_t n_kept = 0;
  for (std::uint8_t k : kept) n_kept += k;

  NullRateReport rep;
  rep.method = to_string(method);
  rep.m = m;
  rep.alpha = alpha;
  rep.trials = trials;
  rep.seed = seed;
  rep.observed_id_rate = static_cast<double>(n_kept) / static_cast<double>(trials);
  rep.analytic_id_rate = analytic_null_id_rate(method, m, alpha);
  rep.mc_stderr = std::sqrt(rep.observed_id_rate * (1.0 - rep.observed_id_rate) /
                            static_cast<double>(trials));
  return rep;
}

// Monte Carlo quality report for a pi0 estimator on one mixture scenario.
// rmse is computed directly from the per-trial errors; bias^2 + variance
// reproduces it up to rounding.
struct EstimatorReport {
  std::string estimator;
  std::size_t m = 0;
  double pi0_true = 0.0;
  double alt_shape = 0.0;
  std::size_t trials = 0;
  double mean = 0.0;
  double bias = 0.0;
  double variance = 0.0;
  double rmse = 0.0;
};

struct EstimatorSpec {
  std::string name;
  enum class Kind { STOREY, DOS_STOREY } kind = Kind::STOREY;
  double lambda = 0.5;  // STOREY
  double beta = 1.0;    // DOS_STOREY
  bool clipped = true;  // floor at 1/m, cap at 1
};

// The comparison set reported by the synthetic suite.
inline std::vector<EstimatorSpec> default_estimator_specs() {
  return {
      {"storey_0.5_unclipped", EstimatorSpec::Kind::STOREY, 0.5, 1.0, false},
      {"storey_0.5", EstimatorSpec::Kind::STOREY, 0.5, 1.0, true},
      {"dos_storey_beta0.5", EstimatorSpec::Kind::DOS_STOREY, 0.5, 0.5, true},
      {"dos_storey_beta1", EstimatorSpec::Kind::DOS_STOREY, 0.5, 1.0, true},
  };
}

inline std::vector<EstimatorReport> estimator_rmse(
    std::span<const SyntheticScenario> scenarios, std::span<const EstimatorSpec> specs,
    std::size_t trials, std::uint64_t seed, double c_m) {
  if (trials < 1) fail(ErrorCode::INVALID_SCENARIO, "trials must be >= 1");
  std::vector<EstimatorReport> reports;

  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    const SyntheticScenario& sc = scenarios[s];
    validate_scenario(sc);
    const double pi0_true = static_cast<double>(sc.m0) / static_cast<double>(sc.m);
    const double floor = 1.0 / static_cast<double>(sc.m);
    const std::uint64_t scenario_seed = detail::splitmix64_at(seed, s);

    std::vector<std::vector<double>> estimates(specs.size(),
                                               std::vector<double>(trials, 0.0));
    parallel_for(trials, [&](std::size_t t) {
      Rng rng = Rng::substream(scenario_seed, t);
      const std::vector<double> draws = gen_pvalues(sc, rng);
      const SortedPValues p = sort_pvalues(draws);
      for (std::size_t e = 0; e < specs.size(); ++e) {
        const EstimatorSpec& spec = specs[e];
        Pi0Estimate est;
        if (spec.kind == EstimatorSpec::Kind::STOREY) {
          est = storey_pi0(p, spec.lambda, spec.clipped ? floor : 0.0);
        } else {
          est = dos_storey_pi0(p, spec.beta, c_m, Pi0Form::RATIO, floor);
        }
        estimates[e][t] = spec.clipped ? est.value : est.raw_value;
      }
    });

    for (std::size_t e = 0; e < specs.size(); ++e) {
      const std::vector<double>& x = estimates[e];
      double sum = 0.0;
      for (double v : x) sum += v;
      const double mean = sum / static_cast<double>(trials);
      double var_acc = 0.0;
      double mse_acc = 0.0;
      for (double v : x) {
        var_acc += (v - mean) * (v - mean);
        mse_acc += (v - pi0_true) * (v - pi0_true);
      }
      EstimatorReport rep;
      rep.estimator = specs[e].name;
      rep.m = sc.m;
      rep.pi0_true = pi0_true;
      rep.alt_shape = sc.alt_shape;
      rep.trials = trials;
      rep.mean = mean;
      rep.bias = mean - pi0_true;
      rep.variance = var_acc / static_cast<double>(trials);
      rep.rmse = std::sqrt(mse_acc / static_cast<double>(trials));
      reports.push_back(rep);
    }
  }
  return reports;
}

}  // namespace dsde
