#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dsde/datamodel.hpp"
#include "dsde/error.hpp"

namespace dsde {

// One exported sample: class logits for MSP/Energy, or a feature vector
// for the KNN scorer. Both come from the same NDJSON record shape.
struct LogitRecord {
  std::string sample_id;
  std::vector<double> values;
};

namespace detail {

inline void check_logits(std::span<const double> logits) {
  if (logits.empty()) fail(ErrorCode::EMPTY_LOGITS, "logit vector is empty");
  for (double z : logits) {
    if (!std::isfinite(z)) fail(ErrorCode::NONFINITE_LOGIT, "logit is not finite");
  }
}

}  // namespace detail

// Maximum softmax probability, computed with the max logit subtracted so
// large magnitudes cannot overflow. Larger = more in-distribution.
inline double msp_score(std::span<const double> logits) {
  detail::check_logits(logits);
  const double zmax = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double z : logits) denom += std::exp(z - zmax);
  return 1.0 / denom;  // numerator exp(zmax - zmax) = 1
}

// Negative energy: T * logsumexp(z / T). Emitting the negative keeps the
// larger-is-more-ID orientation shared by all scorers.
inline double energy_score(std::span<const double> logits, double temperature = 1.0) {
  detail::check_logits(logits);
  if (!(temperature > 0.0))
    fail(ErrorCode::NONPOSITIVE_TEMPERATURE, "temperature must be positive");
  const double zmax = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp((z - zmax) / temperature);
  return zmax + temperature * std::log(sum);
}

// Reference set of unit-norm feature vectors for one model.
struct FeatureBank {
  std::string model_id;
  std::size_t dim = 0;
  std::vector<std::vector<double>> vectors;

  std::size_t size() const { return vectors.size(); }
};

inline FeatureBank build_feature_bank(const std::string& model_id,
                                      std::vector<std::vector<double>> vectors) {
  if (vectors.empty()) fail(ErrorCode::EMPTY_CALIBRATION, "feature bank is empty");
  FeatureBank bank;
  bank.model_id = model_id;
  bank.dim = vectors.front().size();
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    const auto& v = vectors[i];
    if (v.size() != bank.dim)
      fail(ErrorCode::DIMENSION_MISMATCH,
           "bank vector " + std::to_string(i) + " has dimension " +
               std::to_string(v.size()) + ", expected " + std::to_string(bank.dim));
    double norm2 = 0.0;
    for (double x : v) {
      if (!std::isfinite(x)) fail(ErrorCode::NONFINITE_SCORE, "bank vector is not finite");
      norm2 += x * x;
    }
    if (std::abs(std::sqrt(norm2) - 1.0) > 1e-6)
      fail(ErrorCode::NONNORMALIZED_FEATURE,
           "bank vector " + std::to_string(i) + " is not unit-norm");
  }
  bank.vectors = std::move(vectors);
  return bank;
}

// Negated distance to the k-th nearest bank vector, after L2-normalizing the
// query. On unit vectors Euclidean distance orders the same as cosine.
inline double knn_score(std::span<const double> feature, const FeatureBank& bank,
                        std::size_t k) {
  if (k < 1 || k > bank.size())
    fail(ErrorCode::K_OUT_OF_RANGE, "k must lie in [1, " + std::to_string(bank.size()) +
                                        "], got " + std::to_string(k));
  if (feature.size() != bank.dim)
    fail(ErrorCode::DIMENSION_MISMATCH,
         "query has dimension " + std::to_string(feature.size()) + ", bank expects " +
             std::to_string(bank.dim));
  double norm2 = 0.0;
  for (double x : feature) {
    if (!std::isfinite(x)) fail(ErrorCode::NONFINITE_SCORE, "query vector is not finite");
    norm2 += x * x;
  }
  const double norm = std::sqrt(norm2);
  if (norm == 0.0) fail(ErrorCode::ZERO_VECTOR, "query vector has zero norm");

  std::vector<double> dist2;
  dist2.reserve(bank.size());
  for (const auto& v : bank.vectors) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < bank.dim; ++j) {
      const double diff = feature[j] / norm - v[j];
      d2 += diff * diff;
    }
    dist2.push_back(d2);
  }
  std::nth_element(dist2.begin(), dist2.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   dist2.end());
  return -std::sqrt(dist2[k - 1]);
}

enum class Scorer { MSP, ENERGY, KNN };

inline const char* to_string(Scorer s) {
  switch (s) {
    case Scorer::MSP: return "msp";
    case Scorer::ENERGY: return "energy";
    case Scorer::KNN: return "knn";
  }
  return "?";
}

inline std::optional<Scorer> scorer_from_string(const std::string& s) {
  if (s == "msp") return Scorer::MSP;
  if (s == "energy") return Scorer::ENERGY;
  if (s == "knn") return Scorer::KNN;
  return std::nullopt;
}

struct ScorerParams {
  Scorer scorer = Scorer::MSP;
  double temperature = 1.0;           // energy
  std::size_t k = 50;                 // knn
  const FeatureBank* bank = nullptr;  // knn
};

// Maps one scorer over exported records, producing long-form score rows.
// Scorer errors are re-raised with the offending sample_id attached.
inline std::vector<ScoreRow> score_dataset(std::span<const LogitRecord> records,
                                           const ScorerParams& params,
                                           const std::string& dataset_id,
                                           const std::string& model_id,
                                           Label label = Label::UNKNOWN) {
  std::vector<ScoreRow> rows;
  rows.reserve(records.size());
  for (const LogitRecord& rec : records) {
    double score = 0.0;
    try {
      switch (params.scorer) {
        case Scorer::MSP: score = msp_score(rec.values); break;
        case Scorer::ENERGY: score = energy_score(rec.values, params.temperature); break;
        case Scorer::KNN:
          if (params.bank == nullptr)
            fail(ErrorCode::EMPTY_CALIBRATION, "knn scorer needs a feature bank");
          score = knn_score(rec.values, *params.bank, params.k);
          break;
      }
    } catch (const Error& e) {
      throw Error(e.code(), std::string(e.what()) + " (sample " + rec.sample_id + ")");
    }
    rows.push_back({dataset_id, rec.sample_id, model_id, score, label});
  }
  return rows;
}

}  // namespace dsde
