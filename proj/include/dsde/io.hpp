#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dsde/datamodel.hpp"
#include "dsde/ecdf.hpp"
#include "dsde/error.hpp"
#include "dsde/eval.hpp"
#include "dsde/scorers.hpp"
#include "dsde/sha256.hpp"
#include "dsde/synth.hpp"
#include "dsde/version.hpp"

namespace dsde {

using json = nlohmann::json;

// Shortest decimal representation that round-trips the exact double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text, std::size_t line_no) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
    fail(ErrorCode::PARSE_ERROR,
         "line " + std::to_string(line_no) + ": malformed number '" +
             std::string(text) + "'");
  return v;
}

// ---------------------------------------------------------------------------
// Score CSV: header dataset_id,sample_id,model_id,score,label. Fields are
// quoted only when they contain a comma or quote; ids must not embed
// newlines.
// ---------------------------------------------------------------------------

namespace detail {

inline void append_csv_field(std::string& out, std::string_view field) {
  if (field.find_first_of(",\"") == std::string_view::npos) {
    out.append(field);
    return;
  }
  out.push_back('"');
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
}

inline std::vector<std::string> split_csv_line(const std::string& line,
                                               std::size_t line_no) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          fields.back().push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        fields.back().push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back().push_back(c);
    }
  }
  if (quoted)
    fail(ErrorCode::PARSE_ERROR,
         "line " + std::to_string(line_no) + ": unterminated quote");
  return fields;
}

inline std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace detail

inline constexpr const char* kScoreCsvHeader = "dataset_id,sample_id,model_id,score,label";

inline std::string score_table_to_csv(const ScoreTable& table) {
  std::string out = kScoreCsvHeader;
  out.push_back('\n');
  for (const ScoreRow& r : table.rows) {
    detail::append_csv_field(out, r.dataset_id);
    out.push_back(',');
    detail::append_csv_field(out, r.sample_id);
    out.push_back(',');
    detail::append_csv_field(out, r.model_id);
    out.push_back(',');
    out.append(format_double(r.score));
    out.push_back(',');
    out.append(to_string(r.label));
    out.push_back('\n');
  }
  return out;
}

inline ScoreTable score_table_from_csv_text(const std::string& text) {
  ScoreTable table;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (!saw_header) {
      if (line != kScoreCsvHeader)
        fail(ErrorCode::PARSE_ERROR,
             "line 1: expected header '" + std::string(kScoreCsvHeader) + "'");
      saw_header = true;
      continue;
    }
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line, line_no);
    if (fields.size() != 5)
      fail(ErrorCode::PARSE_ERROR, "line " + std::to_string(line_no) + ": expected 5 fields, got " +
                                       std::to_string(fields.size()));
    const auto label = label_from_string(fields[4]);
    if (!label)
      fail(ErrorCode::PARSE_ERROR, "line " + std::to_string(line_no) +
                                       ": unknown label '" + fields[4] + "'");
    table.rows.push_back({fields[0], fields[1], fields[2],
                          parse_double(fields[3], line_no), *label});
  }
  if (!saw_header) fail(ErrorCode::PARSE_ERROR, "line 1: empty file, expected header");
  return table;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::PARSE_ERROR, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::PARSE_ERROR, "cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) fail(ErrorCode::PARSE_ERROR, "write failed for " + path);
}

inline ScoreTable read_score_csv(const std::string& path) {
  return score_table_from_csv_text(read_file(path));
}

// ---------------------------------------------------------------------------
// Vector NDJSON: one {"sample_id": ..., "vector": [...]} object per line,
// uniform dimension per file. Used for both logits and embeddings.
// ---------------------------------------------------------------------------

inline std::vector<LogitRecord> vector_records_from_text(const std::string& text) {
  std::vector<LogitRecord> records;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorCode::PARSE_ERROR,
           "line " + std::to_string(line_no) + ": invalid JSON (" + e.what() + ")");
    }
    if (!obj.is_object() || !obj.contains("sample_id") || !obj.contains("vector") ||
        !obj["sample_id"].is_string() || !obj["vector"].is_array())
      fail(ErrorCode::PARSE_ERROR,
           "line " + std::to_string(line_no) +
               ": expected {\"sample_id\": string, \"vector\": [numbers]}");
    LogitRecord rec;
    rec.sample_id = obj["sample_id"].get<std::string>();
    for (const auto& v : obj["vector"]) {
      if (!v.is_number())
        fail(ErrorCode::PARSE_ERROR,
             "line " + std::to_string(line_no) + ": vector entries must be numbers");
      rec.values.push_back(v.get<double>());
    }
    if (rec.values.empty())
      fail(ErrorCode::PARSE_ERROR, "line " + std::to_string(line_no) + ": empty vector");
    if (dim == 0) {
      dim = rec.values.size();
    } else if (rec.values.size() != dim) {
      fail(ErrorCode::PARSE_ERROR,
           "line " + std::to_string(line_no) + ": vector length " +
               std::to_string(rec.values.size()) + " differs from " +
               std::to_string(dim) + " seen earlier");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

inline std::vector<LogitRecord> read_vector_ndjson(const std::string& path) {
  return vector_records_from_text(read_file(path));
}

// ---------------------------------------------------------------------------
// Calibration bank JSON: {model_id: {"n": int, "scores": [ascending floats]}}
// ---------------------------------------------------------------------------

inline std::string bank_to_json_text(const CalibrationBank& bank) {
  json out = json::object();
  for (const auto& [model, cdf] : bank) {
    out[model] = {{"n", cdf.n()}, {"scores", cdf.sorted_scores}};
  }
  return out.dump(2) + "\n";
}

inline CalibrationBank bank_from_json_text(const std::string& text) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::PARSE_ERROR, std::string("invalid bank JSON: ") + e.what());
  }
  if (!obj.is_object()) fail(ErrorCode::PARSE_ERROR, "bank JSON must be an object");
  CalibrationBank bank;
  for (const auto& [model, entry] : obj.items()) {
    if (!entry.is_object() || !entry.contains("scores") || !entry["scores"].is_array())
      fail(ErrorCode::PARSE_ERROR, "bank entry for " + model + " needs a scores array");
    std::vector<double> scores;
    for (const auto& v : entry["scores"]) {
      if (!v.is_number())
        fail(ErrorCode::PARSE_ERROR, "bank scores for " + model + " must be numbers");
      scores.push_back(v.get<double>());
    }
    if (entry.contains("n") &&
        entry["n"].get<std::size_t>() != scores.size())
      fail(ErrorCode::PARSE_ERROR, "bank entry for " + model + " has n != scores length");
    bank.emplace(model, build_ecdf(scores));
  }
  if (bank.empty()) fail(ErrorCode::PARSE_ERROR, "bank JSON has no models");
  return bank;
}

inline CalibrationBank read_bank(const std::string& path) {
  return bank_from_json_text(read_file(path));
}

// ---------------------------------------------------------------------------
// Config JSON: mirrors ExperimentConfig; flags override file values.
// ---------------------------------------------------------------------------

inline json config_to_json(const ExperimentConfig& cfg) {
  json out;
  out["alpha"] = cfg.alpha;
  out["beta"] = cfg.beta;
  out["c_m"] = cfg.c_m;
  out["method"] = to_string(cfg.method);
  out["vote_tau"] = cfg.vote_tau;
  out["storey_lambda"] = cfg.storey_lambda;
  out["pvalue_mode"] = to_string(cfg.pvalue_mode);
  out["pi0_form"] = to_string(cfg.pi0_form);
  if (cfg.pi0_floor) {
    out["pi0_floor"] = *cfg.pi0_floor;
  } else {
    out["pi0_floor"] = nullptr;
  }
  out["alpha_grid"] = cfg.alpha_grid;
  return out;
}

inline void apply_config_json(ExperimentConfig& cfg, const json& obj) {
  if (!obj.is_object()) fail(ErrorCode::INVALID_CONFIG, "config JSON must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (key == "alpha") {
      cfg.alpha = value.get<double>();
    } else if (key == "beta") {
      cfg.beta = value.get<double>();
    } else if (key == "c_m") {
      cfg.c_m = value.get<double>();
    } else if (key == "method") {
      const auto m = method_from_string(value.get<std::string>());
      if (!m) fail(ErrorCode::INVALID_CONFIG, "unknown method " + value.dump());
      cfg.method = *m;
    } else if (key == "vote_tau") {
      cfg.vote_tau = value.get<double>();
    } else if (key == "storey_lambda") {
      cfg.storey_lambda = value.get<double>();
    } else if (key == "pvalue_mode") {
      const auto m = pvalue_mode_from_string(value.get<std::string>());
      if (!m) fail(ErrorCode::INVALID_CONFIG, "unknown pvalue_mode " + value.dump());
      cfg.pvalue_mode = *m;
    } else if (key == "pi0_form") {
      const auto f = pi0_form_from_string(value.get<std::string>());
      if (!f) fail(ErrorCode::INVALID_CONFIG, "unknown pi0_form " + value.dump());
      cfg.pi0_form = *f;
    } else if (key == "pi0_floor") {
      if (value.is_null()) {
        cfg.pi0_floor.reset();
      } else {
        cfg.pi0_floor = value.get<double>();
      }
    } else if (key == "alpha_grid") {
      cfg.alpha_grid = value.get<std::vector<double>>();
    } else {
      fail(ErrorCode::INVALID_CONFIG, "unknown config key '" + key + "'");
    }
  }
}

// ---------------------------------------------------------------------------
// Run manifest: config snapshot, SHA-256 of every input, version, seed,
// timestamp. SOURCE_DATE_EPOCH overrides the clock so reruns can be
// byte-identical.
// ---------------------------------------------------------------------------

struct RunManifest {
  json config;
  std::map<std::string, std::string> input_digests;  // path -> sha256 hex
  std::uint64_t seed = 0;
  std::string timestamp;
  std::string version = kVersion;
};

inline std::string utc_timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) {
    char* end = nullptr;
    const long long v = std::strtoll(env, &end, 10);
    if (end != env) t = static_cast<std::time_t>(v);
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline RunManifest make_manifest(const ExperimentConfig& cfg,
                                 const std::vector<std::string>& input_paths,
                                 std::uint64_t seed) {
  RunManifest m;
  m.config = config_to_json(cfg);
  m.seed = seed;
  m.timestamp = utc_timestamp();
  for (const auto& path : input_paths) {
    m.input_digests[path] = Sha256::hex(read_file(path));
  }
  return m;
}

inline json manifest_to_json(const RunManifest& m) {
  json out;
  out["config"] = m.config;
  out["inputs"] = m.input_digests;
  out["seed"] = m.seed;
  out["timestamp"] = m.timestamp;
  out["version"] = m.version;
  return out;
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

inline json verdict_to_json(const Verdict& v,
                            const std::vector<std::string>& model_ids,
                            const std::vector<double>& pvalues) {
  json obj;
  obj["sample_id"] = v.sample_id;
  obj["decision"] = to_string(v.decision);
  if (v.k_hat) {
    obj["k_hat"] = *v.k_hat;
  } else {
    obj["k_hat"] = nullptr;
  }
  obj["pi0_hat"] = v.pi0_hat;
  obj["flagged_models"] = v.flagged_models;
  json pv = json::object();
  for (std::size_t j = 0; j < model_ids.size(); ++j) pv[model_ids[j]] = pvalues[j];
  obj["pvalues"] = pv;
  return obj;
}

inline json metric_rows_to_json(const std::vector<MetricRow>& rows) {
  json arr = json::array();
  for (const MetricRow& r : rows) {
    arr.push_back({{"method", r.method},
                   {"dataset_id", r.dataset_id},
                   {"tpr", r.tpr},
                   {"fpr", r.fpr},
                   {"auroc", r.auroc},
                   {"alpha_used", r.alpha_used}});
  }
  return arr;
}

inline json null_rate_report_to_json(const NullRateReport& r) {
  json obj;
  obj["method"] = r.method;
  obj["m"] = r.m;
  obj["alpha"] = r.alpha;
  obj["trials"] = r.trials;
  obj["seed"] = r.seed;
  obj["observed_id_rate"] = r.observed_id_rate;
  if (r.analytic_id_rate) {
    obj["analytic_id_rate"] = *r.analytic_id_rate;
  } else {
    obj["analytic_id_rate"] = nullptr;
  }
  obj["mc_stderr"] = r.mc_stderr;
  return obj;
}

inline json estimator_reports_to_json(const std::vector<EstimatorReport>& reports) {
  json arr = json::array();
  for (const EstimatorReport& r : reports) {
    arr.push_back({{"estimator", r.estimator},
                   {"m", r.m},
                   {"pi0_true", r.pi0_true},
                   {"alt_shape", r.alt_shape},
                   {"trials", r.trials},
                   {"mean", r.mean},
                   {"bias", r.bias},
                   {"variance", r.variance},
                   {"rmse", r.rmse}});
  }
  return arr;
}

// Markdown results table, one row per method: TPR, per-dataset FPR/AUC cells
// as percentages, Average column last.
inline std::string metric_rows_to_markdown(const std::vector<MetricRow>& rows) {
  std::vector<std::string> methods;
  std::vector<std::string> datasets;
  for (const MetricRow& r : rows) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
      methods.push_back(r.method);
    if (r.dataset_id != "Average" &&
        std::find(datasets.begin(), datasets.end(), r.dataset_id) == datasets.end())
      datasets.push_back(r.dataset_id);
  }
  const auto cell = [&](const std::string& method,
                        const std::string& dataset) -> std::string {
    for (const MetricRow& r : rows) {
      if (r.method == method && r.dataset_id == dataset) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.2f/%.2f", 100.0 * r.fpr, 100.0 * r.auroc);
        return buf;
      }
    }
    return "-";
  };

  std::string out = "| Method | TPR |";
  for (const auto& ds : datasets) out += " " + ds + " (FPR/AUC) |";
  out += " Average (FPR/AUC) |\n";
  out += "|---|---|";
  for (std::size_t i = 0; i < datasets.size() + 1; ++i) out += "---|";
  out += "\n";
  for (const auto& method : methods) {
    double tpr = 0.0;
    for (const MetricRow& r : rows) {
      if (r.method == method) {
        tpr = r.tpr;
        break;
      }
    }
    char tpr_buf[32];
    std::snprintf(tpr_buf, sizeof(tpr_buf), "%.2f", 100.0 * tpr);
    out += "| " + method + " | " + tpr_buf + " |";
    for (const auto& ds : datasets) out += " " + cell(method, ds) + " |";
    out += " " + cell(method, "Average") + " |\n";
  }
  return out;
}

}  // namespace dsde
