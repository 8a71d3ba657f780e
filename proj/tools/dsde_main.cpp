// dsde: score / calibrate / detect / eval / synth pipeline runner.
//
// Exit codes: 0 success, 2 input or format error, 3 scorer error,
// 4 missing calibration or unknown model, 5 label or metric error.

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsde/datamodel.hpp"
#include "dsde/decision.hpp"
#include "dsde/ecdf.hpp"
#include "dsde/error.hpp"
#include "dsde/eval.hpp"
#include "dsde/io.hpp"
#include "dsde/pipeline.hpp"
#include "dsde/scorers.hpp"
#include "dsde/synth.hpp"
#include "dsde/version.hpp"

namespace {

using dsde::Error;
using dsde::ErrorCode;
using dsde::ExperimentConfig;
using dsde::json;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::EMPTY_LOGITS:
    case ErrorCode::NONFINITE_LOGIT:
    case ErrorCode::NONPOSITIVE_TEMPERATURE:
    case ErrorCode::K_OUT_OF_RANGE:
    case ErrorCode::DIMENSION_MISMATCH:
    case ErrorCode::ZERO_VECTOR:
    case ErrorCode::NONNORMALIZED_FEATURE:
      return 3;
    case ErrorCode::MISSING_CALIBRATION:
      return 4;
    case ErrorCode::UNLABELED_SAMPLE:
    case ErrorCode::EMPTY_CLASS:
      return 5;
    default:
      return 2;
  }
}

std::vector<double> parse_double_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string tok = text.substr(pos, comma - pos);
    if (tok.empty())
      dsde::fail(ErrorCode::INVALID_CONFIG, std::string("empty entry in ") + what);
    out.push_back(dsde::parse_double(tok, 0));
    pos = comma + 1;
  }
  return out;
}

// Config assembly: defaults, then --config file, then explicit flags.
struct ConfigCli {
  std::string config_path;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<double> c_m;
  std::optional<std::string> method;
  std::optional<double> vote_tau;
  std::optional<double> storey_lambda;
  std::optional<std::string> pvalue_mode;
  std::optional<std::string> pi0_form;
  std::optional<double> pi0_floor;
  std::optional<std::string> alpha_grid;
  std::uint64_t seed = 0;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file");
    app->add_option("--alpha", alpha, "significance level, (0,1)");
    app->add_option("--beta", beta, "DOS exponent, [0.5,1]");
    app->add_option("--cm", c_m, "change-point lower fraction c_m, (0,1)");
    app->add_option("--method", method,
                    "dsde|bh|by|bonferroni|storey|naive|vote");
    app->add_option("--vote-tau", vote_tau, "voting fraction, (0,1]");
    app->add_option("--storey-lambda", storey_lambda, "fixed Storey lambda, (0,1)");
    app->add_option("--pvalue-mode", pvalue_mode, "literal|smoothed");
    app->add_option("--pi0-form", pi0_form, "ratio|literal");
    app->add_option("--pi0-floor", pi0_floor, "lower clip for pi0 (default 1/m)");
    app->add_option("--alpha-grid", alpha_grid,
                    "comma-separated ROC sweep levels");
    app->add_option("--seed", seed, "RNG seed");
  }

  ExperimentConfig resolve(ExperimentConfig cfg = {}) const {
    if (!config_path.empty()) {
      json obj;
      try {
        obj = json::parse(dsde::read_file(config_path));
      } catch (const json::exception& e) {
        dsde::fail(ErrorCode::INVALID_CONFIG,
                   std::string("invalid config JSON: ") + e.what());
      }
      dsde::apply_config_json(cfg, obj);
    }
    if (alpha) cfg.alpha = *alpha;
    if (beta) cfg.beta = *beta;
    if (c_m) cfg.c_m = *c_m;
    if (method) {
      const auto m = dsde::method_from_string(*method);
      if (!m) dsde::fail(ErrorCode::INVALID_CONFIG, "unknown method " + *method);
      cfg.method = *m;
    }
    if (vote_tau) cfg.vote_tau = *vote_tau;
    if (storey_lambda) cfg.storey_lambda = *storey_lambda;
    if (pvalue_mode) {
      const auto m = dsde::pvalue_mode_from_string(*pvalue_mode);
      if (!m) dsde::fail(ErrorCode::INVALID_CONFIG, "unknown pvalue mode " + *pvalue_mode);
      cfg.pvalue_mode = *m;
    }
    if (pi0_form) {
      const auto f = dsde::pi0_form_from_string(*pi0_form);
      if (!f) dsde::fail(ErrorCode::INVALID_CONFIG, "unknown pi0 form " + *pi0_form);
      cfg.pi0_form = *f;
    }
    if (pi0_floor) cfg.pi0_floor = *pi0_floor;
    if (alpha_grid) cfg.alpha_grid = parse_double_list(*alpha_grid, "--alpha-grid");
    dsde::validate_config(cfg);
    return cfg;
  }
};

void require_valid(const dsde::ScoreTable& table, const std::string& path) {
  const auto violations = dsde::validate_table(table);
  if (violations.empty()) return;
  std::string msg = path + ": " + std::to_string(violations.size()) + " violation(s);";
  for (std::size_t i = 0; i < violations.size() && i < 5; ++i) {
    const auto& v = violations[i];
    msg += " [" + std::string(to_string(v.kind)) + " row " + std::to_string(v.row) +
           " " + v.dataset_id + "/" + v.sample_id + "/" + v.model_id + ": " +
           v.message + "]";
  }
  dsde::fail(ErrorCode::PARSE_ERROR, msg);
}

dsde::ScoreTable filter_dataset(const dsde::ScoreTable& table,
                                const std::string& dataset) {
  if (dataset.empty()) return table;
  dsde::ScoreTable out;
  for (const auto& row : table.rows)
    if (row.dataset_id == dataset) out.rows.push_back(row);
  if (out.rows.empty())
    dsde::fail(ErrorCode::UNKNOWN_DATASET, "no rows for dataset " + dataset);
  return out;
}

std::vector<std::string> dataset_ids(const dsde::ScoreTable& table) {
  std::set<std::string> seen;
  for (const auto& row : table.rows) seen.insert(row.dataset_id);
  return {seen.begin(), seen.end()};
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

struct ScoreArgs {
  std::string input;
  std::string scorer = "msp";
  std::string dataset_id;
  std::string model_id;
  std::string label = "UNKNOWN";
  std::string bank_path;
  std::string out;
  double temperature = 1.0;
  std::size_t k = 50;
};

int run_score(const ScoreArgs& args) {
  const auto scorer = dsde::scorer_from_string(args.scorer);
  if (!scorer) dsde::fail(ErrorCode::INVALID_CONFIG, "unknown scorer " + args.scorer);
  const auto label = dsde::label_from_string(args.label);
  if (!label) dsde::fail(ErrorCode::INVALID_CONFIG, "unknown label " + args.label);

  const auto records = dsde::read_vector_ndjson(args.input);

  dsde::ScorerParams params;
  params.scorer = *scorer;
  params.temperature = args.temperature;
  params.k = args.k;
  dsde::FeatureBank bank;
  if (*scorer == dsde::Scorer::KNN) {
    if (args.bank_path.empty())
      dsde::fail(ErrorCode::INVALID_CONFIG, "knn scorer needs --bank");
    std::vector<std::vector<double>> vectors;
    for (auto& rec : dsde::read_vector_ndjson(args.bank_path))
      vectors.push_back(std::move(rec.values));
    bank = dsde::build_feature_bank(args.model_id, std::move(vectors));
    params.bank = &bank;
  }

  dsde::ScoreTable table;
  table.rows = dsde::score_dataset(records, params, args.dataset_id, args.model_id,
                                   *label);
  dsde::write_file(args.out, dsde::score_table_to_csv(table));
  return 0;
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

struct CalibrateArgs {
  std::string scores;
  std::string dataset;
  std::string out;
};

int run_calibrate(const CalibrateArgs& args) {
  const auto table = filter_dataset(dsde::read_score_csv(args.scores), args.dataset);
  require_valid(table, args.scores);

  std::map<std::string, std::vector<double>> per_model;
  for (const auto& row : table.rows) per_model[row.model_id].push_back(row.score);

  dsde::CalibrationBank bank;
  for (auto& [model, scores] : per_model) bank.emplace(model, dsde::build_ecdf(scores));
  dsde::write_file(args.out, dsde::bank_to_json_text(bank));
  return 0;
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

struct DetectArgs {
  std::string scores;
  std::string bank;
  std::string dataset;
  std::string out;
  ConfigCli config;
};

int run_detect(const DetectArgs& args) {
  const ExperimentConfig cfg = args.config.resolve();
  const auto table = filter_dataset(dsde::read_score_csv(args.scores), args.dataset);
  require_valid(table, args.scores);
  const auto bank = dsde::read_bank(args.bank);

  const dsde::RunManifest manifest =
      dsde::make_manifest(cfg, {args.scores, args.bank}, args.config.seed);

  struct Line {
    std::string dataset_id;
    std::string sample_id;
    json body;
  };
  std::vector<Line> lines;
  for (const auto& ds : dataset_ids(table)) {
    const auto pm = dsde::build_pvalue_matrix(table, ds, bank, cfg.pvalue_mode);
    const auto verdicts = dsde::detect_all(pm, cfg);
    for (std::size_t i = 0; i < verdicts.size(); ++i) {
      std::vector<double> pvals(pm.model_ids.size());
      for (std::size_t j = 0; j < pm.model_ids.size(); ++j) pvals[j] = pm.at(i, j);
      json body = dsde::verdict_to_json(verdicts[i], pm.model_ids, pvals);
      body["dataset_id"] = ds;
      lines.push_back({ds, verdicts[i].sample_id, std::move(body)});
    }
  }
  std::sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) {
    if (a.dataset_id != b.dataset_id) return a.dataset_id < b.dataset_id;
    return a.sample_id < b.sample_id;
  });

  std::string out = json{{"manifest", dsde::manifest_to_json(manifest)}}.dump();
  out.push_back('\n');
  for (const auto& line : lines) {
    out += line.body.dump();
    out.push_back('\n');
  }
  dsde::write_file(args.out, out);
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string scores;
  std::string bank;
  std::string verdicts;
  std::string labels;
  std::string id_dataset;
  std::string ood_datasets;  // comma-separated; default: all but id
  std::string methods;       // comma-separated; default: configured method
  std::string out_json;
  std::string out_md;
  ConfigCli config;
};

std::vector<dsde::Method> parse_methods(const std::string& text,
                                        dsde::Method fallback) {
  if (text.empty()) return {fallback};
  std::vector<dsde::Method> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string tok = text.substr(pos, comma - pos);
    const auto m = dsde::method_from_string(tok);
    if (!m) dsde::fail(ErrorCode::INVALID_CONFIG, "unknown method " + tok);
    out.push_back(*m);
    pos = comma + 1;
  }
  return out;
}

void write_report(const std::vector<dsde::MetricRow>& rows,
                  const dsde::RunManifest& manifest, const EvalArgs& args) {
  json report;
  report["manifest"] = dsde::manifest_to_json(manifest);
  report["rows"] = dsde::metric_rows_to_json(rows);
  dsde::write_file(args.out_json, report.dump(2) + "\n");
  if (!args.out_md.empty())
    dsde::write_file(args.out_md, dsde::metric_rows_to_markdown(rows));
}

int run_eval_scores(const EvalArgs& args) {
  const ExperimentConfig cfg = args.config.resolve();
  const auto table = dsde::read_score_csv(args.scores);
  require_valid(table, args.scores);
  const auto bank = dsde::read_bank(args.bank);

  std::vector<std::string> ood;
  if (args.ood_datasets.empty()) {
    for (const auto& ds : dataset_ids(table))
      if (ds != args.id_dataset) ood.push_back(ds);
  } else {
    std::size_t pos = 0;
    while (pos <= args.ood_datasets.size()) {
      const std::size_t comma =
          std::min(args.ood_datasets.find(',', pos), args.ood_datasets.size());
      ood.push_back(args.ood_datasets.substr(pos, comma - pos));
      pos = comma + 1;
    }
  }

  const auto methods = parse_methods(args.methods, cfg.method);
  const auto rows =
      dsde::run_experiment(table, bank, args.id_dataset, ood, methods, cfg);
  const dsde::RunManifest manifest =
      dsde::make_manifest(cfg, {args.scores, args.bank}, args.config.seed);
  write_report(rows, manifest, args);
  return 0;
}

// Recomputes the table from a verdicts file: decisions give TPR/FPR at the
// recorded alpha, embedded p-values drive the AUROC sweep.
int run_eval_verdicts(const EvalArgs& args) {
  struct Record {
    std::string dataset_id;
    std::string sample_id;
    dsde::Decision decision = dsde::Decision::ID;
    std::map<std::string, double> pvalues;
  };

  const std::string text = dsde::read_file(args.verdicts);
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  ExperimentConfig cfg;
  std::vector<Record> records;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      dsde::fail(ErrorCode::PARSE_ERROR, "line " + std::to_string(line_no) +
                                             ": invalid JSON (" + e.what() + ")");
    }
    if (line_no == 1) {
      if (!obj.contains("manifest"))
        dsde::fail(ErrorCode::PARSE_ERROR, "line 1: expected the run manifest");
      dsde::apply_config_json(cfg, obj["manifest"]["config"]);
      continue;
    }
    Record rec;
    rec.dataset_id = obj.at("dataset_id").get<std::string>();
    rec.sample_id = obj.at("sample_id").get<std::string>();
    rec.decision = obj.at("decision").get<std::string>() == "ID" ? dsde::Decision::ID
                                                                 : dsde::Decision::OOD;
    for (const auto& [model, p] : obj.at("pvalues").items())
      rec.pvalues[model] = p.get<double>();
    records.push_back(std::move(rec));
  }
  if (records.empty())
    dsde::fail(ErrorCode::PARSE_ERROR, "verdicts file has no sample records");
  cfg = args.config.resolve(cfg);  // flags may override the recorded config

  // Attach labels from the score CSV keyed by (dataset, sample).
  const auto label_table = dsde::read_score_csv(args.labels);
  std::map<std::pair<std::string, std::string>, dsde::Label> labels;
  for (const auto& row : label_table.rows)
    labels[{row.dataset_id, row.sample_id}] = row.label;

  std::map<std::string, std::vector<const Record*>> by_dataset;
  for (const auto& rec : records) {
    const auto it = labels.find({rec.dataset_id, rec.sample_id});
    if (it == labels.end() || it->second == dsde::Label::UNKNOWN)
      dsde::fail(ErrorCode::UNLABELED_SAMPLE,
                 "no label for " + rec.dataset_id + "/" + rec.sample_id);
    by_dataset[rec.dataset_id].push_back(&rec);
  }
  if (!by_dataset.count(args.id_dataset))
    dsde::fail(ErrorCode::UNKNOWN_DATASET,
               "verdicts contain no dataset " + args.id_dataset);

  const auto ratio_kept = [](const std::vector<const Record*>& recs) {
    std::size_t kept = 0;
    for (const Record* r : recs)
      if (r->decision == dsde::Decision::ID) ++kept;
    return static_cast<double>(kept) / static_cast<double>(recs.size());
  };

  const auto to_pm = [](const std::vector<const Record*>& recs, dsde::Label label) {
    dsde::PValueMatrix pm;
    for (const auto& [model, _] : recs.front()->pvalues) pm.model_ids.push_back(model);
    for (const Record* r : recs) {
      pm.sample_ids.push_back(r->sample_id);
      pm.labels.push_back(label);
      for (const auto& model : pm.model_ids) pm.p.push_back(r->pvalues.at(model));
    }
    return pm;
  };

  const double tpr = ratio_kept(by_dataset[args.id_dataset]);
  const dsde::PValueMatrix id_pm = to_pm(by_dataset[args.id_dataset], dsde::Label::ID);

  std::vector<dsde::MetricRow> rows;
  double fpr_sum = 0.0;
  double auc_sum = 0.0;
  std::size_t n_ood_ds = 0;
  for (const auto& [ds, recs] : by_dataset) {
    if (ds == args.id_dataset) continue;
    const double fpr = ratio_kept(recs);
    const auto roc = dsde::ensemble_roc(
        dsde::detail::concat_matrices(id_pm, to_pm(recs, dsde::Label::OOD)), cfg);
    rows.push_back({std::string(to_string(cfg.method)), ds, tpr, fpr, roc.area,
                    cfg.alpha});
    fpr_sum += fpr;
    auc_sum += roc.area;
    ++n_ood_ds;
  }
  if (n_ood_ds == 0)
    dsde::fail(ErrorCode::EMPTY_CLASS, "verdicts contain no OoD dataset");
  rows.push_back({std::string(to_string(cfg.method)), "Average", tpr,
                  fpr_sum / static_cast<double>(n_ood_ds),
                  auc_sum / static_cast<double>(n_ood_ds), cfg.alpha});

  const dsde::RunManifest manifest =
      dsde::make_manifest(cfg, {args.verdicts, args.labels}, args.config.seed);
  write_report(rows, manifest, args);
  return 0;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthCommonArgs {
  std::string out;
  ConfigCli config;
};

struct NullRateArgs : SynthCommonArgs {
  std::size_t m = 7;
  std::size_t trials = 100000;
};

int run_synth_nullrate(const NullRateArgs& args) {
  const ExperimentConfig cfg = args.config.resolve();
  const auto report = dsde::mc_null_rate(cfg.method, args.m, cfg.alpha, args.trials,
                                         args.config.seed, cfg);
  const dsde::RunManifest manifest = dsde::make_manifest(cfg, {}, args.config.seed);
  json out;
  out["manifest"] = dsde::manifest_to_json(manifest);
  out["report"] = dsde::null_rate_report_to_json(report);
  dsde::write_file(args.out, out.dump(2) + "\n");
  return 0;
}

struct EstimatorsArgs : SynthCommonArgs {
  std::size_t m = 100;
  std::string pi0 = "0.5,0.8,0.95";
  double alt_shape = 0.1;
  std::size_t trials = 10000;
};

int run_synth_estimators(const EstimatorsArgs& args) {
  const ExperimentConfig cfg = args.config.resolve();
  std::vector<dsde::SyntheticScenario> scenarios;
  for (double pi0 : parse_double_list(args.pi0, "--pi0")) {
    if (!(pi0 >= 0.0 && pi0 <= 1.0))
      dsde::fail(ErrorCode::INVALID_SCENARIO, "pi0 must lie in [0, 1]");
    dsde::SyntheticScenario sc;
    sc.m = args.m;
    sc.m0 = static_cast<std::size_t>(std::llround(pi0 * static_cast<double>(args.m)));
    sc.alt_shape = args.alt_shape;
    sc.trials = args.trials;
    sc.seed = args.config.seed;
    scenarios.push_back(sc);
  }
  const auto specs = dsde::default_estimator_specs();
  const auto reports = dsde::estimator_rmse(scenarios, specs, args.trials,
                                            args.config.seed, cfg.c_m);
  const dsde::RunManifest manifest = dsde::make_manifest(cfg, {}, args.config.seed);
  json out;
  out["manifest"] = dsde::manifest_to_json(manifest);
  out["reports"] = dsde::estimator_reports_to_json(reports);
  dsde::write_file(args.out, out.dump(2) + "\n");
  return 0;
}

struct PValuesArgs : SynthCommonArgs {
  std::size_t m = 7;
  std::size_t m0 = 7;
  double alt_shape = 0.1;
  std::size_t trials = 1;
};

int run_synth_pvalues(const PValuesArgs& args) {
  dsde::SyntheticScenario sc;
  sc.m = args.m;
  sc.m0 = args.m0;
  sc.alt_shape = args.alt_shape;
  sc.trials = args.trials;
  sc.seed = args.config.seed;
  dsde::validate_scenario(sc);

  std::string csv = "trial,draw,p\n";
  for (std::size_t t = 0; t < args.trials; ++t) {
    dsde::Rng rng = dsde::Rng::substream(sc.seed, t);
    const auto pvals = dsde::gen_pvalues(sc, rng);
    for (std::size_t j = 0; j < pvals.size(); ++j) {
      csv += std::to_string(t) + "," + std::to_string(j) + "," +
             dsde::format_double(pvals[j]) + "\n";
    }
  }
  dsde::write_file(args.out, csv);
  return 0;
}

struct ScoresArgs : SynthCommonArgs {
  std::string scenario_path;
  std::size_t m = 7;
  std::size_t n_calib = 1000;
  std::size_t n_test_id = 1000;
  std::size_t n_test_ood = 1000;
  double shift = 4.0;
  std::string shifts;
};

dsde::SyntheticScenario scenario_from_json_text(const std::string& text) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::exception& e) {
    dsde::fail(ErrorCode::INVALID_SCENARIO,
               std::string("invalid scenario JSON: ") + e.what());
  }
  dsde::SyntheticScenario sc;
  sc.m = obj.at("m").get<std::size_t>();
  sc.m0 = obj.value("m0", sc.m);
  sc.alt_shape = obj.value("alt_shape", 0.1);
  if (obj.contains("id_means"))
    sc.id_means = obj["id_means"].get<std::vector<double>>();
  sc.n_calib = obj.value("n_calib", std::size_t{0});
  sc.n_test_id = obj.value("n_test_id", std::size_t{0});
  sc.trials = obj.value("trials", std::size_t{1});
  sc.seed = obj.value("seed", std::uint64_t{0});
  if (obj.contains("ood_pops")) {
    for (const auto& pop_json : obj["ood_pops"]) {
      dsde::OodPopulation pop;
      pop.dataset_id = pop_json.value("dataset_id", std::string("ood_test"));
      pop.n = pop_json.at("n").get<std::size_t>();
      pop.shifts = pop_json.at("shifts").get<std::vector<double>>();
      sc.ood_pops.push_back(std::move(pop));
    }
  }
  return sc;
}

int run_synth_scores(const ScoresArgs& args) {
  dsde::SyntheticScenario sc;
  if (!args.scenario_path.empty()) {
    sc = scenario_from_json_text(dsde::read_file(args.scenario_path));
    sc.seed = args.config.seed != 0 ? args.config.seed : sc.seed;
  } else {
    sc.m = args.m;
    sc.m0 = args.m;
    sc.n_calib = args.n_calib;
    sc.n_test_id = args.n_test_id;
    sc.seed = args.config.seed;
    dsde::OodPopulation pop;
    pop.dataset_id = "ood_test";
    pop.n = args.n_test_ood;
    pop.shifts = args.shifts.empty()
                     ? std::vector<double>(args.m, args.shift)
                     : parse_double_list(args.shifts, "--shifts");
    sc.ood_pops.push_back(std::move(pop));
  }
  dsde::validate_scenario(sc);
  dsde::write_file(args.out, dsde::score_table_to_csv(dsde::gen_scores(sc)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Out-of-distribution detection over a model library: empirical "
               "CDF p-values, DOS-Storey proportion estimation, and adaptive "
               "step-up verdicts"};
  app.set_version_flag("--version", std::string("dsde ") + dsde::kVersion);
  app.require_subcommand(1);

  ScoreArgs score_args;
  auto* score = app.add_subcommand("score", "score exported logits/embeddings");
  score->add_option("--input", score_args.input, "NDJSON records")->required();
  score->add_option("--scorer", score_args.scorer, "msp|energy|knn");
  score->add_option("--dataset-id", score_args.dataset_id, "output dataset id")
      ->required();
  score->add_option("--model-id", score_args.model_id, "output model id")->required();
  score->add_option("--label", score_args.label, "ID|OOD|UNKNOWN");
  score->add_option("--bank", score_args.bank_path, "feature bank NDJSON (knn)");
  score->add_option("--temperature", score_args.temperature, "energy temperature");
  score->add_option("-k,--knn-k", score_args.k, "neighbor rank (knn)");
  score->add_option("--out", score_args.out, "output score CSV")->required();

  CalibrateArgs cal_args;
  auto* calibrate = app.add_subcommand("calibrate", "build a calibration bank");
  calibrate->add_option("--scores", cal_args.scores, "calibration score CSV")
      ->required();
  calibrate->add_option("--dataset", cal_args.dataset,
                        "use only this dataset's rows");
  calibrate->add_option("--out", cal_args.out, "output bank JSON")->required();

  DetectArgs detect_args;
  auto* detect = app.add_subcommand("detect", "per-sample ensemble verdicts");
  detect->add_option("--scores", detect_args.scores, "test score CSV")->required();
  detect->add_option("--bank", detect_args.bank, "calibration bank JSON")->required();
  detect->add_option("--dataset", detect_args.dataset, "use only this dataset's rows");
  detect->add_option("--out", detect_args.out, "output verdicts NDJSON")->required();
  detect_args.config.attach(detect);

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "metric report (JSON + Markdown)");
  eval->add_option("--scores", eval_args.scores, "test score CSV");
  eval->add_option("--bank", eval_args.bank, "calibration bank JSON");
  eval->add_option("--verdicts", eval_args.verdicts, "verdicts NDJSON from detect");
  eval->add_option("--labels", eval_args.labels, "score CSV supplying labels");
  eval->add_option("--id-dataset", eval_args.id_dataset, "ID test split dataset id")
      ->required();
  eval->add_option("--ood-datasets", eval_args.ood_datasets,
                   "comma-separated OoD dataset ids (default: all others)");
  eval->add_option("--methods", eval_args.methods,
                   "comma-separated methods to tabulate");
  eval->add_option("--out-json", eval_args.out_json, "output report JSON")->required();
  eval->add_option("--out-md", eval_args.out_md, "output Markdown table");
  eval_args.config.attach(eval);

  auto* synth = app.add_subcommand("synth", "synthetic generators and reports");
  synth->require_subcommand(1);

  NullRateArgs nr_args;
  auto* nullrate = synth->add_subcommand("nullrate", "global-null ID-rate MC");
  nullrate->add_option("--m", nr_args.m, "library size");
  nullrate->add_option("--trials", nr_args.trials, "MC trials");
  nullrate->add_option("--out", nr_args.out, "output report JSON")->required();
  nr_args.config.attach(nullrate);

  EstimatorsArgs est_args;
  auto* estimators = synth->add_subcommand("estimators", "pi0 estimator RMSE grid");
  estimators->add_option("--m", est_args.m, "tests per trial");
  estimators->add_option("--pi0", est_args.pi0, "comma-separated true pi0 values");
  estimators->add_option("--alt-shape", est_args.alt_shape, "Beta(a,1) shape");
  estimators->add_option("--trials", est_args.trials, "MC trials");
  estimators->add_option("--out", est_args.out, "output report JSON")->required();
  est_args.config.attach(estimators);

  PValuesArgs pv_args;
  auto* pvalues = synth->add_subcommand("pvalues", "draw p-value mixtures");
  pvalues->add_option("--m", pv_args.m, "tests per trial");
  pvalues->add_option("--m0", pv_args.m0, "true nulls per trial");
  pvalues->add_option("--alt-shape", pv_args.alt_shape, "Beta(a,1) shape");
  pvalues->add_option("--trials", pv_args.trials, "trials");
  pvalues->add_option("--out", pv_args.out, "output CSV")->required();
  pv_args.config.attach(pvalues);

  ScoresArgs sc_args;
  auto* scores = synth->add_subcommand("scores", "generate a score table");
  scores->add_option("--scenario", sc_args.scenario_path, "scenario JSON");
  scores->add_option("--m", sc_args.m, "model count");
  scores->add_option("--n-calib", sc_args.n_calib, "calibration samples");
  scores->add_option("--n-test-id", sc_args.n_test_id, "ID test samples");
  scores->add_option("--n-test-ood", sc_args.n_test_ood, "OoD test samples");
  scores->add_option("--shift", sc_args.shift, "uniform OoD mean shift");
  scores->add_option("--shifts", sc_args.shifts, "comma-separated per-model shifts");
  scores->add_option("--out", sc_args.out, "output score CSV")->required();
  sc_args.config.attach(scores);

  CLI11_PARSE(app, argc, argv);

  try {
    if (score->parsed()) return run_score(score_args);
    if (calibrate->parsed()) return run_calibrate(cal_args);
    if (detect->parsed()) return run_detect(detect_args);
    if (eval->parsed()) {
      if (!eval_args.verdicts.empty()) {
        if (eval_args.labels.empty())
          dsde::fail(ErrorCode::INVALID_CONFIG, "--verdicts mode needs --labels");
        return run_eval_verdicts(eval_args);
      }
      if (eval_args.scores.empty() || eval_args.bank.empty())
        dsde::fail(ErrorCode::INVALID_CONFIG,
                   "eval needs either --verdicts/--labels or --scores/--bank");
      return run_eval_scores(eval_args);
    }
    if (synth->parsed()) {
      if (nullrate->parsed()) return run_synth_nullrate(nr_args);
      if (estimators->parsed()) return run_synth_estimators(est_args);
      if (pvalues->parsed()) return run_synth_pvalues(pv_args);
      if (scores->parsed()) return run_synth_scores(sc_args);
    }
  } catch (const Error& e) {
    std::cerr << "dsde: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "dsde: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
