#include <doctest.h>

#include <cstdio>
#include <string>
#include <vector>

#include "dsde/io.hpp"

using namespace dsde;

TEST_SUITE("io") {

TEST_CASE("doubles round-trip through shortest formatting") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 2.5e17, -0.0, 123456.789,
                   0.30000000000000004}) {
    const std::string text = format_double(v);
    CHECK(parse_double(text, 1) == v);
  }
}

TEST_CASE("score csv round-trips including quoting") {
  ScoreTable t;
  t.rows.push_back({"d1", "s1", "m1", 0.25, Label::ID});
  t.rows.push_back({"d1", "s,with,commas", "m\"q\"", -1.5e-12, Label::OOD});
  t.rows.push_back({"d2", "s2", "m1", 3.0, Label::UNKNOWN});
  const std::string csv = score_table_to_csv(t);
  const ScoreTable back = score_table_from_csv_text(csv);
  REQUIRE(back.rows.size() == t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    CHECK(back.rows[i].dataset_id == t.rows[i].dataset_id);
    CHECK(back.rows[i].sample_id == t.rows[i].sample_id);
    CHECK(back.rows[i].model_id == t.rows[i].model_id);
    CHECK(back.rows[i].score == t.rows[i].score);
    CHECK(back.rows[i].label == t.rows[i].label);
  }
}

TEST_CASE("csv parse errors carry line numbers") {
  const std::string bad_header = "a,b,c\n";
  CHECK_THROWS_WITH_AS(score_table_from_csv_text(bad_header),
                       doctest::Contains("line 1"), Error);
  const std::string bad_fields =
      std::string(kScoreCsvHeader) + "\nd,s,m,1.0,ID\nd,s2,m\n";
  CHECK_THROWS_WITH_AS(score_table_from_csv_text(bad_fields),
                       doctest::Contains("line 3"), Error);
  const std::string bad_number = std::string(kScoreCsvHeader) + "\nd,s,m,zz,ID\n";
  CHECK_THROWS_WITH_AS(score_table_from_csv_text(bad_number),
                       doctest::Contains("malformed number"), Error);
  const std::string bad_label = std::string(kScoreCsvHeader) + "\nd,s,m,1.0,id\n";
  CHECK_THROWS_WITH_AS(score_table_from_csv_text(bad_label),
                       doctest::Contains("unknown label"), Error);
}

TEST_CASE("nan scores parse and are left to validation") {
  const std::string csv = std::string(kScoreCsvHeader) + "\nd,s,m,nan,ID\n";
  const auto table = score_table_from_csv_text(csv);
  const auto violations = validate_table(table);
  REQUIRE(violations.size() == 1);
  CHECK(violations[0].kind == Violation::Kind::NONFINITE_SCORE);
}

TEST_CASE("vector ndjson parses records and rejects ragged dimensions") {
  const std::string good =
      R"({"sample_id": "a", "vector": [1.0, 2.0]})"
      "\n"
      R"({"sample_id": "b", "vector": [3, 4]})"
      "\n";
  const auto records = vector_records_from_text(good);
  REQUIRE(records.size() == 2);
  CHECK(records[0].sample_id == "a");
  CHECK(records[1].values == std::vector<double>{3.0, 4.0});

  const std::string ragged =
      R"({"sample_id": "a", "vector": [1.0, 2.0]})"
      "\n"
      R"({"sample_id": "b", "vector": [3.0]})"
      "\n";
  CHECK_THROWS_WITH_AS(vector_records_from_text(ragged), doctest::Contains("line 2"),
                       Error);

  CHECK_THROWS_WITH_AS(vector_records_from_text("{not json}\n"),
                       doctest::Contains("line 1"), Error);
  CHECK_THROWS_WITH_AS(vector_records_from_text(R"({"sample_id": "a"})" "\n"),
                       doctest::Contains("line 1"), Error);
  CHECK(vector_records_from_text("").empty());
}

TEST_CASE("bank json round-trips") {
  CalibrationBank bank;
  bank.emplace("m1", build_ecdf(std::vector<double>{3.0, 1.0, 2.0}));
  bank.emplace("m2", build_ecdf(std::vector<double>{0.5}));
  const std::string text = bank_to_json_text(bank);
  const CalibrationBank back = bank_from_json_text(text);
  REQUIRE(back.size() == 2);
  CHECK(back.at("m1").sorted_scores == std::vector<double>{1.0, 2.0, 3.0});
  CHECK(back.at("m2").n() == 1);
  // serialization is stable
  CHECK(bank_to_json_text(back) == text);
}

TEST_CASE("bank json validation") {
  CHECK_THROWS_AS(bank_from_json_text("[]"), Error);
  CHECK_THROWS_AS(bank_from_json_text("{}"), Error);
  CHECK_THROWS_AS(bank_from_json_text(R"({"m": {"n": 2, "scores": [1.0]}})"), Error);
  CHECK_THROWS_AS(bank_from_json_text(R"({"m": {"scores": "no"}})"), Error);
}

TEST_CASE("config json round-trips and rejects unknown keys") {
  ExperimentConfig cfg;
  cfg.alpha = 0.1;
  cfg.method = Method::VOTE;
  cfg.pi0_floor = 0.05;
  cfg.alpha_grid = {0.1, 0.2};
  const json obj = config_to_json(cfg);
  ExperimentConfig back;
  apply_config_json(back, obj);
  CHECK(back.alpha == 0.1);
  CHECK(back.method == Method::VOTE);
  CHECK(back.pi0_floor == 0.05);
  CHECK(back.alpha_grid == std::vector<double>{0.1, 0.2});

  ExperimentConfig other;
  CHECK_THROWS_AS(apply_config_json(other, json{{"alhpa", 0.1}}), Error);
  CHECK_THROWS_AS(apply_config_json(other, json{{"method", "zode"}}), Error);
  // null pi0_floor resets to the 1/m default
  apply_config_json(other, json{{"pi0_floor", nullptr}});
  CHECK_FALSE(other.pi0_floor.has_value());
}

TEST_CASE("manifest embeds digests, seed, version") {
  const char* path = "manifest_input_test.tmp";
  write_file(path, "hello digest");
  ExperimentConfig cfg;
  const RunManifest m = make_manifest(cfg, {path}, 42);
  const json j = manifest_to_json(m);
  CHECK(j["seed"] == 42);
  CHECK(j["version"] == kVersion);
  CHECK(j["inputs"][path] == Sha256::hex("hello digest"));
  CHECK(j["config"]["alpha"] == 0.05);
  CHECK_FALSE(j["timestamp"].get<std::string>().empty());
  std::remove(path);
}

TEST_CASE("verdict json carries per-model p-values") {
  Verdict v;
  v.sample_id = "x";
  v.decision = Decision::OOD;
  v.k_hat = 2;
  v.pi0_hat = 0.5;
  v.flagged_models = {"a", "b"};
  const json j = verdict_to_json(v, {"a", "b", "c"}, {0.01, 0.02, 0.9});
  CHECK(j["sample_id"] == "x");
  CHECK(j["decision"] == "OOD");
  CHECK(j["k_hat"] == 2);
  CHECK(j["pvalues"]["c"] == 0.9);
  Verdict id_v;
  id_v.sample_id = "y";
  const json j2 = verdict_to_json(id_v, {"a"}, {0.5});
  CHECK(j2["k_hat"].is_null());
  CHECK(j2["decision"] == "ID");
}

TEST_CASE("markdown table has method rows and an average column") {
  std::vector<MetricRow> rows;
  rows.push_back({"dsde", "ood_a", 0.9491, 0.0192, 0.9946, 0.05});
  rows.push_back({"dsde", "ood_b", 0.9491, 0.0137, 0.9963, 0.05});
  rows.push_back({"dsde", "Average", 0.9491, 0.01645, 0.99545, 0.05});
  rows.push_back({"bh", "ood_a", 0.9496, 0.0212, 0.9943, 0.05});
  rows.push_back({"bh", "ood_b", 0.9496, 0.0150, 0.9961, 0.05});
  rows.push_back({"bh", "Average", 0.9496, 0.0181, 0.9952, 0.05});
  const std::string md = metric_rows_to_markdown(rows);
  CHECK(md.find("| dsde | 94.91 |") != std::string::npos);
  CHECK(md.find("ood_a (FPR/AUC)") != std::string::npos);
  CHECK(md.find("Average (FPR/AUC)") != std::string::npos);
  CHECK(md.find("1.92/99.46") != std::string::npos);
  CHECK(md.find("| bh | 94.96 |") != std::string::npos);
}

}  // TEST_SUITE
