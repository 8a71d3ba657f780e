#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dsde/io.hpp"

using namespace dsde;
namespace fs = std::filesystem;

namespace {

struct CliFixture {
  fs::path dir;
  std::string bin;

  CliFixture() {
    const char* env = std::getenv("DSDE_BIN");
    REQUIRE_MESSAGE(env != nullptr, "DSDE_BIN must point at the dsde binary");
    bin = env;
    dir = fs::temp_directory_path() / ("dsde_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    // pin the manifest clock so rerun outputs are byte-identical
    setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  }

  ~CliFixture() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }

  std::string path(const std::string& name) const { return (dir / name).string(); }

  int run(const std::string& args) const {
    const std::string cmd = bin + " " + args + " 2>" + path("stderr.txt");
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  }

  std::string stderr_text() const { return read_file(path("stderr.txt")); }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("score msp maps ndjson records to csv rows") {
  CliFixture fx;
  write_file(fx.path("in.ndjson"),
             R"({"sample_id": "a", "vector": [0.0, 0.0]})"
             "\n"
             R"({"sample_id": "b", "vector": [2.0, 0.0]})"
             "\n");
  const int rc = fx.run("score --input " + fx.path("in.ndjson") +
                        " --scorer msp --dataset-id d --model-id m --out " +
                        fx.path("out.csv"));
  CHECK(rc == 0);
  const auto table = read_score_csv(fx.path("out.csv"));
  REQUIRE(table.rows.size() == 2);
  CHECK(table.rows[0].score == doctest::Approx(0.5));
  CHECK(table.rows[0].label == Label::UNKNOWN);
}

TEST_CASE("score on an empty file emits a bare header and exits 0") {
  CliFixture fx;
  write_file(fx.path("in.ndjson"), "");
  const int rc = fx.run("score --input " + fx.path("in.ndjson") +
                        " --scorer energy --dataset-id d --model-id m --out " +
                        fx.path("out.csv"));
  CHECK(rc == 0);
  CHECK(read_file(fx.path("out.csv")) == std::string(kScoreCsvHeader) + "\n");
}

TEST_CASE("score reports the malformed line and exits 2") {
  CliFixture fx;
  write_file(fx.path("in.ndjson"),
             R"({"sample_id": "a", "vector": [0.0, 0.0]})"
             "\n"
             R"({"sample_id": "b", "vector": [1.0]})"
             "\n");
  const int rc = fx.run("score --input " + fx.path("in.ndjson") +
                        " --scorer msp --dataset-id d --model-id m --out " +
                        fx.path("out.csv"));
  CHECK(rc == 2);
  CHECK(fx.stderr_text().find("line 2") != std::string::npos);
}

TEST_CASE("score knn dimension mismatch against the bank exits 3") {
  CliFixture fx;
  write_file(fx.path("bank.ndjson"),
             R"({"sample_id": "b1", "vector": [1.0, 0.0]})"
             "\n"
             R"({"sample_id": "b2", "vector": [0.0, 1.0]})"
             "\n");
  write_file(fx.path("in.ndjson"),
             R"({"sample_id": "q", "vector": [1.0, 0.0, 0.0]})"
             "\n");
  const int rc = fx.run("score --input " + fx.path("in.ndjson") +
                        " --scorer knn --bank " + fx.path("bank.ndjson") +
                        " -k 1 --dataset-id d --model-id m --out " + fx.path("o.csv"));
  CHECK(rc == 3);
  CHECK(fx.stderr_text().find("DIMENSION_MISMATCH") != std::string::npos);
}

TEST_CASE("calibrate builds a sorted bank and is idempotent") {
  CliFixture fx;
  ScoreTable t;
  for (int i = 0; i < 100; ++i) {
    t.rows.push_back({"cal", "s" + std::to_string(i), "m1", 100.0 - i, Label::ID});
    t.rows.push_back({"cal", "s" + std::to_string(i), "m2", i * 0.5, Label::ID});
  }
  write_file(fx.path("cal.csv"), score_table_to_csv(t));
  CHECK(fx.run("calibrate --scores " + fx.path("cal.csv") + " --out " +
               fx.path("bank.json")) == 0);
  const auto bank = read_bank(fx.path("bank.json"));
  REQUIRE(bank.size() == 2);
  CHECK(bank.at("m1").n() == 100);
  CHECK(std::is_sorted(bank.at("m1").sorted_scores.begin(),
                       bank.at("m1").sorted_scores.end()));
  const std::string first = read_file(fx.path("bank.json"));
  CHECK(fx.run("calibrate --scores " + fx.path("cal.csv") + " --out " +
               fx.path("bank2.json")) == 0);
  CHECK(read_file(fx.path("bank2.json")) == first);
}

TEST_CASE("calibrate rejects non-finite scores naming the row") {
  CliFixture fx;
  write_file(fx.path("cal.csv"),
             std::string(kScoreCsvHeader) + "\ncal,s0,m1,1.5,ID\ncal,s1,m1,nan,ID\n");
  const int rc = fx.run("calibrate --scores " + fx.path("cal.csv") + " --out " +
                        fx.path("bank.json"));
  CHECK(rc == 2);
  CHECK(fx.stderr_text().find("NONFINITE_SCORE") != std::string::npos);
  CHECK(fx.stderr_text().find("s1") != std::string::npos);
}

TEST_CASE("calibrate rejects ragged coverage") {
  CliFixture fx;
  write_file(fx.path("cal.csv"), std::string(kScoreCsvHeader) +
                                     "\ncal,s0,m1,1.5,ID\ncal,s0,m2,1.0,ID\n"
                                     "cal,s1,m1,2.0,ID\n");
  const int rc = fx.run("calibrate --scores " + fx.path("cal.csv") + " --out " +
                        fx.path("bank.json"));
  CHECK(rc == 2);
  CHECK(fx.stderr_text().find("RAGGED_COVERAGE") != std::string::npos);
}

namespace {

// Bank whose literal p-values are count(<= s)/100 for scores 1..100.
void write_grid_bank(const CliFixture& fx, const std::string& name) {
  CalibrationBank bank;
  std::vector<double> grid;
  for (int i = 1; i <= 100; ++i) grid.push_back(i);
  for (const char* model : {"A", "B", "C", "D"}) bank.emplace(model, build_ecdf(grid));
  write_file(fx.path(name), bank_to_json_text(bank));
}

}  // namespace

TEST_CASE("detect reproduces the four-model worked example") {
  CliFixture fx;
  write_grid_bank(fx, "bank.json");
  ScoreTable t;
  t.rows.push_back({"t", "x", "A", 1.0, Label::UNKNOWN});
  t.rows.push_back({"t", "x", "B", 2.0, Label::UNKNOWN});
  t.rows.push_back({"t", "x", "C", 50.0, Label::UNKNOWN});
  t.rows.push_back({"t", "x", "D", 90.0, Label::UNKNOWN});
  write_file(fx.path("test.csv"), score_table_to_csv(t));
  const int rc = fx.run("detect --scores " + fx.path("test.csv") + " --bank " +
                        fx.path("bank.json") +
                        " --pvalue-mode literal --cm 0.25 --method dsde --out " +
                        fx.path("v.ndjson"));
  REQUIRE(rc == 0);
  std::ifstream in(fx.path("v.ndjson"));
  std::string manifest_line;
  std::string verdict_line;
  REQUIRE(std::getline(in, manifest_line));
  REQUIRE(std::getline(in, verdict_line));
  const json manifest = json::parse(manifest_line);
  CHECK(manifest.contains("manifest"));
  CHECK(manifest["manifest"]["config"]["pvalue_mode"] == "literal");
  const json v = json::parse(verdict_line);
  CHECK(v["sample_id"] == "x");
  CHECK(v["decision"] == "OOD");
  CHECK(v["k_hat"] == 2);
  CHECK(v["pi0_hat"].get<double>() == doctest::Approx(0.5 / 0.98).epsilon(1e-9));
  CHECK(v["flagged_models"] == json::array({"A", "B"}));
  CHECK(v["pvalues"]["A"].get<double>() == doctest::Approx(0.01));
  CHECK(v["pvalues"]["D"].get<double>() == doctest::Approx(0.9));
}

TEST_CASE("detect keeps a sample scoring above every calibration point") {
  CliFixture fx;
  write_grid_bank(fx, "bank.json");
  ScoreTable t;
  for (const char* model : {"A", "B", "C", "D"})
    t.rows.push_back({"t", "x", model, 1000.0, Label::UNKNOWN});
  write_file(fx.path("test.csv"), score_table_to_csv(t));
  const int rc = fx.run("detect --scores " + fx.path("test.csv") + " --bank " +
                        fx.path("bank.json") +
                        " --pvalue-mode literal --cm 0.25 --out " + fx.path("v.ndjson"));
  REQUIRE(rc == 0);
  std::ifstream in(fx.path("v.ndjson"));
  std::string line;
  std::getline(in, line);  // manifest
  std::getline(in, line);
  const json v = json::parse(line);
  CHECK(v["decision"] == "ID");
  CHECK(v["pvalues"]["A"] == 1.0);
}

TEST_CASE("detect with an uncalibrated model exits 4 naming it") {
  CliFixture fx;
  write_grid_bank(fx, "bank.json");
  ScoreTable t;
  for (const char* model : {"A", "B", "C", "E"})
    t.rows.push_back({"t", "x", model, 10.0, Label::UNKNOWN});
  write_file(fx.path("test.csv"), score_table_to_csv(t));
  const int rc = fx.run("detect --scores " + fx.path("test.csv") + " --bank " +
                        fx.path("bank.json") + " --out " + fx.path("v.ndjson"));
  CHECK(rc == 4);
  CHECK(fx.stderr_text().find("MISSING_CALIBRATION") != std::string::npos);
  CHECK(fx.stderr_text().find("E") != std::string::npos);
}

TEST_CASE("detect is byte-identical across reruns") {
  CliFixture fx;
  CHECK(fx.run("synth scores --m 3 --n-calib 200 --n-test-id 50 --n-test-ood 50 "
               "--shift 2 --seed 7 --out " +
               fx.path("all.csv")) == 0);
  CHECK(fx.run("calibrate --scores " + fx.path("all.csv") +
               " --dataset calibration --out " + fx.path("bank.json")) == 0);
  const std::string detect_cmd = "detect --scores " + fx.path("all.csv") + " --bank " +
                                 fx.path("bank.json") + " --cm 0.3 --out ";
  CHECK(fx.run(detect_cmd + fx.path("v1.ndjson")) == 0);
  CHECK(fx.run(detect_cmd + fx.path("v2.ndjson")) == 0);
  CHECK(read_file(fx.path("v1.ndjson")) == read_file(fx.path("v2.ndjson")));
}

TEST_CASE("eval produces a report that matches recounting the verdicts") {
  CliFixture fx;
  CHECK(fx.run("synth scores --m 4 --n-calib 400 --n-test-id 120 --n-test-ood 150 "
               "--shift 2.5 --seed 11 --out " +
               fx.path("all.csv")) == 0);
  CHECK(fx.run("calibrate --scores " + fx.path("all.csv") +
               " --dataset calibration --out " + fx.path("bank.json")) == 0);
  // drop calibration rows for the test split
  const auto full = read_score_csv(fx.path("all.csv"));
  ScoreTable test_only;
  for (const auto& r : full.rows)
    if (r.dataset_id != "calibration") test_only.rows.push_back(r);
  write_file(fx.path("test.csv"), score_table_to_csv(test_only));

  CHECK(fx.run("detect --scores " + fx.path("test.csv") + " --bank " +
               fx.path("bank.json") + " --cm 0.3 --out " + fx.path("v.ndjson")) == 0);
  CHECK(fx.run("eval --verdicts " + fx.path("v.ndjson") + " --labels " +
               fx.path("test.csv") + " --id-dataset id_test --cm 0.3 --alpha-grid " +
               "0.01,0.05,0.1,0.3,0.5,0.7,0.9 --out-json " + fx.path("report.json") +
               " --out-md " + fx.path("report.md")) == 0);

  const json report = json::parse(read_file(fx.path("report.json")));
  REQUIRE(report["rows"].size() == 2);  // ood_test + Average

  // independent recount from the verdicts file
  std::ifstream in(fx.path("v.ndjson"));
  std::string line;
  std::getline(in, line);  // manifest
  std::size_t id_total = 0, id_kept = 0, ood_total = 0, ood_kept = 0;
  while (std::getline(in, line)) {
    const json v = json::parse(line);
    const bool kept = v["decision"] == "ID";
    if (v["dataset_id"] == "id_test") {
      ++id_total;
      id_kept += kept ? 1 : 0;
    } else {
      ++ood_total;
      ood_kept += kept ? 1 : 0;
    }
  }
  const double tpr = static_cast<double>(id_kept) / id_total;
  const double fpr = static_cast<double>(ood_kept) / ood_total;
  for (const auto& row : report["rows"]) {
    CHECK(row["tpr"].get<double>() == doctest::Approx(tpr).epsilon(1e-12));
    if (row["dataset_id"] == "ood_test")
      CHECK(row["fpr"].get<double>() == doctest::Approx(fpr).epsilon(1e-12));
  }
  CHECK(read_file(fx.path("report.md")).find("Average (FPR/AUC)") != std::string::npos);
}

TEST_CASE("eval scores mode is deterministic and shaped method x dataset") {
  CliFixture fx;
  CHECK(fx.run("synth scores --m 3 --n-calib 300 --n-test-id 80 --n-test-ood 80 "
               "--shift 3 --seed 23 --out " +
               fx.path("all.csv")) == 0);
  CHECK(fx.run("calibrate --scores " + fx.path("all.csv") +
               " --dataset calibration --out " + fx.path("bank.json")) == 0);
  const auto full = read_score_csv(fx.path("all.csv"));
  ScoreTable test_only;
  for (const auto& r : full.rows)
    if (r.dataset_id != "calibration") test_only.rows.push_back(r);
  write_file(fx.path("test.csv"), score_table_to_csv(test_only));

  const std::string cmd = "eval --scores " + fx.path("test.csv") + " --bank " +
                          fx.path("bank.json") +
                          " --id-dataset id_test --methods dsde,bh --cm 0.3 "
                          "--alpha-grid 0.01,0.05,0.2,0.5,0.9 --out-json ";
  CHECK(fx.run(cmd + fx.path("r1.json") + " --out-md " + fx.path("r1.md")) == 0);
  CHECK(fx.run(cmd + fx.path("r2.json") + " --out-md " + fx.path("r2.md")) == 0);
  CHECK(read_file(fx.path("r1.json")) == read_file(fx.path("r2.json")));
  CHECK(read_file(fx.path("r1.md")) == read_file(fx.path("r2.md")));
  const json report = json::parse(read_file(fx.path("r1.json")));
  REQUIRE(report["rows"].size() == 4);  // 2 methods x (1 dataset + average)
  CHECK(report["manifest"]["inputs"].size() == 2);
}

TEST_CASE("eval with a mislabeled split exits 5") {
  CliFixture fx;
  CHECK(fx.run("synth scores --m 2 --n-calib 100 --n-test-id 30 --n-test-ood 30 "
               "--shift 1 --seed 3 --out " +
               fx.path("all.csv")) == 0);
  CHECK(fx.run("calibrate --scores " + fx.path("all.csv") +
               " --dataset calibration --out " + fx.path("bank.json")) == 0);
  const int rc = fx.run("eval --scores " + fx.path("all.csv") + " --bank " +
                        fx.path("bank.json") + " --id-dataset ood_test --out-json " +
                        fx.path("r.json"));
  CHECK(rc == 5);
}

TEST_CASE("synth nullrate embeds analytic values and reruns identically") {
  CliFixture fx;
  const std::string cmd =
      "synth nullrate --method naive --m 7 --alpha 0.05 --trials 4000 --seed 5 --out ";
  CHECK(fx.run(cmd + fx.path("n1.json")) == 0);
  CHECK(fx.run(cmd + fx.path("n2.json")) == 0);
  CHECK(read_file(fx.path("n1.json")) == read_file(fx.path("n2.json")));
  const json rep = json::parse(read_file(fx.path("n1.json")));
  CHECK(rep["report"]["analytic_id_rate"].get<double>() ==
        doctest::Approx(0.698337).epsilon(1e-5));
  const double observed = rep["report"]["observed_id_rate"].get<double>();
  CHECK(observed > 0.65);
  CHECK(observed < 0.75);
}

TEST_CASE("synth estimators reports satisfy the rmse identity") {
  CliFixture fx;
  CHECK(fx.run("synth estimators --m 60 --pi0 0.5,0.9 --alt-shape 0.1 --trials 400 "
               "--seed 9 --cm 0.03 --out " +
               fx.path("est.json")) == 0);
  const json rep = json::parse(read_file(fx.path("est.json")));
  REQUIRE(rep["reports"].size() == 8);  // 2 scenarios x 4 estimators
  for (const auto& row : rep["reports"]) {
    const double rmse = row["rmse"].get<double>();
    const double bias = row["bias"].get<double>();
    const double var = row["variance"].get<double>();
    CHECK(rmse * rmse == doctest::Approx(bias * bias + var).epsilon(1e-9));
  }
}

TEST_CASE("synth pvalues is reproducible and in range") {
  CliFixture fx;
  const std::string cmd =
      "synth pvalues --m 5 --m0 2 --alt-shape 0.2 --trials 20 --seed 77 --out ";
  CHECK(fx.run(cmd + fx.path("p1.csv")) == 0);
  CHECK(fx.run(cmd + fx.path("p2.csv")) == 0);
  CHECK(read_file(fx.path("p1.csv")) == read_file(fx.path("p2.csv")));
  std::ifstream in(fx.path("p1.csv"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "trial,draw,p");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 100);
}

TEST_CASE("invalid configuration exits 2") {
  CliFixture fx;
  write_file(fx.path("in.ndjson"), "");
  CHECK(fx.run("synth nullrate --method naive --m 7 --alpha 1.5 --trials 10 --out " +
               fx.path("x.json")) == 2);
  CHECK(fx.run("synth scores --m 2 --shifts 1,2,3 --out " + fx.path("y.csv")) == 2);
}

}  // TEST_SUITE
