// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "carboneval/calibration.hpp"
#include "carboneval/core.hpp"
#include "test_util.hpp"

using namespace carboneval;
using testutil::code_of;

namespace {

const std::string kHeader = std::string(kRecordsHeader) + "\n";

// |a - b| measured in units in the last place of the larger magnitude.
double ulps(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return std::abs(a - b) / (scale * std::numeric_limits<double>::epsilon());
}

std::vector<Calibration> samples_for(std::string family, std::initializer_list<double> xs) {
  std::vector<Calibration> out;
  int i = 0;
  for (double x : xs) out.push_back({"m" + std::to_string(i++), family, x});
  return out;
}

}  // namespace

TEST_CASE("ingest maps rows and rejects invalid ones with reasons") {
  const std::string csv = kHeader +
                          "LLaMa-3,,,6.3e24,H100,,6.6e6,,,424,1900,,\n"
                          "NoCompute,,,,H100,,1000,,,424,,,\n"
                          "Derived,7e10,1.5e13,,H100,,1000,,,424,,,\n"
                          "BadNumber,1e9,abc,,H100,,1000,,,424,,,\n"
                          "Negative,-1,1e9,,H100,,1000,,,424,,,\n"
                          "Short,1,2,3\n"
                          ",1,1,,H100,,1,,,1,,,\n"
                          "NoDevice,,,1e20,,,1,,,1,,,\n"
                          "NoTime,,,1e20,A100,,,,,1,,,\n"
                          "\"Quoted, name\",,,1e20,A100,8,,12,US,,,mmlu,50\n";
  const IngestResult r = parse_records_csv(csv);
  REQUIRE(r.records.size() == 3);
  CHECK(r.records[0].model == "LLaMa-3");
  CHECK(r.records[0].total_flops == 6.3e24);
  CHECK(r.records[0].gpu_hours == 6.6e6);
  CHECK(r.records[0].line == 2);
  CHECK(r.records[1].model == "Derived");
  CHECK(r.records[2].model == "Quoted, name");
  CHECK(r.records[2].device_count == 8);
  CHECK(r.records[2].region == "US");
  CHECK(r.records[2].metric_value == 50);

  REQUIRE(r.rejected.size() == 7);
  CHECK(r.rejected[0].model == "NoCompute");
  CHECK(r.rejected[0].reason == "no compute derivable");
  CHECK(r.rejected[0].line == 3);
  CHECK(r.rejected[1].reason == "field 'data_size' is not a number");
  CHECK(r.rejected[2].reason == "field 'params' is negative");
  CHECK(r.rejected[3].reason == "expected 13 fields, found 4");
  CHECK(r.rejected[4].reason == "missing model name");
  CHECK(r.rejected[5].reason == "missing device");
  CHECK(r.rejected[6].reason == "no gpu-time derivable");

  const IngestResult prospective = parse_records_csv(csv, IngestOptions{.require_gpu_time = false});
  CHECK(prospective.records.size() == 4);

  CHECK(code_of([] { parse_records_csv(""); }) == ErrorCode::kParse);
  CHECK(code_of([] { parse_records_csv("model,params\n"); }) == ErrorCode::kParse);
  CHECK(code_of([] { ingest_records("/nonexistent.csv"); }) == ErrorCode::kIo);
}

TEST_CASE("derive compute and gpu-time") {
  TrainingRecord llama;
  llama.params = 70e9;
  llama.data_size = 15e12;
  CHECK(derive_compute(llama).flops() == doctest::Approx(6.3e24).epsilon(1e-15));
  TrainingRecord glm;
  glm.params = 130e9;
  glm.data_size = 400e9;
  CHECK(derive_compute(glm).flops() == doctest::Approx(3.12e23).epsilon(1e-15));
  CHECK(derive_compute(glm, 2.0).flops() == doctest::Approx(1.04e23).epsilon(1e-15));
  glm.total_flops = 1e20;
  CHECK(derive_compute(glm).flops() == doctest::Approx(1e20));
  TrainingRecord zero;
  zero.params = 1e9;
  zero.data_size = 0;
  CHECK(derive_compute(zero).tflop() == 0.0);
  CHECK(code_of([] { derive_compute(TrainingRecord{}); }) == ErrorCode::kInvalidArgument);

  TrainingRecord t;
  t.gpu_hours = 1000;
  CHECK(derive_gpu_time(t).seconds() == 3.6e6);
  TrainingRecord fleet;
  fleet.device_count = 768;
  fleet.wall_hours = 1440;
  CHECK(derive_gpu_time(fleet).hours() == doctest::Approx(1.10592e6));
  fleet.gpu_hours = 5;
  CHECK(derive_gpu_time(fleet).hours() == doctest::Approx(5.0));
  CHECK(code_of([] { derive_gpu_time(TrainingRecord{}); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("calibrate_record") {
  const DeviceDb db = builtin_db();
  TrainingRecord glm;
  glm.model = "GLM";
  glm.total_flops = 3.12e23;
  glm.gpu_hours = 4289638554.22 / 3600;
  glm.device_raw = "A100";
  const Calibration c = calibrate_record(glm, db);
  CHECK(c.family == "A100");
  CHECK(c.log10_alpha == doctest::Approx(22.3895883740017).epsilon(1e-10));
  CHECK(calibrate_record(glm, db).log10_alpha == c.log10_alpha);

  TrainingRecord bloom = glm;
  bloom.total_flops = 3.87e23;
  bloom.gpu_hours = 3467368421.05 / 3600;
  CHECK(calibrate_record(bloom, db).log10_alpha == doctest::Approx(39.3667796993197).epsilon(1e-10));

  glm.device_raw = "Cerebras CS-2";
  CHECK(code_of([&] { calibrate_record(glm, db); }) == ErrorCode::kUnknownDevice);
}

TEST_CASE("aggregate_stats hand-computed cases") {
  const auto three = aggregate_stats(samples_for("A100", {40, 20, 30}));
  const AlphaStats& s = three.at("A100");
  CHECK(s.n == 3);
  CHECK(s.samples == std::vector<double>{20, 30, 40});
  CHECK(s.mu == 30);
  CHECK(s.sigma == 10);
  CHECK(s.interval_lo == doctest::Approx(24));
  CHECK(s.interval_hi == doctest::Approx(36));
  CHECK(s.representative == 30);
  CHECK(s.flagged.empty());

  const auto one = aggregate_stats(samples_for("V100", {7}));
  CHECK(one.at("V100").sigma == 0);
  CHECK(one.at("V100").interval_lo == 7);
  CHECK(one.at("V100").interval_hi == 7);

  CHECK(aggregate_stats({}).empty());

  std::vector<Calibration> outlier = samples_for("K80", {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 100});
  const auto flagged = aggregate_stats(outlier);
  CHECK(flagged.at("K80").flagged == std::vector<double>{100});
  CHECK(flagged.at("K80").samples.size() == 13);
}

TEST_CASE("aggregate_stats on 1000 log10-normal draws") {
  std::mt19937_64 rng(20240601);
  std::normal_distribution<double> draw(35.0, 5.0);
  std::vector<Calibration> cals;
  for (int i = 0; i < 1000; ++i) cals.push_back({"m" + std::to_string(i), "A100", draw(rng)});
  const AlphaStats s = aggregate_stats(cals).at("A100");
  CHECK(std::abs(s.mu - 35.0) <= 0.5);
  CHECK(std::abs(s.sigma - 5.0) <= 0.5);
  CHECK(ulps(s.interval_hi - s.interval_lo, 1.2 * s.sigma) <= 4);
  CHECK(ulps(0.5 * (s.interval_lo + s.interval_hi), s.mu) <= 2);
  CHECK(s.representative == s.mu);

  // Permutation invariance is bit-exact.
  std::shuffle(cals.begin(), cals.end(), rng);
  const AlphaStats t = aggregate_stats(cals).at("A100");
  CHECK(t.mu == s.mu);
  CHECK(t.sigma == s.sigma);
  CHECK(t.interval_lo == s.interval_lo);
  CHECK(t.samples == s.samples);
}

TEST_CASE("calibrate_records round trip and deterministic order") {
  const DeviceDb db = builtin_db();
  const IngestResult in = ingest_records(testutil::source_path("tests/fixtures/table2.csv"));
  REQUIRE(in.records.size() == 6);
  REQUIRE(in.rejected.empty());
  const CalibrationRun run = calibrate_records(in.records, db);
  REQUIRE(run.calibrations.size() == 6);
  CHECK(run.calibrations.front().model == "BLOOM");
  CHECK(run.stats.at("A100").n == 3);
  for (const auto& rec : in.records) {
    const auto it = std::find_if(run.calibrations.begin(), run.calibrations.end(),
                                 [&](const Calibration& c) { return c.model == rec.model; });
    REQUIRE(it != run.calibrations.end());
    const GpuTime back = solve_gpu_time(derive_compute(rec), ThroughputParam(it->log10_alpha));
    CHECK(back.seconds() == doctest::Approx(derive_gpu_time(rec).seconds()).epsilon(1e-6));
  }

  std::vector<TrainingRecord> reversed(in.records.rbegin(), in.records.rend());
  const CalibrationRun again = calibrate_records(reversed, db);
  CHECK(calibration_to_json(again) == calibration_to_json(run));
}

TEST_CASE("calibrate_records moves unusable rows to rejections") {
  const std::string csv = kHeader +
                          "Good,,,3.12e23,A100,,1191566.26506024,,,581,,,\n"
                          "Odd,,,1e20,Cerebras CS-2,,10,,,1,,,\n"
                          "Fast,,,1e30,A100,,1e-6,,,1,,,\n";
  const IngestResult in = parse_records_csv(csv);
  const CalibrationRun run = calibrate_records(in.records, builtin_db());
  CHECK(run.calibrations.size() == 1);
  REQUIRE(run.rejected.size() == 2);
  CHECK(run.rejected[0].model == "Fast");
  CHECK(run.rejected[1].model == "Odd");
  CHECK(run.rejected[1].reason.find("unknown device") != std::string::npos);

  SolverOptions tight;
  tight.max_iterations = 2;
  CHECK(code_of([&] { calibrate_records(in.records, builtin_db(), tight); }) ==
        ErrorCode::kConvergence);
}

TEST_CASE("alpha statistics JSON round trip") {
  const IngestResult in = ingest_records(testutil::source_path("tests/fixtures/table2.csv"));
  const CalibrationRun run = calibrate_records(in.records, builtin_db());
  const AlphaStatsTable parsed = parse_alpha_stats_json(calibration_to_json(run));
  REQUIRE(parsed.size() == run.stats.size());
  for (const auto& [family, s] : run.stats) {
    const AlphaStats& p = parsed.at(family);
    CHECK(p.n == s.n);
    CHECK(p.mu == s.mu);
    CHECK(p.sigma == s.sigma);
    CHECK(p.interval_lo == s.interval_lo);
    CHECK(p.interval_hi == s.interval_hi);
    CHECK(p.samples == s.samples);
  }
  CHECK(code_of([] { parse_alpha_stats_json("[]"); }) == ErrorCode::kParse);
  CHECK(code_of([] {
          parse_alpha_stats_json(
              R"({"families":[{"family":"A","n":0,"mu":1,"sigma":0,"interval_lo":1,"interval_hi":1,"representative":1}]})");
        }) == ErrorCode::kParse);
}
