// SPDX-License-Identifier: Apache-2.0
// Exercises the shared library through the C header only.
#include "doctest.h"

#include <carboneval/carboneval.h>

#include <cmath>
#include <cstring>
#include <string>

#ifndef CARBONEVAL_SOURCE_DIR
#error "CARBONEVAL_SOURCE_DIR must be defined"
#endif

namespace {

std::string src(const char* rel) { return std::string(CARBONEVAL_SOURCE_DIR) + "/" + rel; }

struct Owned {
  char* p = nullptr;
  ~Owned() { ce_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::string(ce_status_name(CE_OK)) == "ok");
  CHECK(std::string(ce_status_name(CE_ERR_CONVERGENCE)) == "convergence error");
  CHECK(std::string(ce_version()) == "1.0.0");
  ce_string_free(nullptr);
}

TEST_CASE("numerical core through the C API") {
  double v = 0;
  REQUIRE(ce_cumulative_compute(0.0, 10.0, &v) == CE_OK);
  CHECK(v == doctest::Approx(16.376848000782076).epsilon(1e-14));
  REQUIRE(ce_throughput_at(104.78, 2.3848e10, &v) == CE_OK);
  CHECK(v == doctest::Approx(265.1598322372383).epsilon(1e-13));
  REQUIRE(ce_solve_gpu_time(6.3e12, 104.78, nullptr, &v) == CE_OK);
  CHECK(v == doctest::Approx(23849192943.8).epsilon(1e-10));
  REQUIRE(ce_calibrate_alpha(3.12e11, 4289638554.22, nullptr, &v) == CE_OK);
  CHECK(v == doctest::Approx(22.3895883740017).epsilon(1e-10));

  double energy = 0, kg = 0;
  REQUIRE(ce_operational_carbon(1000, 1000, 1000, 1.0, &energy, &kg) == CE_OK);
  CHECK(energy == doctest::Approx(1000));
  CHECK(kg == doctest::Approx(1000));
  REQUIRE(ce_embodied_from_rate(6624561.99461, 1.7, &kg) == CE_OK);
  CHECK(kg == doctest::Approx(11261.755).epsilon(1e-7));
  REQUIRE(ce_relative_error(276.92, 257, &v) == CE_OK);
  CHECK(v == doctest::Approx(7.75097276).epsilon(1e-8));
}

TEST_CASE("errors map to status codes and messages") {
  double v = 0;
  CHECK(ce_throughput_at(1.0, -1.0, &v) == CE_ERR_DOMAIN);
  CHECK(std::strlen(ce_last_error()) > 0);
  CHECK(ce_relative_error(1, 0, &v) == CE_ERR_DOMAIN);
  CHECK(ce_calibrate_alpha(1e30, 1.0, nullptr, &v) == CE_ERR_RANGE);
  CHECK(std::string(ce_last_error()).find("TFLOP") != std::string::npos);
  CHECK(ce_throughput_at(1.0, 1.0, nullptr) == CE_ERR_INVALID_ARGUMENT);

  ce_solver_options opts;
  ce_solver_options_init(&opts);
  CHECK(opts.max_iterations == 200);
  CHECK(opts.log10_alpha_min == -12);
  CHECK(opts.log10_alpha_max == 200);
  opts.max_iterations = 1;
  CHECK(ce_solve_gpu_time(6.3e12, 104.78, &opts, &v) == CE_ERR_CONVERGENCE);
  opts.max_iterations = 0;
  CHECK(ce_solve_gpu_time(6.3e12, 104.78, &opts, &v) == CE_ERR_INVALID_ARGUMENT);

  REQUIRE(ce_cumulative_compute(0.0, 10.0, &v) == CE_OK);
  CHECK(std::string(ce_last_error()).empty());
}

TEST_CASE("device database handle") {
  ce_device_db* db = nullptr;
  REQUIRE(ce_device_db_builtin(&db) == CE_OK);
  CHECK(ce_device_db_size(db) == 8);
  Owned fam;
  REQUIRE(ce_device_db_normalize(db, "Google TPU v3", &fam.p) == CE_OK);
  CHECK(fam.str() == "TPUv3");
  char* unknown = nullptr;
  CHECK(ce_device_db_normalize(db, "Cerebras CS-2", &unknown) == CE_ERR_UNKNOWN_DEVICE);
  CHECK(unknown == nullptr);
  ce_device_family f;
  REQUIRE(ce_device_db_get(db, "A100", &f) == CE_OK);
  CHECK(std::string(f.key) == "A100");
  CHECK(f.tdp_w == 400);
  CHECK(f.process_nm == 7);
  REQUIRE(ce_device_db_get(db, "K80", &f) == CE_OK);
  CHECK(std::isnan(f.beta_g_per_gpuh));
  CHECK(f.process_nm == 0);
  ce_device_db_free(db);
  ce_device_db_free(nullptr);

  ce_device_db* missing = nullptr;
  CHECK(ce_device_db_load("/nonexistent/db.json", &missing) == CE_ERR_IO);
}

TEST_CASE("region table handle") {
  ce_region_table* t = nullptr;
  REQUIRE(ce_region_table_load(src("data/regions.csv").c_str(), &t) == CE_OK);
  double g = 0;
  REQUIRE(ce_region_intensity(t, "SE", &g) == CE_OK);
  CHECK(g == 30);
  CHECK(ce_region_intensity(t, "ZZ", &g) == CE_ERR_UNKNOWN_REGION);
  CHECK(std::string(ce_last_error()).find("--intensity") != std::string::npos);
  ce_region_table_free(t);
}

TEST_CASE("estimate through the C API") {
  ce_device_db* db = nullptr;
  REQUIRE(ce_device_db_builtin(&db) == CE_OK);
  ce_estimate_request req;
  ce_estimate_request_init(&req);
  req.total_flops = 6.3e24;
  req.device = "H100";
  req.intensity_g_per_kwh = 424;
  req.alpha_mode = CE_ALPHA_INTERVAL;
  ce_estimate_report rep;
  REQUIRE(ce_estimate(db, nullptr, nullptr, &req, nullptr, &rep) == CE_OK);
  CHECK(rep.has_interval == 1);
  CHECK(rep.operational_interval_kg.lo <= 1.9e6);
  CHECK(rep.operational_interval_kg.hi >= 1.9e6);
  CHECK(std::string(rep.family) == "H100");
  CHECK(rep.log10_alpha == 105);

  Owned json;
  REQUIRE(ce_estimate_report_format(&rep, "LLaMa-3", CE_FORMAT_JSON, &json.p) == CE_OK);
  CHECK(json.str().find("\"model\": \"LLaMa-3\"") != std::string::npos);
  CHECK(json.str().find("\"operational_interval_kg\": {") != std::string::npos);
  Owned table;
  REQUIRE(ce_estimate_report_format(&rep, nullptr, CE_FORMAT_TABLE, &table.p) == CE_OK);
  CHECK(table.str().find("[1880.96, 2051.38]") != std::string::npos);

  req.alpha_mode = CE_ALPHA_EXPLICIT;
  req.log10_alpha = 104.78;
  REQUIRE(ce_estimate(db, nullptr, nullptr, &req, nullptr, &rep) == CE_OK);
  CHECK(rep.has_interval == 0);
  CHECK(rep.operational_kg / 1000 == doctest::Approx(1966.17).epsilon(0.005));

  req.device = "Cerebras CS-2";
  CHECK(ce_estimate(db, nullptr, nullptr, &req, nullptr, &rep) == CE_ERR_UNKNOWN_DEVICE);
  req.device = "H100";
  req.params = 7e10;
  CHECK(ce_estimate(db, nullptr, nullptr, &req, nullptr, &rep) == CE_ERR_INVALID_ARGUMENT);
  req.params = NAN;
  req.region = "US";
  CHECK(ce_estimate(db, nullptr, nullptr, &req, nullptr, &rep) == CE_ERR_INVALID_ARGUMENT);
  req.intensity_g_per_kwh = NAN;
  CHECK(ce_estimate(db, nullptr, nullptr, &req, nullptr, &rep) == CE_ERR_UNKNOWN_REGION);
  ce_device_db_free(db);
}

TEST_CASE("batch operations over files") {
  ce_device_db* db = nullptr;
  REQUIRE(ce_device_db_builtin(&db) == CE_OK);
  const std::string table2 = src("tests/fixtures/table2.csv");

  Owned cal;
  REQUIRE(ce_calibrate_file(db, table2.c_str(), nullptr, &cal.p) == CE_OK);
  CHECK(cal.str().find("\"family\": \"A100\"") != std::string::npos);

  Owned val;
  REQUIRE(ce_validate_files(db, nullptr, table2.c_str(), src("tests/fixtures/table2_alpha.csv").c_str(),
                            nullptr, CE_FORMAT_CSV, &val.p) == CE_OK);
  CHECK(val.str().find("ViT,TPUv3") != std::string::npos);

  ce_baseline_config cfg;
  ce_baseline_config_init(&cfg);
  CHECK(cfg.degree == 2);
  CHECK(cfg.max_depth == 4);
  CHECK(cfg.min_leaf == 2);
  CHECK(cfg.epsilon == 0.05);
  CHECK(cfg.c == 10);
  CHECK(cfg.iterations == 5000);
  Owned cmp, warn;
  REQUIRE(ce_compare_files(db, nullptr, src("data/synthetic_train.csv").c_str(), table2.c_str(), &cfg,
                           nullptr, CE_FORMAT_CSV, &cmp.p, &warn.p) == CE_OK);
  CHECK(cmp.str().rfind("method,GLM_tco2,", 0) == 0);
  CHECK(warn.str().empty());

  Owned est, ewarn;
  REQUIRE(ce_estimate_records_file(db, nullptr, nullptr, table2.c_str(), CE_ALPHA_MIDPOINT, nullptr,
                                   &est.p, &ewarn.p) == CE_OK);
  CHECK(est.str().find("\"model\": \"Swin\"") != std::string::npos);

  Owned missing;
  CHECK(ce_calibrate_file(db, "/nonexistent.csv", nullptr, &missing.p) == CE_ERR_IO);
  CHECK(missing.p == nullptr);
  ce_device_db_free(db);
}
