// SPDX-License-Identifier: Apache-2.0
// carboneval command-line front end. Talks to the library only through the C API.
#include <carboneval/carboneval.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitInput = 2;
constexpr int kExitConvergence = 3;

struct CeString {
  char* p = nullptr;
  ~CeString() { ce_string_free(p); }
  std::string str() const { return p != nullptr ? std::string(p) : std::string(); }
};

struct DbDeleter {
  void operator()(ce_device_db* p) const { ce_device_db_free(p); }
};
struct RegionDeleter {
  void operator()(ce_region_table* p) const { ce_region_table_free(p); }
};
struct StatsDeleter {
  void operator()(ce_alpha_stats* p) const { ce_alpha_stats_free(p); }
};
using DbPtr = std::unique_ptr<ce_device_db, DbDeleter>;
using RegionPtr = std::unique_ptr<ce_region_table, RegionDeleter>;
using StatsPtr = std::unique_ptr<ce_alpha_stats, StatsDeleter>;

// Thrown to unwind with a prepared exit code.
struct Exit {
  int code;
};

int exit_code_for(ce_status s) {
  switch (s) {
    case CE_OK:
      return kExitOk;
    case CE_ERR_CONVERGENCE:
      return kExitConvergence;
    case CE_ERR_INTERNAL:
      return kExitInternal;
    default:
      return kExitInput;
  }
}

void check(ce_status s) {
  if (s == CE_OK) return;
  std::cerr << "error: " << ce_last_error() << "\n";
  throw Exit{exit_code_for(s)};
}

[[noreturn]] void usage_error(const std::string& msg) {
  std::cerr << "error: " << msg << "\n";
  throw Exit{kExitInput};
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return (v != nullptr && v[0] != '\0') ? std::string(v) : fallback;
}

struct Common {
  std::string devices_db;
  std::string regions;
  std::string format = "table";
  std::optional<double> alpha_min;
  std::optional<double> alpha_max;
  std::optional<int> max_iterations;
};

void add_common(CLI::App* cmd, Common& c, bool with_format) {
  cmd->add_option("--devices-db", c.devices_db,
                  "Device database JSON overlaid on the built-in families "
                  "(default: $CARBONEVAL_DEVICES_DB)");
  cmd->add_option("--regions", c.regions,
                  "Region intensity CSV region_code,g_per_kwh (default: $CARBONEVAL_REGIONS)");
  if (with_format) {
    cmd->add_option("--format", c.format, "Output format")
        ->check(CLI::IsMember({"json", "csv", "table"}));
  }
  cmd->add_option("--alpha-min", c.alpha_min, "Lower solver bound on log10(alpha)");
  cmd->add_option("--alpha-max", c.alpha_max, "Upper solver bound on log10(alpha)");
  cmd->add_option("--max-iterations", c.max_iterations, "Solver iteration cap")
      ->check(CLI::PositiveNumber);
}

ce_solver_options solver_of(const Common& c) {
  ce_solver_options o;
  ce_solver_options_init(&o);
  if (c.alpha_min) o.log10_alpha_min = *c.alpha_min;
  if (c.alpha_max) o.log10_alpha_max = *c.alpha_max;
  if (c.max_iterations) o.max_iterations = *c.max_iterations;
  return o;
}

ce_format format_of(const Common& c) {
  if (c.format == "json") return CE_FORMAT_JSON;
  if (c.format == "csv") return CE_FORMAT_CSV;
  return CE_FORMAT_TABLE;
}

DbPtr open_db(const Common& c) {
  const std::string path = c.devices_db.empty() ? env_or("CARBONEVAL_DEVICES_DB", "") : c.devices_db;
  ce_device_db* db = nullptr;
  check(path.empty() ? ce_device_db_builtin(&db) : ce_device_db_load(path.c_str(), &db));
  return DbPtr(db);
}

RegionPtr open_regions(const Common& c) {
  const std::string path = c.regions.empty() ? env_or("CARBONEVAL_REGIONS", "") : c.regions;
  if (path.empty()) return nullptr;
  ce_region_table* t = nullptr;
  check(ce_region_table_load(path.c_str(), &t));
  return RegionPtr(t);
}

void print_warnings(const CeString& w) {
  if (w.p != nullptr && w.p[0] != '\0') std::cerr << "warning: " << w.str();
}

void write_output(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out || !(out << text)) usage_error("cannot write '" + out_path + "'");
}

// ---- estimate ---------------------------------------------------------------

struct EstimateArgs {
  Common common;
  std::optional<double> flops;
  std::optional<double> params;
  std::optional<double> data_size;
  double factor = 6.0;
  std::string device;
  std::string region;
  std::optional<double> intensity;
  double pue = 1.0;
  std::string alpha_mode;
  std::optional<double> alpha;
  std::optional<double> tdp;
  std::optional<double> beta;
  std::string alpha_stats;
  std::string records;
  std::string model;
};

ce_alpha_mode resolve_mode(const EstimateArgs& a) {
  if (a.alpha_mode.empty()) return a.alpha ? CE_ALPHA_EXPLICIT : CE_ALPHA_MIDPOINT;
  if (a.alpha_mode == "explicit") {
    if (!a.alpha) usage_error("--alpha-mode explicit requires --alpha");
    return CE_ALPHA_EXPLICIT;
  }
  if (a.alpha) usage_error("--alpha is only valid with --alpha-mode explicit");
  return a.alpha_mode == "interval" ? CE_ALPHA_INTERVAL : CE_ALPHA_MIDPOINT;
}

int run_estimate(const EstimateArgs& a) {
  const ce_alpha_mode mode = resolve_mode(a);
  const DbPtr db = open_db(a.common);
  const RegionPtr regions = open_regions(a.common);
  StatsPtr stats;
  if (!a.alpha_stats.empty()) {
    ce_alpha_stats* s = nullptr;
    check(ce_alpha_stats_load(a.alpha_stats.c_str(), &s));
    stats.reset(s);
  }
  const ce_solver_options opts = solver_of(a.common);

  if (!a.records.empty()) {
    if (a.common.format != "json") usage_error("--records output is JSON only; use --format json");
    CeString json;
    CeString warnings;
    check(ce_estimate_records_file(db.get(), regions.get(), stats.get(), a.records.c_str(), mode,
                                   &opts, &json.p, &warnings.p));
    print_warnings(warnings);
    std::cout << json.str();
    return kExitOk;
  }

  if (a.device.empty()) usage_error("--device is required");
  if (a.flops.has_value() == (a.params.has_value() || a.data_size.has_value())) {
    usage_error("give either --flops or --params with --data-size");
  }
  if (a.region.empty() == !a.intensity.has_value()) {
    usage_error("give either --region or --intensity");
  }

  ce_estimate_request req;
  ce_estimate_request_init(&req);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  req.total_flops = a.flops.value_or(nan);
  req.params = a.params.value_or(nan);
  req.data_size = a.data_size.value_or(nan);
  req.factor = a.factor;
  req.device = a.device.c_str();
  req.region = a.region.empty() ? nullptr : a.region.c_str();
  req.intensity_g_per_kwh = a.intensity.value_or(nan);
  req.pue = a.pue;
  req.alpha_mode = mode;
  req.log10_alpha = a.alpha.value_or(nan);
  req.tdp_override_w = a.tdp.value_or(nan);
  req.beta_override_g_per_gpuh = a.beta.value_or(nan);

  ce_estimate_report report;
  check(ce_estimate(db.get(), regions.get(), stats.get(), &req, &opts, &report));
  CeString text;
  check(ce_estimate_report_format(&report, a.model.empty() ? nullptr : a.model.c_str(),
                                  format_of(a.common), &text.p));
  std::cout << text.str();
  return kExitOk;
}

// ---- calibrate --------------------------------------------------------------

struct CalibrateArgs {
  Common common;
  std::string records;
  std::string out;
};

int run_calibrate(const CalibrateArgs& a) {
  const DbPtr db = open_db(a.common);
  const ce_solver_options opts = solver_of(a.common);
  CeString json;
  check(ce_calibrate_file(db.get(), a.records.c_str(), &opts, &json.p));
  write_output(json.str(), a.out);
  return kExitOk;
}

// ---- compare ----------------------------------------------------------------

struct CompareArgs {
  Common common;
  std::string train;
  std::string eval;
  ce_baseline_config config{};
  std::string dynamic_alpha = "stats";
};

int run_compare(CompareArgs& a) {
  const DbPtr db = open_db(a.common);
  const RegionPtr regions = open_regions(a.common);
  const ce_solver_options opts = solver_of(a.common);
  a.config.per_record_alpha = a.dynamic_alpha == "record" ? 1 : 0;
  CeString out;
  CeString warnings;
  check(ce_compare_files(db.get(), regions.get(), a.train.c_str(), a.eval.c_str(), &a.config, &opts,
                         format_of(a.common), &out.p, &warnings.p));
  print_warnings(warnings);
  std::cout << out.str();
  return kExitOk;
}

// ---- validate ---------------------------------------------------------------

struct ValidateArgs {
  Common common;
  std::string records;
  std::string fixtures;
};

int run_validate(const ValidateArgs& a) {
  const DbPtr db = open_db(a.common);
  const RegionPtr regions = open_regions(a.common);
  const ce_solver_options opts = solver_of(a.common);
  CeString out;
  check(ce_validate_files(db.get(), regions.get(), a.records.c_str(), a.fixtures.c_str(), &opts,
                          format_of(a.common), &out.p));
  std::cout << out.str();
  return kExitOk;
}

// ---- report -----------------------------------------------------------------

struct ReportArgs {
  std::string records;
  std::string estimates;
  std::string out;
};

int run_report(const ReportArgs& a) {
  CeString csv;
  CeString warnings;
  check(ce_scaling_report_files(a.records.c_str(), a.estimates.c_str(), &csv.p, &warnings.p));
  print_warnings(warnings);
  write_output(csv.str(), a.out);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pre-training carbon emission estimator"};
  app.set_version_flag("--version", std::string(ce_version()));
  app.require_subcommand(1);

  EstimateArgs est;
  auto* estimate = app.add_subcommand("estimate", "Estimate operational and embodied emissions");
  estimate->add_option("--flops", est.flops, "Total training compute in FLOPs");
  estimate->add_option("--params", est.params, "Parameter count");
  estimate->add_option("--data-size", est.data_size, "Training tokens or data points");
  estimate->add_option("--factor", est.factor, "FLOPs per parameter per token")->capture_default_str();
  estimate->add_option("--device", est.device, "Accelerator name, e.g. \"NVIDIA A100 80GB\"");
  estimate->add_option("--region", est.region, "Grid region code looked up in --regions");
  estimate->add_option("--intensity", est.intensity, "Grid carbon intensity in gCO2eq/kWh");
  estimate->add_option("--pue", est.pue, "Power usage effectiveness")->capture_default_str();
  estimate->add_option("--alpha-mode", est.alpha_mode, "midpoint, interval or explicit")
      ->check(CLI::IsMember({"midpoint", "interval", "explicit"}));
  estimate->add_option("--alpha", est.alpha, "Explicit log10(alpha); implies --alpha-mode explicit");
  estimate->add_option("--tdp", est.tdp, "Override the device power in W");
  estimate->add_option("--beta", est.beta, "Override the embodied rate in gCO2eq/GPUh");
  estimate->add_option("--alpha-stats", est.alpha_stats, "Statistics written by `calibrate`");
  estimate->add_option("--records", est.records, "Estimate every row of a records CSV");
  estimate->add_option("--model", est.model, "Model name included in JSON output");
  add_common(estimate, est.common, true);

  CalibrateArgs cal;
  auto* calibrate = app.add_subcommand("calibrate", "Fit per-family log10(alpha) statistics");
  calibrate->add_option("--records", cal.records, "Training records CSV")->required();
  calibrate->add_option("--out", cal.out, "Write the JSON here instead of stdout");
  add_common(calibrate, cal.common, false);

  CompareArgs cmp;
  ce_baseline_config_init(&cmp.config);
  auto* compare = app.add_subcommand("compare", "Compare static baselines with dynamic modeling");
  compare->add_option("--train", cmp.train, "Records used to fit the baselines")->required();
  compare->add_option("--eval", cmp.eval, "Records with actual emissions to predict")->required();
  compare->add_option("--degree", cmp.config.degree, "Polynomial degree")->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  compare->add_option("--max-depth", cmp.config.max_depth, "Tree depth (negative: unlimited)")->capture_default_str();
  compare->add_option("--min-leaf", cmp.config.min_leaf, "Minimum samples per tree leaf")->capture_default_str()
      ->check(CLI::PositiveNumber);
  compare->add_option("--epsilon", cmp.config.epsilon, "SVR tube half-width")->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  compare->add_option("--c", cmp.config.c, "SVR loss weight")->capture_default_str();
  compare->add_option("--iterations", cmp.config.iterations, "SVR iterations")->capture_default_str()
      ->check(CLI::PositiveNumber);
  compare->add_option("--seed", cmp.config.seed, "SVR seed")->capture_default_str();
  compare->add_option("--dynamic-alpha", cmp.dynamic_alpha,
                      "Alpha of the dynamic column: family statistics of --train, or each "
                      "evaluated record's own fit")->capture_default_str()
      ->check(CLI::IsMember({"stats", "record"}));
  add_common(compare, cmp.common, true);

  ValidateArgs val;
  auto* validate = app.add_subcommand("validate", "Check predictions against published actuals");
  validate->add_option("--records", val.records, "Records CSV with actual_tco2")->required();
  validate->add_option("--fixtures", val.fixtures, "Per-model log10(alpha) fixtures CSV")->required();
  add_common(validate, val.common, true);

  ReportArgs rep;
  auto* report = app.add_subcommand("report", "Emit the carbon-vs-metric scatter CSV");
  report->add_option("--records", rep.records, "Records CSV with metric columns")->required();
  report->add_option("--estimates", rep.estimates, "JSON from `estimate --format json`")->required();
  report->add_option("--out", rep.out, "Write the CSV here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*estimate) return run_estimate(est);
    if (*calibrate) return run_calibrate(cal);
    if (*compare) return run_compare(cmp);
    if (*validate) return run_validate(val);
    if (*report) return run_report(rep);
  } catch (const Exit& e) {
    return e.code;
  }
  return kExitInternal;
}
