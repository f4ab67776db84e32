// SPDX-License-Identifier: Apache-2.0
#include "carboneval/carboneval.h"

#include <cmath>
#include <cstdlib>
#include <algorithm>
#include <cstring>
#include <limits>
#include <new>
#include <string>

#include "carboneval/baselines.hpp"
#include "carboneval/calibration.hpp"
#include "carboneval/core.hpp"
#include "carboneval/devices.hpp"
#include "carboneval/error.hpp"
#include "carboneval/pipeline.hpp"
#include "text_io.hpp"

struct ce_device_db {
  carboneval::DeviceDb db;
};
struct ce_region_table {
  carboneval::RegionTable table;
};
struct ce_alpha_stats {
  carboneval::AlphaStatsTable stats;
};

namespace {

using namespace carboneval;

thread_local std::string g_last_error;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

ce_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return CE_ERR_INVALID_ARGUMENT;
    case ErrorCode::kDomain:
      return CE_ERR_DOMAIN;
    case ErrorCode::kRange:
      return CE_ERR_RANGE;
    case ErrorCode::kUnknownDevice:
      return CE_ERR_UNKNOWN_DEVICE;
    case ErrorCode::kUnknownRegion:
      return CE_ERR_UNKNOWN_REGION;
    case ErrorCode::kParse:
      return CE_ERR_PARSE;
    case ErrorCode::kIo:
      return CE_ERR_IO;
    case ErrorCode::kConvergence:
      return CE_ERR_CONVERGENCE;
    case ErrorCode::kRankDeficient:
      return CE_ERR_RANK_DEFICIENT;
  }
  return CE_ERR_INTERNAL;
}

template <typename F>
ce_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return CE_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return CE_ERR_INTERNAL;
}

void require_ptr(const void* p, const char* name) {
  if (p == nullptr) Fail(ErrorCode::kInvalidArgument, std::string(name) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

void set_optional_string(char** out, const std::string& s) {
  if (out != nullptr) *out = dup_string(s);
}

SolverOptions solver_from(const ce_solver_options* opts) {
  SolverOptions s;
  if (opts != nullptr) {
    s.log10_alpha_min = opts->log10_alpha_min;
    s.log10_alpha_max = opts->log10_alpha_max;
    s.max_iterations = opts->max_iterations;
    if (!(s.log10_alpha_min < s.log10_alpha_max)) {
      Fail(ErrorCode::kInvalidArgument, "solver bounds must satisfy log10_alpha_min < log10_alpha_max");
    }
    if (s.max_iterations < 1) Fail(ErrorCode::kInvalidArgument, "max_iterations must be positive");
  }
  return s;
}

std::optional<double> opt_value(double v) {
  return std::isnan(v) ? std::nullopt : std::optional<double>(v);
}

void copy_key(char (&dst)[32], const std::string& src) {
  std::strncpy(dst, src.c_str(), sizeof(dst) - 1);
  dst[sizeof(dst) - 1] = '\0';
}

const RegionTable& regions_or_empty(const ce_region_table* regions) {
  static const RegionTable empty;
  return regions != nullptr ? regions->table : empty;
}

EstimateRequest request_from(const ce_estimate_request* req) {
  EstimateRequest r;
  const bool has_flops = !std::isnan(req->total_flops);
  const bool has_pd = !std::isnan(req->params) || !std::isnan(req->data_size);
  if (has_flops == has_pd) {
    Fail(ErrorCode::kInvalidArgument, "give either total FLOPs or params with data size");
  }
  if (has_flops) {
    r.compute = FlopsSource{req->total_flops};
  } else {
    if (std::isnan(req->params) || std::isnan(req->data_size)) {
      Fail(ErrorCode::kInvalidArgument, "params and data size must both be given");
    }
    r.compute = ParamsDataSource{req->params, req->data_size,
                                 std::isnan(req->factor) ? kDenseTransformerFactor : req->factor};
  }
  require_ptr(req->device, "device");
  r.device_raw = req->device;
  const bool has_region = req->region != nullptr && req->region[0] != '\0';
  const bool has_direct = !std::isnan(req->intensity_g_per_kwh);
  if (has_region == has_direct) {
    Fail(ErrorCode::kInvalidArgument, "give either a region or a carbon intensity");
  }
  if (has_region) {
    r.intensity = RegionSource{req->region};
  } else {
    r.intensity = DirectIntensity{req->intensity_g_per_kwh};
  }
  r.pue = req->pue;
  switch (req->alpha_mode) {
    case CE_ALPHA_MIDPOINT:
      r.alpha_mode = AlphaMode::kMidpoint;
      break;
    case CE_ALPHA_INTERVAL:
      r.alpha_mode = AlphaMode::kInterval;
      break;
    case CE_ALPHA_EXPLICIT:
      r.alpha_mode = AlphaMode::kExplicit;
      r.explicit_log10_alpha = req->log10_alpha;
      break;
    default:
      Fail(ErrorCode::kInvalidArgument, "unknown alpha mode");
  }
  r.tdp_override_w = opt_value(req->tdp_override_w);
  r.beta_override_g_per_gpuh = opt_value(req->beta_override_g_per_gpuh);
  return r;
}

void fill_report(const EstimateReport& r, ce_estimate_report* out) {
  *out = ce_estimate_report{};
  out->gpu_hours = r.gpu_hours;
  out->energy_kwh = r.energy_kwh;
  out->operational_kg = r.operational_kg;
  out->embodied_kg = r.embodied_kg;
  out->total_kg = r.total_kg;
  out->has_interval = r.operational_interval_kg.has_value() ? 1 : 0;
  auto iv = [](const std::optional<Interval>& v) {
    return v ? ce_interval{v->lo, v->hi} : ce_interval{kNaN, kNaN};
  };
  out->gpu_hours_interval = iv(r.gpu_hours_interval);
  out->energy_kwh_interval = iv(r.energy_kwh_interval);
  out->operational_interval_kg = iv(r.operational_interval_kg);
  out->embodied_interval_kg = iv(r.embodied_interval_kg);
  out->total_interval_kg = iv(r.total_interval_kg);
  out->log10_alpha_interval = iv(r.resolved.log10_alpha_interval);
  copy_key(out->family, r.resolved.family);
  out->log10_alpha = r.resolved.log10_alpha;
  out->tdp_w = r.resolved.tdp_w;
  out->beta_g_per_gpuh = r.resolved.beta_g_per_gpuh.value_or(kNaN);
  out->intensity_g_per_kwh = r.resolved.intensity_g_per_kwh;
  out->pue = r.resolved.pue;
  out->compute_flops = r.resolved.compute_flops;
}

EstimateReport report_from(const ce_estimate_report* in) {
  EstimateReport r;
  r.gpu_hours = in->gpu_hours;
  r.energy_kwh = in->energy_kwh;
  r.operational_kg = in->operational_kg;
  r.embodied_kg = in->embodied_kg;
  r.total_kg = in->total_kg;
  if (in->has_interval) {
    auto iv = [](const ce_interval& v) { return Interval{v.lo, v.hi}; };
    r.gpu_hours_interval = iv(in->gpu_hours_interval);
    r.energy_kwh_interval = iv(in->energy_kwh_interval);
    r.operational_interval_kg = iv(in->operational_interval_kg);
    r.embodied_interval_kg = iv(in->embodied_interval_kg);
    r.total_interval_kg = iv(in->total_interval_kg);
    r.resolved.log10_alpha_interval = iv(in->log10_alpha_interval);
  }
  r.resolved.family = std::string(in->family, strnlen(in->family, sizeof(in->family)));
  r.resolved.log10_alpha = in->log10_alpha;
  r.resolved.tdp_w = in->tdp_w;
  r.resolved.beta_g_per_gpuh = opt_value(in->beta_g_per_gpuh);
  r.resolved.intensity_g_per_kwh = in->intensity_g_per_kwh;
  r.resolved.pue = in->pue;
  r.resolved.compute_flops = in->compute_flops;
  return r;
}

}  // namespace

extern "C" {

const char* ce_last_error(void) { return g_last_error.c_str(); }

const char* ce_status_name(ce_status status) {
  switch (status) {
    case CE_OK:
      return "ok";
    case CE_ERR_INVALID_ARGUMENT:
      return "invalid argument";
    case CE_ERR_DOMAIN:
      return "domain error";
    case CE_ERR_RANGE:
      return "range error";
    case CE_ERR_UNKNOWN_DEVICE:
      return "unknown device";
    case CE_ERR_UNKNOWN_REGION:
      return "unknown region";
    case CE_ERR_PARSE:
      return "parse error";
    case CE_ERR_IO:
      return "I/O error";
    case CE_ERR_CONVERGENCE:
      return "convergence error";
    case CE_ERR_RANK_DEFICIENT:
      return "rank deficient";
    case CE_ERR_INTERNAL:
      return "internal error";
  }
  return "unknown status";
}

void ce_string_free(char* s) { std::free(s); }

const char* ce_version(void) { return "1.0.0"; }

void ce_solver_options_init(ce_solver_options* opts) {
  if (opts == nullptr) return;
  const SolverOptions d;
  opts->log10_alpha_min = d.log10_alpha_min;
  opts->log10_alpha_max = d.log10_alpha_max;
  opts->max_iterations = d.max_iterations;
}

ce_status ce_throughput_at(double log10_alpha, double gpu_seconds, double* tflop_per_s) {
  return guarded([&] {
    require_ptr(tflop_per_s, "tflop_per_s");
    *tflop_per_s = throughput_at(ThroughputParam(log10_alpha), GpuTime::from_seconds(gpu_seconds));
  });
}

ce_status ce_cumulative_compute(double log10_alpha, double gpu_seconds, double* tflop) {
  return guarded([&] {
    require_ptr(tflop, "tflop");
    *tflop = cumulative_compute(ThroughputParam(log10_alpha), GpuTime::from_seconds(gpu_seconds)).tflop();
  });
}

ce_status ce_solve_gpu_time(double tflop, double log10_alpha, const ce_solver_options* opts,
                            double* gpu_seconds) {
  return guarded([&] {
    require_ptr(gpu_seconds, "gpu_seconds");
    *gpu_seconds =
        solve_gpu_time(ComputeLoad(tflop), ThroughputParam(log10_alpha), solver_from(opts)).seconds();
  });
}

ce_status ce_calibrate_alpha(double tflop, double gpu_seconds, const ce_solver_options* opts,
                             double* log10_alpha) {
  return guarded([&] {
    require_ptr(log10_alpha, "log10_alpha");
    *log10_alpha = calibrate_alpha(ComputeLoad(tflop), GpuTime::from_seconds(gpu_seconds),
                                   solver_from(opts))
                       .log10_alpha();
  });
}

ce_status ce_operational_carbon(double watts, double gpu_hours, double g_per_kwh, double pue,
                                double* energy_kwh, double* kg) {
  return guarded([&] {
    const auto r = operational_carbon(PowerDraw(watts), GpuTime::from_hours(gpu_hours),
                                      CarbonIntensity(g_per_kwh), pue);
    if (energy_kwh != nullptr) *energy_kwh = r.energy_kwh;
    if (kg != nullptr) *kg = r.emission.kg();
  });
}

ce_status ce_embodied_from_rate(double gpu_hours, double g_per_gpuh, double* kg) {
  return guarded([&] {
    require_ptr(kg, "kg");
    *kg = embodied_from_rate(GpuTime::from_hours(gpu_hours), EmbodiedRate(g_per_gpuh)).kg();
  });
}

ce_status ce_relative_error(double predicted, double actual, double* percent) {
  return guarded([&] {
    require_ptr(percent, "percent");
    *percent = relative_error(predicted, actual);
  });
}

ce_status ce_device_db_builtin(ce_device_db** out) {
  return guarded([&] {
    require_ptr(out, "out");
    *out = new ce_device_db{builtin_db()};
  });
}

ce_status ce_device_db_load(const char* path, ce_device_db** out) {
  return guarded([&] {
    require_ptr(path, "path");
    require_ptr(out, "out");
    *out = new ce_device_db{load_db(path)};
  });
}

ce_status ce_device_db_save(const ce_device_db* db, const char* path) {
  return guarded([&] {
    require_ptr(db, "db");
    require_ptr(path, "path");
    save_db(db->db, path);
  });
}

void ce_device_db_free(ce_device_db* db) { delete db; }

size_t ce_device_db_size(const ce_device_db* db) { return db == nullptr ? 0 : db->db.size(); }

ce_status ce_device_db_normalize(const ce_device_db* db, const char* raw, char** family) {
  return guarded([&] {
    require_ptr(db, "db");
    require_ptr(raw, "raw");
    require_ptr(family, "family");
    *family = dup_string(db->db.normalize(raw));
  });
}

ce_status ce_device_db_get(const ce_device_db* db, const char* key, ce_device_family* out) {
  return guarded([&] {
    require_ptr(db, "db");
    require_ptr(key, "key");
    require_ptr(out, "out");
    const DeviceFamily& f = db->db.at(key);
    *out = ce_device_family{};
    copy_key(out->key, f.key);
    out->tdp_w = f.tdp_w;
    out->peak_tflops = f.peak_tflops;
    out->alpha_log10_lo = f.alpha_log10_lo;
    out->alpha_log10_hi = f.alpha_log10_hi;
    out->beta_g_per_gpuh = f.beta_g_per_gpuh.value_or(kNaN);
    out->die_mm2 = f.die_mm2.value_or(kNaN);
    out->process_nm = f.process_nm.value_or(0);
    out->lifetime_h = f.lifetime_h;
  });
}

ce_status ce_region_table_load(const char* path, ce_region_table** out) {
  return guarded([&] {
    require_ptr(path, "path");
    require_ptr(out, "out");
    *out = new ce_region_table{load_regions(path)};
  });
}

void ce_region_table_free(ce_region_table* table) { delete table; }

ce_status ce_region_intensity(const ce_region_table* table, const char* code, double* g_per_kwh) {
  return guarded([&] {
    require_ptr(table, "table");
    require_ptr(code, "code");
    require_ptr(g_per_kwh, "g_per_kwh");
    *g_per_kwh = region_intensity(code, table->table).g_per_kwh();
  });
}

ce_status ce_alpha_stats_load(const char* path, ce_alpha_stats** out) {
  return guarded([&] {
    require_ptr(path, "path");
    require_ptr(out, "out");
    *out = new ce_alpha_stats{load_alpha_stats(path)};
  });
}

void ce_alpha_stats_free(ce_alpha_stats* stats) { delete stats; }

void ce_estimate_request_init(ce_estimate_request* req) {
  if (req == nullptr) return;
  *req = ce_estimate_request{};
  req->total_flops = kNaN;
  req->params = kNaN;
  req->data_size = kNaN;
  req->factor = kDenseTransformerFactor;
  req->device = nullptr;
  req->region = nullptr;
  req->intensity_g_per_kwh = kNaN;
  req->pue = 1.0;
  req->alpha_mode = CE_ALPHA_MIDPOINT;
  req->log10_alpha = kNaN;
  req->tdp_override_w = kNaN;
  req->beta_override_g_per_gpuh = kNaN;
}

ce_status ce_estimate(const ce_device_db* db, const ce_region_table* regions,
                      const ce_alpha_stats* stats, const ce_estimate_request* req,
                      const ce_solver_options* opts, ce_estimate_report* out) {
  return guarded([&] {
    require_ptr(db, "db");
    require_ptr(req, "req");
    require_ptr(out, "out");
    const auto report = estimate(request_from(req), db->db, regions_or_empty(regions),
                                 stats != nullptr ? &stats->stats : nullptr, solver_from(opts));
    fill_report(report, out);
  });
}

ce_status ce_estimate_report_format(const ce_estimate_report* report, const char* model,
                                    ce_format format, char** out) {
  return guarded([&] {
    require_ptr(report, "report");
    require_ptr(out, "out");
    const EstimateReport r = report_from(report);
    switch (format) {
      case CE_FORMAT_JSON:
        *out = dup_string(report_to_json(r, model != nullptr ? model : ""));
        return;
      case CE_FORMAT_CSV:
        *out = dup_string(report_to_csv(r));
        return;
      case CE_FORMAT_TABLE:
        *out = dup_string(report_to_table(r));
        return;
    }
    Fail(ErrorCode::kInvalidArgument, "unknown output format");
  });
}

ce_status ce_estimate_records_file(const ce_device_db* db, const ce_region_table* regions,
                                   const ce_alpha_stats* stats, const char* records_path,
                                   ce_alpha_mode mode, const ce_solver_options* opts,
                                   char** json_out, char** warnings) {
  return guarded([&] {
    require_ptr(db, "db");
    require_ptr(records_path, "records_path");
    require_ptr(json_out, "json_out");
    if (mode == CE_ALPHA_EXPLICIT) {
      Fail(ErrorCode::kInvalidArgument, "batch estimation supports midpoint or interval alpha modes");
    }
    const auto ingest = ingest_records(records_path, IngestOptions{.require_gpu_time = false});
    std::vector<std::string> warn;
    for (const auto& r : ingest.rejected) {
      warn.push_back("line " + std::to_string(r.line) + " (" + r.model + "): " + r.reason);
    }
    const SolverOptions solver = solver_from(opts);
    std::vector<std::pair<std::string, EstimateReport>> reports;
    for (const auto& rec : ingest.records) {
      try {
        EstimateRequest req = request_from_record(rec);
        req.alpha_mode = mode == CE_ALPHA_INTERVAL ? AlphaMode::kInterval : AlphaMode::kMidpoint;
        reports.emplace_back(rec.model, estimate(req, db->db, regions_or_empty(regions),
                                                 stats != nullptr ? &stats->stats : nullptr, solver));
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kConvergence) throw;
        warn.push_back(rec.model + ": " + e.what());
      }
    }
    *json_out = dup_string(reports_to_json(reports));
    set_optional_string(warnings, join_lines(warn));
  });
}

ce_status ce_calibrate_file(const ce_device_db* db, const char* records_path,
                            const ce_solver_options* opts, char** json_out) {
  return guarded([&] {
    require_ptr(db, "db");
    require_ptr(records_path, "records_path");
    require_ptr(json_out, "json_out");
    const auto ingest = ingest_records(records_path);
    CalibrationRun run = calibrate_records(ingest.records, db->db, solver_from(opts));
    run.rejected.insert(run.rejected.begin(), ingest.rejected.begin(), ingest.rejected.end());
    std::stable_sort(run.rejected.begin(), run.rejected.end(),
                     [](const RejectedRow& a, const RejectedRow& b) { return a.line < b.line; });
    *json_out = dup_string(calibration_to_json(run));
  });
}

void ce_baseline_config_init(ce_baseline_config* config) {
  if (config == nullptr) return;
  const BaselineConfig d;
  config->degree = d.degree;
  config->max_depth = d.max_depth;
  config->min_leaf = d.min_leaf;
  config->epsilon = d.epsilon;
  config->c = d.c;
  config->iterations = d.iterations;
  config->seed = d.seed;
  config->per_record_alpha = d.per_record_alpha ? 1 : 0;
}

ce_status ce_compare_files(const ce_device_db* db, const ce_region_table* regions,
                           const char* train_path, const char* eval_path,
                           const ce_baseline_config* config, const ce_solver_options* opts,
                           ce_format format, char** out, char** warnings) {
  return guarded([&] {
    require_ptr(db, "db");
    require_ptr(train_path, "train_path");
    require_ptr(eval_path, "eval_path");
    require_ptr(out, "out");
    BaselineConfig cfg;
    if (config != nullptr) {
      cfg.degree = config->degree;
      cfg.max_depth = config->max_depth;
      cfg.min_leaf = config->min_leaf;
      cfg.epsilon = config->epsilon;
      cfg.c = config->c;
      cfg.iterations = config->iterations;
      cfg.seed = config->seed;
      cfg.per_record_alpha = config->per_record_alpha != 0;
    }
    const auto train = ingest_records(train_path);
    const auto eval = ingest_records(eval_path, IngestOptions{.require_gpu_time = false});
    ComparisonTable table =
        compare_methods(train.records, eval.records, db->db, regions_or_empty(regions), cfg,
                        solver_from(opts));
    std::vector<std::string> warn;
    for (const auto& r : train.rejected) {
      warn.push_back("train line " + std::to_string(r.line) + " (" + r.model + "): " + r.reason);
    }
    for (const auto& r : eval.rejected) {
      warn.push_back("eval line " + std::to_string(r.line) + " (" + r.model + "): " + r.reason);
    }
    warn.insert(warn.end(), table.warnings.begin(), table.warnings.end());
    table.warnings = warn;
    switch (format) {
      case CE_FORMAT_JSON:
        *out = dup_string(comparison_to_json(table));
        break;
      case CE_FORMAT_CSV:
        *out = dup_string(comparison_to_csv(table));
        break;
      case CE_FORMAT_TABLE:
        *out = dup_string(comparison_to_table(table));
        break;
      default:
        Fail(ErrorCode::kInvalidArgument, "unknown output format");
    }
    set_optional_string(warnings, join_lines(warn));
  });
}

ce_status ce_validate_files(const ce_device_db* db, const ce_region_table* regions,
                            const char* records_path, const char* fixtures_path,
                            const ce_solver_options* opts, ce_format format, char** out) {
  return guarded([&] {
    require_ptr(db, "db");
    require_ptr(records_path, "records_path");
    require_ptr(fixtures_path, "fixtures_path");
    require_ptr(out, "out");
    const auto records = ingest_records(records_path, IngestOptions{.require_gpu_time = false});
    const auto fixtures = load_fixtures(fixtures_path);
    ValidationTable table = validate_against_actuals(records.records, fixtures, db->db,
                                                     regions_or_empty(regions), solver_from(opts));
    for (const auto& r : records.rejected) {
      table.missing.push_back(r.model + ": " + r.reason);
    }
    switch (format) {
      case CE_FORMAT_JSON:
        *out = dup_string(validation_to_json(table));
        break;
      case CE_FORMAT_CSV:
        *out = dup_string(validation_to_csv(table));
        break;
      case CE_FORMAT_TABLE:
        *out = dup_string(validation_to_table(table));
        break;
      default:
        Fail(ErrorCode::kInvalidArgument, "unknown output format");
    }
  });
}

ce_status ce_scaling_report_files(const char* records_path, const char* estimates_path,
                                  char** csv_out, char** warnings) {
  return guarded([&] {
    require_ptr(records_path, "records_path");
    require_ptr(estimates_path, "estimates_path");
    require_ptr(csv_out, "csv_out");
    const auto records = ingest_records(records_path, IngestOptions{.require_gpu_time = false});
    const auto totals = parse_estimate_totals_json(text::read_file(estimates_path));
    const ScalingReport report = scaling_report(records.records, totals);
    std::vector<std::string> warn;
    for (const auto& r : records.rejected) {
      warn.push_back("line " + std::to_string(r.line) + " (" + r.model + "): " + r.reason);
    }
    warn.insert(warn.end(), report.warnings.begin(), report.warnings.end());
    *csv_out = dup_string(scatter_to_csv(report));
    set_optional_string(warnings, join_lines(warn));
  });
}

}  // extern "C"
