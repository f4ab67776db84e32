// SPDX-License-Identifier: Apache-2.0
//
// Historical training records: ingestion, per-record throughput calibration
// and per-family statistics of the fitted exponents.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "carboneval/core.hpp"
#include "carboneval/devices.hpp"

namespace carboneval {

struct TrainingRecord {
  std::string model;
  std::optional<double> params;
  std::optional<double> data_size;
  std::optional<double> total_flops;
  std::string device_raw;
  std::optional<std::int64_t> device_count;
  std::optional<double> gpu_hours;
  std::optional<double> wall_hours;
  std::string region;
  std::optional<double> intensity_g_per_kwh;
  std::optional<double> actual_tco2;
  std::string metric_name;
  std::optional<double> metric_value;
  std::size_t line = 0;  // source line, 0 when not read from a file

  bool has_compute() const { return total_flops || (params && data_size); }
  bool has_gpu_time() const { return gpu_hours || (device_count && wall_hours); }
};

inline constexpr std::string_view kRecordsHeader =
    "model,params,data_size,total_flops,device,device_count,gpu_hours,wall_hours,region,"
    "intensity_g_per_kwh,actual_tco2,metric_name,metric_value";

struct RejectedRow {
  std::size_t line = 0;
  std::string model;
  std::string reason;

  friend bool operator==(const RejectedRow&, const RejectedRow&) = default;
};

struct IngestResult {
  std::vector<TrainingRecord> records;
  std::vector<RejectedRow> rejected;
};

struct IngestOptions {
  // Historical records must carry GPU-time; prospective ones may not.
  bool require_gpu_time = true;
};

IngestResult parse_records_csv(std::string_view text, const IngestOptions& opts = {});
IngestResult ingest_records(const std::filesystem::path& csv_path, const IngestOptions& opts = {});

inline constexpr double kDenseTransformerFactor = 6.0;

/// total_flops when present, else factor * params * data_size.
ComputeLoad derive_compute(const TrainingRecord& rec, double factor = kDenseTransformerFactor);

/// gpu_hours when present (it takes precedence), else device_count * wall_hours.
GpuTime derive_gpu_time(const TrainingRecord& rec);

struct Calibration {
  std::string model;
  std::string family;
  double log10_alpha;
};

Calibration calibrate_record(const TrainingRecord& rec, const DeviceDb& db,
                             const SolverOptions& opts = {},
                             double factor = kDenseTransformerFactor);

struct AlphaStats {
  std::string family;
  std::size_t n = 0;
  std::vector<double> samples;  // ascending
  double mu = 0.0;
  double sigma = 0.0;
  double interval_lo = 0.0;
  double interval_hi = 0.0;
  double representative = 0.0;
  std::vector<double> flagged;  // samples further than 3 sigma from mu
};

using AlphaStatsTable = std::map<std::string, AlphaStats, std::less<>>;

inline constexpr double kIntervalHalfWidthSigmas = 0.6;

// Mean and sample standard deviation of log10(alpha) per family, reported as
// the interval mu -/+ 0.6 sigma with its midpoint as representative value.
AlphaStatsTable aggregate_stats(std::span<const Calibration> calibrations);

struct CalibrationRun {
  std::vector<Calibration> calibrations;  // sorted by model name
  AlphaStatsTable stats;
  std::vector<RejectedRow> rejected;
};

// Calibrates every record; unknown devices and out-of-range fits are moved to
// the rejection list instead of aborting.
CalibrationRun calibrate_records(std::span<const TrainingRecord> records, const DeviceDb& db,
                                 const SolverOptions& opts = {},
                                 double factor = kDenseTransformerFactor);

std::string calibration_to_json(const CalibrationRun& run);
AlphaStatsTable parse_alpha_stats_json(std::string_view text);
AlphaStatsTable load_alpha_stats(const std::filesystem::path& path);

}  // namespace carboneval
