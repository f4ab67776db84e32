// SPDX-License-Identifier: Apache-2.0
//
// End-to-end estimation: compute requirement -> throughput exponent ->
// GPU-time -> operational and embodied carbon.
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "carboneval/calibration.hpp"
#include "carboneval/core.hpp"
#include "carboneval/devices.hpp"

namespace carboneval {

struct FlopsSource {
  double total_flops;
};
struct ParamsDataSource {
  double params;
  double data_size;
  double factor = kDenseTransformerFactor;
};
using ComputeSource = std::variant<FlopsSource, ParamsDataSource>;

struct RegionSource {
  std::string code;
};
struct DirectIntensity {
  double g_per_kwh;
};
using IntensitySource = std::variant<RegionSource, DirectIntensity>;

enum class AlphaMode { kMidpoint, kInterval, kExplicit };

std::optional<AlphaMode> parse_alpha_mode(std::string_view name);
std::string_view to_string(AlphaMode mode);

struct EstimateRequest {
  ComputeSource compute = FlopsSource{0.0};
  std::string device_raw;
  IntensitySource intensity = DirectIntensity{0.0};
  double pue = 1.0;
  AlphaMode alpha_mode = AlphaMode::kMidpoint;
  std::optional<double> explicit_log10_alpha;
  std::optional<double> tdp_override_w;
  std::optional<double> beta_override_g_per_gpuh;
};

struct Interval {
  double lo;
  double hi;
};

struct ResolvedInputs {
  std::string family;
  double log10_alpha = 0.0;
  std::optional<Interval> log10_alpha_interval;
  double tdp_w = 0.0;
  std::optional<double> beta_g_per_gpuh;  // absent: no embodied data for the family
  double intensity_g_per_kwh = 0.0;
  double pue = 1.0;
  double compute_flops = 0.0;
};

struct EstimateReport {
  double gpu_hours = 0.0;
  double energy_kwh = 0.0;
  double operational_kg = 0.0;
  double embodied_kg = 0.0;
  double total_kg = 0.0;
  // Present only in interval mode.
  std::optional<Interval> gpu_hours_interval;
  std::optional<Interval> energy_kwh_interval;
  std::optional<Interval> operational_interval_kg;
  std::optional<Interval> embodied_interval_kg;
  std::optional<Interval> total_interval_kg;
  ResolvedInputs resolved;
};

/// Runs the estimator. `stats` (freshly calibrated statistics) takes
/// precedence over the device database alpha range when it has the family.
EstimateReport estimate(const EstimateRequest& req, const DeviceDb& db, const RegionTable& regions,
                        const AlphaStatsTable* stats = nullptr, const SolverOptions& opts = {});

// Builds a request from a record's compute, device and intensity columns.
// Throws kUnknownRegion/kInvalidArgument when no intensity is available.
EstimateRequest request_from_record(const TrainingRecord& rec, double factor = kDenseTransformerFactor);

std::string report_to_json(const EstimateReport& report, std::string_view model = {});
std::string reports_to_json(std::span<const std::pair<std::string, EstimateReport>> reports);
std::string report_to_csv(const EstimateReport& report);
std::string report_to_table(const EstimateReport& report);

// --- validation against published results -------------------------------

struct AlphaFixture {
  std::string model;
  double log10_alpha = 0.0;
  std::optional<double> reference_operational_tco2;
  std::optional<double> reference_embodied_kg;
  std::optional<double> actual_embodied_kg;
};

inline constexpr std::string_view kFixturesHeader =
    "model,log10_alpha,reference_operational_tco2,reference_embodied_kg,actual_embodied_kg";

std::vector<AlphaFixture> parse_fixtures_csv(std::string_view text);
std::vector<AlphaFixture> load_fixtures(const std::filesystem::path& path);

struct ValidationRow {
  std::string model;
  std::string family;
  double log10_alpha = 0.0;
  double family_alpha_lo = 0.0;
  double family_alpha_hi = 0.0;
  bool alpha_out_of_range = false;
  double gpu_hours = 0.0;
  double operational_tco2 = 0.0;
  double embodied_kg = 0.0;
  std::optional<double> reference_operational_tco2;
  std::optional<double> reference_embodied_kg;
  double actual_tco2 = 0.0;
  double operational_delta_pct = 0.0;
  std::optional<double> actual_embodied_kg;
  std::optional<double> embodied_delta_pct;
};

struct ValidationTable {
  std::vector<ValidationRow> rows;
  std::vector<std::string> missing;  // one message per record that could not be evaluated
};

ValidationTable validate_against_actuals(std::span<const TrainingRecord> records,
                                         std::span<const AlphaFixture> fixtures,
                                         const DeviceDb& db, const RegionTable& regions,
                                         const SolverOptions& opts = {});

std::string validation_to_json(const ValidationTable& table);
std::string validation_to_csv(const ValidationTable& table);
std::string validation_to_table(const ValidationTable& table);

// --- carbon vs. performance scatter -------------------------------------

struct ScatterPoint {
  std::string model;
  double total_tco2 = 0.0;
  std::string metric_name;
  double metric_value = 0.0;
};

struct ScalingReport {
  std::vector<ScatterPoint> points;  // ascending total_tco2, then model
  std::vector<std::string> warnings;
};

// Totals are keyed by model name, in kg.
ScalingReport scaling_report(std::span<const TrainingRecord> records,
                             const std::map<std::string, double, std::less<>>& total_kg_by_model);

// Accepts one report object or an array of them; each needs "model" and
// "total_kg".
std::map<std::string, double, std::less<>> parse_estimate_totals_json(std::string_view text);

std::string scatter_to_csv(const ScalingReport& report);

}  // namespace carboneval
