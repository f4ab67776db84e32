// SPDX-License-Identifier: Apache-2.0
#include "carboneval/calibration.hpp"

#include <algorithm>
#include <cmath>

#include "carboneval/error.hpp"
#include "json.hpp"
#include "text_io.hpp"

namespace carboneval {

using nlohmann::json;

namespace {

enum Column {
  kModel,
  kParams,
  kDataSize,
  kTotalFlops,
  kDevice,
  kDeviceCount,
  kGpuHours,
  kWallHours,
  kRegion,
  kIntensity,
  kActual,
  kMetricName,
  kMetricValue,
  kColumnCount
};

constexpr const char* kColumnNames[kColumnCount] = {
    "model",      "params", "data_size",           "total_flops", "device",
    "device_count", "gpu_hours", "wall_hours",     "region",      "intensity_g_per_kwh",
    "actual_tco2", "metric_name", "metric_value"};

struct RowError {
  std::string reason;
};

std::optional<double> numeric_field(const std::vector<std::string>& fields, Column col) {
  const std::string& raw = fields[col];
  if (text::trim(raw).empty()) return std::nullopt;
  const auto v = text::parse_double(raw);
  if (!v) throw RowError{std::string("field '") + kColumnNames[col] + "' is not a number"};
  if (*v < 0.0) throw RowError{std::string("field '") + kColumnNames[col] + "' is negative"};
  return v;
}

TrainingRecord parse_row(const text::CsvRow& row, const IngestOptions& opts) {
  const auto& f = row.fields;
  if (f.size() != kColumnCount) {
    throw RowError{"expected " + std::to_string(kColumnCount) + " fields, found " +
                   std::to_string(f.size())};
  }
  TrainingRecord rec;
  rec.line = row.line;
  rec.model = text::trim(f[kModel]);
  if (rec.model.empty()) throw RowError{"missing model name"};
  rec.params = numeric_field(f, kParams);
  rec.data_size = numeric_field(f, kDataSize);
  rec.total_flops = numeric_field(f, kTotalFlops);
  rec.device_raw = text::trim(f[kDevice]);
  if (auto count = numeric_field(f, kDeviceCount)) {
    if (*count != std::floor(*count) || *count > 9e15) {
      throw RowError{"field 'device_count' is not an integer"};
    }
    rec.device_count = static_cast<std::int64_t>(*count);
  }
  rec.gpu_hours = numeric_field(f, kGpuHours);
  rec.wall_hours = numeric_field(f, kWallHours);
  rec.region = text::trim(f[kRegion]);
  rec.intensity_g_per_kwh = numeric_field(f, kIntensity);
  rec.actual_tco2 = numeric_field(f, kActual);
  rec.metric_name = text::trim(f[kMetricName]);
  rec.metric_value = numeric_field(f, kMetricValue);

  if (rec.device_raw.empty()) throw RowError{"missing device"};
  if (!rec.has_compute()) throw RowError{"no compute derivable"};
  if (opts.require_gpu_time && !rec.has_gpu_time()) throw RowError{"no gpu-time derivable"};
  return rec;
}

double sum_sorted(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s;
}

}  // namespace

IngestResult parse_records_csv(std::string_view text, const IngestOptions& opts) {
  const auto rows = text::parse_csv(text);
  if (rows.empty()) Fail(ErrorCode::kParse, "records: missing header row");

  std::string header;
  for (const auto& h : rows.front().fields) {
    if (!header.empty()) header += ',';
    header += text::trim(h);
  }
  if (header != kRecordsHeader) {
    Fail(ErrorCode::kParse, "records: header must be exactly '" + std::string(kRecordsHeader) + "'");
  }

  IngestResult out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    try {
      out.records.push_back(parse_row(rows[i], opts));
    } catch (const RowError& e) {
      const auto& f = rows[i].fields;
      out.rejected.push_back({rows[i].line, f.empty() ? std::string() : text::trim(f[0]), e.reason});
    }
  }
  return out;
}

IngestResult ingest_records(const std::filesystem::path& csv_path, const IngestOptions& opts) {
  try {
    return parse_records_csv(text::read_file(csv_path), opts);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) throw;
    Fail(e.code(), csv_path.string() + ": " + e.what());
  }
}

ComputeLoad derive_compute(const TrainingRecord& rec, double factor) {
  if (rec.total_flops) return ComputeLoad::from_flops(*rec.total_flops);
  if (rec.params && rec.data_size) {
    return ComputeLoad::from_flops(factor * *rec.params * *rec.data_size);
  }
  Fail(ErrorCode::kInvalidArgument, "record '" + rec.model + "': no compute derivable");
}

GpuTime derive_gpu_time(const TrainingRecord& rec) {
  if (rec.gpu_hours) return GpuTime::from_hours(*rec.gpu_hours);
  if (rec.device_count && rec.wall_hours) {
    return GpuTime::from_hours(static_cast<double>(*rec.device_count) * *rec.wall_hours);
  }
  Fail(ErrorCode::kInvalidArgument, "record '" + rec.model + "': no gpu-time derivable");
}

Calibration calibrate_record(const TrainingRecord& rec, const DeviceDb& db,
                             const SolverOptions& opts, double factor) {
  std::string family = db.normalize(rec.device_raw);
  const auto param = calibrate_alpha(derive_compute(rec, factor), derive_gpu_time(rec), opts);
  return {rec.model, std::move(family), param.log10_alpha()};
}

AlphaStatsTable aggregate_stats(std::span<const Calibration> calibrations) {
  std::map<std::string, std::vector<double>, std::less<>> groups;
  for (const auto& c : calibrations) groups[c.family].push_back(c.log10_alpha);

  AlphaStatsTable out;
  for (auto& [family, samples] : groups) {
    // Sorting first makes the sums independent of input order.
    std::sort(samples.begin(), samples.end());
    AlphaStats s;
    s.family = family;
    s.n = samples.size();
    s.mu = sum_sorted(samples) / static_cast<double>(s.n);
    if (s.n > 1) {
      double ss = 0.0;
      for (double x : samples) ss += (x - s.mu) * (x - s.mu);
      s.sigma = std::sqrt(ss / static_cast<double>(s.n - 1));
    }
    const double half = kIntervalHalfWidthSigmas * s.sigma;
    s.interval_lo = s.mu - half;
    s.interval_hi = s.mu + half;
    s.representative = s.mu;
    if (s.sigma > 0.0) {
      for (double x : samples) {
        if (std::abs(x - s.mu) > 3.0 * s.sigma) s.flagged.push_back(x);
      }
    }
    s.samples = std::move(samples);
    out.emplace(family, std::move(s));
  }
  return out;
}

CalibrationRun calibrate_records(std::span<const TrainingRecord> records, const DeviceDb& db,
                                 const SolverOptions& opts, double factor) {
  std::vector<const TrainingRecord*> order;
  for (const auto& r : records) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(),
                   [](const auto* a, const auto* b) { return a->model < b->model; });

  CalibrationRun run;
  for (const auto* rec : order) {
    try {
      run.calibrations.push_back(calibrate_record(*rec, db, opts, factor));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kConvergence) throw;
      run.rejected.push_back({rec->line, rec->model, e.what()});
    }
  }
  run.stats = aggregate_stats(run.calibrations);
  return run;
}

std::string calibration_to_json(const CalibrationRun& run) {
  json families = json::array();
  for (const auto& [_, s] : run.stats) {
    families.push_back({{"family", s.family},
                        {"n", s.n},
                        {"samples", s.samples},
                        {"mu", s.mu},
                        {"sigma", s.sigma},
                        {"interval_lo", s.interval_lo},
                        {"interval_hi", s.interval_hi},
                        {"representative", s.representative},
                        {"flagged", s.flagged}});
  }
  json calibrations = json::array();
  for (const auto& c : run.calibrations) {
    calibrations.push_back({{"model", c.model}, {"family", c.family}, {"log10_alpha", c.log10_alpha}});
  }
  json rejections = json::array();
  for (const auto& r : run.rejected) {
    rejections.push_back({{"line", r.line}, {"model", r.model}, {"reason", r.reason}});
  }
  json doc = {{"families", families}, {"calibrations", calibrations}, {"rejections", rejections}};
  return doc.dump(2) + "\n";
}

AlphaStatsTable parse_alpha_stats_json(std::string_view text) {
  AlphaStatsTable out;
  try {
    const json doc = json::parse(text);
    for (const auto& f : doc.at("families")) {
      AlphaStats s;
      s.family = f.at("family").get<std::string>();
      s.n = f.at("n").get<std::size_t>();
      s.samples = f.value("samples", std::vector<double>{});
      s.mu = f.at("mu").get<double>();
      s.sigma = f.at("sigma").get<double>();
      s.interval_lo = f.at("interval_lo").get<double>();
      s.interval_hi = f.at("interval_hi").get<double>();
      s.representative = f.at("representative").get<double>();
      s.flagged = f.value("flagged", std::vector<double>{});
      if (s.n < 1 || s.sigma < 0.0 || s.interval_lo > s.interval_hi) {
        Fail(ErrorCode::kParse, "alpha statistics for '" + s.family + "' violate their invariants");
      }
      if (!out.emplace(s.family, s).second) {
        Fail(ErrorCode::kParse, "duplicate alpha statistics for '" + s.family + "'");
      }
    }
  } catch (const json::exception& e) {
    Fail(ErrorCode::kParse, std::string("alpha statistics: ") + e.what());
  }
  return out;
}

AlphaStatsTable load_alpha_stats(const std::filesystem::path& path) {
  try {
    return parse_alpha_stats_json(text::read_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) throw;
    Fail(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace carboneval
