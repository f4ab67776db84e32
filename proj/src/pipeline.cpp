// SPDX-License-Identifier: Apache-2.0
#include "carboneval/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "carboneval/error.hpp"
#include "json.hpp"
#include "text_io.hpp"

namespace carboneval {

using ojson = nlohmann::ordered_json;

namespace {

struct PointResult {
  double gpu_hours;
  double energy_kwh;
  double operational_kg;
  double embodied_kg;
  double total_kg;
};

double resolve_flops(const ComputeSource& src) {
  return std::visit(
      [](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, FlopsSource>) {
          if (!std::isfinite(s.total_flops) || s.total_flops < 0.0) {
            Fail(ErrorCode::kInvalidArgument, "total FLOPs must be finite and non-negative");
          }
          return s.total_flops;
        } else {
          if (!(s.params >= 0.0) || !(s.data_size >= 0.0) || !(s.factor > 0.0)) {
            Fail(ErrorCode::kInvalidArgument,
                 "params and data size must be non-negative and the factor positive");
          }
          return s.factor * s.params * s.data_size;
        }
      },
      src);
}

double resolve_intensity(const IntensitySource& src, const RegionTable& regions) {
  if (const auto* r = std::get_if<RegionSource>(&src)) {
    return region_intensity(r->code, regions).g_per_kwh();
  }
  return CarbonIntensity(std::get<DirectIntensity>(src).g_per_kwh).g_per_kwh();
}

void check_alpha(double log10_alpha, const SolverOptions& opts) {
  if (!ThroughputParam(log10_alpha).within(opts)) {
    std::ostringstream msg;
    msg << "log10(alpha) = " << log10_alpha << " is outside the solver bounds ["
        << opts.log10_alpha_min << ", " << opts.log10_alpha_max << "]";
    Fail(ErrorCode::kRange, msg.str());
  }
}

PointResult evaluate(ComputeLoad load, double log10_alpha, const ResolvedInputs& in,
                     const SolverOptions& opts) {
  const GpuTime time = solve_gpu_time(load, ThroughputParam(log10_alpha), opts);
  const auto op = operational_carbon(PowerDraw(in.tdp_w), time, CarbonIntensity(in.intensity_g_per_kwh),
                                     in.pue);
  const double embodied =
      in.beta_g_per_gpuh ? embodied_from_rate(time, EmbodiedRate(*in.beta_g_per_gpuh)).kg() : 0.0;
  return {time.hours(), op.energy_kwh, op.emission.kg(), embodied, op.emission.kg() + embodied};
}

ojson interval_json(const std::optional<Interval>& iv) {
  if (!iv) return nullptr;
  ojson o;
  o["lo"] = iv->lo;
  o["hi"] = iv->hi;
  return o;
}

template <typename T>
ojson opt_json(const std::optional<T>& v) {
  return v ? ojson(*v) : ojson(nullptr);
}

ojson report_json(const EstimateReport& r, std::string_view model) {
  ojson o;
  if (!model.empty()) o["model"] = std::string(model);
  o["gpu_hours"] = r.gpu_hours;
  o["energy_kwh"] = r.energy_kwh;
  o["operational_kg"] = r.operational_kg;
  o["embodied_kg"] = r.embodied_kg;
  o["total_kg"] = r.total_kg;
  o["gpu_hours_interval"] = interval_json(r.gpu_hours_interval);
  o["energy_kwh_interval"] = interval_json(r.energy_kwh_interval);
  o["operational_interval_kg"] = interval_json(r.operational_interval_kg);
  o["embodied_interval_kg"] = interval_json(r.embodied_interval_kg);
  o["total_interval_kg"] = interval_json(r.total_interval_kg);
  ojson res;
  res["family"] = r.resolved.family;
  res["log10_alpha"] = r.resolved.log10_alpha;
  res["log10_alpha_interval"] = interval_json(r.resolved.log10_alpha_interval);
  res["tdp_w"] = r.resolved.tdp_w;
  res["beta_g_per_gpuh"] = opt_json(r.resolved.beta_g_per_gpuh);
  res["intensity_g_per_kwh"] = r.resolved.intensity_g_per_kwh;
  res["pue"] = r.resolved.pue;
  res["compute_flops"] = r.resolved.compute_flops;
  o["resolved"] = std::move(res);
  return o;
}

std::string opt_text(const std::optional<double>& v) { return v ? text::shortest(*v) : ""; }

std::string signed_pct(double v) {
  std::string s = text::fixed(v, 1);
  if (v >= 0.0) s.insert(s.begin(), '+');
  return s + "%";
}

}  // namespace

std::optional<AlphaMode> parse_alpha_mode(std::string_view name) {
  if (name == "midpoint") return AlphaMode::kMidpoint;
  if (name == "interval") return AlphaMode::kInterval;
  if (name == "explicit") return AlphaMode::kExplicit;
  return std::nullopt;
}

std::string_view to_string(AlphaMode mode) {
  switch (mode) {
    case AlphaMode::kMidpoint:
      return "midpoint";
    case AlphaMode::kInterval:
      return "interval";
    case AlphaMode::kExplicit:
      return "explicit";
  }
  return "midpoint";
}

EstimateReport estimate(const EstimateRequest& req, const DeviceDb& db, const RegionTable& regions,
                        const AlphaStatsTable* stats, const SolverOptions& opts) {
  if (!std::isfinite(req.pue) || req.pue < 1.0) Fail(ErrorCode::kDomain, "PUE must be at least 1.0");
  if (req.alpha_mode == AlphaMode::kExplicit && !req.explicit_log10_alpha) {
    Fail(ErrorCode::kInvalidArgument, "explicit alpha mode requires a log10(alpha) value");
  }
  if (req.alpha_mode != AlphaMode::kExplicit && req.explicit_log10_alpha) {
    Fail(ErrorCode::kInvalidArgument, "a log10(alpha) value is only valid in explicit alpha mode");
  }

  const DeviceFamily& family = db.resolve(req.device_raw);
  const double flops = resolve_flops(req.compute);
  const ComputeLoad load = ComputeLoad::from_flops(flops);

  EstimateReport report;
  ResolvedInputs& in = report.resolved;
  in.family = family.key;
  in.compute_flops = flops;
  in.intensity_g_per_kwh = resolve_intensity(req.intensity, regions);
  in.tdp_w = PowerDraw(req.tdp_override_w.value_or(family.tdp_w)).watts();
  in.beta_g_per_gpuh = req.beta_override_g_per_gpuh ? req.beta_override_g_per_gpuh : family.beta_g_per_gpuh;
  if (in.beta_g_per_gpuh) (void)EmbodiedRate(*in.beta_g_per_gpuh);
  in.pue = req.pue;

  const AlphaStats* fitted = nullptr;
  if (stats != nullptr) {
    if (auto it = stats->find(family.key); it != stats->end()) fitted = &it->second;
  }
  const double midpoint = fitted ? fitted->representative : family.alpha_midpoint();
  const Interval range = fitted ? Interval{fitted->interval_lo, fitted->interval_hi}
                                : Interval{family.alpha_log10_lo, family.alpha_log10_hi};

  switch (req.alpha_mode) {
    case AlphaMode::kExplicit:
      in.log10_alpha = *req.explicit_log10_alpha;
      break;
    case AlphaMode::kMidpoint:
      in.log10_alpha = midpoint;
      break;
    case AlphaMode::kInterval:
      in.log10_alpha = midpoint;
      in.log10_alpha_interval = range;
      break;
  }
  check_alpha(in.log10_alpha, opts);

  const PointResult point = evaluate(load, in.log10_alpha, in, opts);
  report.gpu_hours = point.gpu_hours;
  report.energy_kwh = point.energy_kwh;
  report.operational_kg = point.operational_kg;
  report.embodied_kg = point.embodied_kg;
  report.total_kg = point.total_kg;

  if (in.log10_alpha_interval) {
    check_alpha(range.lo, opts);
    check_alpha(range.hi, opts);
    // Larger alpha means less GPU-time, so the upper exponent gives the lower
    // bound on every quantity.
    const PointResult low = evaluate(load, range.hi, in, opts);
    const PointResult high = evaluate(load, range.lo, in, opts);
    if (!(low.gpu_hours <= high.gpu_hours && low.operational_kg <= high.operational_kg &&
          low.embodied_kg <= high.embodied_kg)) {
      Fail(ErrorCode::kConvergence, "interval endpoints are not ordered; solver tolerance too loose");
    }
    report.gpu_hours_interval = Interval{low.gpu_hours, high.gpu_hours};
    report.energy_kwh_interval = Interval{low.energy_kwh, high.energy_kwh};
    report.operational_interval_kg = Interval{low.operational_kg, high.operational_kg};
    report.embodied_interval_kg = Interval{low.embodied_kg, high.embodied_kg};
    report.total_interval_kg = Interval{low.total_kg, high.total_kg};
  }
  return report;
}

EstimateRequest request_from_record(const TrainingRecord& rec, double factor) {
  EstimateRequest req;
  if (rec.total_flops) {
    req.compute = FlopsSource{*rec.total_flops};
  } else if (rec.params && rec.data_size) {
    req.compute = ParamsDataSource{*rec.params, *rec.data_size, factor};
  } else {
    Fail(ErrorCode::kInvalidArgument, "record '" + rec.model + "': no compute derivable");
  }
  req.device_raw = rec.device_raw;
  if (rec.intensity_g_per_kwh) {
    req.intensity = DirectIntensity{*rec.intensity_g_per_kwh};
  } else if (!rec.region.empty()) {
    req.intensity = RegionSource{rec.region};
  } else {
    Fail(ErrorCode::kInvalidArgument, "record '" + rec.model + "': no region or carbon intensity");
  }
  return req;
}

std::string report_to_json(const EstimateReport& report, std::string_view model) {
  return report_json(report, model).dump(2) + "\n";
}

std::string reports_to_json(std::span<const std::pair<std::string, EstimateReport>> reports) {
  ojson arr = ojson::array();
  for (const auto& [model, r] : reports) arr.push_back(report_json(r, model));
  return arr.dump(2) + "\n";
}

std::string report_to_csv(const EstimateReport& r) {
  auto lo = [](const std::optional<Interval>& iv) { return iv ? text::shortest(iv->lo) : ""; };
  auto hi = [](const std::optional<Interval>& iv) { return iv ? text::shortest(iv->hi) : ""; };
  std::ostringstream out;
  out << "family,log10_alpha,tdp_w,beta_g_per_gpuh,intensity_g_per_kwh,pue,gpu_hours,energy_kwh,"
         "operational_kg,embodied_kg,total_kg,operational_lo_kg,operational_hi_kg,embodied_lo_kg,"
         "embodied_hi_kg,total_lo_kg,total_hi_kg\n";
  out << text::csv_escape(r.resolved.family) << ',' << text::shortest(r.resolved.log10_alpha) << ','
      << text::shortest(r.resolved.tdp_w) << ',' << opt_text(r.resolved.beta_g_per_gpuh) << ','
      << text::shortest(r.resolved.intensity_g_per_kwh) << ',' << text::shortest(r.resolved.pue)
      << ',' << text::shortest(r.gpu_hours) << ',' << text::shortest(r.energy_kwh) << ','
      << text::shortest(r.operational_kg) << ',' << text::shortest(r.embodied_kg) << ','
      << text::shortest(r.total_kg) << ',' << lo(r.operational_interval_kg) << ','
      << hi(r.operational_interval_kg) << ',' << lo(r.embodied_interval_kg) << ','
      << hi(r.embodied_interval_kg) << ',' << lo(r.total_interval_kg) << ','
      << hi(r.total_interval_kg) << '\n';
  return out.str();
}

std::string report_to_table(const EstimateReport& r) {
  std::ostringstream out;
  auto line = [&](std::string_view label, const std::string& value) {
    out << label;
    for (std::size_t i = label.size(); i < 22; ++i) out << ' ';
    out << value << '\n';
  };
  auto tonnes = [&](double kg, const std::optional<Interval>& iv) {
    std::string s = text::fixed(kg / 1000.0, 2) + " t";
    if (iv) s += "  [" + text::fixed(iv->lo / 1000.0, 2) + ", " + text::fixed(iv->hi / 1000.0, 2) + "]";
    return s;
  };
  line("device family", r.resolved.family);
  std::string alpha = text::fixed(r.resolved.log10_alpha, 4);
  if (r.resolved.log10_alpha_interval) {
    alpha += "  [" + text::fixed(r.resolved.log10_alpha_interval->lo, 4) + ", " +
             text::fixed(r.resolved.log10_alpha_interval->hi, 4) + "]";
  }
  line("log10(alpha)", alpha);
  line("TDP", text::fixed(r.resolved.tdp_w, 1) + " W");
  line("embodied rate",
       r.resolved.beta_g_per_gpuh ? text::fixed(*r.resolved.beta_g_per_gpuh, 3) + " g/GPUh" : "n/a");
  line("carbon intensity", text::fixed(r.resolved.intensity_g_per_kwh, 2) + " g/kWh");
  line("PUE", text::fixed(r.resolved.pue, 3));
  line("GPU-hours", text::fixed(r.gpu_hours, 2));
  line("energy", text::fixed(r.energy_kwh, 2) + " kWh");
  line("operational CO2eq", tonnes(r.operational_kg, r.operational_interval_kg));
  line("embodied CO2eq", tonnes(r.embodied_kg, r.embodied_interval_kg));
  line("total CO2eq", tonnes(r.total_kg, r.total_interval_kg));
  return out.str();
}

// --- validation ------------------------------------------------------------

std::vector<AlphaFixture> parse_fixtures_csv(std::string_view csv) {
  const auto rows = text::parse_csv(csv);
  if (rows.empty()) Fail(ErrorCode::kParse, "fixtures: missing header row");
  std::string header;
  for (const auto& h : rows.front().fields) header += (header.empty() ? "" : ",") + text::trim(h);
  if (header != kFixturesHeader) {
    Fail(ErrorCode::kParse, "fixtures: header must be exactly '" + std::string(kFixturesHeader) + "'");
  }
  std::vector<AlphaFixture> out;
  std::set<std::string> seen;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i].fields;
    const std::string where = "fixtures line " + std::to_string(rows[i].line);
    if (f.size() != 5) Fail(ErrorCode::kParse, where + ": expected 5 fields");
    auto optional_field = [&](std::size_t col, const char* name) -> std::optional<double> {
      if (text::trim(f[col]).empty()) return std::nullopt;
      auto v = text::parse_double(f[col]);
      if (!v) Fail(ErrorCode::kParse, where + ": field '" + name + "' is not a number");
      return v;
    };
    AlphaFixture fx;
    fx.model = text::trim(f[0]);
    if (fx.model.empty()) Fail(ErrorCode::kParse, where + ": missing model");
    const auto alpha = optional_field(1, "log10_alpha");
    if (!alpha) Fail(ErrorCode::kParse, where + ": missing log10_alpha");
    fx.log10_alpha = *alpha;
    fx.reference_operational_tco2 = optional_field(2, "reference_operational_tco2");
    fx.reference_embodied_kg = optional_field(3, "reference_embodied_kg");
    fx.actual_embodied_kg = optional_field(4, "actual_embodied_kg");
    if (!seen.insert(fx.model).second) Fail(ErrorCode::kParse, where + ": duplicate model");
    out.push_back(std::move(fx));
  }
  return out;
}

std::vector<AlphaFixture> load_fixtures(const std::filesystem::path& path) {
  try {
    return parse_fixtures_csv(text::read_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) throw;
    Fail(e.code(), path.string() + ": " + e.what());
  }
}

ValidationTable validate_against_actuals(std::span<const TrainingRecord> records,
                                         std::span<const AlphaFixture> fixtures,
                                         const DeviceDb& db, const RegionTable& regions,
                                         const SolverOptions& opts) {
  ValidationTable table;
  for (const auto& rec : records) {
    const auto fx = std::find_if(fixtures.begin(), fixtures.end(),
                                 [&](const AlphaFixture& f) { return f.model == rec.model; });
    if (fx == fixtures.end()) {
      table.missing.push_back(rec.model + ": no alpha fixture");
      continue;
    }
    if (!rec.actual_tco2 || *rec.actual_tco2 == 0.0) {
      table.missing.push_back(rec.model + ": no actual emissions");
      continue;
    }
    try {
      EstimateRequest req = request_from_record(rec);
      req.alpha_mode = AlphaMode::kExplicit;
      req.explicit_log10_alpha = fx->log10_alpha;
      const EstimateReport rep = estimate(req, db, regions, nullptr, opts);
      const DeviceFamily& family = db.at(rep.resolved.family);

      ValidationRow row;
      row.model = rec.model;
      row.family = family.key;
      row.log10_alpha = fx->log10_alpha;
      row.family_alpha_lo = family.alpha_log10_lo;
      row.family_alpha_hi = family.alpha_log10_hi;
      row.alpha_out_of_range =
          fx->log10_alpha < family.alpha_log10_lo || fx->log10_alpha > family.alpha_log10_hi;
      row.gpu_hours = rep.gpu_hours;
      row.operational_tco2 = rep.operational_kg / 1000.0;
      row.embodied_kg = rep.embodied_kg;
      row.reference_operational_tco2 = fx->reference_operational_tco2;
      row.reference_embodied_kg = fx->reference_embodied_kg;
      row.actual_tco2 = *rec.actual_tco2;
      row.operational_delta_pct = relative_error(row.operational_tco2, row.actual_tco2);
      row.actual_embodied_kg = fx->actual_embodied_kg;
      if (fx->actual_embodied_kg && *fx->actual_embodied_kg != 0.0) {
        row.embodied_delta_pct = relative_error(row.embodied_kg, *fx->actual_embodied_kg);
      }
      table.rows.push_back(std::move(row));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kConvergence) throw;
      table.missing.push_back(rec.model + ": " + e.what());
    }
  }
  return table;
}

std::string validation_to_json(const ValidationTable& t) {
  ojson rows = ojson::array();
  for (const auto& r : t.rows) {
    ojson o;
    o["model"] = r.model;
    o["family"] = r.family;
    o["log10_alpha"] = r.log10_alpha;
    o["family_alpha_range"] = ojson::array({r.family_alpha_lo, r.family_alpha_hi});
    o["alpha_out_of_range"] = r.alpha_out_of_range;
    o["gpu_hours"] = r.gpu_hours;
    o["operational_tco2"] = r.operational_tco2;
    o["reference_operational_tco2"] = opt_json(r.reference_operational_tco2);
    o["actual_tco2"] = r.actual_tco2;
    o["operational_delta_pct"] = r.operational_delta_pct;
    o["embodied_kg"] = r.embodied_kg;
    o["reference_embodied_kg"] = opt_json(r.reference_embodied_kg);
    o["actual_embodied_kg"] = opt_json(r.actual_embodied_kg);
    o["embodied_delta_pct"] = opt_json(r.embodied_delta_pct);
    rows.push_back(std::move(o));
  }
  ojson doc;
  doc["rows"] = std::move(rows);
  doc["missing"] = t.missing;
  return doc.dump(2) + "\n";
}

std::string validation_to_csv(const ValidationTable& t) {
  std::ostringstream out;
  out << "model,family,log10_alpha,alpha_out_of_range,gpu_hours,operational_tco2,"
         "reference_operational_tco2,actual_tco2,operational_delta_pct,embodied_kg,"
         "reference_embodied_kg,actual_embodied_kg,embodied_delta_pct\n";
  for (const auto& r : t.rows) {
    out << text::csv_escape(r.model) << ',' << r.family << ',' << text::shortest(r.log10_alpha) << ','
        << (r.alpha_out_of_range ? "true" : "false") << ',' << text::shortest(r.gpu_hours) << ','
        << text::shortest(r.operational_tco2) << ',' << opt_text(r.reference_operational_tco2) << ','
        << text::shortest(r.actual_tco2) << ',' << text::shortest(r.operational_delta_pct) << ','
        << text::shortest(r.embodied_kg) << ',' << opt_text(r.reference_embodied_kg) << ','
        << opt_text(r.actual_embodied_kg) << ',' << opt_text(r.embodied_delta_pct) << '\n';
  }
  return out.str();
}

std::string validation_to_table(const ValidationTable& t) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-12s %-6s %10s %12s %10s %9s %12s %10s %9s  %s\n", "model",
                "device", "log10(a)", "operational", "actual", "delta", "embodied kg", "actual kg",
                "delta", "alpha");
  out << buf;
  for (const auto& r : t.rows) {
    std::snprintf(buf, sizeof(buf), "%-12s %-6s %10.4f %12.2f %10.2f %9s %12.2f %10s %9s  %s\n",
                  r.model.c_str(), r.family.c_str(), r.log10_alpha, r.operational_tco2, r.actual_tco2,
                  signed_pct(r.operational_delta_pct).c_str(), r.embodied_kg,
                  r.actual_embodied_kg ? text::fixed(*r.actual_embodied_kg, 2).c_str() : "-",
                  r.embodied_delta_pct ? signed_pct(*r.embodied_delta_pct).c_str() : "-",
                  r.alpha_out_of_range ? "OUT OF FAMILY RANGE" : "in range");
    out << buf;
  }
  for (const auto& m : t.missing) out << "missing: " << m << '\n';
  return out.str();
}

// --- scaling scatter ---------------------------------------------------------

ScalingReport scaling_report(std::span<const TrainingRecord> records,
                             const std::map<std::string, double, std::less<>>& total_kg_by_model) {
  ScalingReport rep;
  for (const auto& rec : records) {
    if (rec.metric_name.empty() || !rec.metric_value) {
      rep.warnings.push_back(rec.model + ": no performance metric, skipped");
      continue;
    }
    const auto it = total_kg_by_model.find(rec.model);
    if (it == total_kg_by_model.end()) {
      rep.warnings.push_back(rec.model + ": no estimate, skipped");
      continue;
    }
    rep.points.push_back({rec.model, it->second / 1000.0, rec.metric_name, *rec.metric_value});
  }
  std::sort(rep.points.begin(), rep.points.end(), [](const ScatterPoint& a, const ScatterPoint& b) {
    if (a.total_tco2 != b.total_tco2) return a.total_tco2 < b.total_tco2;
    return a.model < b.model;
  });
  return rep;
}

std::map<std::string, double, std::less<>> parse_estimate_totals_json(std::string_view text) {
  std::map<std::string, double, std::less<>> out;
  try {
    const auto doc = nlohmann::json::parse(text);
    const auto items = doc.is_array() ? doc : nlohmann::json::array({doc});
    for (const auto& item : items) {
      const auto model = item.at("model").get<std::string>();
      const double total = item.at("total_kg").get<double>();
      if (!(total >= 0.0)) Fail(ErrorCode::kParse, "estimate for '" + model + "': negative total_kg");
      if (!out.emplace(model, total).second) {
        Fail(ErrorCode::kParse, "duplicate estimate for model '" + model + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kParse, std::string("estimates: ") + e.what());
  }
  return out;
}

std::string scatter_to_csv(const ScalingReport& report) {
  std::ostringstream out;
  out << "model,total_tco2,metric_name,metric_value\n";
  for (const auto& p : report.points) {
    out << text::csv_escape(p.model) << ',' << text::shortest(p.total_tco2) << ','
        << text::csv_escape(p.metric_name) << ',' << text::shortest(p.metric_value) << '\n';
  }
  return out.str();
}

}  // namespace carboneval
