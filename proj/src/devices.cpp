// SPDX-License-Identifier: Apache-2.0
#include "carboneval/devices.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "carboneval/error.hpp"
#include "json.hpp"
#include "text_io.hpp"

namespace carboneval {

using nlohmann::json;

namespace {

std::string canonical_token(std::string_view s) {
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c)) out.push_back(static_cast<char>(std::toupper(c)));
  }
  return out;
}

void check(bool ok, const DeviceFamily& f, const char* what) {
  if (!ok) Fail(ErrorCode::kInvalidArgument, "device family '" + f.key + "': " + what);
}

constexpr const char* kFieldNames[] = {"key",          "tdp_w",          "peak_tflops",
                                       "alpha_log10_lo", "alpha_log10_hi", "beta_g_per_gpuh",
                                       "die_mm2",      "process_nm",     "lifetime_h"};

double required_number(const json& obj, const char* field, const std::string& where) {
  if (!obj.contains(field)) Fail(ErrorCode::kParse, where + ": missing field '" + field + "'");
  const json& v = obj.at(field);
  if (!v.is_number()) Fail(ErrorCode::kParse, where + ": field '" + field + "' must be a number");
  return v.get<double>();
}

std::optional<double> optional_number(const json& obj, const char* field, const std::string& where) {
  if (!obj.contains(field) || obj.at(field).is_null()) return std::nullopt;
  const json& v = obj.at(field);
  if (!v.is_number()) Fail(ErrorCode::kParse, where + ": field '" + field + "' must be a number");
  return v.get<double>();
}

}  // namespace

void validate(const DeviceFamily& f) {
  if (f.key.empty() || canonical_token(f.key).empty()) {
    Fail(ErrorCode::kInvalidArgument, "device family key must contain letters or digits");
  }
  check(std::isfinite(f.tdp_w) && f.tdp_w > 0.0, f, "tdp_w must be positive");
  check(std::isfinite(f.peak_tflops) && f.peak_tflops > 0.0, f, "peak_tflops must be positive");
  check(std::isfinite(f.alpha_log10_lo) && std::isfinite(f.alpha_log10_hi), f,
        "alpha range must be finite");
  check(f.alpha_log10_lo <= f.alpha_log10_hi, f, "alpha_log10_lo exceeds alpha_log10_hi");
  check(std::isfinite(f.lifetime_h) && f.lifetime_h > 0.0, f, "lifetime_h must be positive");
  if (f.beta_g_per_gpuh) {
    check(std::isfinite(*f.beta_g_per_gpuh) && *f.beta_g_per_gpuh >= 0.0, f,
          "beta_g_per_gpuh must be non-negative");
  }
  if (f.die_mm2) check(std::isfinite(*f.die_mm2) && *f.die_mm2 > 0.0, f, "die_mm2 must be positive");
  if (f.process_nm) check(*f.process_nm > 0, f, "process_nm must be positive");
}

DeviceDb::DeviceDb(std::vector<DeviceFamily> families) {
  for (auto& f : families) {
    validate(f);
    const std::string key = f.key;
    if (!families_.emplace(key, std::move(f)).second) {
      Fail(ErrorCode::kInvalidArgument, "duplicate device family '" + key + "'");
    }
  }
}

const DeviceFamily* DeviceDb::find(std::string_view key) const {
  const auto it = families_.find(key);
  return it == families_.end() ? nullptr : &it->second;
}

const DeviceFamily& DeviceDb::at(std::string_view key) const {
  if (const auto* f = find(key)) return *f;
  Fail(ErrorCode::kUnknownDevice, "unknown device family '" + std::string(key) + "'");
}

std::vector<std::string> DeviceDb::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : families_) out.push_back(k);
  return out;
}

std::string DeviceDb::normalize(std::string_view raw) const {
  const std::string haystack = canonical_token(raw);
  const std::string* best = nullptr;
  std::size_t best_len = 0;
  if (!haystack.empty()) {
    // Map iteration is ordered by key, so equal-length ties resolve to the
    // lexicographically smallest key.
    for (const auto& [key, _] : families_) {
      const std::string token = canonical_token(key);
      if (token.size() > best_len && haystack.find(token) != std::string::npos) {
        best = &key;
        best_len = token.size();
      }
    }
  }
  if (best == nullptr) {
    std::string known;
    for (const auto& [key, _] : families_) known += (known.empty() ? "" : ", ") + key;
    Fail(ErrorCode::kUnknownDevice, "unknown device '" + std::string(raw) +
                                        "': no device family matches (known: " + known + ")");
  }
  return *best;
}

const DeviceFamily& DeviceDb::resolve(std::string_view raw) const { return at(normalize(raw)); }

DeviceDb builtin_db() {
  auto fam = [](std::string key, double tdp, double peak, double lo, double hi) {
    DeviceFamily f;
    f.key = std::move(key);
    f.tdp_w = tdp;
    f.peak_tflops = peak;
    f.alpha_log10_lo = lo;
    f.alpha_log10_hi = hi;
    return f;
  };
  auto embodied = [](DeviceFamily f, double beta, double die, int process) {
    f.beta_g_per_gpuh = beta;
    f.die_mm2 = die;
    f.process_nm = process;
    return f;
  };
  return DeviceDb({
      fam("TPUv2", 280, 46, -1, -0.5),
      embodied(fam("TPUv3", 450, 123, 3, 13), 0.8, 700, 16),
      fam("TPUv4", 300, 275, 15, 40),
      fam("K80", 300, 8.73, -6.7, -6.6),
      fam("P100", 300, 21.2, -4.5, -3.8),
      embodied(fam("V100", 300, 125, -2, 10), 1.1, 815, 12),
      embodied(fam("A100", 400, 312, 20, 50), 1.5, 826, 7),
      embodied(fam("H100", 700, 989, 100, 110), 1.7, 814, 4),
  });
}

const std::map<int, double>& carbon_per_area_by_process() {
  static const std::map<int, double> table{{4, 18.29}, {7, 15.91}, {12, 11.82}, {16, 10.01}};
  return table;
}

DeviceDb parse_db_json(std::string_view text, const DeviceDb& base) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    Fail(ErrorCode::kParse, std::string("device database: ") + e.what());
  }
  if (!doc.is_array()) Fail(ErrorCode::kParse, "device database: top level must be a JSON array");

  std::set<std::string> seen;
  auto merged = base.families();
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& obj = doc[i];
    std::string where = "device database entry " + std::to_string(i + 1);
    if (!obj.is_object()) Fail(ErrorCode::kParse, where + ": expected an object");
    for (const auto& [name, _] : obj.items()) {
      if (std::find_if(std::begin(kFieldNames), std::end(kFieldNames),
                       [&](const char* f) { return name == f; }) == std::end(kFieldNames)) {
        Fail(ErrorCode::kParse, where + ": unknown field '" + name + "'");
      }
    }
    if (!obj.contains("key") || !obj.at("key").is_string()) {
      Fail(ErrorCode::kParse, where + ": field 'key' must be a string");
    }
    DeviceFamily f;
    f.key = obj.at("key").get<std::string>();
    where += " ('" + f.key + "')";
    f.tdp_w = required_number(obj, "tdp_w", where);
    f.peak_tflops = required_number(obj, "peak_tflops", where);
    f.alpha_log10_lo = required_number(obj, "alpha_log10_lo", where);
    f.alpha_log10_hi = required_number(obj, "alpha_log10_hi", where);
    f.beta_g_per_gpuh = optional_number(obj, "beta_g_per_gpuh", where);
    f.die_mm2 = optional_number(obj, "die_mm2", where);
    if (obj.contains("process_nm") && !obj.at("process_nm").is_null()) {
      if (!obj.at("process_nm").is_number_integer()) {
        Fail(ErrorCode::kParse, where + ": field 'process_nm' must be an integer");
      }
      f.process_nm = obj.at("process_nm").get<int>();
    }
    if (auto life = optional_number(obj, "lifetime_h", where)) f.lifetime_h = *life;

    if (!seen.insert(f.key).second) {
      Fail(ErrorCode::kParse, where + ": duplicate key '" + f.key + "'");
    }
    try {
      validate(f);
    } catch (const Error& e) {
      Fail(ErrorCode::kParse, where + ": " + e.what());
    }
    merged.insert_or_assign(f.key, std::move(f));
  }

  std::vector<DeviceFamily> out;
  for (auto& [_, f] : merged) out.push_back(std::move(f));
  return DeviceDb(std::move(out));
}

std::string db_to_json(const DeviceDb& db) {
  json doc = json::array();
  auto opt = [](const auto& v) { return v ? json(*v) : json(nullptr); };
  for (const auto& [_, f] : db.families()) {
    json obj = json::object();
    obj["key"] = f.key;
    obj["tdp_w"] = f.tdp_w;
    obj["peak_tflops"] = f.peak_tflops;
    obj["alpha_log10_lo"] = f.alpha_log10_lo;
    obj["alpha_log10_hi"] = f.alpha_log10_hi;
    obj["beta_g_per_gpuh"] = opt(f.beta_g_per_gpuh);
    obj["die_mm2"] = opt(f.die_mm2);
    obj["process_nm"] = opt(f.process_nm);
    obj["lifetime_h"] = f.lifetime_h;
    doc.push_back(std::move(obj));
  }
  return doc.dump(2) + "\n";
}

DeviceDb load_db(const std::filesystem::path& path, const DeviceDb& base) {
  try {
    return parse_db_json(text::read_file(path), base);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) throw;
    Fail(e.code(), path.string() + ": " + e.what());
  }
}

void save_db(const DeviceDb& db, const std::filesystem::path& path) {
  text::write_file(path, db_to_json(db));
}

RegionTable::RegionTable(std::vector<RegionIntensity> rows) {
  for (auto& r : rows) {
    if (r.region_code.empty()) Fail(ErrorCode::kInvalidArgument, "empty region code");
    if (!std::isfinite(r.g_per_kwh) || r.g_per_kwh < 0.0) {
      Fail(ErrorCode::kInvalidArgument,
           "region '" + r.region_code + "': carbon intensity must be non-negative");
    }
    if (!rows_.emplace(r.region_code, r.g_per_kwh).second) {
      Fail(ErrorCode::kInvalidArgument, "duplicate region code '" + r.region_code + "'");
    }
  }
}

RegionTable parse_regions_csv(std::string_view text) {
  const auto rows = text::parse_csv(text);
  if (rows.empty()) Fail(ErrorCode::kParse, "region table: missing header row");
  const auto& header = rows.front().fields;
  if (header.size() != 2 || text::trim(header[0]) != "region_code" ||
      text::trim(header[1]) != "g_per_kwh") {
    Fail(ErrorCode::kParse, "region table: header must be 'region_code,g_per_kwh'");
  }
  std::vector<RegionIntensity> out;
  std::set<std::string> seen;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const std::string where = "region table line " + std::to_string(row.line);
    if (row.fields.size() != 2) Fail(ErrorCode::kParse, where + ": expected 2 fields");
    const std::string code = text::trim(row.fields[0]);
    const auto value = text::parse_double(row.fields[1]);
    if (code.empty()) Fail(ErrorCode::kParse, where + ": empty region_code");
    if (!value || *value < 0.0) {
      Fail(ErrorCode::kParse, where + ": field 'g_per_kwh' must be a non-negative number");
    }
    if (!seen.insert(code).second) Fail(ErrorCode::kParse, where + ": duplicate region '" + code + "'");
    out.push_back({code, *value});
  }
  return RegionTable(std::move(out));
}

RegionTable load_regions(const std::filesystem::path& path) {
  try {
    return parse_regions_csv(text::read_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) throw;
    Fail(e.code(), path.string() + ": " + e.what());
  }
}

CarbonIntensity region_intensity(std::string_view code, const RegionTable& table) {
  const auto it = table.rows().find(code);
  if (it == table.rows().end()) {
    Fail(ErrorCode::kUnknownRegion, "unknown region '" + std::string(code) +
                                        "'; pass the grid carbon intensity directly with --intensity");
  }
  return CarbonIntensity(it->second);
}

}  // namespace carboneval
