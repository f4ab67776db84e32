// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "carboneval/core.hpp"

namespace carboneval {

struct DeviceFamily {
  std::string key;
  double tdp_w = 0.0;
  double peak_tflops = 0.0;
  double alpha_log10_lo = 0.0;
  double alpha_log10_hi = 0.0;
  std::optional<double> beta_g_per_gpuh;
  std::optional<double> die_mm2;
  std::optional<int> process_nm;
  double lifetime_h = 8760.0;

  double alpha_midpoint() const { return 0.5 * (alpha_log10_lo + alpha_log10_hi); }

  friend bool operator==(const DeviceFamily&, const DeviceFamily&) = default;
};

// Throws kInvalidArgument when the record breaks a field invariant.
void validate(const DeviceFamily& family);

/// Immutable set of device families keyed by short name.
class DeviceDb {
 public:
  DeviceDb() = default;
  explicit DeviceDb(std::vector<DeviceFamily> families);

  const DeviceFamily& at(std::string_view key) const;
  const DeviceFamily* find(std::string_view key) const;
  std::vector<std::string> keys() const;
  const std::map<std::string, DeviceFamily, std::less<>>& families() const { return families_; }
  std::size_t size() const { return families_.size(); }

  /// Maps a raw hardware description ("NVIDIA A100 SXM4 80 GB") to a family
  /// key by case- and whitespace-insensitive token match; the longest
  /// matching key wins. Throws kUnknownDevice when nothing matches.
  std::string normalize(std::string_view raw) const;

  // Resolves a raw name and returns the family.
  const DeviceFamily& resolve(std::string_view raw) const;

  friend bool operator==(const DeviceDb&, const DeviceDb&) = default;

 private:
  std::map<std::string, DeviceFamily, std::less<>> families_;
};

/// The eight reference families: TDP, peak and alpha range per generation,
/// with embodied rate, die size and process node for A100, H100, TPUv3 and
/// V100.
DeviceDb builtin_db();

/// Carbon per die area (g/mm^2) by process node in nm, obtained by inverting
/// the reference embodied rates under a one-year lifespan.
const std::map<int, double>& carbon_per_area_by_process();

DeviceDb parse_db_json(std::string_view text, const DeviceDb& base = builtin_db());
std::string db_to_json(const DeviceDb& db);

/// Reads a JSON device list and overlays it on `base` (entries override by
/// key). Duplicate keys inside the file are an error.
DeviceDb load_db(const std::filesystem::path& path, const DeviceDb& base = builtin_db());
void save_db(const DeviceDb& db, const std::filesystem::path& path);

struct RegionIntensity {
  std::string region_code;
  double g_per_kwh;
};

class RegionTable {
 public:
  RegionTable() = default;
  explicit RegionTable(std::vector<RegionIntensity> rows);

  bool empty() const { return rows_.empty(); }
  std::size_t size() const { return rows_.size(); }
  const std::map<std::string, double, std::less<>>& rows() const { return rows_; }

 private:
  std::map<std::string, double, std::less<>> rows_;
};

RegionTable parse_regions_csv(std::string_view text);
RegionTable load_regions(const std::filesystem::path& path);

// Exact-match lookup; kUnknownRegion otherwise.
CarbonIntensity region_intensity(std::string_view code, const RegionTable& table);

}  // namespace carboneval
