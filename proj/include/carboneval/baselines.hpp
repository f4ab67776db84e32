// SPDX-License-Identifier: Apache-2.0
//
// Static-throughput regression baselines (polynomial least squares,
// regression tree, linear epsilon-SVR) and the method comparison harness.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "carboneval/calibration.hpp"
#include "carboneval/devices.hpp"

namespace carboneval {

inline constexpr std::size_t kFeatureCount = 4;

struct FeatureVector {
  double log10_params = 0.0;
  double log10_total_flops = 0.0;
  double log10_peak_tflops = 0.0;
  double log10_device_count = 0.0;

  std::array<double, kFeatureCount> values() const {
    return {log10_params, log10_total_flops, log10_peak_tflops, log10_device_count};
  }
  static FeatureVector from_values(const std::array<double, kFeatureCount>& v) {
    return {v[0], v[1], v[2], v[3]};
  }
};

// Target: log10 of achieved TFLOP per GPU-second.
struct Sample {
  FeatureVector x;
  double y;
};

struct PolynomialFit {
  int degree = 0;
  std::vector<std::array<int, kFeatureCount>> exponents;  // one per monomial
  std::vector<double> coefficients;
};

struct TreeNode {
  // Leaf when feature < 0.
  int feature = -1;
  double threshold = 0.0;  // x[feature] <= threshold goes left
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct TreeFit {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::size_t leaf_count() const;
};

struct SvrFit {
  std::array<double, kFeatureCount> mean{};
  std::array<double, kFeatureCount> scale{};
  std::array<double, kFeatureCount> weights{};  // on standardized features
  double bias = 0.0;
  // Objective of the best averaged iterate at each checkpoint.
  std::vector<double> objective_trace;
};

enum class ModelKind { kPolynomial, kTree, kSvr };

class StaticThroughputModel {
 public:
  explicit StaticThroughputModel(PolynomialFit fit) : fit_(std::move(fit)) {}
  explicit StaticThroughputModel(TreeFit fit) : fit_(std::move(fit)) {}
  explicit StaticThroughputModel(SvrFit fit) : fit_(std::move(fit)) {}

  ModelKind kind() const { return static_cast<ModelKind>(fit_.index()); }
  double predict(const FeatureVector& x) const;

  const PolynomialFit& polynomial() const { return std::get<PolynomialFit>(fit_); }
  const TreeFit& tree() const { return std::get<TreeFit>(fit_); }
  const SvrFit& svr() const { return std::get<SvrFit>(fit_); }

 private:
  std::variant<PolynomialFit, TreeFit, SvrFit> fit_;
};

/// Least squares over every monomial of total degree <= degree, solved with a
/// complete orthogonal decomposition (minimum-norm when columns are
/// collinear). Throws kRankDeficient when there are fewer samples than terms.
StaticThroughputModel fit_polynomial(std::span<const Sample> data, int degree);

// Binary regression tree grown by best variance reduction. max_depth < 0
// means unlimited.
StaticThroughputModel fit_tree(std::span<const Sample> data, int max_depth, int min_leaf);

/// Linear epsilon-insensitive SVR on standardized features, minimizing
/// 0.5 |w|^2 + c * mean(max(0, |y - w.z - b| - epsilon)) by full-batch
/// subgradient descent with step 1/sqrt(k). Iterates are averaged and the
/// averaged iterate with the lowest objective seen at any checkpoint is
/// returned. `seed` drives the initial weights.
StaticThroughputModel fit_svr(std::span<const Sample> data, double epsilon, double c,
                              int iterations, std::uint64_t seed);

struct BaselineConfig {
  int degree = 2;
  int max_depth = 4;
  int min_leaf = 2;
  double epsilon = 0.05;
  double c = 10.0;
  int iterations = 5000;
  std::uint64_t seed = 42;
  double factor = kDenseTransformerFactor;
  // Dynamic column: calibrate alpha on each evaluated record itself instead of
  // using the family statistics from the training set.
  bool per_record_alpha = false;
};

// Features of a record; nullopt when the parameter count cannot be derived.
// device_count falls back to gpu_hours / wall_hours, then to 1.
std::optional<FeatureVector> features_of(const TrainingRecord& rec, const DeviceFamily& family,
                                         double factor = kDenseTransformerFactor);

struct MethodRow {
  std::string name;
  std::vector<double> predicted_tco2;
  std::vector<double> delta_pct;
};

struct ComparisonTable {
  std::vector<std::string> models;
  std::vector<double> actual_tco2;
  std::vector<MethodRow> methods;  // Polynomial, SVR, DTR, Dynamic
  std::vector<std::string> warnings;
};

ComparisonTable compare_methods(std::span<const TrainingRecord> train,
                                std::span<const TrainingRecord> eval, const DeviceDb& db,
                                const RegionTable& regions, const BaselineConfig& config = {},
                                const SolverOptions& opts = {});

std::string comparison_to_csv(const ComparisonTable& table);
std::string comparison_to_json(const ComparisonTable& table);
std::string comparison_to_table(const ComparisonTable& table);

}  // namespace carboneval
