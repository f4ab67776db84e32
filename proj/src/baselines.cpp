// SPDX-License-Identifier: Apache-2.0
#include "carboneval/baselines.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "carboneval/error.hpp"
#include "carboneval/pipeline.hpp"
#include "json.hpp"
#include "text_io.hpp"

namespace carboneval {

namespace {

void require_data(std::span<const Sample> data) {
  if (data.empty()) Fail(ErrorCode::kDomain, "cannot fit a model to an empty data set");
  for (const auto& s : data) {
    for (double v : s.x.values()) {
      if (!std::isfinite(v)) Fail(ErrorCode::kDomain, "feature values must be finite");
    }
    if (!std::isfinite(s.y)) Fail(ErrorCode::kDomain, "targets must be finite");
  }
}

// Monomials ordered by total degree, then lexicographically descending
// exponents: 1, x0, x1, x2, x3, x0^2, x0 x1, ...
std::vector<std::array<int, kFeatureCount>> monomials(int degree) {
  std::vector<std::array<int, kFeatureCount>> out;
  std::array<int, kFeatureCount> e{};
  for (int total = 0; total <= degree; ++total) {
    auto fill = [&](auto&& self, std::size_t pos, int left) -> void {
      if (pos + 1 == kFeatureCount) {
        e[pos] = left;
        out.push_back(e);
        return;
      }
      for (int k = left; k >= 0; --k) {
        e[pos] = k;
        self(self, pos + 1, left - k);
      }
    };
    fill(fill, 0, total);
  }
  return out;
}

double monomial_value(const std::array<int, kFeatureCount>& exps,
                      const std::array<double, kFeatureCount>& x) {
  double v = 1.0;
  for (std::size_t j = 0; j < kFeatureCount; ++j) {
    for (int k = 0; k < exps[j]; ++k) v *= x[j];
  }
  return v;
}

double predict_tree(const TreeFit& t, const std::array<double, kFeatureCount>& x) {
  int idx = 0;
  while (t.nodes[idx].feature >= 0) {
    const TreeNode& n = t.nodes[idx];
    idx = x[n.feature] <= n.threshold ? n.left : n.right;
  }
  return t.nodes[idx].value;
}

struct TreeBuilder {
  std::span<const Sample> data;
  int max_depth;
  int min_leaf;
  TreeFit fit;

  int build(std::vector<std::size_t> idx, int depth) {
    const int node_id = static_cast<int>(fit.nodes.size());
    fit.nodes.push_back({});
    double sum = 0.0;
    for (auto i : idx) sum += data[i].y;
    const double n = static_cast<double>(idx.size());
    fit.nodes[node_id].value = sum / n;

    const bool depth_left = max_depth < 0 || depth < max_depth;
    const bool pure = std::all_of(idx.begin(), idx.end(),
                                  [&](std::size_t i) { return data[i].y == data[idx[0]].y; });
    if (!depth_left || pure || idx.size() < 2 * static_cast<std::size_t>(min_leaf)) return node_id;

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_gain = 0.0;
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      auto order = idx;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return data[a].x.values()[f] < data[b].x.values()[f];
      });
      double left_sum = 0.0;
      for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        left_sum += data[order[k]].y;
        const double here = data[order[k]].x.values()[f];
        const double next = data[order[k + 1]].x.values()[f];
        if (here == next) continue;
        const double nl = static_cast<double>(k + 1);
        const double nr = n - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        const double diff = left_sum / nl - (sum - left_sum) / nr;
        // Reduction in summed squared error from splitting here.
        const double gain = nl * nr / n * diff * diff;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_threshold = 0.5 * (here + next);
        }
      }
    }
    if (best_feature < 0) return node_id;

    std::vector<std::size_t> left, right;
    for (auto i : idx) {
      (data[i].x.values()[best_feature] <= best_threshold ? left : right).push_back(i);
    }
    const int l = build(std::move(left), depth + 1);
    const int r = build(std::move(right), depth + 1);
    TreeNode& node = fit.nodes[node_id];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = r;
    return node_id;
  }
};

struct SvrProblem {
  std::vector<std::array<double, kFeatureCount>> z;
  std::vector<double> y;
  double epsilon;
  double c;

  double objective(const std::array<double, kFeatureCount>& w, double b) const {
    double reg = 0.0;
    for (double v : w) reg += v * v;
    double loss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      double pred = b;
      for (std::size_t j = 0; j < kFeatureCount; ++j) pred += w[j] * z[i][j];
      loss += std::max(0.0, std::abs(y[i] - pred) - epsilon);
    }
    return 0.5 * reg + c * loss / static_cast<double>(y.size());
  }
};

}  // namespace

std::size_t TreeFit::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.feature < 0; }));
}

double StaticThroughputModel::predict(const FeatureVector& fv) const {
  const auto x = fv.values();
  return std::visit(
      [&](const auto& fit) -> double {
        using T = std::decay_t<decltype(fit)>;
        if constexpr (std::is_same_v<T, PolynomialFit>) {
          double y = 0.0;
          for (std::size_t k = 0; k < fit.exponents.size(); ++k) {
            y += fit.coefficients[k] * monomial_value(fit.exponents[k], x);
          }
          return y;
        } else if constexpr (std::is_same_v<T, TreeFit>) {
          return predict_tree(fit, x);
        } else {
          double y = fit.bias;
          for (std::size_t j = 0; j < kFeatureCount; ++j) {
            y += fit.weights[j] * (x[j] - fit.mean[j]) / fit.scale[j];
          }
          return y;
        }
      },
      fit_);
}

StaticThroughputModel fit_polynomial(std::span<const Sample> data, int degree) {
  if (degree < 0) Fail(ErrorCode::kDomain, "polynomial degree must be non-negative");
  require_data(data);
  PolynomialFit fit;
  fit.degree = degree;
  fit.exponents = monomials(degree);
  const auto rows = static_cast<Eigen::Index>(data.size());
  const auto cols = static_cast<Eigen::Index>(fit.exponents.size());
  if (rows < cols) {
    Fail(ErrorCode::kRankDeficient, "polynomial of degree " + std::to_string(degree) + " has " +
                                        std::to_string(cols) + " terms but only " +
                                        std::to_string(rows) + " samples were given");
  }
  Eigen::MatrixXd a(rows, cols);
  Eigen::VectorXd b(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto x = data[i].x.values();
    for (Eigen::Index k = 0; k < cols; ++k) a(i, k) = monomial_value(fit.exponents[k], x);
    b(i) = data[i].y;
  }
  const Eigen::VectorXd coef = a.completeOrthogonalDecomposition().solve(b);
  fit.coefficients.assign(coef.data(), coef.data() + coef.size());
  return StaticThroughputModel(std::move(fit));
}

StaticThroughputModel fit_tree(std::span<const Sample> data, int max_depth, int min_leaf) {
  require_data(data);
  if (min_leaf < 1) Fail(ErrorCode::kDomain, "min_leaf must be at least 1");
  TreeBuilder builder{data, max_depth, min_leaf, {}};
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  builder.build(std::move(idx), 0);
  return StaticThroughputModel(std::move(builder.fit));
}

StaticThroughputModel fit_svr(std::span<const Sample> data, double epsilon, double c,
                              int iterations, std::uint64_t seed) {
  require_data(data);
  if (!(epsilon >= 0.0)) Fail(ErrorCode::kDomain, "epsilon must be non-negative");
  if (!(c > 0.0)) Fail(ErrorCode::kDomain, "c must be positive");
  if (iterations < 1) Fail(ErrorCode::kDomain, "iterations must be positive");

  const double n = static_cast<double>(data.size());
  SvrFit fit;
  for (std::size_t j = 0; j < kFeatureCount; ++j) {
    double mean = 0.0;
    for (const auto& s : data) mean += s.x.values()[j];
    mean /= n;
    double var = 0.0;
    for (const auto& s : data) var += (s.x.values()[j] - mean) * (s.x.values()[j] - mean);
    const double sd = std::sqrt(var / n);
    fit.mean[j] = mean;
    fit.scale[j] = sd > 0.0 ? sd : 1.0;
  }

  SvrProblem prob{{}, {}, epsilon, c};
  double y_mean = 0.0;
  for (const auto& s : data) {
    std::array<double, kFeatureCount> z{};
    const auto x = s.x.values();
    for (std::size_t j = 0; j < kFeatureCount; ++j) z[j] = (x[j] - fit.mean[j]) / fit.scale[j];
    prob.z.push_back(z);
    prob.y.push_back(s.y);
    y_mean += s.y;
  }
  y_mean /= n;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> init(0.0, 0.01);
  std::array<double, kFeatureCount> w{};
  for (auto& v : w) v = init(rng);
  double b = y_mean;

  std::array<double, kFeatureCount> w_avg = w;
  double b_avg = b;
  std::array<double, kFeatureCount> w_best = w;
  double b_best = b;
  double best = prob.objective(w, b);
  fit.objective_trace.push_back(best);

  // Loss subgradients are bounded by c * |z| with |z| ~ sqrt(4) after
  // standardization, so step sizes are scaled by 1/(1 + c).
  const double step0 = 1.0 / (1.0 + c);
  const int checkpoint = std::max(1, iterations / 100);
  for (int k = 1; k <= iterations; ++k) {
    std::array<double, kFeatureCount> gw = w;
    double gb = 0.0;
    for (std::size_t i = 0; i < prob.y.size(); ++i) {
      double pred = b;
      for (std::size_t j = 0; j < kFeatureCount; ++j) pred += w[j] * prob.z[i][j];
      const double r = prob.y[i] - pred;
      if (std::abs(r) <= epsilon) continue;
      const double s = (r > 0.0 ? -1.0 : 1.0) * c / n;
      for (std::size_t j = 0; j < kFeatureCount; ++j) gw[j] += s * prob.z[i][j];
      gb += s;
    }
    const double step = step0 / std::sqrt(static_cast<double>(k));
    for (std::size_t j = 0; j < kFeatureCount; ++j) w[j] -= step * gw[j];
    b -= step * gb;

    // Weighted averaging, weight proportional to k.
    const double mix = 2.0 / (k + 1.0);
    for (std::size_t j = 0; j < kFeatureCount; ++j) w_avg[j] += mix * (w[j] - w_avg[j]);
    b_avg += mix * (b - b_avg);

    if (k % checkpoint == 0 || k == iterations) {
      const double obj = prob.objective(w_avg, b_avg);
      if (obj < best) {
        best = obj;
        w_best = w_avg;
        b_best = b_avg;
      }
      fit.objective_trace.push_back(best);
    }
  }
  fit.weights = w_best;
  fit.bias = b_best;
  return StaticThroughputModel(std::move(fit));
}

std::optional<FeatureVector> features_of(const TrainingRecord& rec, const DeviceFamily& family,
                                         double factor) {
  const double flops = derive_compute(rec, factor).flops();
  std::optional<double> params = rec.params;
  if (!params && rec.data_size && *rec.data_size > 0.0) params = flops / (factor * *rec.data_size);
  if (!params || *params <= 0.0 || flops <= 0.0) return std::nullopt;

  double devices = 1.0;
  if (rec.device_count && *rec.device_count > 0) {
    devices = static_cast<double>(*rec.device_count);
  } else if (rec.gpu_hours && rec.wall_hours && *rec.wall_hours > 0.0 && *rec.gpu_hours > 0.0) {
    devices = *rec.gpu_hours / *rec.wall_hours;
  }
  return FeatureVector{std::log10(*params), std::log10(flops), std::log10(family.peak_tflops),
                       std::log10(devices)};
}

ComparisonTable compare_methods(std::span<const TrainingRecord> train,
                                std::span<const TrainingRecord> eval, const DeviceDb& db,
                                const RegionTable& regions, const BaselineConfig& config,
                                const SolverOptions& opts) {
  ComparisonTable table;
  std::vector<Sample> samples;
  for (const auto& rec : train) {
    const DeviceFamily* family = nullptr;
    try {
      family = &db.resolve(rec.device_raw);
    } catch (const Error& e) {
      table.warnings.push_back("train " + rec.model + ": " + e.what());
      continue;
    }
    if (!rec.has_gpu_time() || !rec.has_compute()) {
      table.warnings.push_back("train " + rec.model + ": no compute or GPU-time, skipped");
      continue;
    }
    const auto fv = features_of(rec, *family, config.factor);
    const double tflop = derive_compute(rec, config.factor).tflop();
    const double seconds = derive_gpu_time(rec).seconds();
    if (!fv || tflop <= 0.0 || seconds <= 0.0) {
      table.warnings.push_back("train " + rec.model + ": features not derivable, skipped");
      continue;
    }
    samples.push_back({*fv, std::log10(tflop / seconds)});
  }

  const auto poly = fit_polynomial(samples, config.degree);
  const auto svr = fit_svr(samples, config.epsilon, config.c, config.iterations, config.seed);
  const auto tree = fit_tree(samples, config.max_depth, config.min_leaf);

  const CalibrationRun calib = calibrate_records(train, db, opts, config.factor);
  for (const auto& r : calib.rejected) {
    table.warnings.push_back("train " + r.model + ": not calibrated (" + r.reason + ")");
  }

  std::vector<MethodRow> rows = {{"Polynomial", {}, {}}, {"SVR", {}, {}}, {"DTR", {}, {}},
                                 {"Dynamic", {}, {}}};
  const StaticThroughputModel* statics[] = {&poly, &svr, &tree};

  for (const auto& rec : eval) {
    if (!rec.actual_tco2 || *rec.actual_tco2 == 0.0) {
      table.warnings.push_back(rec.model + ": no actual emissions, omitted");
      continue;
    }
    try {
      const DeviceFamily& family = db.resolve(rec.device_raw);
      EstimateRequest req = request_from_record(rec, config.factor);
      const double intensity =
          rec.intensity_g_per_kwh ? *rec.intensity_g_per_kwh : region_intensity(rec.region, regions).g_per_kwh();
      const auto fv = features_of(rec, family, config.factor);
      if (!fv) {
        table.warnings.push_back(rec.model + ": parameter count not derivable, omitted");
        continue;
      }
      const double tflop = derive_compute(rec, config.factor).tflop();
      std::array<double, 4> predicted{};
      for (std::size_t m = 0; m < 3; ++m) {
        const double throughput = std::pow(10.0, statics[m]->predict(*fv));
        const auto op = operational_carbon(PowerDraw(family.tdp_w), GpuTime::from_seconds(tflop / throughput),
                                           CarbonIntensity(intensity));
        predicted[m] = op.emission.tonnes();
      }

      req.alpha_mode = AlphaMode::kExplicit;
      if (config.per_record_alpha && rec.has_gpu_time()) {
        req.explicit_log10_alpha = calibrate_record(rec, db, opts, config.factor).log10_alpha;
      } else {
        if (config.per_record_alpha) {
          table.warnings.push_back(rec.model + ": no GPU-time for per-record alpha, using family value");
        }
        const auto it = calib.stats.find(family.key);
        req.explicit_log10_alpha =
            it != calib.stats.end() ? it->second.representative : family.alpha_midpoint();
      }
      predicted[3] = estimate(req, db, regions, nullptr, opts).operational_kg / 1000.0;

      table.models.push_back(rec.model);
      table.actual_tco2.push_back(*rec.actual_tco2);
      for (std::size_t m = 0; m < rows.size(); ++m) {
        rows[m].predicted_tco2.push_back(predicted[m]);
        rows[m].delta_pct.push_back(relative_error(predicted[m], *rec.actual_tco2));
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kConvergence) throw;
      table.warnings.push_back(rec.model + ": " + e.what() + ", omitted");
    }
  }
  table.methods = std::move(rows);
  return table;
}

std::string comparison_to_csv(const ComparisonTable& t) {
  std::ostringstream out;
  out << "method";
  for (const auto& m : t.models) {
    out << ',' << text::csv_escape(m + "_tco2") << ',' << text::csv_escape(m + "_delta_pct");
  }
  out << "\nActual";
  for (double a : t.actual_tco2) out << ',' << text::shortest(a) << ',';
  out << '\n';
  for (const auto& row : t.methods) {
    out << row.name;
    for (std::size_t i = 0; i < row.predicted_tco2.size(); ++i) {
      out << ',' << text::shortest(row.predicted_tco2[i]) << ',' << text::shortest(row.delta_pct[i]);
    }
    out << '\n';
  }
  return out.str();
}

std::string comparison_to_json(const ComparisonTable& t) {
  nlohmann::ordered_json doc;
  doc["models"] = t.models;
  doc["actual_tco2"] = t.actual_tco2;
  auto methods = nlohmann::ordered_json::array();
  for (const auto& row : t.methods) {
    nlohmann::ordered_json m;
    m["name"] = row.name;
    m["predicted_tco2"] = row.predicted_tco2;
    m["delta_pct"] = row.delta_pct;
    methods.push_back(std::move(m));
  }
  doc["methods"] = std::move(methods);
  doc["warnings"] = t.warnings;
  return doc.dump(2) + "\n";
}

std::string comparison_to_table(const ComparisonTable& t) {
  std::ostringstream out;
  char buf[64];
  auto cell = [&](const std::string& s) {
    std::snprintf(buf, sizeof(buf), " %12s", s.c_str());
    out << buf;
  };
  auto label = [&](const std::string& s) {
    std::snprintf(buf, sizeof(buf), "%-12s", s.c_str());
    out << buf;
  };
  label("Method");
  for (const auto& m : t.models) cell(m);
  out << '\n';
  label("Actual");
  for (double a : t.actual_tco2) cell(text::fixed(a, 2));
  out << '\n';
  for (const auto& row : t.methods) {
    label(row.name);
    for (double p : row.predicted_tco2) cell(text::fixed(p, 2));
    out << '\n';
    label("  delta");
    for (double d : row.delta_pct) cell((d >= 0.0 ? "+" : "") + text::fixed(d, 1) + "%");
    out << '\n';
  }
  for (const auto& w : t.warnings) out << "warning: " << w << '\n';
  return out.str();
}

}  // namespace carboneval
