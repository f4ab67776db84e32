// SPDX-License-Identifier: Apache-2.0
//
// Numerical core: the logarithmic throughput curve f(t) = ln(1 + alpha*t),
// its integral over GPU-time, the two inversions of that integral, and the
// operational/embodied carbon equations.
//
// Units: t is aggregate device time in GPU-seconds, f is TFLOP per
// GPU-second, so the integral is in TFLOP. alpha is only ever handled through
// its base-10 exponent.
#pragma once

#include <span>

namespace carboneval {

struct SolverOptions {
  double log10_alpha_min = -12.0;
  double log10_alpha_max = 200.0;
  int max_iterations = 200;
  double relative_tolerance = 1e-10;  // on GPU-time
  double exponent_tolerance = 1e-10;  // on log10(alpha)
};

class ThroughputParam {
 public:
  explicit ThroughputParam(double log10_alpha);

  double log10_alpha() const noexcept { return log10_alpha_; }
  bool within(const SolverOptions& opts) const noexcept {
    return log10_alpha_ >= opts.log10_alpha_min && log10_alpha_ <= opts.log10_alpha_max;
  }

 private:
  double log10_alpha_;
};

class ComputeLoad {
 public:
  explicit ComputeLoad(double tflop);
  static ComputeLoad from_flops(double flops) { return ComputeLoad(flops * 1e-12); }

  double tflop() const noexcept { return tflop_; }
  double flops() const noexcept { return tflop_ * 1e12; }

 private:
  double tflop_;
};

class GpuTime {
 public:
  static GpuTime from_seconds(double s);
  static GpuTime from_hours(double h) { return from_seconds(h * 3600.0); }

  double seconds() const noexcept { return seconds_; }
  double hours() const noexcept { return seconds_ / 3600.0; }

 private:
  explicit GpuTime(double s) : seconds_(s) {}
  double seconds_;
};

class PowerDraw {
 public:
  explicit PowerDraw(double watts);
  double watts() const noexcept { return watts_; }

 private:
  double watts_;
};

class CarbonIntensity {
 public:
  explicit CarbonIntensity(double g_per_kwh);
  double g_per_kwh() const noexcept { return g_per_kwh_; }

 private:
  double g_per_kwh_;
};

class EmbodiedRate {
 public:
  explicit EmbodiedRate(double g_per_gpuh);
  double g_per_gpuh() const noexcept { return g_per_gpuh_; }

 private:
  double g_per_gpuh_;
};

class Emission {
 public:
  explicit Emission(double kg);
  double kg() const noexcept { return kg_; }
  double tonnes() const noexcept { return kg_ / 1000.0; }

 private:
  double kg_;
};

/// Instantaneous throughput ln(1 + alpha*t) in TFLOP per GPU-second. Safe for
/// any representable exponent: above ln(alpha*t) = 40 the asymptote
/// ln(alpha) + ln(t) is returned.
double throughput_at(ThroughputParam param, GpuTime t);

/// Integral of throughput_at over [0, T].
ComputeLoad cumulative_compute(ThroughputParam param, GpuTime total);

/// GPU-time needed to complete `load` at the given throughput curve. Throws
/// kConvergence if the solver exceeds opts.max_iterations.
GpuTime solve_gpu_time(ComputeLoad load, ThroughputParam param, const SolverOptions& opts = {});

/// Exponent whose curve completes `load` in exactly `total`. Throws kRange
/// when the solution lies outside [log10_alpha_min, log10_alpha_max].
ThroughputParam calibrate_alpha(ComputeLoad load, GpuTime total, const SolverOptions& opts = {});

struct OperationalResult {
  double energy_kwh;
  Emission emission;
};

OperationalResult operational_carbon(PowerDraw power, GpuTime time, CarbonIntensity intensity,
                                     double pue = 1.0);

Emission embodied_from_rate(GpuTime time, EmbodiedRate rate);

struct HardwareUsage {
  double task_time_h;
  double lifetime_h;
  double product_carbon_kg;
};

// Sum of (task / lifetime) * product carbon over every device used.
Emission embodied_lifecycle(std::span<const HardwareUsage> usages);

EmbodiedRate embodied_rate_from_die(double die_mm2, double cpa_g_per_mm2,
                                    double lifetime_h = 8760.0);

/// Signed percent error 100 * (predicted - actual) / actual.
double relative_error(double predicted, double actual);

namespace detail {
// The two evaluation branches of cumulative_compute, exposed for tests.
double cumulative_closed_form(double log10_alpha, double seconds);
double cumulative_asymptotic(double log10_alpha, double seconds);
inline constexpr double kAsymptoticSwitch = 40.0;
}  // namespace detail

}  // namespace carboneval
