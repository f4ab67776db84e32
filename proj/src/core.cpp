// SPDX-License-Identifier: Apache-2.0
#include "carboneval/core.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "carboneval/error.hpp"

namespace carboneval {

namespace {

constexpr double kLn10 = std::numbers::ln10;

void require(bool ok, const char* what) {
  if (!ok) Fail(ErrorCode::kDomain, what);
}

// ln(alpha * t); -inf when t == 0.
double log_alpha_t(double log10_alpha, double seconds) {
  return log10_alpha * kLn10 + std::log(seconds);
}

// ((1+x) ln(1+x) - x) / x, with a series below x = 1e-2 where the
// subtraction cancels.
double integral_ratio(double x) {
  if (x < 1e-2) {
    // sum_{n>=2} (-1)^n x^(n-1) / (n (n-1))
    double sum = 0.0;
    double power = 1.0;
    for (int n = 2; n <= 12; ++n) {
      const double term = power / (n * (n - 1.0));
      sum += (n % 2 == 0) ? term : -term;
      power *= x;
    }
    return x * sum;
  }
  return ((1.0 + x) * std::log1p(x) - x) / x;
}

double integral(double log10_alpha, double seconds) {
  if (seconds == 0.0) return 0.0;
  const double w = log_alpha_t(log10_alpha, seconds);
  if (w > detail::kAsymptoticSwitch) return detail::cumulative_asymptotic(log10_alpha, seconds);
  return detail::cumulative_closed_form(log10_alpha, seconds);
}

double rate(double log10_alpha, double seconds) {
  if (seconds == 0.0) return 0.0;
  const double w = log_alpha_t(log10_alpha, seconds);
  if (w > detail::kAsymptoticSwitch) return w;
  return std::log1p(std::exp(w));
}

}  // namespace

ThroughputParam::ThroughputParam(double log10_alpha) : log10_alpha_(log10_alpha) {
  require(std::isfinite(log10_alpha), "throughput exponent must be finite");
}

ComputeLoad::ComputeLoad(double tflop) : tflop_(tflop) {
  require(std::isfinite(tflop) && tflop >= 0.0, "compute load must be finite and non-negative");
}

GpuTime GpuTime::from_seconds(double s) {
  require(std::isfinite(s) && s >= 0.0, "GPU-time must be finite and non-negative");
  return GpuTime(s);
}

PowerDraw::PowerDraw(double watts) : watts_(watts) {
  require(std::isfinite(watts) && watts > 0.0, "power draw must be positive");
}

CarbonIntensity::CarbonIntensity(double g_per_kwh) : g_per_kwh_(g_per_kwh) {
  require(std::isfinite(g_per_kwh) && g_per_kwh >= 0.0, "carbon intensity must be non-negative");
}

EmbodiedRate::EmbodiedRate(double g_per_gpuh) : g_per_gpuh_(g_per_gpuh) {
  require(std::isfinite(g_per_gpuh) && g_per_gpuh >= 0.0, "embodied rate must be non-negative");
}

Emission::Emission(double kg) : kg_(kg) {
  require(std::isfinite(kg) && kg >= 0.0, "emission must be non-negative");
}

namespace detail {

double cumulative_closed_form(double log10_alpha, double seconds) {
  if (seconds == 0.0) return 0.0;
  const double x = std::exp(log_alpha_t(log10_alpha, seconds));
  return seconds * integral_ratio(x);
}

double cumulative_asymptotic(double log10_alpha, double seconds) {
  if (seconds == 0.0) return 0.0;
  const double w = log_alpha_t(log10_alpha, seconds);
  // T (ln(aT) - 1) + ln(aT) / a, with 1/a written as T e^-w.
  return seconds * (w - 1.0) + seconds * w * std::exp(-w);
}

}  // namespace detail

double throughput_at(ThroughputParam param, GpuTime t) {
  return rate(param.log10_alpha(), t.seconds());
}

ComputeLoad cumulative_compute(ThroughputParam param, GpuTime total) {
  return ComputeLoad(integral(param.log10_alpha(), total.seconds()));
}

GpuTime solve_gpu_time(ComputeLoad load, ThroughputParam param, const SolverOptions& opts) {
  const double target = load.tflop();
  const double l = param.log10_alpha();
  if (target == 0.0) return GpuTime::from_seconds(0.0);

  double lo = 0.0;
  double hi = 1.0;
  while (integral(l, hi) < target) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) {
      Fail(ErrorCode::kConvergence, "could not bracket GPU-time: compute load too large");
    }
  }

  // F is convex and increasing in T, so Newton from the upper bracket moves
  // monotonically toward the root; bisection covers any step leaving the
  // bracket.
  double t = hi;
  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    const double residual = integral(l, t) - target;
    if (residual == 0.0) return GpuTime::from_seconds(t);
    if (residual > 0.0) {
      hi = t;
    } else {
      lo = t;
    }
    const double slope = rate(l, t);
    double next = slope > 0.0 ? t - residual / slope : lo;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) <= opts.relative_tolerance * next) return GpuTime::from_seconds(next);
    t = next;
  }
  std::ostringstream msg;
  msg << "GPU-time solver did not converge within " << opts.max_iterations << " iterations";
  Fail(ErrorCode::kConvergence, msg.str());
}

ThroughputParam calibrate_alpha(ComputeLoad load, GpuTime total, const SolverOptions& opts) {
  require(load.tflop() > 0.0, "calibration requires a positive compute load");
  require(total.seconds() > 0.0, "calibration requires a positive GPU-time");
  const double target = load.tflop();
  const double seconds = total.seconds();

  double lo = opts.log10_alpha_min;
  double hi = opts.log10_alpha_max;
  if (target < integral(lo, seconds) || target > integral(hi, seconds)) {
    std::ostringstream msg;
    msg << "implied average throughput " << target / seconds
        << " TFLOP per GPU-second is not reachable with log10(alpha) in [" << lo << ", " << hi
        << "]";
    Fail(ErrorCode::kRange, msg.str());
  }

  for (int iter = 0; hi - lo > opts.exponent_tolerance; ++iter) {
    if (iter >= opts.max_iterations) {
      Fail(ErrorCode::kConvergence, "throughput calibration did not converge");
    }
    const double mid = 0.5 * (lo + hi);
    if (integral(mid, seconds) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return ThroughputParam(0.5 * (lo + hi));
}

OperationalResult operational_carbon(PowerDraw power, GpuTime time, CarbonIntensity intensity,
                                     double pue) {
  require(std::isfinite(pue) && pue >= 1.0, "PUE must be at least 1.0");
  const double energy_kwh = power.watts() / 1000.0 * time.hours() * pue;
  return {energy_kwh, Emission(energy_kwh * intensity.g_per_kwh() / 1000.0)};
}

Emission embodied_from_rate(GpuTime time, EmbodiedRate rate) {
  return Emission(rate.g_per_gpuh() * time.hours() / 1000.0);
}

Emission embodied_lifecycle(std::span<const HardwareUsage> usages) {
  double kg = 0.0;
  for (const auto& u : usages) {
    require(std::isfinite(u.lifetime_h) && u.lifetime_h > 0.0, "hardware lifetime must be positive");
    require(u.task_time_h >= 0.0, "task time must be non-negative");
    require(u.product_carbon_kg >= 0.0, "product carbon must be non-negative");
    kg += u.task_time_h / u.lifetime_h * u.product_carbon_kg;
  }
  return Emission(kg);
}

EmbodiedRate embodied_rate_from_die(double die_mm2, double cpa_g_per_mm2, double lifetime_h) {
  require(die_mm2 > 0.0 && cpa_g_per_mm2 > 0.0 && lifetime_h > 0.0,
          "die area, carbon per area and lifetime must be positive");
  return EmbodiedRate(die_mm2 * cpa_g_per_mm2 / lifetime_h);
}

double relative_error(double predicted, double actual) {
  require(actual != 0.0, "relative error undefined for a zero actual value");
  return 100.0 * (predicted - actual) / actual;
}

}  // namespace carboneval
