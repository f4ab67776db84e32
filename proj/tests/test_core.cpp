// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include "carboneval/core.hpp"
#include "carboneval/error.hpp"
#include "test_util.hpp"

using namespace carboneval;
using testutil::code_of;
using Big = boost::multiprecision::cpp_bin_float_50;

namespace {

// Closed form evaluated in 50 digits: ((1+x)ln(1+x) - x)/alpha, x = alpha*T.
double oracle_compute(double log10_alpha, double seconds) {
  const Big alpha = boost::multiprecision::pow(Big(10), Big(log10_alpha));
  const Big x = alpha * Big(seconds);
  const Big f = ((1 + x) * boost::multiprecision::log1p(x) - x) / alpha;
  return f.convert_to<double>();
}

// Adaptive Gauss-Kronrod on geometric panels starting at the curve's knee 1/alpha.
double quadrature_compute(double log10_alpha, double seconds) {
  namespace q = boost::math::quadrature;
  const double alpha = std::pow(10.0, log10_alpha);
  auto f = [alpha](double t) { return std::log1p(alpha * t); };
  double sum = 0.0;
  double a = 0.0;
  double b = std::min(seconds, 1.0 / alpha);
  while (a < seconds) {
    sum += q::gauss_kronrod<double, 61>::integrate(f, a, b, 10, 1e-11);
    a = b;
    b = std::min(seconds, b * 10.0);
  }
  return sum;
}

}  // namespace

TEST_CASE("throughput_at reference points") {
  CHECK(throughput_at(ThroughputParam(0.0), GpuTime::from_seconds(std::exp(1.0) - 1.0)) ==
        doctest::Approx(1.0).epsilon(1e-15));
  CHECK(throughput_at(ThroughputParam(37.0), GpuTime::from_seconds(0.0)) == 0.0);
  CHECK(throughput_at(ThroughputParam(104.78), GpuTime::from_seconds(2.3848e10)) ==
        doctest::Approx(265.1598322372383).epsilon(1e-13));
  CHECK(code_of([] { throughput_at(ThroughputParam(1.0), GpuTime::from_seconds(-1.0)); }) ==
        ErrorCode::kDomain);
}

TEST_CASE("cumulative_compute reference points") {
  CHECK(cumulative_compute(ThroughputParam(0.0), GpuTime::from_seconds(10)).tflop() ==
        doctest::Approx(11.0 * std::log(11.0) - 10.0).epsilon(1e-14));
  CHECK(cumulative_compute(ThroughputParam(0.0), GpuTime::from_seconds(10)).tflop() ==
        doctest::Approx(16.376848000782076).epsilon(1e-14));
  CHECK(cumulative_compute(ThroughputParam(55.0), GpuTime::from_seconds(0)).tflop() == 0.0);
  CHECK(cumulative_compute(ThroughputParam(104.78), GpuTime::from_seconds(2.3848e10)).tflop() ==
        doctest::Approx(6.2996836791936587e12).epsilon(1e-13));
}

TEST_CASE("cumulative_compute matches the 50-digit closed form across the domain") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> L(-12.0, 200.0);
  std::uniform_real_distribution<double> logT(-3.0, 12.0);
  for (int i = 0; i < 2000; ++i) {
    const double l = L(rng);
    const double t = std::pow(10.0, logT(rng));
    const double got = cumulative_compute(ThroughputParam(l), GpuTime::from_seconds(t)).tflop();
    CHECK(got == doctest::Approx(oracle_compute(l, t)).epsilon(1e-12));
  }
}

TEST_CASE("quadrature oracle agrees within 1e-6 on L in [-6, 8], T in [1, 1e9]") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> L(-6.0, 8.0);
  std::uniform_real_distribution<double> logT(0.0, 9.0);
  for (int i = 0; i < 200; ++i) {
    const double l = L(rng);
    const double t = std::pow(10.0, logT(rng));
    const double got = cumulative_compute(ThroughputParam(l), GpuTime::from_seconds(t)).tflop();
    CHECK(std::abs(got - quadrature_compute(l, t)) <= 1e-6 * got);
  }
}

TEST_CASE("closed and asymptotic branches agree near the switch") {
  for (double w = 35.0; w <= 45.0; w += 0.125) {
    const double l = 20.0;
    const double t = std::exp(w - l * std::log(10.0));
    const double exact = detail::cumulative_closed_form(l, t);
    const double asym = detail::cumulative_asymptotic(l, t);
    CHECK(std::abs(exact - asym) <= 1e-8 * exact);
  }
}

TEST_CASE("monotonicity and sandwich bound") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> L(-10.0, 150.0);
  std::uniform_real_distribution<double> logT(0.0, 11.0);
  for (int i = 0; i < 1000; ++i) {
    const ThroughputParam p(L(rng));
    const double t = std::pow(10.0, logT(rng));
    const double f = cumulative_compute(p, GpuTime::from_seconds(t)).tflop();
    CHECK(cumulative_compute(p, GpuTime::from_seconds(t * 1.01)).tflop() > f);
    CHECK(cumulative_compute(ThroughputParam(p.log10_alpha() + 0.01), GpuTime::from_seconds(t))
              .tflop() > f);
    const double half = throughput_at(p, GpuTime::from_seconds(t / 2));
    const double full = throughput_at(p, GpuTime::from_seconds(t));
    const double slack = 1e-12 * f;
    CHECK(t / 2 * half <= f + slack);
    CHECK(f <= t * half + slack);
    CHECK(t * half <= t * full + slack);
  }
}

TEST_CASE("solve_gpu_time inverts the compute integral") {
  CHECK(solve_gpu_time(ComputeLoad(16.376848000782076), ThroughputParam(0.0)).seconds() ==
        doctest::Approx(10.0).epsilon(1e-10));
  CHECK(solve_gpu_time(ComputeLoad(0.0), ThroughputParam(12.0)).seconds() == 0.0);
  const GpuTime llama = solve_gpu_time(ComputeLoad(6.3e12), ThroughputParam(104.78));
  CHECK(llama.seconds() == doctest::Approx(23849192943.8).epsilon(1e-10));
  CHECK(llama.hours() == doctest::Approx(6.625e6).epsilon(1e-3));

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> L(-8.0, 120.0);
  std::uniform_real_distribution<double> logT(1.0, 11.0);
  for (int i = 0; i < 1000; ++i) {
    const ThroughputParam p(L(rng));
    const double t = std::pow(10.0, logT(rng));
    const ComputeLoad load = cumulative_compute(p, GpuTime::from_seconds(t));
    CHECK(solve_gpu_time(load, p).seconds() == doctest::Approx(t).epsilon(1e-6));
  }
}

TEST_CASE("calibrate_alpha inverts the compute integral") {
  CHECK(calibrate_alpha(ComputeLoad(3.12e11), GpuTime::from_seconds(4289638554.22)).log10_alpha() ==
        doctest::Approx(22.3895883740017).epsilon(1e-10));
  CHECK(calibrate_alpha(ComputeLoad(5.3e8), GpuTime::from_seconds(49647696.477)).log10_alpha() ==
        doctest::Approx(-2.62546300867772).epsilon(1e-9));

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> L(-8.0, 120.0);
  std::uniform_real_distribution<double> logT(1.0, 11.0);
  for (int i = 0; i < 1000; ++i) {
    const double l = L(rng);
    const GpuTime t = GpuTime::from_seconds(std::pow(10.0, logT(rng)));
    const ComputeLoad load = cumulative_compute(ThroughputParam(l), t);
    CHECK(std::abs(calibrate_alpha(load, t).log10_alpha() - l) <= 1e-6);
  }
}

TEST_CASE("solver errors") {
  CHECK(code_of([] { ComputeLoad(-1.0); }) == ErrorCode::kDomain);
  CHECK(code_of([] { calibrate_alpha(ComputeLoad(0.0), GpuTime::from_seconds(1.0)); }) ==
        ErrorCode::kDomain);
  // 1e30 TFLOP in one GPU-second is beyond any alpha below 10^200.
  CHECK(code_of([] { calibrate_alpha(ComputeLoad(1e30), GpuTime::from_seconds(1.0)); }) ==
        ErrorCode::kRange);
  try {
    calibrate_alpha(ComputeLoad(1e-30), GpuTime::from_seconds(1e6));
    FAIL("expected range error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kRange);
    CHECK(std::string(e.what()).find("TFLOP") != std::string::npos);
  }
  SolverOptions tight;
  tight.max_iterations = 1;
  CHECK(code_of([&] { solve_gpu_time(ComputeLoad(6.3e12), ThroughputParam(104.78), tight); }) ==
        ErrorCode::kConvergence);
  CHECK(code_of([&] {
          calibrate_alpha(ComputeLoad(3.12e11), GpuTime::from_seconds(4.29e9), tight);
        }) == ErrorCode::kConvergence);
}

TEST_CASE("operational carbon") {
  const auto glm = operational_carbon(PowerDraw(400), GpuTime::from_hours(1191566.26506),
                                      CarbonIntensity(581));
  CHECK(glm.emission.tonnes() == doctest::Approx(276.92).epsilon(1e-9));
  const auto zero = operational_carbon(PowerDraw(400), GpuTime::from_hours(0), CarbonIntensity(581));
  CHECK(zero.energy_kwh == 0.0);
  CHECK(zero.emission.kg() == 0.0);
  const auto unit = operational_carbon(PowerDraw(1000), GpuTime::from_hours(1000),
                                       CarbonIntensity(1000));
  CHECK(unit.energy_kwh == doctest::Approx(1000.0));
  CHECK(unit.emission.kg() == doctest::Approx(1000.0));
  CHECK(code_of([] {
          operational_carbon(PowerDraw(1), GpuTime::from_hours(1), CarbonIntensity(1), 0.9);
        }) == ErrorCode::kDomain);
  CHECK(code_of([] { PowerDraw(0.0); }) == ErrorCode::kDomain);
  CHECK(code_of([] { CarbonIntensity(-1.0); }) == ErrorCode::kDomain);
}

TEST_CASE("operational carbon is linear in each factor") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  std::uniform_real_distribution<double> k(1.0, 7.0);
  for (int i = 0; i < 500; ++i) {
    const double w = 300 * u(rng), h = 1e5 * u(rng), g = 400 * u(rng), pue = 1.0 + u(rng) / 4;
    const double s = k(rng);
    const double base =
        operational_carbon(PowerDraw(w), GpuTime::from_hours(h), CarbonIntensity(g), pue).emission.kg();
    const double scaled[] = {
        operational_carbon(PowerDraw(w * s), GpuTime::from_hours(h), CarbonIntensity(g), pue)
            .emission.kg(),
        operational_carbon(PowerDraw(w), GpuTime::from_hours(h * s), CarbonIntensity(g), pue)
            .emission.kg(),
        operational_carbon(PowerDraw(w), GpuTime::from_hours(h), CarbonIntensity(g * s), pue)
            .emission.kg(),
        operational_carbon(PowerDraw(w), GpuTime::from_hours(h), CarbonIntensity(g), pue * s)
            .emission.kg()};
    for (double v : scaled) CHECK(std::abs(v - s * base) <= 1e-12 * s * base);
  }
}

TEST_CASE("embodied carbon") {
  CHECK(embodied_from_rate(GpuTime::from_hours(6624561.99461), EmbodiedRate(1.7)).kg() ==
        doctest::Approx(11261.755).epsilon(1e-7));
  CHECK(embodied_from_rate(GpuTime::from_hours(0), EmbodiedRate(1.7)).kg() == 0.0);
  CHECK(embodied_from_rate(GpuTime::from_hours(13791), EmbodiedRate(0.8)).kg() ==
        doctest::Approx(11.05).epsilon(5e-3));

  const HardwareUsage full{8760, 8760, 13.14};
  CHECK(embodied_lifecycle(std::span(&full, 1)).kg() == doctest::Approx(13.14));
  CHECK(embodied_lifecycle({}).kg() == 0.0);
  const std::vector<HardwareUsage> fleet(768, HardwareUsage{1551.5, 8760, 13.14});
  const double fleet_kg = embodied_lifecycle(fleet).kg();
  CHECK(fleet_kg == doctest::Approx(1787).epsilon(5e-3));
  CHECK(fleet_kg == doctest::Approx(embodied_from_rate(GpuTime::from_hours(1.19157e6),
                                                       EmbodiedRate(1.5))
                                        .kg())
                        .epsilon(5e-3));
  const HardwareUsage bad{1, 0, 1};
  CHECK(code_of([&] { embodied_lifecycle(std::span(&bad, 1)); }) == ErrorCode::kDomain);
}

TEST_CASE("embodied carbon is linear and matches an equivalent fleet") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.1, 10.0);
  std::uniform_int_distribution<int> n(1, 512);
  for (int i = 0; i < 300; ++i) {
    const double h = 1e4 * u(rng), b = u(rng), s = u(rng);
    const double base = embodied_from_rate(GpuTime::from_hours(h), EmbodiedRate(b)).kg();
    CHECK(std::abs(embodied_from_rate(GpuTime::from_hours(h * s), EmbodiedRate(b)).kg() - s * base) <=
          1e-12 * s * base);
    CHECK(std::abs(embodied_from_rate(GpuTime::from_hours(h), EmbodiedRate(b * s)).kg() - s * base) <=
          1e-12 * s * base);
    const int count = n(rng);
    const double lifetime = 8760.0;
    const std::vector<HardwareUsage> fleet(count, HardwareUsage{h / count, lifetime, b * lifetime / 1000});
    CHECK(std::abs(embodied_lifecycle(fleet).kg() - base) <= 1e-12 * base * count);
  }
}

TEST_CASE("embodied rate from die size") {
  CHECK(embodied_rate_from_die(826, 15.91).g_per_gpuh() == doctest::Approx(1.5).epsilon(0.01));
  CHECK(embodied_rate_from_die(814, 18.29).g_per_gpuh() == doctest::Approx(1.7).epsilon(0.01));
  CHECK(embodied_rate_from_die(600, 12, 2 * 8760).g_per_gpuh() ==
        doctest::Approx(embodied_rate_from_die(600, 12).g_per_gpuh() / 2));
  CHECK(code_of([] { embodied_rate_from_die(0, 12); }) == ErrorCode::kDomain);
  CHECK(code_of([] { embodied_rate_from_die(10, 12, -1); }) == ErrorCode::kDomain);
}

TEST_CASE("relative error") {
  CHECK(relative_error(276.92, 257) == doctest::Approx(7.75097276).epsilon(1e-8));
  CHECK(relative_error(21.96, 24.7) == doctest::Approx(-11.0931174).epsilon(1e-8));
  CHECK(relative_error(3.5, 3.5) == 0.0);
  CHECK(code_of([] { relative_error(1, 0); }) == ErrorCode::kDomain);
}
