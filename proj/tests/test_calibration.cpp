#include <catch_amalgamated.hpp>

#include <random>

#include "pstsim/calibration.hpp"

using namespace pstsim;
using Catch::Approx;

namespace {

// Two-level exchange oracle, written out independently of the library.
double rabi(double j, double delta, double t) {
  const double omega = std::sqrt(j * j + delta * delta / 4);
  return omega == 0 ? 0.0 : (j / omega) * (j / omega) * std::pow(std::sin(omega * t), 2);
}

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(a + (b - a) * i / (n - 1));
  return v;
}

ChevronDataset synthetic(double j, double w0, double noise, unsigned seed, double time_scale = 1.0) {
  ChevronDataset d;
  d.amplitudes = {0.1};
  d.frequencies = linspace(w0 - 2 * kPi * 3e6 / time_scale, w0 + 2 * kPi * 3e6 / time_scale, 31);
  d.times = linspace(20e-9 * time_scale, 1e-6 * time_scale, 50);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, noise);
  Eigen::MatrixXd m(31, 50);
  for (int f = 0; f < 31; ++f)
    for (int t = 0; t < 50; ++t) m(f, t) = rabi(j, d.frequencies[f] - w0, d.times[t]) + (noise > 0 ? g(rng) : 0.0);
  d.populations = {m};
  return d;
}

}  // namespace

TEST_CASE("effective backend chevron rows") {
  EffectiveBackend be(EffectiveBackendConfig::defaults());
  const int pair = 1;
  const double c = be.config().coupling_per_amplitude[pair];
  const double a = 0.2;
  const double res = be.shifted_resonance(pair, {{pair, {a, 0.0}}});
  const auto times = linspace(0, 1e-6, 41);
  const auto d = chevron_scan(be, pair, {0.0, a}, {res - 2 * kPi * 1e6, res, res + 2 * kPi * 0.5e6}, times);
  CHECK(d.populations[0].cwiseAbs().maxCoeff() == 0.0);  // no drive, no transfer
  for (int t = 0; t < 41; ++t) {
    CHECK(d.populations[1](1, t) == Approx(rabi(c * a, 0.0, times[t])).margin(1e-10));
    CHECK(d.populations[1](0, t) == Approx(rabi(c * a, -2 * kPi * 1e6, times[t])).margin(1e-10));
    CHECK(d.populations[1](2, t) == Approx(rabi(c * a, 2 * kPi * 0.5e6, times[t])).margin(1e-10));
  }
  CHECK(d.populations[1].row(1).maxCoeff() > 0.99);
  CHECK(d.populations[1].row(0).maxCoeff() <= std::pow(c * a, 2) / (std::pow(c * a, 2) + std::pow(kPi * 1e6, 2)) + 1e-12);
  CHECK_THROWS_AS(chevron_scan(be, pair, {}, {res}, times), ArgumentError);
}

TEST_CASE("neighbour drives shift the measured resonance") {
  EffectiveBackend be(EffectiveBackendConfig::defaults());
  const int pair = 2;
  const double a = 0.2, an = 0.25;
  const auto& f = be.config().qubit_frequencies;
  const double s = be.config().stark;
  // Qubit 2 sees -s an^2 / 2 from pair 1; qubit 3 sees +s an^2 from pair 3.
  const double shifted = std::abs(2 * kPi * (f[2] - f[3]) + s * a * a + 0.5 * s * a * a - 0.5 * s * an * an - s * an * an);
  const double plain = std::abs(2 * kPi * (f[2] - f[3]) + 1.5 * s * a * a);
  ChevronOptions opt;
  opt.drive_neighbours = true;
  opt.neighbour_amplitude = an;
  const auto freqs = linspace(plain - 2 * kPi * 1.5e6, plain + 2 * kPi * 1.5e6, 41);
  const auto times = linspace(25e-9, 1.2e-6, 48);
  const auto fit_off = fit_chevron(chevron_scan(be, pair, {a}, freqs, times));
  const auto fit_on = fit_chevron(chevron_scan(be, pair, {a}, freqs, times, opt));
  CHECK(fit_off.resonance == Approx(plain).epsilon(1e-9));
  CHECK(fit_on.resonance == Approx(shifted).epsilon(1e-9));
  CHECK(fit_on.coupling == Approx(be.config().coupling_per_amplitude[pair] * a).epsilon(1e-6));
}

TEST_CASE("chevron fit round trips") {
  const double j = 2 * kPi * 1e6, w0 = 2 * kPi * 300e6;
  const auto clean = fit_chevron(synthetic(j, w0, 0.0, 0));
  CHECK(std::abs(clean.coupling - j) / j < 1e-3);
  CHECK(std::abs(clean.resonance - w0) < 2 * kPi * 1e3);
  CHECK(clean.rms_residual < 1e-6);

  int ok = 0;
  for (unsigned seed = 1; seed <= 20; ++seed) {
    const auto f = fit_chevron(synthetic(j, w0, 0.01, seed));
    if (std::abs(f.coupling - j) / j < 0.02) ++ok;
  }
  CHECK(ok == 20);

  // Times x s, frequencies / s: J s is unchanged.
  const double s = 3.0;
  const auto scaled = fit_chevron(synthetic(j / s, w0, 0.0, 0, s));
  CHECK(scaled.coupling * s == Approx(clean.coupling).epsilon(1e-3));

  // Structureless data is rejected.
  ChevronDataset junk = synthetic(j, w0, 0.0, 0);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u;
  for (Eigen::Index i = 0; i < junk.populations[0].size(); ++i) junk.populations[0](i) = u(rng);
  CHECK_THROWS_AS(fit_chevron(junk), FitError);

  // Too short to contain half a Rabi period.
  ChevronDataset shorty = synthetic(2 * kPi * 0.05e6, w0, 0.0, 0);
  CHECK_THROWS_AS(fit_chevron(shorty), FitError);
}

TEST_CASE("amplitude for target") {
  std::vector<std::pair<double, double>> lin;
  for (int i = 0; i <= 10; ++i) lin.emplace_back(0.05 * i, 3.0 * 0.05 * i);
  CHECK(amplitude_for_target(0.77, lin) == Approx(0.77 / 3.0).margin(1e-12));

  std::vector<std::pair<double, double>> sq;
  const double c = 2 * kPi * 20e6;
  for (int i = 1; i <= 12; ++i) {
    const double a = 0.025 * i;
    sq.emplace_back(a, c * a * a);
  }
  for (double jt : {2 * kPi * 0.1e6, 2 * kPi * 0.5e6, 2 * kPi * 1.5e6}) {
    const double a = amplitude_for_target(jt, sq);
    CHECK(a == Approx(std::sqrt(jt / c)).epsilon(0.01));
    CHECK(std::abs(c * a * a - jt) / jt < 0.02);
  }
  CHECK_THROWS_AS(amplitude_for_target(c, sq), RangeError);
  CHECK_THROWS_AS(amplitude_for_target(0.0, sq), RangeError);
  CHECK_THROWS_AS(amplitude_for_target(1.0, {{0.1, 2.0}, {0.2, 1.0}}), ArgumentError);

  // Curve assembled from effective-backend chevrons.
  EffectiveBackend be(EffectiveBackendConfig::defaults());
  const int pair = 0;
  const std::vector<double> amps = {0.1, 0.15, 0.2, 0.25};
  std::vector<std::pair<double, double>> curve;
  for (double a : amps) {
    const double res = be.shifted_resonance(pair, {{pair, {a, 0.0}}});
    const auto d = chevron_scan(be, pair, {a}, linspace(res - 2 * kPi * 2e6, res + 2 * kPi * 2e6, 21), linspace(25e-9, 1.5e-6, 60));
    const auto cv = coupling_curve(d);
    REQUIRE(cv.size() == 1);
    curve.push_back(cv[0]);
  }
  const double target = pst_couplings(6, 640e-9)[pair];
  const double a = amplitude_for_target(target, curve);
  CHECK(std::abs(be.config().coupling_per_amplitude[pair] * a - target) / target < 0.02);
}

TEST_CASE("transfer error objective") {
  EffectiveBackend be(EffectiveBackendConfig::defaults());
  const auto ideal = be.ideal_drives();
  CHECK(transfer_error_objective(be, ideal) < 1e-9);
  CHECK(transfer_error_objective(be, ideal, {0, 2, 5}) < 1e-9);

  auto off = ideal;
  off[2].amplitude *= 1.1;
  CHECK(transfer_error_objective(be, off) > 0.01);

  // No couplings: populations stay put; oracle from the ideal mirror pattern.
  auto none = ideal;
  for (auto& d : none) d.amplitude = 0.0;
  double baseline = 0.0;
  for (int k = 1; k <= 5; ++k) {
    const int at = k % 2 ? 5 : 0;  // ideal excitation position
    for (int s = 0; s < 6; ++s) baseline += std::abs((s == 0 ? 1.0 : 0.0) - (s == at ? 1.0 : 0.0));
  }
  baseline /= 30.0;
  CHECK(transfer_error_objective(be, none) == Approx(baseline).margin(1e-12));
  CHECK_THROWS_AS(transfer_error_objective(be, ideal, {}), ArgumentError);
  CHECK_THROWS_AS(transfer_error_objective(be, {ideal[0]}), ArgumentError);
}

TEST_CASE("simultaneous drive optimisation") {
  EffectiveBackend be(EffectiveBackendConfig::defaults());
  const auto ideal = be.ideal_drives();

  const auto same = optimize_simultaneous_drives(be, ideal);
  CHECK(same.evaluations == 1);
  CHECK(std::abs(same.best_objective - same.initial_objective) < 1e-6);
  CHECK_FALSE(same.budget_exhausted);

  int ok = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    OptimizerConfig cfg;
    cfg.seed = seed;
    const auto r = optimize_simultaneous_drives(be, perturbed_drives(ideal, 100 + seed), cfg);
    CHECK(r.evaluations <= 500);
    CHECK(r.best_objective <= r.initial_objective);
    CHECK(r.best_objective == *std::min_element(r.history.begin(), r.history.end()));
    const auto rm = r.running_minimum();
    for (std::size_t i = 1; i < rm.size(); ++i) CHECK(rm[i] <= rm[i - 1]);
    CHECK(r.parameters.size() == r.history.size());
    if (r.best_objective < 0.02) ++ok;
  }
  CHECK(ok >= 8);

  OptimizerConfig cfg;
  cfg.seed = 3;
  cfg.budget = 60;
  const auto a = optimize_simultaneous_drives(be, perturbed_drives(ideal, 9), cfg);
  const auto b = optimize_simultaneous_drives(be, perturbed_drives(ideal, 9), cfg);
  CHECK(a.history == b.history);
  CHECK(a.budget_exhausted);
  cfg.budget = 0;
  CHECK_THROWS_AS(optimize_simultaneous_drives(be, ideal, cfg), ArgumentError);
}

TEST_CASE("backends are reproducible") {
  auto cfg = EffectiveBackendConfig::defaults();
  cfg.readout_noise = 0.01;
  cfg.seed = 42;
  EffectiveBackend a(cfg), b(cfg);
  const auto drives = a.ideal_drives();
  const auto times = objective_times(a.transfer_time());
  CHECK(a.run_chain(drives, 0, times) == b.run_chain(drives, 0, times));
  CHECK(a.run_chain(drives, 0, times) == a.run_chain(drives, 0, times));
  cfg.seed = 43;
  EffectiveBackend c(cfg);
  CHECK(a.run_chain(drives, 0, times) != c.run_chain(drives, 0, times));
  const auto p = a.run_pair(0, drives[0], times);
  CHECK(p.minCoeff() >= 0.0);
  CHECK(p.maxCoeff() <= 1.0);
}

TEST_CASE("device backend chevron shows a drive-induced shift") {
  DeviceBackend be({});
  const double bare = be.bare_resonance(0);
  const double dressed = be.dressed_resonance(0);
  CHECK(std::abs(dressed - bare) < 2 * kPi * 10e3);
  const double a = 0.2;
  const auto freqs = linspace(dressed - 2 * kPi * 500e3, dressed + 2 * kPi * 500e3, 41);
  const auto times = linspace(50e-9, 4e-6, 80);
  const auto d = chevron_scan(be, 0, {a}, freqs, times);
  CHECK(d.populations[0].minCoeff() >= 0.0);
  CHECK(d.populations[0].maxCoeff() <= 1.0);
  const auto fit = fit_chevron(d);
  const double shift = fit.resonance - dressed;
  INFO("J/2pi = " << fit.coupling / (2 * kPi) << " Hz, shift/2pi = " << shift / (2 * kPi) << " Hz");
  CHECK(std::abs(shift) > 2 * kPi * 20e3);
  CHECK(fit.coupling > 0.0);

  // Reruns are bit-identical.
  const auto again = be.run_pair(0, {a, freqs[20]}, {1e-6, 2e-6});
  CHECK(again == be.run_pair(0, {a, freqs[20]}, {1e-6, 2e-6}));
  CHECK_THROWS_AS(be.run_pair(0, {a, freqs[20]}, times, {{1, {0.1, 1e9}}}), ArgumentError);
}

// The closed-form estimate overshoots the full-model exchange rate by about 70x at the default
// bias (see README, known deviations); kept as an expected failure so the gap stays visible.
TEST_CASE("parametric estimate matches the full-model chevron within 15%", "[!shouldfail]") {
  DeviceBackend be({});
  const double dressed = be.dressed_resonance(0);
  const double a = 0.2;
  const auto freqs = linspace(dressed - 2 * kPi * 500e3, dressed + 2 * kPi * 500e3, 41);
  const auto fit = fit_chevron(chevron_scan(be, 0, {a}, freqs, linspace(50e-9, 4e-6, 80)));
  const double estimate = effective_coupling_estimate(DeviceSpec::defaults(), 0, {0, a, 0.0, 1, 0.0});
  INFO("estimate/2pi = " << estimate / (2 * kPi) << " Hz, chevron J/2pi = " << fit.coupling / (2 * kPi) << " Hz");
  CHECK(std::abs(estimate) == Approx(fit.coupling).epsilon(0.15));
}
