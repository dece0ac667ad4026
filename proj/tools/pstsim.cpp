// pstsim: command-line front end. Sites on the command line are 1-based.

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "pstsim/calibration.hpp"
#include "pstsim/io.hpp"
#include "pstsim/protocols.hpp"
#include "pstsim/tomography.hpp"

using namespace pstsim;
using io::json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Mirrors config/scenario.json so the tool works without a config directory.
constexpr const char* kBuiltinScenarios = R"({
  "schema_version": 1,
  "scenarios": {
    "t1": {"t1_s": [12.1e-6, 53.2e-6, 26.2e-6, 46.0e-6, 63.4e-6, 72.0e-6]},
    "zz": {"transfer_time": "640ns", "zz_hz": [60e3, 80e3, 150e3, 70e3, 50e3, 0.0]},
    "ghz3": {"transfer_time": "216ns", "t1_s": [63.4e-6, 72.0e-6, 12.1e-6], "all_excited_phase": 0.378},
    "ghz3_pi": {"transfer_time": "216ns", "t1_s": [63.4e-6, 72.0e-6, 12.1e-6], "all_excited_phase": 0.378,
                         "literal_pi_factor": true}
  }
})";

struct Common {
  std::string out_dir;
  std::string prefix;
  std::string scenarios_file;
  bool svg = false;

  void add(CLI::App* c) {
    c->add_option("--out-dir", out_dir, "Output directory (default $PSTSIM_OUTPUT_DIR or .)");
    c->add_option("--prefix", prefix, "File name prefix (default <command>_)");
    c->add_flag("--svg", svg, "Also write SVG plots");
  }

  void add_scenarios(CLI::App* c) { c->add_option("--scenarios", scenarios_file, "Scenario file (scenario.json schema)"); }

  io::RunRecorder recorder(const std::string& command) const {
    return {command, out_dir.empty() ? io::default_output_dir() : std::filesystem::path(out_dir),
            prefix.empty() ? command + "_" : prefix};
  }

  std::vector<io::Scenario> scenarios() const {
    return io::read_scenario_config(scenarios_file.empty() ? json::parse(kBuiltinScenarios)
                                                            : io::ConfigReader::parse_file(scenarios_file));
  }
};

double duration_flag(const std::string& s, const char* name) {
  try {
    return io::parse_duration(s);
  } catch (const ArgumentError& e) {
    throw ArgumentError(std::string("--") + name + ": " + e.what());
  }
}

/// A bitstring, or "site:K" for a single excitation on site K (1-based).
BasisLabel parse_initial(const std::string& s, int n) {
  if (s.starts_with("site:")) {
    const auto k = io::parse_number(std::string_view(s).substr(5));
    if (!k || *k != std::floor(*k) || *k < 1 || *k > n) throw ArgumentError("--initial: site must be in 1.." + std::to_string(n));
    return single_excitation(n, static_cast<int>(*k) - 1);
  }
  if (static_cast<int>(s.size()) != n || s.find_first_not_of("01") != std::string::npos)
    throw ArgumentError("--initial: expected a " + std::to_string(n) + "-bit string or site:K");
  return BasisLabel::from_bitstring(s);
}

std::vector<double> hz(const std::vector<double>& w) {
  std::vector<double> o;
  for (double x : w) o.push_back(x / kTwoPi);
  return o;
}

// ---------------------------------------------------------------------------------------------

struct CouplingsCmd {
  Common common;
  int n = 0;
  std::string tau = "640ns";
  std::optional<double> theta;
  std::string format = "json";

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("couplings", "PST couplings, or FST couplings and detunings with --theta");
    c->add_option("--n", n, "Chain length")->required()->check(CLI::Range(2, 64));
    c->add_option("--tau", tau, "Transfer time (ns, us, ms, s)");
    c->add_option("--theta", theta, "FST angle in [0, pi]");
    c->add_option("--format", format)->check(CLI::IsMember({"json", "csv"}));
    common.add(c);
    c->callback([this] { run(); });
  }

  void run() {
    auto rec = common.recorder("couplings");
    const double t = duration_flag(tau, "tau");
    std::vector<double> j, d;
    if (theta) {
      if (!(*theta >= 0.0 && *theta <= kPi)) throw ArgumentError("--theta must lie in [0, pi]");
      const auto p = fst_profile(n, t, *theta);
      j = p.couplings;
      d = p.detunings;
    } else {
      j = pst_couplings(n, t);
    }
    json cfg = {{"n", n}, {"tau_s", t}, {"format", format}};
    if (theta) cfg["theta"] = *theta;
    rec.manifest().config = cfg;
    if (format == "json") {
      json out = {{"schema_version", io::kSchemaVersion}, {"n", n}, {"tau_s", t},
                  {"units", "couplings and detunings in Hz (value / 2 pi) and rad/s"},
                  {"couplings_hz", hz(j)},             {"couplings_rad_s", j}};
      if (theta) {
        out["theta"] = *theta;
        out["detunings_hz"] = hz(d);
        out["detunings_rad_s"] = d;
      }
      rec.write("profile.json", io::dump(out));
    } else {
      std::string csv = io::csv_row({"index", "kind", "value_hz", "value_rad_s"});
      for (std::size_t i = 0; i < j.size(); ++i)
        csv += io::csv_row({std::to_string(i + 1), "coupling", io::format_double(j[i] / kTwoPi), io::format_double(j[i])});
      for (std::size_t i = 0; i < d.size(); ++i)
        csv += io::csv_row({std::to_string(i + 1), "detuning", io::format_double(d[i] / kTwoPi), io::format_double(d[i])});
      rec.write("profile.csv", csv);
    }
    std::cout << rec.finish().string() << "\n";
  }
};

struct EvolveCmd {
  Common common;
  std::string name;
  std::string config;
  int n = 6;
  std::string tau = "640ns";
  double theta = 0.5 * kPi;
  std::string initial;
  std::string times = "0:2tau:201";
  std::string noise;

  EvolveCmd(std::string command) : name(std::move(command)) {}

  void add(CLI::App& app) {
    const char* what = name == "evolve" ? "Evolve a chain given by --config"
                       : name == "pst" ? "PST chain trajectory"
                                       : "FST chain trajectory";
    auto* c = app.add_subcommand(name, what);
    if (name == "evolve") {
      c->add_option("--config", config, "chain.json")->required();
    } else {
      c->add_option("--config", config, "chain.json (overrides --n/--tau)");
      c->add_option("--n", n, "Chain length")->check(CLI::Range(2, 20));
      c->add_option("--tau", tau, "Transfer time");
    }
    if (name == "fst") c->add_option("--theta", theta, "FST angle in [0, pi]");
    c->add_option("--initial", initial, "Bitstring (site 1 first) or site:K")->required();
    c->add_option("--times", times, "start:stop:count or a comma list; 'tau' multiples allowed");
    c->add_option("--noise", noise, "Scenario name (T1 and/or ZZ)");
    common.add(c);
    common.add_scenarios(c);
    c->callback([this] { run(); });
  }

  void run() {
    auto rec = common.recorder(name);
    ChainSpec spec;
    if (!config.empty()) {
      spec = io::read_chain_config(io::ConfigReader::parse_file(config));
    } else if (name == "fst") {
      if (!(theta >= 0.0 && theta <= kPi)) throw ArgumentError("--theta must lie in [0, pi]");
      spec = fst_chain(n, duration_flag(tau, "tau"), theta);
    } else {
      spec = pst_chain(n, duration_flag(tau, "tau"));
    }
    NoiseSpec ns;
    ns.zz = std::any_of(spec.zz.begin(), spec.zz.end(), [](double z) { return z != 0.0; });
    json scenario = nullptr;
    if (!noise.empty()) {
      const auto all = common.scenarios();
      const auto& s = io::find_scenario(all, noise);
      ns = s.noise(spec.length);
      if (ns.zz) spec.zz = s.zz_for(spec.length, spec.transfer_time);
      scenario = io::scenario_json(s);
    }
    const auto label = parse_initial(initial, spec.length);
    const auto grid = io::parse_time_grid(times, spec.transfer_time);
    const auto tr = run_pst(spec, label, grid, ns);

    rec.manifest().config = {{"chain", io::chain_json(spec)}, {"initial", label.to_string()}, {"times", times},
                             {"noise", scenario}};
    rec.write("trajectory.csv", io::trajectory_csv(tr));
    if (common.svg) {
      Eigen::MatrixXd m = tr.populations.transpose();  // sites down, time across
      rec.write("trajectory.svg",
                io::heatmap_svg(m, {name + " populations, initial " + label.to_string(), "time (s)", "site"},
                                {grid.front(), grid.back()}, {1, spec.length}, std::make_pair(0.0, 1.0)));
    }
    std::cout << rec.finish().string() << "\n";
  }
};

struct ParityCmd {
  Common common;
  int n = 6;
  std::string inner = "all";
  std::string model = "ideal";
  std::string scenario;
  std::string tau;
  std::string input = "all";

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("parity", "Parity-dependent phase of a transferred superposition");
    c->add_option("--n", n, "Chain length")->check(CLI::Range(3, 20));
    c->add_option("--inner", inner, "all, or a bitstring for sites 2..N-1");
    c->add_option("--model", model)->check(CLI::IsMember({"ideal", "zz", "noise"}));
    c->add_option("--scenario", scenario, "Scenario for zz/noise models (default: zz or t1)");
    c->add_option("--tau", tau, "Transfer time (default: scenario value or 640ns)");
    c->add_option("--input", input, "all, +x, -x, +y or -y");
    common.add(c);
    common.add_scenarios(c);
    c->callback([this] { run(); });
  }

  void run() {
    auto rec = common.recorder("parity");
    std::optional<io::Scenario> sc;
    if (model != "ideal") {
      const auto all = common.scenarios();
      sc = io::find_scenario(all, scenario.empty() ? (model == "zz" ? "zz" : "t1") : scenario);
    }
    double t = 640e-9;
    if (!tau.empty()) t = duration_flag(tau, "tau");
    else if (sc && sc->transfer_time) t = *sc->transfer_time;
    ChainSpec spec = pst_chain(n, t);
    NoiseSpec ns;
    if (sc) {
      ns = sc->noise(n);
      if (ns.zz) spec.zz = sc->zz_for(n, t);
    }
    std::vector<InputState> inputs;
    if (input == "all") inputs = {InputState::plus_x, InputState::minus_x, InputState::plus_y, InputState::minus_y};
    else inputs = {parse_input_state(input)};
    if (inner != "all" && (static_cast<int>(inner.size()) != n - 2 || inner.find_first_not_of("01") != std::string::npos))
      throw ArgumentError("--inner: expected 'all' or a " + std::to_string(n - 2) + "-bit string");

    ParityExperiment exp(spec, ns);
    std::vector<ParityExperimentResult> rows;
    for (auto in : inputs) {
      if (inner == "all") {
        const auto t = exp.table(in);
        rows.insert(rows.end(), t.begin(), t.end());
      } else {
        rows.push_back(exp.run(inner, in));
      }
    }
    json out = {{"schema_version", io::kSchemaVersion}, {"n", n}, {"model", model}, {"tau_s", t}};
    json r = json::array();
    for (const auto& x : rows) r.push_back(io::parity_result_json(x));
    out["rows"] = std::move(r);
    std::optional<PhaseErrorTrend> trend;
    if (model != "ideal" && inner == "all") {
      trend = phase_error_trend(rows);
      out["trend"] = {{"excitations", trend->excitations},
                      {"mean_abs_deviation", trend->mean_deviation},
                      {"slope", trend->fit.slope},
                      {"intercept", trend->fit.intercept},
                      {"r_squared", trend->fit.r_squared}};
    }
    rec.manifest().config = {{"chain", io::chain_json(spec)}, {"inner", inner}, {"input", input}, {"model", model},
                             {"scenario", sc ? io::scenario_json(*sc) : json(nullptr)}};
    rec.write("table.json", io::dump(out));
    rec.write("table.csv", io::parity_csv(rows));
    if (common.svg) {
      std::vector<io::Series> series;
      for (auto in : inputs) {
        io::Series s{input_name(in), {}, {}, true};
        for (const auto& x : rows)
          if (x.input == in) {
            s.x.push_back(static_cast<double>(std::stoul(x.inner.empty() ? "0" : x.inner, nullptr, 2)));
            s.y.push_back(x.phase / kPi);
          }
        series.push_back(std::move(s));
      }
      rec.write("phases.svg", io::line_plot_svg(series, {"acquired phase, model " + model, "inner bitstring (binary value)", "phase / pi"}));
    }
    std::cout << rec.finish().string() << "\n";
  }
};

struct GhzCmd {
  Common common;
  int n = 3;
  std::string noise;
  std::string tau;
  long long shots = 0;
  std::uint64_t seed = 1;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("ghz", "GHZ preparation with one PST, optional tomography");
    c->add_option("--n", n, "Qubits")->check(CLI::Range(2, 8));
    c->add_option("--noise", noise, "Scenario name (e.g. ghz3)");
    c->add_option("--tau", tau, "Transfer time (default: scenario value or 216ns)");
    c->add_option("--shots", shots, "Shots per tomography setting; 0 = exact expectations")->check(CLI::NonNegativeNumber);
    c->add_option("--seed", seed, "Tomography seed");
    common.add(c);
    common.add_scenarios(c);
    c->callback([this] { run(); });
  }

  void run() {
    auto rec = common.recorder("ghz");
    std::optional<io::Scenario> sc;
    if (!noise.empty()) {
      const auto all = common.scenarios();
      sc = io::find_scenario(all, noise);
    }
    double t = 216e-9;
    if (!tau.empty()) t = duration_flag(tau, "tau");
    else if (sc && sc->transfer_time) t = *sc->transfer_time;
    CircuitContext ctx;
    ctx.transfer_time = t;
    if (sc) {
      ctx.noise = sc->noise(n);
      if (ctx.noise.zz) ctx.zz = sc->zz_for(n, t);
    }
    DensityMatrix rho = simulate_ghz_density(n, ctx);
    if (shots > 0) {
      const auto table = simulate_tomography(rho, {n, static_cast<int>(shots), seed});
      rec.write("expectations.json", io::dump(io::expectation_table_json(table)));
      rho = reconstruct(table);
    }
    const auto report = fidelity_opt_z(rho, ghz_state(n), kGhzSpecialSite);
    json out = {{"schema_version", io::kSchemaVersion}, {"n", n}, {"tau_s", t}, {"shots", shots}, {"seed", seed},
                {"noise", noise.empty() ? json(nullptr) : json(noise)}, {"z_site", kGhzSpecialSite + 1}};
    out["report"] = io::fidelity_report_json(report);
    rec.manifest().seed = seed;
    rec.manifest().config = {{"n", n}, {"tau_s", t}, {"shots", shots}, {"scenario", sc ? io::scenario_json(*sc) : json(nullptr)}};
    rec.write("report.json", io::dump(out));
    rec.write("density.json", io::dump(io::density_matrix_json(rho)));
    if (common.svg) {
      std::vector<std::string> names;
      std::vector<double> values;
      const auto d = rho.dimension();
      for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index k = 0; k < d; ++k) {
          if (std::abs(rho(i, k)) < 1e-3) continue;
          auto bits = [&](Eigen::Index x) {
            std::string s(n, '0');
            for (int b = 0; b < n; ++b)
              if (x & (Eigen::Index{1} << (n - 1 - b))) s[b] = '1';
            return s;
          };
          names.push_back(bits(i) + "," + bits(k));
          values.push_back(rho(i, k).real());
        }
      rec.write("density.svg", io::bar_chart_svg(names, values, {"Re rho, entries above 1e-3", "", "Re rho"}));
    }
    std::cout << rec.finish().string() << "\n";
    std::cout << "F = " << io::format_fixed(report.fidelity, 4) << ", F_opt = " << io::format_fixed(report.fidelity_opt, 4)
              << ", phi* = " << io::format_fixed(report.phi_star, 4) << "\n";
  }
};

struct CalibrateCmd {
  Common common;
  std::string backend = "effective";
  std::uint64_t seed = 42;
  int budget = 500;
  int n = 6;
  std::string tau = "640ns";
  double readout_noise = 0.0;
  double amplitude_spread = 0.2;
  double frequency_spread_hz = 200e3;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("calibrate", "Optimise simultaneous drives from a perturbed guess");
    c->add_option("--backend", backend)->check(CLI::IsMember({"effective"}));
    c->add_option("--seed", seed, "Seeds the perturbation, the search and readout noise");
    c->add_option("--budget", budget, "Objective evaluations");
    c->add_option("--n", n, "Qubits")->check(CLI::Range(2, 6));
    c->add_option("--tau", tau, "Transfer time");
    c->add_option("--readout-noise", readout_noise, "Gaussian population noise (absolute)")->check(CLI::NonNegativeNumber);
    c->add_option("--amplitude-spread", amplitude_spread, "Relative amplitude perturbation")->check(CLI::Range(0.0, 0.5));
    c->add_option("--frequency-spread", frequency_spread_hz, "Frequency perturbation (Hz)")->check(CLI::NonNegativeNumber);
    common.add(c);
    c->callback([this] { run(); });
  }

  void run() {
    if (budget <= 0) throw ArgumentError("--budget must be >= 1");
    auto rec = common.recorder("calibrate");
    auto cfg = EffectiveBackendConfig::defaults(n, duration_flag(tau, "tau"));
    cfg.readout_noise = readout_noise;
    cfg.seed = seed;
    const EffectiveBackend be(cfg);
    const auto ideal = be.ideal_drives();
    const auto guess = perturbed_drives(ideal, seed, amplitude_spread, kTwoPi * frequency_spread_hz);
    OptimizerConfig oc;
    oc.budget = budget;
    oc.seed = seed;
    const auto r = optimize_simultaneous_drives(be, guess, oc);
    json out = io::calibration_result_json(r);
    out["backend"] = backend;
    out["ideal_drives"] = io::drives_json(ideal);
    out["initial_drives"] = io::drives_json(guess);
    rec.manifest().seed = seed;
    rec.manifest().config = {{"backend", backend},        {"n", n},
                             {"tau_s", cfg.transfer_time}, {"budget", budget},
                             {"readout_noise", readout_noise}, {"amplitude_spread", amplitude_spread},
                             {"frequency_spread_hz", frequency_spread_hz}};
    rec.write("result.json", io::dump(out));
    rec.write("convergence.csv", io::convergence_csv(r));
    if (common.svg) {
      std::vector<double> x;
      for (int i = 1; i <= r.evaluations; ++i) x.push_back(i);
      rec.write("convergence.svg",
                io::line_plot_svg({{"objective", x, r.history, true}, {"running minimum", x, r.running_minimum(), false}},
                                  {"drive optimisation", "evaluation", "objective"}, true));
    }
    std::cout << rec.finish().string() << "\n";
    std::cout << "objective " << io::format_double(r.initial_objective) << " -> " << io::format_double(r.best_objective)
              << " in " << r.evaluations << " evaluations" << (r.budget_exhausted ? " (budget exhausted)" : "") << "\n";
  }
};

struct LatticeCmd {
  Common common;
  int nx = 9;
  int ny = 7;
  std::string tau = "640ns";
  std::string start = "1,1";
  std::string snapshots;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("lattice", "PST on a 2D grid with separable couplings");
    c->add_option("--nx", nx)->check(CLI::Range(1, 64));
    c->add_option("--ny", ny)->check(CLI::Range(1, 64));
    c->add_option("--tau", tau, "Transfer time");
    c->add_option("--start", start, "x,y (1-based)");
    c->add_option("--snapshots", snapshots, "Comma list of fractions of tau (default 0,0.1,0.25,0.5,0.75,0.9,1)");
    common.add(c);
    c->callback([this] { run(); });
  }

  void run() {
    if (nx * ny < 2) throw ArgumentError("lattice: grid must be at least 2x1");
    auto rec = common.recorder("lattice");
    const double t = duration_flag(tau, "tau");
    const auto comma = start.find(',');
    const auto sx = comma == std::string::npos ? std::nullopt : io::parse_number(std::string_view(start).substr(0, comma));
    const auto sy = comma == std::string::npos ? std::nullopt : io::parse_number(std::string_view(start).substr(comma + 1));
    if (!sx || !sy || *sx < 1 || *sx > nx || *sy < 1 || *sy > ny || *sx != std::floor(*sx) || *sy != std::floor(*sy))
      throw ArgumentError("--start: expected x,y inside the " + std::to_string(nx) + "x" + std::to_string(ny) + " grid");
    std::vector<double> fractions;
    if (snapshots.empty()) {
      for (double v : lattice_snapshot_times(1.0)) fractions.push_back(v);
    } else {
      for (double v : io::parse_time_grid(snapshots)) fractions.push_back(v);
    }
    std::vector<double> times;
    for (double f : fractions) times.push_back(f * t);
    const auto spec = pst_lattice(nx, ny, t);
    const auto tr = lattice_pst(spec, static_cast<int>(*sx) - 1, static_cast<int>(*sy) - 1, times);

    json frames = json::array();
    std::string csv = io::csv_row({"fraction", "time_s", "x", "y", "population"});
    for (std::size_t k = 0; k < times.size(); ++k) {
      const auto g = lattice_population_grid(spec, tr, k);
      json grid = json::array();
      for (int x = 0; x < nx; ++x) {
        json row = json::array();
        for (int y = 0; y < ny; ++y) {
          row.push_back(g(x, y));
          csv += io::csv_row({io::format_double(fractions[k]), io::format_double(times[k]), std::to_string(x + 1),
                              std::to_string(y + 1), io::format_double(g(x, y))});
        }
        grid.push_back(std::move(row));
      }
      frames.push_back({{"fraction", fractions[k]}, {"time_s", times[k]}, {"total", g.sum()}, {"grid", std::move(grid)}});
      if (common.svg)
        rec.write("frame_" + std::to_string(k) + ".svg",
                  io::heatmap_svg(g, {"t = " + io::format_double(fractions[k]) + " tau", "y", "x"}, {1, ny}, {1, nx},
                                  std::make_pair(0.0, 1.0)));
    }
    rec.manifest().config = {{"nx", nx}, {"ny", ny}, {"tau_s", t}, {"start", {*sx, *sy}}, {"fractions", fractions}};
    rec.write("frames.json", io::dump({{"schema_version", io::kSchemaVersion},
                                       {"nx", nx},
                                       {"ny", ny},
                                       {"layout", "grid[x-1][y-1]"},
                                       {"frames", std::move(frames)}}));
    rec.write("frames.csv", csv);
    std::cout << rec.finish().string() << "\n";
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perfect and fractional state transfer simulator"};
  app.set_version_flag("--version", io::version());
  app.require_subcommand(1);

  CouplingsCmd couplings;
  EvolveCmd evolve("evolve"), pst("pst"), fst("fst");
  ParityCmd parity;
  GhzCmd ghz;
  CalibrateCmd calibrate;
  LatticeCmd lattice;
  couplings.add(app);
  evolve.add(app);
  pst.add(app);
  fst.add(app);
  parity.add(app);
  ghz.add(app);
  calibrate.add(app);
  lattice.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ArgumentError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ProfileInfeasibleError& e) {
    std::cerr << "infeasible profile: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
