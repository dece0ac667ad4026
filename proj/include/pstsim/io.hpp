#pragma once

// Config ingestion and deterministic emitters (JSON, CSV, SVG). All numbers are written with
// std::to_chars, so output does not depend on the C locale.

#include <array>
#include <charconv>
#include <cstdio>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "calibration.hpp"
#include "protocols.hpp"
#include "tomography.hpp"

namespace pstsim::io {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kOutputDirEnv = "PSTSIM_OUTPUT_DIR";

inline std::string version() {
#ifdef PSTSIM_VERSION
  return PSTSIM_VERSION;
#else
  return "unknown";
#endif
}

// ---------------------------------------------------------------------------------------------
// Numbers

/// Shortest round-trip representation.
inline std::string format_double(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  std::array<char, 64> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return {buf.data(), r.ptr};
}

inline std::string format_fixed(double v, int digits) {
  std::array<char, 64> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed, digits);
  return {buf.data(), r.ptr};
}

inline std::optional<double> parse_number(std::string_view s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

/// "640ns", "1.5us", "2ms", "3s" or a bare number of seconds. With `tau` set, "tau" and "2tau"
/// are accepted as multiples of it.
inline double parse_duration(std::string_view s, std::optional<double> tau = std::nullopt) {
  auto trim = [](std::string_view v) {
    while (!v.empty() && v.front() == ' ') v.remove_prefix(1);
    while (!v.empty() && v.back() == ' ') v.remove_suffix(1);
    return v;
  };
  s = trim(s);
  struct Unit {
    std::string_view suffix;
    double scale;
  };
  static constexpr Unit units[] = {{"ns", 1e-9}, {"us", 1e-6}, {"\xC2\xB5s", 1e-6}, {"ms", 1e-3}, {"s", 1.0}};
  if (tau && s.ends_with("tau")) {
    const auto head = s.substr(0, s.size() - 3);
    if (head.empty()) return *tau;
    if (auto v = parse_number(head)) return *v * *tau;
    throw ArgumentError("duration: cannot parse '" + std::string(s) + "'");
  }
  for (const auto& u : units)
    if (s.ends_with(u.suffix))
      if (auto v = parse_number(trim(s.substr(0, s.size() - u.suffix.size())))) return *v * u.scale;
  if (auto v = parse_number(s)) return *v;
  throw ArgumentError("duration: cannot parse '" + std::string(s) + "' (use ns, us, ms or s)");
}

/// "start:stop:count" (inclusive, evenly spaced) or a comma-separated list of durations.
inline std::vector<double> parse_time_grid(std::string_view s, std::optional<double> tau = std::nullopt) {
  std::vector<std::string> parts;
  const char sep = s.find(':') != std::string_view::npos ? ':' : ',';
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  std::vector<double> out;
  if (sep == ':') {
    if (parts.size() != 3) throw ArgumentError("time grid: expected start:stop:count");
    const double a = parse_duration(parts[0], tau), b = parse_duration(parts[1], tau);
    const auto n = parse_number(parts[2]);
    if (!n || *n < 1 || *n != std::floor(*n)) throw ArgumentError("time grid: count must be a positive integer");
    const int count = static_cast<int>(*n);
    for (int i = 0; i < count; ++i) out.push_back(count == 1 ? a : a + (b - a) * i / (count - 1));
  } else {
    for (const auto& p : parts) out.push_back(parse_duration(p, tau));
  }
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i] < 0.0 || (i && out[i] <= out[i - 1])) throw ArgumentError("time grid: times must be >= 0 and increasing");
  return out;
}

// ---------------------------------------------------------------------------------------------
// Config reading with JSON-pointer diagnostics

class ConfigReader {
 public:
  explicit ConfigReader(const json& root, std::string pointer = "") : j_(root), ptr_(std::move(pointer)) {}

  static json parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), "cannot open config file");
    try {
      return json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(path.string(), e.what());
    }
  }

  const json& value() const { return j_; }
  const std::string& pointer() const { return ptr_; }
  bool has(const std::string& key) const { return j_.is_object() && j_.contains(key) && !j_.at(key).is_null(); }

  ConfigReader at(const std::string& key) const {
    if (!j_.is_object()) fail("", "expected an object");
    if (!j_.contains(key)) fail(key, "required field missing");
    return ConfigReader(j_.at(key), child(key));
  }

  ConfigReader at(std::size_t i) const {
    if (!j_.is_array() || i >= j_.size()) fail(std::to_string(i), "index out of range");
    return ConfigReader(j_.at(i), child(std::to_string(i)));
  }

  std::size_t size() const {
    if (!j_.is_array()) fail("", "expected an array");
    return j_.size();
  }

  double number() const {
    if (!j_.is_number()) fail("", "expected a number");
    return j_.get<double>();
  }

  int integer() const {
    if (!j_.is_number_integer()) fail("", "expected an integer");
    return j_.get<int>();
  }

  bool boolean() const {
    if (!j_.is_boolean()) fail("", "expected true or false");
    return j_.get<bool>();
  }

  std::string string() const {
    if (!j_.is_string()) fail("", "expected a string");
    return j_.get<std::string>();
  }

  /// Number of seconds or a string with a unit suffix.
  double duration() const {
    if (j_.is_number()) return number();
    try {
      return parse_duration(string());
    } catch (const ArgumentError& e) {
      fail("", e.what());
    }
  }

  std::vector<double> numbers() const {
    std::vector<double> v;
    for (std::size_t i = 0; i < size(); ++i) v.push_back(at(i).number());
    return v;
  }

  std::vector<std::optional<double>> optional_numbers() const {
    std::vector<std::optional<double>> v;
    for (std::size_t i = 0; i < size(); ++i) {
      if (j_.at(i).is_null()) v.emplace_back();
      else v.emplace_back(at(i).number());
    }
    return v;
  }

  void require_schema() const {
    const int v = at("schema_version").integer();
    if (v != kSchemaVersion) fail("schema_version", "unsupported version " + std::to_string(v));
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError(key.empty() ? (ptr_.empty() ? "/" : ptr_) : child(key), what);
  }

 private:
  std::string child(const std::string& key) const {
    std::string k;
    for (char c : key) {
      if (c == '~') k += "~0";
      else if (c == '/') k += "~1";
      else k.push_back(c);
    }
    return ptr_ + "/" + k;
  }

  const json& j_;
  std::string ptr_;
};

/// chain.json. Profile "pst" and "fst" build the ideal couplings; "explicit" reads them.
/// Frequencies are in Hz and converted to rad/s here.
inline ChainSpec read_chain_config(const json& root) {
  const ConfigReader r(root);
  r.require_schema();
  const int n = r.at("length").integer();
  if (n < 2) r.fail("length", "must be >= 2");
  const double tau = r.at("transfer_time").duration();
  if (!(tau > 0.0)) r.fail("transfer_time", "must be > 0");
  const std::string profile = r.has("profile") ? r.at("profile").string() : "pst";
  ChainSpec spec;
  if (profile == "pst") {
    spec = pst_chain(n, tau);
  } else if (profile == "fst") {
    try {
      spec = fst_chain(n, tau, r.at("theta").number());
    } catch (const ProfileInfeasibleError& e) {
      r.fail("theta", e.what());
    } catch (const ArgumentError& e) {
      r.fail("theta", e.what());
    }
  } else if (profile == "explicit") {
    spec.length = n;
    spec.transfer_time = tau;
    for (double j : r.at("couplings_hz").numbers()) spec.couplings.push_back(kTwoPi * j);
    if (static_cast<int>(spec.couplings.size()) != n - 1) r.fail("couplings_hz", "need length-1 entries");
    spec.detunings.assign(n, 0.0);
    if (r.has("detunings_hz")) {
      const auto d = r.at("detunings_hz").numbers();
      if (static_cast<int>(d.size()) != n) r.fail("detunings_hz", "need length entries");
      for (int i = 0; i < n; ++i) spec.detunings[i] = kTwoPi * d[i];
    }
  } else {
    r.fail("profile", "expected pst, fst or explicit");
  }
  spec.zz.assign(n, 0.0);
  if (r.has("zz_hz")) {
    const auto z = r.at("zz_hz").numbers();
    if (static_cast<int>(z.size()) != n) r.fail("zz_hz", "need length entries (last closes the ring)");
    for (int i = 0; i < n; ++i) spec.zz[i] = kTwoPi * z[i];
  }
  spec.validate();
  return spec;
}

inline DeviceSpec read_device_config(const json& root) {
  const ConfigReader r(root);
  r.require_schema();
  DeviceSpec d;
  const auto qs = r.at("qubits");
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const auto q = qs.at(i);
    d.qubits.push_back({q.at("frequency_hz").number(), q.at("anharmonicity_hz").number(), q.at("t1_s").number(),
                        q.has("t2_star_s") ? q.at("t2_star_s").number() : 0.0});
  }
  const auto cs = r.at("couplers");
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const auto c = cs.at(i);
    d.couplers.push_back({c.at("freq_min_hz").number(), c.at("freq_max_hz").number(), c.at("anharmonicity_hz").number(),
                          c.at("phi_dc").number()});
  }
  d.g_next = r.at("g_next_hz").numbers();
  d.g_prev = r.at("g_prev_hz").numbers();
  d.g_qubit_qubit = r.at("g_qubit_qubit_hz").optional_numbers();
  const std::size_t n = d.qubits.size();
  if (r.has("crosstalk")) {
    const auto m = r.at("crosstalk");
    if (m.size() != n) r.fail("crosstalk", "need one row per coupler");
    d.crosstalk.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = m.at(i).numbers();
      if (row.size() != n) m.at(i).fail("", "need one column per coupler");
      for (std::size_t k = 0; k < n; ++k) d.crosstalk(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = row[k];
    }
  } else {
    d.crosstalk = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  }
  d.flux_offset = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  if (r.has("flux_offset")) {
    const auto f = r.at("flux_offset").numbers();
    if (f.size() != n) r.fail("flux_offset", "need one entry per coupler");
    for (std::size_t i = 0; i < n; ++i) d.flux_offset(static_cast<Eigen::Index>(i)) = f[i];
  }
  if (r.has("levels")) d.levels = r.at("levels").integer();
  try {
    d.validate();
  } catch (const ArgumentError& e) {
    r.fail("", e.what());
  }
  return d;
}

/// One named noise/ZZ scenario from scenario.json.
struct Scenario {
  std::string name;
  std::string description;
  std::optional<double> transfer_time;
  std::vector<double> t1;                   // s per site, 0 = no decay
  std::vector<double> zz;                   // rad/s per pair (ring entry last)
  std::optional<double> all_excited_phase;  // rad; zz tuned so |1..1> acquires it over tau
  bool literal_pi_factor = false;

  NoiseSpec noise(int num_sites) const {
    if (!t1.empty() && static_cast<int>(t1.size()) != num_sites)
      throw ArgumentError("scenario '" + name + "': has " + std::to_string(t1.size()) + " T1 values for " +
                          std::to_string(num_sites) + " sites");
    NoiseSpec n = NoiseSpec::from_t1(t1);
    n.zz = !zz.empty() || all_excited_phase.has_value();
    n.literal_pi_factor = literal_pi_factor;
    return n;
  }

  std::vector<double> zz_for(int num_sites, double tau) const {
    if (all_excited_phase) return zz_for_all_excited_phase(num_sites, tau, *all_excited_phase);
    if (zz.empty()) return std::vector<double>(num_sites, 0.0);
    if (static_cast<int>(zz.size()) != num_sites)
      throw ArgumentError("scenario '" + name + "': zz needs one entry per site");
    return zz;
  }
};

inline Scenario read_scenario(const ConfigReader& r, const std::string& name) {
  Scenario s;
  s.name = name;
  if (r.has("description")) s.description = r.at("description").string();
  if (r.has("transfer_time")) s.transfer_time = r.at("transfer_time").duration();
  if (r.has("t1_s")) s.t1 = r.at("t1_s").numbers();
  for (double t : s.t1)
    if (!(t >= 0.0)) r.fail("t1_s", "T1 values must be >= 0");
  if (r.has("zz_hz") && r.has("all_excited_phase")) r.fail("zz_hz", "give zz_hz or all_excited_phase, not both");
  if (r.has("zz_hz"))
    for (double z : r.at("zz_hz").numbers()) s.zz.push_back(kTwoPi * z);
  if (r.has("all_excited_phase")) s.all_excited_phase = r.at("all_excited_phase").number();
  if (r.has("literal_pi_factor")) s.literal_pi_factor = r.at("literal_pi_factor").boolean();
  return s;
}

inline std::vector<Scenario> read_scenario_config(const json& root) {
  const ConfigReader r(root);
  r.require_schema();
  const auto all = r.at("scenarios");
  if (!all.value().is_object()) all.fail("", "expected an object of named scenarios");
  std::vector<Scenario> out;
  for (const auto& [name, _] : all.value().items()) out.push_back(read_scenario(all.at(name), name));
  return out;
}

inline const Scenario& find_scenario(const std::vector<Scenario>& all, const std::string& name) {
  for (const auto& s : all)
    if (s.name == name) return s;
  std::string known;
  for (const auto& s : all) known += (known.empty() ? "" : ", ") + s.name;
  throw ArgumentError("unknown scenario '" + name + "' (known: " + known + ")");
}

// ---------------------------------------------------------------------------------------------
// JSON emitters

inline json complex_json(cplx z) { return json::array({z.real(), z.imag()}); }

/// Rows of [re, im] pairs.
inline json matrix_json(const CMatrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(complex_json(m(i, k)));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline CMatrix matrix_from_json(const ConfigReader& r) {
  const std::size_t n = r.size();
  CMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = r.at(i);
    if (row.size() != n) row.fail("", "matrix must be square");
    for (std::size_t k = 0; k < n; ++k) {
      const auto e = row.at(k);
      if (e.size() != 2) e.fail("", "expected [re, im]");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = cplx(e.at(0).number(), e.at(1).number());
    }
  }
  return m;
}

inline json density_matrix_json(const DensityMatrix& rho) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["num_qubits"] = rho.num_qubits();
  j["layout"] = "row-major, entries [re, im], basis index = bitstring with site 1 most significant";
  j["matrix"] = matrix_json(rho.matrix());
  return j;
}

inline DensityMatrix density_matrix_from_json(const json& root) {
  const ConfigReader r(root);
  r.require_schema();
  return DensityMatrix(matrix_from_json(r.at("matrix")));
}

inline json expectation_table_json(const ExpectationTable& t) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["num_qubits"] = t.num_qubits;
  json v = json::object();
  for (const auto& [k, x] : t.values) v[k] = x;
  j["values"] = std::move(v);
  return j;
}

inline ExpectationTable expectation_table_from_json(const json& root) {
  const ConfigReader r(root);
  r.require_schema();
  ExpectationTable t;
  t.num_qubits = r.at("num_qubits").integer();
  const auto v = r.at("values");
  if (!v.value().is_object()) v.fail("", "expected an object");
  for (const auto& [k, _] : v.value().items()) t.values[k] = v.at(k).number();
  return t;
}

inline json fidelity_report_json(const FidelityReport& f) {
  return {{"fidelity", f.fidelity}, {"fidelity_opt", f.fidelity_opt}, {"phi_star", f.phi_star}};
}

inline json drives_json(const std::vector<PairDrive>& drives) {
  json a = json::array();
  for (std::size_t p = 0; p < drives.size(); ++p)
    a.push_back({{"pair", p + 1},
                 {"amplitude", drives[p].amplitude},
                 {"frequency_hz", drives[p].frequency / kTwoPi}});
  return a;
}

inline json calibration_result_json(const CalibrationResult& r) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = r.seed;
  j["evaluations"] = r.evaluations;
  j["budget_exhausted"] = r.budget_exhausted;
  j["initial_objective"] = r.initial_objective;
  j["best_objective"] = r.best_objective;
  j["drives"] = drives_json(r.drives);
  j["history"] = r.history;
  return j;
}

inline json parity_result_json(const ParityExperimentResult& r) {
  return {{"inner", r.inner},
          {"input", input_name(r.input)},
          {"excitations", r.excitations},
          {"parity", r.parity},
          {"phase", r.phase},
          {"deviation", r.deviation()}};
}

inline json chain_json(const ChainSpec& s) {
  auto hz = [](const std::vector<double>& v) {
    std::vector<double> o;
    for (double x : v) o.push_back(x / kTwoPi);
    return o;
  };
  return {{"schema_version", kSchemaVersion},
          {"length", s.length},
          {"transfer_time", s.transfer_time},
          {"profile", "explicit"},
          {"couplings_hz", hz(s.couplings)},
          {"detunings_hz", hz(s.detunings)},
          {"zz_hz", hz(s.zz)}};
}

inline json device_json(const DeviceSpec& d) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["levels"] = d.levels;
  json qs = json::array();
  for (const auto& q : d.qubits)
    qs.push_back({{"frequency_hz", q.frequency}, {"anharmonicity_hz", q.anharmonicity}, {"t1_s", q.t1}, {"t2_star_s", q.t2_star}});
  j["qubits"] = std::move(qs);
  json cs = json::array();
  for (const auto& c : d.couplers)
    cs.push_back({{"freq_min_hz", c.freq_min}, {"freq_max_hz", c.freq_max}, {"anharmonicity_hz", c.anharmonicity}, {"phi_dc", c.phi_dc}});
  j["couplers"] = std::move(cs);
  j["g_next_hz"] = d.g_next;
  j["g_prev_hz"] = d.g_prev;
  json g = json::array();
  for (const auto& x : d.g_qubit_qubit) g.push_back(x ? json(*x) : json(nullptr));
  j["g_qubit_qubit_hz"] = std::move(g);
  json m = json::array();
  for (Eigen::Index i = 0; i < d.crosstalk.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < d.crosstalk.cols(); ++k) row.push_back(d.crosstalk(i, k));
    m.push_back(std::move(row));
  }
  j["crosstalk"] = std::move(m);
  j["flux_offset"] = std::vector<double>(d.flux_offset.data(), d.flux_offset.data() + d.flux_offset.size());
  return j;
}

inline json scenario_json(const Scenario& s) {
  json j;
  j["name"] = s.name;
  if (s.transfer_time) j["transfer_time"] = *s.transfer_time;
  j["t1_s"] = s.t1;
  std::vector<double> zz;
  for (double z : s.zz) zz.push_back(z / kTwoPi);
  j["zz_hz"] = zz;
  if (s.all_excited_phase) j["all_excited_phase"] = *s.all_excited_phase;
  j["literal_pi_factor"] = s.literal_pi_factor;
  return j;
}

// ---------------------------------------------------------------------------------------------
// CSV

inline std::string csv_row(const std::vector<std::string>& cells) {
  std::string s;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) s.push_back(',');
    s += cells[i];
  }
  s.push_back('\n');
  return s;
}

/// time_s, pop_1..pop_N, norm
inline std::string trajectory_csv(const Trajectory& tr) {
  std::vector<std::string> head{"time_s"};
  for (int s = 0; s < tr.num_sites(); ++s) head.push_back("pop_" + std::to_string(s + 1));
  head.push_back("norm");
  std::string out = csv_row(head);
  for (std::size_t t = 0; t < tr.times.size(); ++t) {
    std::vector<std::string> row{format_double(tr.times[t])};
    for (int s = 0; s < tr.num_sites(); ++s) row.push_back(format_double(tr.population(t, s)));
    row.push_back(format_double(tr.norms[t]));
    out += csv_row(row);
  }
  return out;
}

/// evaluation, objective, running_min, then A_p and f_p (Hz) for every pair.
inline std::string convergence_csv(const CalibrationResult& r) {
  const std::size_t pairs = r.drives.size();
  std::vector<std::string> head{"evaluation", "objective", "running_min"};
  for (std::size_t p = 0; p < pairs; ++p) head.push_back("amplitude_" + std::to_string(p + 1));
  for (std::size_t p = 0; p < pairs; ++p) head.push_back("frequency_hz_" + std::to_string(p + 1));
  std::string out = csv_row(head);
  const auto best = r.running_minimum();
  for (std::size_t i = 0; i < r.history.size(); ++i) {
    std::vector<std::string> row{std::to_string(i + 1), format_double(r.history[i]), format_double(best[i])};
    const auto& x = r.parameters.at(i);
    for (std::size_t p = 0; p < pairs; ++p) row.push_back(format_double(x.at(p)));
    for (std::size_t p = 0; p < pairs; ++p) row.push_back(format_double(x.at(pairs + p) / kTwoPi));
    out += csv_row(row);
  }
  return out;
}

inline std::string parity_csv(const std::vector<ParityExperimentResult>& rows) {
  std::string out = csv_row({"inner", "input", "excitations", "parity", "phase", "deviation"});
  for (const auto& r : rows)
    out += csv_row({r.inner, input_name(r.input), std::to_string(r.excitations), std::to_string(r.parity),
                    format_double(r.phase), format_double(r.deviation())});
  return out;
}

/// Splits CSV text into rows of cells; no quoting.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  for (char c : text) {
    if (c == ',') {
      row.push_back(std::move(cell));
      cell.clear();
    } else if (c == '\n') {
      row.push_back(std::move(cell));
      cell.clear();
      rows.push_back(std::move(row));
      row.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  if (!cell.empty() || !row.empty()) {
    row.push_back(std::move(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------------------------
// SVG

struct PlotLabels {
  std::string title;
  std::string x_label;
  std::string y_label;
};

inline std::string xml_escape(std::string_view s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o.push_back(c);
    }
  }
  return o;
}

namespace detail {

inline std::string f2(double v) { return format_fixed(v, 2); }

/// Five-stop perceptual ramp, t in [0, 1].
inline std::string ramp_colour(double t) {
  static constexpr double stops[5][3] = {
      {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0) * 4.0;
  const int i = std::min(3, static_cast<int>(t));
  const double f = t - i;
  char buf[8];
  int c[3];
  for (int k = 0; k < 3; ++k) c[k] = static_cast<int>(std::lround(stops[i][k] + f * (stops[i + 1][k] - stops[i][k])));
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c[0], c[1], c[2]);
  return buf;
}

inline std::string header(double w, double h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + f2(w) + "\" height=\"" + f2(h) + "\" viewBox=\"0 0 " +
         f2(w) + " " + f2(h) + "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

inline std::string text(double x, double y, std::string_view s, std::string_view extra = "") {
  return "<text x=\"" + f2(x) + "\" y=\"" + f2(y) + "\"" + (extra.empty() ? "" : " " + std::string(extra)) + ">" +
         xml_escape(s) + "</text>\n";
}

inline std::string frame(double x0, double y0, double w, double h, const PlotLabels& l) {
  std::string s = "<rect x=\"" + f2(x0) + "\" y=\"" + f2(y0) + "\" width=\"" + f2(w) + "\" height=\"" + f2(h) +
                  "\" fill=\"none\" stroke=\"black\"/>\n";
  s += text(x0 + w / 2, y0 - 12, l.title, "text-anchor=\"middle\" font-size=\"14\"");
  s += text(x0 + w / 2, y0 + h + 34, l.x_label, "text-anchor=\"middle\"");
  s += text(x0 - 44, y0 + h / 2, l.y_label,
            "text-anchor=\"middle\" transform=\"rotate(-90 " + f2(x0 - 44) + " " + f2(y0 + h / 2) + ")\"");
  return s;
}

}  // namespace detail

/// values(row, col) drawn with rows along y (first row at the top) and columns along x.
/// `x_range` / `y_range` label the axis ends.
inline std::string heatmap_svg(const Eigen::MatrixXd& values, const PlotLabels& labels,
                               std::pair<double, double> x_range, std::pair<double, double> y_range,
                               std::optional<std::pair<double, double>> colour_range = std::nullopt) {
  const double x0 = 70, y0 = 40, w = 480, h = 300;
  const double lo = colour_range ? colour_range->first : (values.size() ? values.minCoeff() : 0.0);
  const double hi = colour_range ? colour_range->second : (values.size() ? values.maxCoeff() : 1.0);
  const double span = hi > lo ? hi - lo : 1.0;
  std::string s = detail::header(x0 + w + 90, y0 + h + 50);
  const double cw = w / std::max<Eigen::Index>(1, values.cols()), ch = h / std::max<Eigen::Index>(1, values.rows());
  for (Eigen::Index r = 0; r < values.rows(); ++r)
    for (Eigen::Index c = 0; c < values.cols(); ++c)
      s += "<rect x=\"" + detail::f2(x0 + c * cw) + "\" y=\"" + detail::f2(y0 + r * ch) + "\" width=\"" +
           detail::f2(cw + 0.01) + "\" height=\"" + detail::f2(ch + 0.01) + "\" fill=\"" +
           detail::ramp_colour((values(r, c) - lo) / span) + "\"/>\n";
  s += detail::frame(x0, y0, w, h, labels);
  s += detail::text(x0, y0 + h + 16, format_double(x_range.first), "text-anchor=\"start\"");
  s += detail::text(x0 + w, y0 + h + 16, format_double(x_range.second), "text-anchor=\"end\"");
  s += detail::text(x0 - 6, y0 + 10, format_double(y_range.first), "text-anchor=\"end\"");
  s += detail::text(x0 - 6, y0 + h, format_double(y_range.second), "text-anchor=\"end\"");
  for (int k = 0; k <= 20; ++k)
    s += "<rect x=\"" + detail::f2(x0 + w + 20) + "\" y=\"" + detail::f2(y0 + h - (k + 1) * h / 21) +
         "\" width=\"16\" height=\"" + detail::f2(h / 21 + 0.01) + "\" fill=\"" + detail::ramp_colour(k / 20.0) + "\"/>\n";
  s += detail::text(x0 + w + 40, y0 + 10, format_fixed(hi, 3));
  s += detail::text(x0 + w + 40, y0 + h, format_fixed(lo, 3));
  return s + "</svg>\n";
}

/// Vertical bars with signed values around a zero line.
inline std::string bar_chart_svg(const std::vector<std::string>& names, const std::vector<double>& values,
                                 const PlotLabels& labels) {
  if (names.size() != values.size()) throw ArgumentError("bar chart: names and values differ in length");
  const double x0 = 70, y0 = 40, w = std::max(480.0, 14.0 * static_cast<double>(values.size())), h = 300;
  double lo = 0.0, hi = 0.0;
  for (double v : values) lo = std::min(lo, v), hi = std::max(hi, v);
  if (hi == lo) hi = lo + 1.0;
  auto y = [&](double v) { return y0 + h * (hi - v) / (hi - lo); };
  std::string s = detail::header(x0 + w + 20, y0 + h + 90);
  const double bw = w / std::max<std::size_t>(1, values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double top = std::min(y(values[i]), y(0.0)), height = std::abs(y(values[i]) - y(0.0));
    s += "<rect x=\"" + detail::f2(x0 + i * bw + 0.1 * bw) + "\" y=\"" + detail::f2(top) + "\" width=\"" +
         detail::f2(0.8 * bw) + "\" height=\"" + detail::f2(height) + "\" fill=\"" + (values[i] >= 0 ? "#3b528b" : "#c0392b") + "\"/>\n";
    const double cx = x0 + (i + 0.5) * bw, cy = y0 + h + 12;
    s += detail::text(cx, cy, names[i],
                      "text-anchor=\"end\" font-size=\"9\" transform=\"rotate(-60 " + detail::f2(cx) + " " + detail::f2(cy) + ")\"");
  }
  s += "<line x1=\"" + detail::f2(x0) + "\" x2=\"" + detail::f2(x0 + w) + "\" y1=\"" + detail::f2(y(0.0)) + "\" y2=\"" +
       detail::f2(y(0.0)) + "\" stroke=\"black\"/>\n";
  PlotLabels l = labels;
  l.x_label.clear();
  s += detail::frame(x0, y0, w, h, l);
  s += detail::text(x0 - 6, y0 + 10, format_fixed(hi, 3), "text-anchor=\"end\"");
  s += detail::text(x0 - 6, y0 + h, format_fixed(lo, 3), "text-anchor=\"end\"");
  return s + "</svg>\n";
}

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  bool markers = false;  // points instead of a polyline
};

inline std::string line_plot_svg(const std::vector<Series>& series, const PlotLabels& labels, bool log_y = false) {
  static const char* palette[] = {"#3b528b", "#c0392b", "#21918c", "#e67e22", "#5ec962", "#7f3c8d"};
  const double x0 = 80, y0 = 40, w = 480, h = 300;
  double xl = std::numeric_limits<double>::infinity(), xh = -xl, yl = xl, yh = -xl;
  auto fy = [&](double v) { return log_y ? std::log10(std::max(v, 1e-300)) : v; };
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ArgumentError("line plot: x and y differ in length");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xl = std::min(xl, s.x[i]), xh = std::max(xh, s.x[i]);
      yl = std::min(yl, fy(s.y[i])), yh = std::max(yh, fy(s.y[i]));
    }
  }
  if (!(xh > xl)) xh = xl + 1.0;
  if (!(yh > yl)) yh = yl + 1.0;
  auto px = [&](double v) { return x0 + w * (v - xl) / (xh - xl); };
  auto py = [&](double v) { return y0 + h * (yh - fy(v)) / (yh - yl); };
  std::string out = detail::header(x0 + w + 150, y0 + h + 50);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* col = palette[k % 6];
    if (s.markers) {
      for (std::size_t i = 0; i < s.x.size(); ++i)
        out += "<circle cx=\"" + detail::f2(px(s.x[i])) + "\" cy=\"" + detail::f2(py(s.y[i])) + "\" r=\"3\" fill=\"" + col + "\"/>\n";
    } else {
      out += "<polyline fill=\"none\" stroke=\"" + std::string(col) + "\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        out += (i ? " " : "") + detail::f2(px(s.x[i])) + "," + detail::f2(py(s.y[i]));
      out += "\"/>\n";
    }
    out += "<rect x=\"" + detail::f2(x0 + w + 15) + "\" y=\"" + detail::f2(y0 + 18 * k) + "\" width=\"10\" height=\"10\" fill=\"" + col + "\"/>\n";
    out += detail::text(x0 + w + 30, y0 + 18 * k + 10, s.name);
  }
  out += detail::frame(x0, y0, w, h, labels);
  auto ylab = [&](double v) { return log_y ? "1e" + format_fixed(v, 1) : format_fixed(v, 3); };
  out += detail::text(x0, y0 + h + 16, format_double(xl), "text-anchor=\"start\"");
  out += detail::text(x0 + w, y0 + h + 16, format_double(xh), "text-anchor=\"end\"");
  out += detail::text(x0 - 6, y0 + 10, ylab(yh), "text-anchor=\"end\"");
  out += detail::text(x0 - 6, y0 + h, ylab(yl), "text-anchor=\"end\"");
  return out + "</svg>\n";
}

// ---------------------------------------------------------------------------------------------
// Files and run manifests

inline std::filesystem::path default_output_dir() {
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return ".";
}

inline void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("write failed for " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

struct RunManifest {
  std::string command;
  json config = json::object();
  std::uint64_t seed = 0;
  std::string tool_version = version();
  std::vector<std::string> outputs;
  double duration_s = 0.0;

  json to_json() const {
    return {{"schema_version", kSchemaVersion}, {"command", command}, {"config", config}, {"seed", seed},
            {"tool_version", tool_version},     {"outputs", outputs}, {"duration_s", duration_s}};
  }
};

/// Collects outputs for one command and writes the manifest last.
class RunRecorder {
 public:
  RunRecorder(std::string command, std::filesystem::path dir, std::string prefix)
      : dir_(std::move(dir)), prefix_(std::move(prefix)), start_(std::chrono::steady_clock::now()) {
    manifest_.command = std::move(command);
  }

  RunManifest& manifest() { return manifest_; }
  const std::filesystem::path& dir() const { return dir_; }

  std::filesystem::path write(const std::string& suffix, std::string_view content) {
    const auto path = dir_ / (prefix_ + suffix);
    write_text_file(path, content);
    manifest_.outputs.push_back(path.filename().string());
    return path;
  }

  std::filesystem::path finish() {
    manifest_.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const auto path = dir_ / (prefix_ + "manifest.json");
    write_text_file(path, dump(manifest_.to_json()));
    return path;
  }

 private:
  std::filesystem::path dir_;
  std::string prefix_;
  RunManifest manifest_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace pstsim::io
