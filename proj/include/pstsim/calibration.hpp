#pragma once

// Drive calibration against simulated experiments: chevron scans and fits, amplitude
// targeting, the multi-time transfer objective and a seeded derivative-free optimizer.
//
// Drive frequencies are angular (rad/s); amplitudes are in flux quanta.

#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pstsim/evolution.hpp"
#include "pstsim/models/chain.hpp"
#include "pstsim/models/device.hpp"
#include "pstsim/random.hpp"

namespace pstsim {

struct PairDrive {
  double amplitude = 0.0;
  double frequency = 0.0;
};

struct NeighbourDrive {
  int pair = 0;
  PairDrive drive;
};

/// A simulated experiment. Pair p couples qubits p and p+1 of the backend's chain.
class ExperimentBackend {
 public:
  virtual ~ExperimentBackend() = default;
  virtual std::string name() const = 0;
  virtual int num_qubits() const = 0;
  virtual double transfer_time() const = 0;
  /// |w_p - w_{p+1}| of the undriven qubits.
  virtual double bare_resonance(int pair) const = 0;
  /// Populations of qubits (p, p+1), rows = times, starting from qubit p excited.
  virtual Eigen::MatrixXd run_pair(int pair, const PairDrive& drive, const std::vector<double>& times,
                                   const std::vector<NeighbourDrive>& extra = {}) const = 0;
  /// All-qubit populations, rows = times, one drive per pair.
  virtual Eigen::MatrixXd run_chain(const std::vector<PairDrive>& drives, int initial_site,
                                    const std::vector<double>& times) const = 0;
};

namespace detail {

inline std::uint64_t hash_doubles(std::uint64_t h, const std::vector<double>& v) {
  for (double x : v) h = splitmix64(h ^ std::bit_cast<std::uint64_t>(x));
  return h;
}

/// Additive Gaussian readout noise, clipped to [0, 1]. The stream depends only on `key`.
inline void add_readout_noise(Eigen::MatrixXd& p, double sigma, std::uint64_t key) {
  if (sigma > 0.0) {
    Rng rng(key);
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      for (Eigen::Index j = 0; j < p.cols(); ++j) p(i, j) += sigma * rng.normal();
  }
  p = p.cwiseMax(0.0).cwiseMin(1.0);
}

}  // namespace detail

// ---------------------------------------------------------------------------------------------
// Effective backend

struct EffectiveBackendConfig {
  int num_qubits = 6;
  double transfer_time = 640e-9;
  std::vector<double> qubit_frequencies;       // Hz
  std::vector<double> coupling_per_amplitude;  // rad/s per flux quantum, J_p = c_p A_p
  double stark = kTwoPi * 1.0e6;               // rad/s per flux quantum^2
  double readout_noise = 0.0;
  std::uint64_t seed = 0;

  /// Table qubit frequencies, c_p = 2 pi 5.5 MHz times a fixed spread, 1 MHz Stark coefficient.
  static EffectiveBackendConfig defaults(int num_qubits = 6, double tau = 640e-9) {
    if (num_qubits < 2 || num_qubits > 6) throw ArgumentError("effective backend: 2..6 qubits");
    EffectiveBackendConfig c;
    c.num_qubits = num_qubits;
    c.transfer_time = tau;
    const auto dev = DeviceSpec::defaults();
    const double spread[] = {1.1, 0.9, 1.0, 1.2, 0.8};
    for (int q = 0; q < num_qubits; ++q) c.qubit_frequencies.push_back(dev.qubits[q].frequency);
    for (int p = 0; p + 1 < num_qubits; ++p) c.coupling_per_amplitude.push_back(kTwoPi * 5.5e6 * spread[p % 5]);
    return c;
  }

  void validate() const {
    if (num_qubits < 2) throw ArgumentError("effective backend: need >= 2 qubits");
    if (!(transfer_time > 0.0)) throw ArgumentError("effective backend: transfer time must be > 0");
    if (static_cast<int>(qubit_frequencies.size()) != num_qubits ||
        static_cast<int>(coupling_per_amplitude.size()) != num_qubits - 1)
      throw ArgumentError("effective backend: need N frequencies and N-1 coupling slopes");
    if (readout_noise < 0.0) throw ArgumentError("effective backend: readout noise must be >= 0");
  }
};

/// Exchange chain in the drives' rotating frame. A drive of amplitude A on pair p sets
/// J_p = c_p A and Stark-shifts qubit p by +s A^2 and qubit p+1 by -s A^2 / 2; a drive detuned
/// from the shifted difference frequency leaves a relative site detuning.
class EffectiveBackend : public ExperimentBackend {
 public:
  explicit EffectiveBackend(EffectiveBackendConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  std::string name() const override { return "effective"; }
  int num_qubits() const override { return cfg_.num_qubits; }
  double transfer_time() const override { return cfg_.transfer_time; }
  const EffectiveBackendConfig& config() const { return cfg_; }

  double bare_resonance(int pair) const override {
    check_pair(pair);
    return kTwoPi * std::abs(cfg_.qubit_frequencies[pair] - cfg_.qubit_frequencies[pair + 1]);
  }

  /// Qubit frequency shifts (rad/s) produced by a set of drives.
  std::vector<double> stark_shifts(const std::vector<NeighbourDrive>& drives) const {
    std::vector<double> s(cfg_.num_qubits, 0.0);
    for (const auto& d : drives) {
      check_pair(d.pair);
      const double a2 = d.drive.amplitude * d.drive.amplitude;
      s[d.pair] += cfg_.stark * a2;
      s[d.pair + 1] -= 0.5 * cfg_.stark * a2;
    }
    return s;
  }

  /// Shifted difference frequency of a pair under the given drives.
  double shifted_resonance(int pair, const std::vector<NeighbourDrive>& drives) const {
    const auto s = stark_shifts(drives);
    return std::abs(kTwoPi * cfg_.qubit_frequencies[pair] + s[pair] - kTwoPi * cfg_.qubit_frequencies[pair + 1] -
                    s[pair + 1]);
  }

  /// Amplitudes J_PST / c and frequencies on the Stark-shifted resonances.
  std::vector<PairDrive> ideal_drives() const {
    const auto j = pst_couplings(cfg_.num_qubits, cfg_.transfer_time);
    std::vector<NeighbourDrive> all;
    for (int p = 0; p + 1 < cfg_.num_qubits; ++p) all.push_back({p, {j[p] / cfg_.coupling_per_amplitude[p], 0.0}});
    std::vector<PairDrive> out;
    for (int p = 0; p + 1 < cfg_.num_qubits; ++p) out.push_back({all[p].drive.amplitude, shifted_resonance(p, all)});
    return out;
  }

  Eigen::MatrixXd run_pair(int pair, const PairDrive& drive, const std::vector<double>& times,
                           const std::vector<NeighbourDrive>& extra = {}) const override {
    check_pair(pair);
    std::vector<NeighbourDrive> all = extra;
    all.push_back({pair, drive});
    ChainSpec s = two_site(cfg_.coupling_per_amplitude[pair] * drive.amplitude,
                           shifted_resonance(pair, all) - drive.frequency);
    Eigen::MatrixXd p = populations(s, 0, times);
    std::vector<double> key = {static_cast<double>(pair), drive.amplitude, drive.frequency};
    for (const auto& e : extra) key.insert(key.end(), {static_cast<double>(e.pair), e.drive.amplitude, e.drive.frequency});
    key.insert(key.end(), times.begin(), times.end());
    detail::add_readout_noise(p, cfg_.readout_noise, detail::hash_doubles(derive_seed(cfg_.seed, {1}), key));
    return p;
  }

  Eigen::MatrixXd run_chain(const std::vector<PairDrive>& drives, int initial_site,
                            const std::vector<double>& times) const override {
    const int n = cfg_.num_qubits;
    if (static_cast<int>(drives.size()) != n - 1) throw ArgumentError("run_chain: need one drive per pair");
    if (initial_site < 0 || initial_site >= n) throw ArgumentError("run_chain: initial site outside chain");
    std::vector<NeighbourDrive> all;
    for (int p = 0; p + 1 < n; ++p) all.push_back({p, drives[p]});
    ChainSpec s;
    s.length = n;
    s.transfer_time = cfg_.transfer_time;
    s.zz.assign(n, 0.0);
    s.detunings.assign(n, 0.0);
    for (int p = 0; p + 1 < n; ++p) {
      s.couplings.push_back(cfg_.coupling_per_amplitude[p] * drives[p].amplitude);
      s.detunings[p + 1] = s.detunings[p] + shifted_resonance(p, all) - drives[p].frequency;
    }
    Eigen::MatrixXd pop = populations(s, initial_site, times);
    std::vector<double> key = {static_cast<double>(initial_site)};
    for (const auto& d : drives) key.insert(key.end(), {d.amplitude, d.frequency});
    key.insert(key.end(), times.begin(), times.end());
    detail::add_readout_noise(pop, cfg_.readout_noise, detail::hash_doubles(derive_seed(cfg_.seed, {2}), key));
    return pop;
  }

 private:
  void check_pair(int pair) const {
    if (pair < 0 || pair + 1 >= cfg_.num_qubits) throw ArgumentError("backend: pair index out of range");
  }

  ChainSpec two_site(double j, double detuning) const {
    ChainSpec s;
    s.length = 2;
    s.transfer_time = cfg_.transfer_time;
    s.couplings = {j};
    s.detunings = {0.0, detuning};
    s.zz = {0.0, 0.0};
    return s;
  }

  static Eigen::MatrixXd populations(const ChainSpec& s, int initial_site, const std::vector<double>& times) {
    const Basis b = Basis::sector(s.length, 1);
    const auto h = build_chain_hamiltonian(s, b);
    const StateVector psi0 = StateVector::basis_state(b, static_cast<std::size_t>(initial_site));
    Eigen::MatrixXd p(static_cast<Eigen::Index>(times.size()), s.length);
    // Each sample from t = 0 so unequal spacing never reuses a stale propagator.
    for (std::size_t i = 0; i < times.size(); ++i) {
      const CVector v = propagator(h, times[i]) * psi0.amplitudes;
      for (int k = 0; k < s.length; ++k) p(static_cast<Eigen::Index>(i), k) = std::norm(v(k));
    }
    return p;
  }

  EffectiveBackendConfig cfg_;
};

// ---------------------------------------------------------------------------------------------
// Device backend

struct DeviceBackendConfig {
  DeviceSpec spec = DeviceSpec::defaults();
  int first_qubit = 0;
  int num_qubits = 2;  // at most 3
  double transfer_time = 640e-9;
  int levels = 3;
  double readout_noise = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    spec.validate();
    if (num_qubits < 2 || num_qubits > 3) throw ArgumentError("device backend: 2 or 3 qubits");
    if (first_qubit < 0 || first_qubit >= spec.num_qubits()) throw ArgumentError("device backend: bad first qubit");
    if (!(transfer_time > 0.0)) throw ArgumentError("device backend: transfer time must be > 0");
    if (readout_noise < 0.0) throw ArgumentError("device backend: readout noise must be >= 0");
  }
};

/// Lab-frame transmon + coupler model driven by first-harmonic flux modulation. Single-drive
/// runs use the drive period's propagator; multi-drive chain runs integrate directly.
class DeviceBackend : public ExperimentBackend {
 public:
  explicit DeviceBackend(DeviceBackendConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  std::string name() const override { return "device"; }
  int num_qubits() const override { return cfg_.num_qubits; }
  double transfer_time() const override { return cfg_.transfer_time; }
  const DeviceBackendConfig& config() const { return cfg_; }

  int device_qubit(int k) const { return (cfg_.first_qubit + k) % cfg_.spec.num_qubits(); }

  double bare_resonance(int pair) const override {
    check_pair(pair);
    return kTwoPi * std::abs(cfg_.spec.qubits[device_qubit(pair)].frequency -
                             cfg_.spec.qubits[device_qubit(pair + 1)].frequency);
  }

  /// Difference of the undriven dressed single-excitation levels of the pair.
  double dressed_resonance(int pair) const {
    check_pair(pair);
    const DeviceHamiltonian h(cfg_.spec, DeviceSubset::chain(cfg_.spec, device_qubit(pair), 2), {}, options());
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h.static_part().dense());
    Eigen::Index a = 0, b = 0;
    es.eigenvectors().row(static_cast<Eigen::Index>(h.single_qubit_excitation(0))).cwiseAbs().maxCoeff(&a);
    es.eigenvectors().row(static_cast<Eigen::Index>(h.single_qubit_excitation(1))).cwiseAbs().maxCoeff(&b);
    return std::abs(es.eigenvalues()(a) - es.eigenvalues()(b));
  }

  Eigen::MatrixXd run_pair(int pair, const PairDrive& drive, const std::vector<double>& times,
                           const std::vector<NeighbourDrive>& extra = {}) const override {
    check_pair(pair);
    if (!extra.empty()) throw ArgumentError("device backend: neighbour drives need a larger subset than supported");
    if (!(drive.frequency > 0.0)) throw ArgumentError("device backend: drive frequency must be > 0");
    const int q = device_qubit(pair);
    const DeviceHamiltonian h(cfg_.spec, DeviceSubset::chain(cfg_.spec, q, 2),
                              {DriveConfig{q, drive.amplitude, drive.frequency, 1, 0.0}}, options());
    const auto td = TimeDependentHamiltonian::from_device(h);
    const auto psi0 = StateVector::basis_state(h.basis(), h.single_qubit_excitation(0));
    const auto tr = evolve_periodic(td, kTwoPi / drive.frequency, psi0, times);
    Eigen::MatrixXd p = qubit_populations(h, tr, 2);
    std::vector<double> key = {static_cast<double>(pair), drive.amplitude, drive.frequency};
    key.insert(key.end(), times.begin(), times.end());
    detail::add_readout_noise(p, cfg_.readout_noise, detail::hash_doubles(derive_seed(cfg_.seed, {3}), key));
    return p;
  }

  Eigen::MatrixXd run_chain(const std::vector<PairDrive>& drives, int initial_site,
                            const std::vector<double>& times) const override {
    const int n = cfg_.num_qubits;
    if (static_cast<int>(drives.size()) != n - 1) throw ArgumentError("run_chain: need one drive per pair");
    if (initial_site < 0 || initial_site >= n) throw ArgumentError("run_chain: initial site outside chain");
    std::vector<DriveConfig> dc;
    for (int p = 0; p + 1 < n; ++p) dc.push_back({device_qubit(p), drives[p].amplitude, drives[p].frequency, 1, 0.0});
    const DeviceHamiltonian h(cfg_.spec, DeviceSubset::chain(cfg_.spec, cfg_.first_qubit, n), dc, options());
    const auto td = TimeDependentHamiltonian::from_device(h);
    const auto psi0 = StateVector::basis_state(h.basis(), h.single_qubit_excitation(initial_site));
    EvolutionOptions o;
    o.method = EvolutionMethod::rk4;
    const auto tr = evolve(td, psi0, times, o);
    Eigen::MatrixXd p = qubit_populations(h, tr, n);
    std::vector<double> key = {static_cast<double>(initial_site)};
    for (const auto& d : drives) key.insert(key.end(), {d.amplitude, d.frequency});
    key.insert(key.end(), times.begin(), times.end());
    detail::add_readout_noise(p, cfg_.readout_noise, detail::hash_doubles(derive_seed(cfg_.seed, {4}), key));
    return p;
  }

 private:
  void check_pair(int pair) const {
    if (pair < 0 || pair + 1 >= cfg_.num_qubits) throw ArgumentError("backend: pair index out of range");
  }

  DeviceModelOptions options() const {
    DeviceModelOptions o;
    o.levels = cfg_.levels;
    return o;
  }

  static Eigen::MatrixXd qubit_populations(const DeviceHamiltonian& h, const Trajectory& tr, int n) {
    const Basis& b = h.basis();
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(tr.states.size()), n);
    for (std::size_t t = 0; t < tr.states.size(); ++t)
      for (std::size_t i = 0; i < b.dimension(); ++i) {
        const double w = std::norm(tr.states[t].amplitudes(static_cast<Eigen::Index>(i)));
        if (w == 0.0) continue;
        const auto l = b.label(i);
        for (int k = 0; k < n; ++k) p(static_cast<Eigen::Index>(t), k) += w * l.occupations[2 * k];
      }
    return p;
  }

  DeviceBackendConfig cfg_;
};

// ---------------------------------------------------------------------------------------------
// Chevrons

struct ChevronOptions {
  bool drive_neighbours = false;
  double neighbour_amplitude = 0.2;
  double neighbour_detuning = kTwoPi * 5e6;  // off-resonant offset from the neighbour's bare resonance
};

struct ChevronDataset {
  int pair = 0;
  std::vector<double> amplitudes;
  std::vector<double> frequencies;  // rad/s
  std::vector<double> times;
  std::vector<Eigen::MatrixXd> populations;  // per amplitude: frequency x time, qubit p+1
};

inline ChevronDataset chevron_scan(const ExperimentBackend& backend, int pair, const std::vector<double>& amplitudes,
                                   const std::vector<double>& frequencies, const std::vector<double>& times,
                                   const ChevronOptions& opt = {}) {
  if (amplitudes.empty() || frequencies.empty() || times.empty()) throw ArgumentError("chevron_scan: empty grid");
  std::vector<NeighbourDrive> extra;
  if (opt.drive_neighbours)
    for (int nb : {pair - 1, pair + 1})
      if (nb >= 0 && nb + 1 < backend.num_qubits())
        extra.push_back({nb, {opt.neighbour_amplitude, backend.bare_resonance(nb) + opt.neighbour_detuning}});
  ChevronDataset d{pair, amplitudes, frequencies, times, {}};
  for (double a : amplitudes) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(frequencies.size()), static_cast<Eigen::Index>(times.size()));
    for (std::size_t f = 0; f < frequencies.size(); ++f)
      m.row(static_cast<Eigen::Index>(f)) = backend.run_pair(pair, {a, frequencies[f]}, times, extra).col(1).transpose();
    d.populations.push_back(std::move(m));
  }
  return d;
}

/// J^2 / (J^2 + d^2/4) sin^2(sqrt(J^2 + d^2/4) t).
inline double rabi_transfer_probability(double j, double detuning, double t) {
  const double w2 = j * j + 0.25 * detuning * detuning;
  if (w2 == 0.0) return 0.0;
  const double s = std::sin(std::sqrt(w2) * t);
  return j * j / w2 * s * s;
}

struct ChevronFit {
  double amplitude = 0.0;
  double coupling = 0.0;    // J, rad/s
  double resonance = 0.0;   // rad/s
  double rms_residual = 0.0;
};

inline constexpr double kChevronResidualLimit = 0.1;

namespace detail {

struct ChevronFunctor {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  const Eigen::MatrixXd* data;
  const std::vector<double>* freqs;
  const std::vector<double>* times;
  double j0, w0;

  ChevronFunctor(const Eigen::MatrixXd& d, const std::vector<double>& f, const std::vector<double>& t, double j,
                 double w)
      : data(&d), freqs(&f), times(&t), j0(j), w0(w) {}

  int inputs() const { return 2; }
  int values() const { return static_cast<int>(data->size()); }

  // x = (J / j0, (w - w0) / j0)
  int operator()(const InputType& x, ValueType& r) const {
    const double j = x(0) * j0, w = w0 + x(1) * j0;
    Eigen::Index k = 0;
    for (std::size_t a = 0; a < freqs->size(); ++a)
      for (std::size_t b = 0; b < times->size(); ++b)
        r(k++) = rabi_transfer_probability(j, (*freqs)[a] - w, (*times)[b]) -
                 (*data)(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    return 0;
  }
};

}  // namespace detail

/// Least-squares generalized-Rabi fit of one amplitude slice.
inline ChevronFit fit_chevron(const ChevronDataset& d, std::size_t amplitude_index = 0) {
  if (amplitude_index >= d.populations.size()) throw ArgumentError("fit_chevron: amplitude index out of range");
  const Eigen::MatrixXd& m = d.populations[amplitude_index];
  const double tmax = *std::max_element(d.times.begin(), d.times.end());
  if (!(tmax > 0.0)) throw ArgumentError("fit_chevron: times must reach beyond 0");

  // Start on the row with the largest swing, then a 1-D scan for J at zero detuning.
  Eigen::Index row = 0;
  m.rowwise().maxCoeff().maxCoeff(&row);
  const double w_start = d.frequencies[static_cast<std::size_t>(row)];
  double best_j = 0.0, best_cost = std::numeric_limits<double>::infinity();
  const double j_lo = 0.25 * kPi / tmax;
  double min_dt = tmax;
  std::vector<double> ts = d.times;
  std::sort(ts.begin(), ts.end());
  for (std::size_t i = 1; i < ts.size(); ++i)
    if (ts[i] > ts[i - 1]) min_dt = std::min(min_dt, ts[i] - ts[i - 1]);
  const double j_hi = std::max(2.0 * j_lo, 0.5 * kPi / min_dt);
  for (int k = 0; k <= 2000; ++k) {
    const double j = j_lo * std::pow(j_hi / j_lo, k / 2000.0);
    double c = 0.0;
    for (std::size_t b = 0; b < d.times.size(); ++b)
      c += std::pow(rabi_transfer_probability(j, 0.0, d.times[b]) - m(row, static_cast<Eigen::Index>(b)), 2);
    if (c < best_cost) {
      best_cost = c;
      best_j = j;
    }
  }

  detail::ChevronFunctor f(m, d.frequencies, d.times, best_j, w_start);
  Eigen::NumericalDiff<detail::ChevronFunctor> nd(f);
  Eigen::LevenbergMarquardt<Eigen::NumericalDiff<detail::ChevronFunctor>> lm(nd);
  Eigen::VectorXd x(2);
  x << 1.0, 0.0;
  lm.minimize(x);

  ChevronFit r;
  r.amplitude = d.amplitudes[amplitude_index];
  r.coupling = std::abs(x(0) * best_j);
  r.resonance = w_start + x(1) * best_j;
  Eigen::VectorXd res(m.size());
  f(x, res);
  r.rms_residual = std::sqrt(res.squaredNorm() / static_cast<double>(res.size()));
  if (!std::isfinite(r.coupling) || r.rms_residual > kChevronResidualLimit)
    throw FitError("fit_chevron: rms residual " + std::to_string(r.rms_residual) + " above limit, J = " +
                   std::to_string(r.coupling) + " rad/s, resonance = " + std::to_string(r.resonance) + " rad/s");
  if (r.coupling * tmax < 0.5 * kPi)
    throw FitError("fit_chevron: data span less than half a Rabi period (J t_max = " +
                   std::to_string(r.coupling * tmax) + ")");
  return r;
}

/// (A, J) samples from every amplitude slice that fits.
inline std::vector<std::pair<double, double>> coupling_curve(const ChevronDataset& d) {
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < d.amplitudes.size(); ++i) {
    try {
      const auto f = fit_chevron(d, i);
      out.emplace_back(f.amplitude, f.coupling);
    } catch (const FitError&) {
    }
  }
  return out;
}

/// Inverts a sampled J(A) by monotone cubic (Fritsch-Carlson) interpolation.
inline double amplitude_for_target(double j_target, std::vector<std::pair<double, double>> samples) {
  if (samples.size() < 2) throw ArgumentError("amplitude_for_target: need >= 2 samples");
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  std::vector<double> a(n), j(n);
  for (std::size_t i = 0; i < n; ++i) std::tie(a[i], j[i]) = samples[i];
  for (std::size_t i = 1; i < n; ++i)
    if (!(a[i] > a[i - 1]) || !(j[i] > j[i - 1]))
      throw ArgumentError("amplitude_for_target: J(A) samples must be strictly increasing");
  if (j_target < j.front() || j_target > j.back())
    throw RangeError("amplitude_for_target: target coupling outside the achievable range");

  std::vector<double> slope(n - 1), m(n);
  for (std::size_t i = 0; i + 1 < n; ++i) slope[i] = (j[i + 1] - j[i]) / (a[i + 1] - a[i]);
  m[0] = slope[0];
  m[n - 1] = slope[n - 2];
  for (std::size_t i = 1; i + 1 < n; ++i) m[i] = 0.5 * (slope[i - 1] + slope[i]);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double al = m[i] / slope[i], be = m[i + 1] / slope[i];
    const double r = al * al + be * be;
    if (r > 9.0) {
      const double t = 3.0 / std::sqrt(r);
      m[i] = t * al * slope[i];
      m[i + 1] = t * be * slope[i];
    }
  }
  std::size_t k = 0;
  while (k + 2 < n && j_target > j[k + 1]) ++k;
  const double h = a[k + 1] - a[k];
  auto eval = [&](double u) {
    const double u2 = u * u, u3 = u2 * u;
    return (2 * u3 - 3 * u2 + 1) * j[k] + (u3 - 2 * u2 + u) * h * m[k] + (-2 * u3 + 3 * u2) * j[k + 1] +
           (u3 - u2) * h * m[k + 1];
  };
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    (eval(mid) < j_target ? lo : hi) = mid;
  }
  return a[k] + 0.5 * (lo + hi) * h;
}

// ---------------------------------------------------------------------------------------------
// Objective and optimizer

inline std::vector<double> objective_times(double tau) { return {tau, 2 * tau, 3 * tau, 4 * tau, 5 * tau}; }

/// Mean |P - P_ideal| over qubits, initial sites and the samples tau..5 tau.
inline double transfer_error_objective(const ExperimentBackend& backend, const std::vector<PairDrive>& drives,
                                       const std::vector<int>& initial_sites = {0}) {
  if (initial_sites.empty()) throw ArgumentError("objective: need at least one initial site");
  const int n = backend.num_qubits();
  const double tau = backend.transfer_time();
  const auto times = objective_times(tau);
  const ChainSpec ideal = pst_chain(n, tau);
  double total = 0.0;
  for (int s : initial_sites) {
    const Trajectory ref = evolve(build_chain_hamiltonian(ideal, Basis::sector(n, 1)),
                                  StateVector::basis_state(Basis::sector(n, 1), static_cast<std::size_t>(s)), times);
    const Eigen::MatrixXd got = backend.run_chain(drives, s, times);
    total += (got - ref.populations).cwiseAbs().sum();
  }
  return total / static_cast<double>(initial_sites.size() * times.size() * static_cast<std::size_t>(n));
}

struct OptimizerConfig {
  int budget = 500;
  std::uint64_t seed = 0;
  double amplitude_scale = 0.2;              // proposal unit, fraction of the guess amplitude
  double frequency_scale = kTwoPi * 200e3;   // proposal unit, rad/s
  double initial_sigma = 0.5;
  double grow = 1.3;
  double shrink = 0.93;
  double sigma_min = 1e-4;
  double sigma_max = 2.0;
  double amplitude_box = 0.5;                // relative half-width of the search box
  double frequency_box = kTwoPi * 2e6;       // rad/s half-width
  double stop_objective = 1e-9;
  int restart_window = 80;                   // evaluations per progress check; 0 disables restarts
  double restart_gain = 0.1;                 // relative improvement a window must make
  std::vector<int> initial_sites = {0};

  void validate() const {
    if (budget < 1) throw ArgumentError("optimizer: budget must be >= 1");
    if (!(amplitude_scale > 0.0) || !(frequency_scale > 0.0)) throw ArgumentError("optimizer: scales must be > 0");
    if (!(grow > 1.0) || !(shrink > 0.0 && shrink < 1.0)) throw ArgumentError("optimizer: need grow > 1, 0 < shrink < 1");
    if (!(sigma_min > 0.0) || !(sigma_max >= sigma_min)) throw ArgumentError("optimizer: bad sigma clip");
  }
};

/// Propose-evaluate-update contract. `propose` returns a point in scaled units relative to
/// the current point; `update` reports whether it improved.
class SearchStrategy {
 public:
  virtual ~SearchStrategy() = default;
  virtual Eigen::VectorXd propose(Rng& rng) = 0;
  virtual void update(const Eigen::VectorXd& step, bool improved) = 0;
  /// Called when the search restarts from the initial guess.
  virtual void reset() {}
};

/// Half the proposals move one coordinate, half move all at half width. Per-coordinate widths
/// grow on success and shrink on failure.
class GaussianCoordinateSearch : public SearchStrategy {
 public:
  GaussianCoordinateSearch(int dim, const OptimizerConfig& cfg) : sigma_(Eigen::VectorXd::Constant(dim, cfg.initial_sigma)), cfg_(cfg) {}

  Eigen::VectorXd propose(Rng& rng) override {
    const auto d = sigma_.size();
    Eigen::VectorXd step = Eigen::VectorXd::Zero(d);
    if (rng.uniform() < 0.5) {
      const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(d)));
      step(i) = rng.normal() * sigma_(i);
    } else {
      for (Eigen::Index i = 0; i < d; ++i) step(i) = rng.normal() * sigma_(i) * 0.5;
    }
    return step;
  }

  void update(const Eigen::VectorXd& step, bool improved) override {
    for (Eigen::Index i = 0; i < step.size(); ++i)
      if (step(i) != 0.0) sigma_(i) = std::clamp(sigma_(i) * (improved ? cfg_.grow : cfg_.shrink), cfg_.sigma_min, cfg_.sigma_max);
  }

  void reset() override { sigma_.setConstant(cfg_.initial_sigma); }

 private:
  Eigen::VectorXd sigma_;
  OptimizerConfig cfg_;
};

struct CalibrationResult {
  std::vector<PairDrive> drives;
  std::vector<double> history;                 // objective per evaluation
  std::vector<std::vector<double>> parameters; // evaluated point per evaluation (A..., w...)
  double initial_objective = 0.0;
  double best_objective = 0.0;
  int evaluations = 0;
  std::uint64_t seed = 0;
  bool budget_exhausted = false;

  std::vector<double> running_minimum() const {
    std::vector<double> r;
    double m = std::numeric_limits<double>::infinity();
    for (double h : history) r.push_back(m = std::min(m, h));
    return r;
  }
};

inline CalibrationResult optimize_simultaneous_drives(const ExperimentBackend& backend,
                                                      const std::vector<PairDrive>& initial_guess,
                                                      const OptimizerConfig& cfg = {},
                                                      SearchStrategy* strategy = nullptr) {
  cfg.validate();
  const auto m = static_cast<Eigen::Index>(initial_guess.size());
  if (m != backend.num_qubits() - 1) throw ArgumentError("optimizer: need one drive per pair");
  Eigen::VectorXd x0(2 * m), scale(2 * m), lo(2 * m), hi(2 * m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& g = initial_guess[static_cast<std::size_t>(i)];
    x0(i) = g.amplitude;
    x0(m + i) = g.frequency;
    scale(i) = std::max(cfg.amplitude_scale * g.amplitude, 1e-4);
    scale(m + i) = cfg.frequency_scale;
    lo(i) = std::max(0.0, g.amplitude * (1.0 - cfg.amplitude_box));
    hi(i) = std::min(0.499, g.amplitude * (1.0 + cfg.amplitude_box) + 1e-3);
    lo(m + i) = g.frequency - cfg.frequency_box;
    hi(m + i) = g.frequency + cfg.frequency_box;
  }
  auto drives_of = [&](const Eigen::VectorXd& x) {
    std::vector<PairDrive> d(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) d[static_cast<std::size_t>(i)] = {x(i), x(m + i)};
    return d;
  };

  CalibrationResult r;
  r.seed = cfg.seed;
  auto evaluate = [&](const Eigen::VectorXd& x) {
    const double f = transfer_error_objective(backend, drives_of(x), cfg.initial_sites);
    r.history.push_back(f);
    r.parameters.emplace_back(x.data(), x.data() + x.size());
    ++r.evaluations;
    return f;
  };

  GaussianCoordinateSearch fallback(static_cast<int>(2 * m), cfg);
  SearchStrategy& s = strategy ? *strategy : fallback;
  Rng rng(derive_seed(cfg.seed, {0x6f7074}));
  Eigen::VectorXd best = x0;
  double fbest = evaluate(best);
  r.initial_objective = fbest;
  // The walk starts at the guess; a window without enough progress sends it back there with
  // fresh widths. The best point ever evaluated is kept throughout.
  Eigen::VectorXd cur = best;
  double fcur = fbest;
  int window_start = r.evaluations;
  double window_ref = fcur;
  while (r.evaluations < cfg.budget && fbest > cfg.stop_objective) {
    const Eigen::VectorXd step = s.propose(rng);
    const Eigen::VectorXd y = (cur + step.cwiseProduct(scale)).cwiseMax(lo).cwiseMin(hi);
    const double fy = evaluate(y);
    const bool improved = fy < fcur;
    if (improved) {
      cur = y;
      fcur = fy;
    }
    if (fy < fbest) {
      best = y;
      fbest = fy;
    }
    s.update(step, improved);
    if (cfg.restart_window > 0 && r.evaluations - window_start >= cfg.restart_window) {
      if (fcur > (1.0 - cfg.restart_gain) * window_ref) {
        cur = x0;
        fcur = r.initial_objective;
        s.reset();
      }
      window_start = r.evaluations;
      window_ref = fcur;
    }
  }
  r.budget_exhausted = fbest > cfg.stop_objective;
  r.best_objective = fbest;
  r.drives = drives_of(best);
  return r;
}

/// Ideal drives with amplitudes scaled by U(-20%, +20%) and frequencies shifted by
/// U(-1, 1) x 2 pi 200 kHz.
inline std::vector<PairDrive> perturbed_drives(const std::vector<PairDrive>& ideal, std::uint64_t seed,
                                               double amplitude_fraction = 0.2, double frequency_shift = kTwoPi * 200e3) {
  Rng rng(derive_seed(seed, {0x70657274}));
  std::vector<PairDrive> out = ideal;
  for (auto& d : out) d.amplitude *= 1.0 + rng.uniform(-amplitude_fraction, amplitude_fraction);
  for (auto& d : out) d.frequency += rng.uniform(-1.0, 1.0) * frequency_shift;
  return out;
}

}  // namespace pstsim
