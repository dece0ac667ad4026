#pragma once

// Transfer runs, the parity-phase and double-FST experiments, the GHZ circuit and
// graph-state bookkeeping, lattice transfers. Sites are 0-based.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pstsim/evolution.hpp"
#include "pstsim/models/chain.hpp"
#include "pstsim/models/lattice.hpp"
#include "pstsim/tomography.hpp"

namespace pstsim {

namespace detail {

inline EvolutionOptions auto_options(std::size_t dim) {
  EvolutionOptions o;
  o.method = dim <= kDenseGuard ? EvolutionMethod::dense_expm : EvolutionMethod::krylov;
  return o;
}

/// Chain Hamiltonian with the noise switches applied: ZZ terms only when noise.zz is set,
/// relaxation when rates are given.
inline SparseOperator noisy_chain_hamiltonian(ChainSpec spec, const NoiseSpec& noise, const Basis& basis) {
  if (!noise.zz) spec.zz.assign(spec.length, 0.0);
  SparseOperator h = build_chain_hamiltonian(spec, basis);
  if (!noise.relaxation_rates.empty()) h = add_relaxation(h, noise);
  return h;
}

}  // namespace detail

inline Trajectory run_pst(const ChainSpec& spec, const StateVector& initial, const std::vector<double>& times,
                          const NoiseSpec& noise = {}) {
  if (!initial.basis.is_qubit() || initial.basis.num_sites() != spec.length)
    throw ArgumentError("run_pst: initial state must live on the chain's qubits");
  const auto h = detail::noisy_chain_hamiltonian(spec, noise, initial.basis);
  return evolve(h, initial, times, detail::auto_options(h.dimension()));
}

/// Computational initial state, evolved inside its excitation sector.
inline Trajectory run_pst(const ChainSpec& spec, const BasisLabel& initial, const std::vector<double>& times,
                          const NoiseSpec& noise = {}) {
  if (static_cast<int>(initial.occupations.size()) != spec.length)
    throw ArgumentError("run_pst: initial label length differs from the chain length");
  const Basis b = Basis::sector(spec.length, initial.total());
  return run_pst(spec, StateVector::from_label(b, initial), times, noise);
}

/// Same machinery; the FST character lives in the spec's couplings and detunings.
template <class Initial>
Trajectory run_fst(const ChainSpec& spec, const Initial& initial, const std::vector<double>& times,
                   const NoiseSpec& noise = {}) {
  return run_pst(spec, initial, times, noise);
}

inline BasisLabel single_excitation(int num_sites, int site) {
  if (site < 0 || site >= num_sites) throw ArgumentError("site outside chain");
  BasisLabel l;
  l.occupations.assign(num_sites, 0);
  l.occupations[site] = 1;
  return l;
}

// ---------------------------------------------------------------------------------------------
// Gates

enum class GateKind { hadamard, x90, y90, z_phase, x_pi, pst, fst };

struct GateOp {
  GateKind kind = GateKind::hadamard;
  std::vector<int> targets;  // single-qubit gates; PST and FST act on the whole chain
  double parameter = 0.0;    // phi for z_phase, theta for fst

  static GateOp single(GateKind k, int site, double p = 0.0) { return {k, {site}, p}; }
  static GateOp pst() { return {GateKind::pst, {}, 0.0}; }
  static GateOp fst(double theta) { return {GateKind::fst, {}, theta}; }

  std::string name() const {
    switch (kind) {
      case GateKind::hadamard: return "H";
      case GateKind::x90: return "X90";
      case GateKind::y90: return "Y90";
      case GateKind::z_phase: return "Z";
      case GateKind::x_pi: return "Xpi";
      case GateKind::pst: return "PST";
      case GateKind::fst: return "FST";
    }
    return "?";
  }
};

/// How the collective gates are realised. Without ZZ or relaxation the PST gate is the ideal
/// P-iSWAP product; otherwise the chain is evolved for tau and the known local Z frame removed.
struct CircuitContext {
  double transfer_time = 1.0;
  std::vector<double> zz;  // per-pair ZZ (length N), empty = none
  NoiseSpec noise;

  bool ideal() const {
    return noise.relaxation_rates.empty() && std::all_of(zz.begin(), zz.end(), [](double z) { return z == 0.0; });
  }
};

inline CMatrix single_qubit_matrix(GateKind k, double parameter = 0.0) {
  const double h = 1.0 / std::sqrt(2.0);
  CMatrix m(2, 2);
  switch (k) {
    case GateKind::hadamard: m << h, h, h, -h; break;
    case GateKind::x90: m << h, cplx(0, -h), cplx(0, -h), h; break;
    case GateKind::y90: m << h, -h, h, h; break;
    case GateKind::z_phase: m << 1, 0, 0, std::exp(cplx(0, parameter)); break;
    case GateKind::x_pi: m << 0, cplx(0, -1), cplx(0, -1), 0; break;
    default: throw ArgumentError("not a single-qubit gate");
  }
  return m;
}

namespace detail {

inline void apply_single(CVector& v, int num_sites, int site, const CMatrix& u) {
  const auto bit = static_cast<Eigen::Index>(SiteMask{1} << (num_sites - 1 - site));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i & bit) continue;
    const cplx a = v(i), b = v(i | bit);
    v(i) = u(0, 0) * a + u(0, 1) * b;
    v(i | bit) = u(1, 0) * a + u(1, 1) * b;
  }
}

inline void apply_site_phases(CVector& v, int num_sites, const std::vector<cplx>& g) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    for (int s = 0; s < num_sites; ++s)
      if (static_cast<SiteMask>(i) & (SiteMask{1} << (num_sites - 1 - s))) v(i) *= g[s];
}

}  // namespace detail

inline StateVector apply_gate(const StateVector& state, const GateOp& gate, const CircuitContext& ctx = {}) {
  if (!state.basis.is_qubit()) throw ArgumentError("apply_gate: qubit state required");
  const StateVector full = state.basis.is_sector() ? embed_sector_state(state) : state;
  const int n = full.basis.num_sites();
  CVector v = full.amplitudes;
  switch (gate.kind) {
    case GateKind::pst: {
      if (ctx.ideal()) {
        const PstPhases ph = pst_phases_gate_frame(n);
        CVector out = CVector::Zero(v.size());
        for (Eigen::Index i = 0; i < v.size(); ++i) {
          const auto [m, phase] = piswap_product_action(ph, static_cast<SiteMask>(i));
          out(static_cast<Eigen::Index>(m)) += phase * v(i);
        }
        v = out;
      } else {
        ChainSpec spec = pst_chain(n, ctx.transfer_time);
        if (!ctx.zz.empty()) spec.zz = ctx.zz;
        NoiseSpec noise = ctx.noise;
        noise.zz = true;
        const auto h = detail::noisy_chain_hamiltonian(spec, noise, full.basis);
        v = evolve(h, {full.basis, v}, {ctx.transfer_time}, detail::auto_options(h.dimension())).states[0].amplitudes;
        std::vector<cplx> g = pst_frame_phases(n);
        for (auto& x : g) x = std::conj(x);
        detail::apply_site_phases(v, n, g);
      }
      break;
    }
    case GateKind::fst: {
      const auto h = build_chain_hamiltonian(fst_chain(n, ctx.transfer_time, gate.parameter), full.basis);
      v = evolve(h, {full.basis, v}, {ctx.transfer_time}, detail::auto_options(h.dimension())).states[0].amplitudes;
      break;
    }
    default: {
      if (gate.targets.empty()) throw ArgumentError("apply_gate: single-qubit gate without target");
      const CMatrix u = single_qubit_matrix(gate.kind, gate.parameter);
      for (int t : gate.targets) {
        if (t < 0 || t >= n) throw ArgumentError("apply_gate: target outside register");
        detail::apply_single(v, n, t, u);
      }
    }
  }
  return {full.basis, v};
}

inline StateVector run_circuit(const StateVector& initial, const std::vector<GateOp>& gates, const CircuitContext& ctx = {}) {
  StateVector s = initial;
  for (const auto& g : gates) s = apply_gate(s, g, ctx);
  return s;
}

namespace detail {

/// Amplitude-damping master equation by RK4: d rho/dt = -i (Heff rho - rho Heff^dag) +
/// sum_k gamma_k s_k rho s_k^dag, where Heff already carries the -i gamma_k/2 n_k decay terms.
inline CMatrix lindblad_evolve(const CMatrix& heff, const std::vector<double>& gamma, int num_sites, CMatrix rho,
                               double t) {
  const Eigen::Index d = rho.rows();
  auto rhs = [&](const CMatrix& r) {
    CMatrix out = cplx(0, -1) * (heff * r - r * heff.adjoint());
    for (int k = 0; k < static_cast<int>(gamma.size()); ++k) {
      if (gamma[k] == 0.0) continue;
      const auto bit = static_cast<Eigen::Index>(SiteMask{1} << (num_sites - 1 - k));
      for (Eigen::Index a = 0; a < d; ++a) {
        if (a & bit) continue;
        for (Eigen::Index b = 0; b < d; ++b)
          if (!(b & bit)) out(a, b) += gamma[k] * r(a | bit, b | bit);
      }
    }
    return out;
  };
  const double scale = heff.cwiseAbs().colwise().sum().maxCoeff();
  const int steps = std::max(1, static_cast<int>(std::ceil(scale * t / 0.01)));
  const double dt = t / steps;
  for (int i = 0; i < steps; ++i) {
    const CMatrix k1 = rhs(rho);
    const CMatrix k2 = rhs(rho + 0.5 * dt * k1);
    const CMatrix k3 = rhs(rho + 0.5 * dt * k2);
    const CMatrix k4 = rhs(rho + dt * k3);
    rho += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return 0.5 * (rho + rho.adjoint());
}

}  // namespace detail

/// Mixed-state version of apply_gate. A non-ideal PST gate runs the damped chain as a Lindblad
/// channel (jumps included), so the trace is kept.
inline DensityMatrix apply_gate(const DensityMatrix& rho, const GateOp& gate, const CircuitContext& ctx = {}) {
  const int n = rho.num_qubits();
  const Basis b = Basis::qubits(n);
  const Eigen::Index d = rho.dimension();
  if (gate.kind == GateKind::pst && !ctx.ideal()) {
    ChainSpec spec = pst_chain(n, ctx.transfer_time);
    if (!ctx.zz.empty()) spec.zz = ctx.zz;
    NoiseSpec noise = ctx.noise;
    noise.zz = true;
    const CMatrix heff = detail::noisy_chain_hamiltonian(spec, noise, b).dense();
    std::vector<double> gamma;
    const double factor = noise.literal_pi_factor ? kPi : 0.5;
    for (double r : noise.relaxation_rates) gamma.push_back(2.0 * factor * r);
    CMatrix r = detail::lindblad_evolve(heff, gamma, n, rho.matrix(), ctx.transfer_time);
    CVector g = CVector::Ones(d);
    detail::apply_site_phases(g, n, pst_frame_phases(n));
    g = g.conjugate();
    return DensityMatrix(g.asDiagonal() * r * g.conjugate().asDiagonal());
  }
  CMatrix u(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    u.col(i) = apply_gate(StateVector::basis_state(b, static_cast<std::size_t>(i)), gate, ctx).amplitudes;
  return DensityMatrix(u * rho.matrix() * u.adjoint());
}

inline DensityMatrix run_circuit(const DensityMatrix& initial, const std::vector<GateOp>& gates,
                                 const CircuitContext& ctx = {}) {
  DensityMatrix r = initial;
  for (const auto& g : gates) r = apply_gate(r, g, ctx);
  return r;
}

// ---------------------------------------------------------------------------------------------
// Parity-phase experiment

enum class InputState { plus_x, minus_x, plus_y, minus_y };

inline double input_phase(InputState s) {
  switch (s) {
    case InputState::plus_x: return 0.0;
    case InputState::minus_x: return kPi;
    case InputState::plus_y: return 0.5 * kPi;
    case InputState::minus_y: return -0.5 * kPi;
  }
  return 0.0;
}

inline std::string input_name(InputState s) {
  switch (s) {
    case InputState::plus_x: return "+x";
    case InputState::minus_x: return "-x";
    case InputState::plus_y: return "+y";
    case InputState::minus_y: return "-y";
  }
  return "?";
}

inline InputState parse_input_state(const std::string& s) {
  if (s == "+x") return InputState::plus_x;
  if (s == "-x") return InputState::minus_x;
  if (s == "+y") return InputState::plus_y;
  if (s == "-y") return InputState::minus_y;
  throw ArgumentError("input state must be one of +x, -x, +y, -y");
}

struct ParityExperimentResult {
  std::string inner;
  InputState input = InputState::plus_x;
  double phase = 0.0;  // (-pi, pi]
  int parity = 1;
  int excitations = 0;

  /// Distance from parity * pi/2, wrapped.
  double deviation() const { return wrap_phase(phase - parity * 0.5 * kPi); }
};

/// Site 0 starts in (|0> + e^{i phi}|1>)/sqrt 2, inner sites in `inner`, the last site empty.
/// After one transfer time the last site's x-y angle, less the input phase and the chain's
/// known local frame phase on that site, is the acquired phase.
class ParityExperiment {
 public:
  ParityExperiment(ChainSpec spec, NoiseSpec noise = {}) : spec_(std::move(spec)), noise_(std::move(noise)) {
    spec_.validate();
    if (spec_.length < 3) throw ArgumentError("parity experiment: N must be >= 3");
    if (spec_.length > 20) throw ArgumentError("parity experiment: N must be <= 20");
    const auto g = pst_frame_phases(spec_.length);
    frame_ = std::arg(g[spec_.length - 1]);
  }

  const ChainSpec& spec() const { return spec_; }

  ParityExperimentResult run(const std::string& inner, InputState input) {
    const int n = spec_.length;
    if (static_cast<int>(inner.size()) != n - 2) throw ArgumentError("parity experiment: inner bitstring must have N-2 bits");
    const BasisLabel base = BasisLabel::from_bitstring("0" + inner + "0");
    const int k = base.total();
    BasisLabel excited = base;
    excited.occupations[0] = 1;

    const StateVector lo = evolve_sector(k, base);
    const StateVector hi = evolve_sector(k + 1, excited);
    if (lo.basis.num_excitations() != k || hi.basis.num_excitations() != k + 1)
      throw ConsistencyError("parity experiment: sector bookkeeping broken");
    const double phi = input_phase(input);
    CVector full = embed_sector_state(lo).amplitudes / std::sqrt(2.0);
    full += embed_sector_state(hi).amplitudes * (std::exp(cplx(0, phi)) / std::sqrt(2.0));
    const DensityMatrix rho = partial_trace(StateVector(Basis::qubits(n), full), {n - 1});

    ParityExperimentResult r;
    r.inner = inner;
    r.input = input;
    r.excitations = k;
    r.parity = k % 2 ? -1 : 1;
    r.phase = wrap_phase(xy_phase(rho) - phi - frame_);
    return r;
  }

  /// Every inner bitstring, in binary counting order.
  std::vector<ParityExperimentResult> table(InputState input) {
    std::vector<ParityExperimentResult> out;
    const int m = spec_.length - 2;
    for (std::uint32_t x = 0; x < (1u << m); ++x) {
      std::string s(m, '0');
      for (int b = 0; b < m; ++b)
        if (x & (1u << (m - 1 - b))) s[b] = '1';
      out.push_back(run(s, input));
    }
    return out;
  }

 private:
  StateVector evolve_sector(int k, const BasisLabel& label) {
    auto it = propagators_.find(k);
    if (it == propagators_.end()) {
      const Basis b = Basis::sector(spec_.length, k);
      const auto h = detail::noisy_chain_hamiltonian(spec_, noise_, b);
      it = propagators_.emplace(k, std::make_pair(b, propagator(h, spec_.transfer_time))).first;
    }
    const auto& [basis, u] = it->second;
    const StateVector s0 = StateVector::from_label(basis, label);
    return {basis, u * s0.amplitudes};
  }

  ChainSpec spec_;
  NoiseSpec noise_;
  double frame_ = 0.0;
  std::map<int, std::pair<Basis, CMatrix>> propagators_;
};

inline ParityExperimentResult parity_phase_experiment(const ChainSpec& spec, const NoiseSpec& noise,
                                                      const std::string& inner, InputState input) {
  return ParityExperiment(spec, noise).run(inner, input);
}

/// Ideal chain with unit transfer time.
inline ParityExperimentResult parity_phase_experiment(int num_sites, const std::string& inner, InputState input) {
  return parity_phase_experiment(pst_chain(num_sites, 1.0), {}, inner, input);
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

inline LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ArgumentError("fit_line: need >= 2 matching points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double d = n * sxx - sx * sx;
  if (d == 0.0) throw FitError("fit_line: degenerate abscissae");
  LinearFit f;
  f.slope = (n * sxy - sx * sy) / d;
  f.intercept = (sy - f.slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  const double mean = sy / n;
  for (std::size_t i = 0; i < x.size(); ++i) {
    ss_res += std::pow(y[i] - f.slope * x[i] - f.intercept, 2);
    ss_tot += std::pow(y[i] - mean, 2);
  }
  f.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return f;
}

struct PhaseErrorTrend {
  std::vector<double> excitations;     // 0..N-2
  std::vector<double> mean_deviation;  // mean |phase - parity pi/2| per excitation count
  LinearFit fit;
};

/// Mean absolute phase error per inner excitation count, and a straight-line fit through it.
inline PhaseErrorTrend phase_error_trend(const std::vector<ParityExperimentResult>& results) {
  std::map<int, std::pair<double, int>> acc;
  for (const auto& r : results) {
    auto& a = acc[r.excitations];
    a.first += std::abs(r.deviation());
    a.second += 1;
  }
  PhaseErrorTrend t;
  for (const auto& [k, a] : acc) {
    t.excitations.push_back(k);
    t.mean_deviation.push_back(a.first / a.second);
  }
  t.fit = fit_line(t.excitations, t.mean_deviation);
  return t;
}

// ---------------------------------------------------------------------------------------------
// Double FST

/// Two FST legs on a three-site chain. With the flag set the middle site is excited during
/// the first leg and flipped back with an X pi pulse before the second.
inline std::vector<double> double_fst_parity_experiment(bool middle_excited_first_leg, double theta = 0.5 * kPi,
                                                        double tau = 350e-9) {
  const int n = 3;
  const Basis b = Basis::qubits(n);
  const auto h = build_chain_hamiltonian(fst_chain(n, tau, theta), b);
  StateVector psi = StateVector::from_label(b, BasisLabel::from_bitstring(middle_excited_first_leg ? "110" : "100"));
  psi = evolve(h, psi, {tau}).states[0];
  if (middle_excited_first_leg) psi = apply_gate(psi, GateOp::single(GateKind::x_pi, 1));
  psi = evolve(h, psi, {tau}).states[0];
  return psi.site_populations();
}

// ---------------------------------------------------------------------------------------------
// GHZ circuit and graph-state bookkeeping

inline constexpr int kGhzSpecialSite = 0;

/// H on every site, one PST, then Y90 on every site except the centre (odd N, X90) or the
/// special site (even N, Z(-pi/2) then X90).
inline std::vector<GateOp> ghz_circuit(int num_sites) {
  if (num_sites < 2) throw ArgumentError("ghz_circuit: N must be >= 2");
  std::vector<GateOp> g;
  for (int s = 0; s < num_sites; ++s) g.push_back(GateOp::single(GateKind::hadamard, s));
  g.push_back(GateOp::pst());
  for (int s = 0; s < num_sites; ++s) {
    if (num_sites % 2 == 1 && s == num_sites / 2) {
      g.push_back(GateOp::single(GateKind::x90, s));
    } else if (num_sites % 2 == 0 && s == kGhzSpecialSite) {
      g.push_back(GateOp::single(GateKind::z_phase, s, -0.5 * kPi));
      g.push_back(GateOp::single(GateKind::x90, s));
    } else {
      g.push_back(GateOp::single(GateKind::y90, s));
    }
  }
  return g;
}

inline StateVector simulate_ghz(int num_sites, const CircuitContext& ctx = {}) {
  const Basis b = Basis::qubits(num_sites);
  return run_circuit(StateVector::basis_state(b, 0), ghz_circuit(num_sites), ctx);
}

/// The GHZ circuit on density matrices; relaxation includes the jump terms.
inline DensityMatrix simulate_ghz_density(int num_sites, const CircuitContext& ctx = {}) {
  if (num_sites < 2 || num_sites > 8) throw ArgumentError("simulate_ghz_density: N must be in [2, 8]");
  CVector v = CVector::Zero(Eigen::Index{1} << num_sites);
  v(0) = 1.0;
  return run_circuit(DensityMatrix::pure(v), ghz_circuit(num_sites), ctx);
}

/// Per-pair ZZ strength (ring entry zero) giving the all-excited state a phase `phase` over tau.
inline std::vector<double> zz_for_all_excited_phase(int num_sites, double tau, double phase) {
  std::vector<double> z(num_sites, 0.0);
  for (int n = 0; n + 1 < num_sites; ++n) z[n] = -phase / ((num_sites - 1) * tau);
  return z;
}

struct GraphStateReport {
  int vertices = 0;
  std::vector<std::pair<int, int>> cz_edges;
  std::vector<std::pair<int, int>> iswap_edges;
  std::vector<int> cz_origin;     // transfer index n (pair n, N-1-n) per CZ edge
  std::vector<int> iswap_origin;
};

inline GraphStateReport graph_state_edges(int num_sites) {
  if (num_sites < 2) throw ArgumentError("graph_state_edges: N must be >= 2");
  GraphStateReport r;
  r.vertices = num_sites;
  for (int n = 0; n < num_sites / 2; ++n) {
    const int m = num_sites - 1 - n;
    r.iswap_edges.emplace_back(n, m);
    r.iswap_origin.push_back(n);
    for (int k = n + 1; k < m; ++k) {
      r.cz_edges.emplace_back(n, k);
      r.cz_origin.push_back(n);
      r.cz_edges.emplace_back(k, m);
      r.cz_origin.push_back(n);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------------------------
// Lattice

inline Trajectory lattice_pst(const LatticeSpec& spec, int x, int y, const std::vector<double>& times) {
  const auto h = build_lattice_hamiltonian(spec);
  const auto psi0 = StateVector::basis_state(h.basis(), static_cast<std::size_t>(spec.site(x, y)));
  return evolve(h, psi0, times);
}

/// Site populations at one time as an nx x ny grid.
inline Eigen::MatrixXd lattice_population_grid(const LatticeSpec& spec, const Trajectory& tr, std::size_t time_index) {
  Eigen::MatrixXd g(spec.nx, spec.ny);
  for (int x = 0; x < spec.nx; ++x)
    for (int y = 0; y < spec.ny; ++y) g(x, y) = tr.population(time_index, spec.site(x, y));
  return g;
}

inline std::vector<double> lattice_snapshot_times(double tau) {
  return {0.0, 0.1 * tau, 0.25 * tau, 0.5 * tau, 0.75 * tau, 0.9 * tau, tau};
}

}  // namespace pstsim
