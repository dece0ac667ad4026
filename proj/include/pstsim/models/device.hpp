#pragma once

// Transmon + tunable-coupler device model with parametric flux drives.
//
// Spec values are in Hz, seconds and flux quanta; builders return angular units.
// Coupler j sits between qubit j and qubit j+1 (ring of num_qubits qubits).

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "pstsim/statespace.hpp"

namespace pstsim {

inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr std::size_t kDeviceDimensionGuard = 4096;

struct QubitParams {
  double frequency = 0.0;      // Hz
  double anharmonicity = 0.0;  // Hz
  double t1 = 0.0;             // s
  double t2_star = 0.0;        // s, stored only
};

struct CouplerParams {
  double freq_min = 0.0;       // Hz, at phi = 0.5
  double freq_max = 0.0;       // Hz, at phi = 0
  double anharmonicity = 0.0;  // Hz
  double phi_dc = 0.0;         // flux quanta
};

struct DeviceSpec {
  std::vector<QubitParams> qubits;
  std::vector<CouplerParams> couplers;
  std::vector<double> g_next;  // Hz, qubit i to coupler i
  std::vector<double> g_prev;  // Hz, qubit i to coupler i-1
  std::vector<std::optional<double>> g_qubit_qubit;  // Hz, pair (i, i+1); empty when unreported
  Eigen::MatrixXd crosstalk;    // volts per flux quantum
  Eigen::VectorXd flux_offset;  // flux quanta
  int levels = 3;

  int num_qubits() const { return static_cast<int>(qubits.size()); }
  int next_qubit(int i) const { return (i + 1) % num_qubits(); }

  void validate() const {
    const auto n = static_cast<std::size_t>(num_qubits());
    if (n < 2) throw ArgumentError("device: need at least two qubits");
    if (couplers.size() != n || g_next.size() != n || g_prev.size() != n || g_qubit_qubit.size() != n)
      throw ArgumentError("device: per-qubit and per-coupler lists must all have num_qubits entries");
    for (const auto& c : couplers)
      if (!(c.freq_min < c.freq_max) || !(c.freq_min > 0.0))
        throw ArgumentError("device: coupler needs 0 < freq_min < freq_max");
    for (double g : g_next)
      if (!(g >= 0.0)) throw ArgumentError("device: couplings must be >= 0");
    for (double g : g_prev)
      if (!(g >= 0.0)) throw ArgumentError("device: couplings must be >= 0");
    for (const auto& q : qubits)
      if (!(q.frequency > 0.0) || !(q.t1 >= 0.0)) throw ArgumentError("device: invalid qubit parameters");
    if (crosstalk.rows() != static_cast<Eigen::Index>(n) || crosstalk.cols() != static_cast<Eigen::Index>(n) ||
        flux_offset.size() != static_cast<Eigen::Index>(n))
      throw ArgumentError("device: crosstalk matrix and offset must match the coupler count");
    if (levels < 2 || levels > kMaxModeLevels) throw ArgumentError("device: level count must be in [2, 4]");
  }

  /// Six-qubit ring with the measured table values. Anharmonicities, the dc bias point and the
  /// crosstalk matrix are not tabulated; see README for the chosen defaults.
  static DeviceSpec defaults() {
    DeviceSpec d;
    const double qf[] = {4.37e9, 3.93e9, 4.27e9, 4.23e9, 3.83e9, 3.21e9};
    const double t1[] = {12.1e-6, 53.2e-6, 26.2e-6, 46.0e-6, 63.4e-6, 72.0e-6};
    const double t2[] = {9.9e-6, 25.8e-6, 8.1e-6, 6.7e-6, 9.1e-6, 6.3e-6};
    const double cmin[] = {3.65e9, 4.92e9, 3.38e9, 4.66e9, 2.57e9, 3.95e9};
    const double cmax[] = {7.17e9, 7.51e9, 7.28e9, 6.75e9, 4.71e9, 6.93e9};
    const double gn[] = {62e6, 74e6, 68e6, 60e6, 47e6, 77e6};
    const double gp[] = {65e6, 59e6, 112e6, 65e6, 61e6, 64e6};
    for (int i = 0; i < 6; ++i) {
      d.qubits.push_back({qf[i], -200e6, t1[i], t2[i]});
      d.couplers.push_back({cmin[i], cmax[i], -200e6, 0.15});
      d.g_next.push_back(gn[i]);
      d.g_prev.push_back(gp[i]);
    }
    d.g_qubit_qubit = {std::nullopt, 6.0e6, 8.3e6, 6.6e6, 4.8e6, std::nullopt};
    d.crosstalk = Eigen::MatrixXd::Identity(6, 6);
    d.flux_offset = Eigen::VectorXd::Zero(6);
    return d;
  }
};

/// Asymmetric-SQUID transmon frequency (Hz) at flux phi (flux quanta).
inline double coupler_frequency(const CouplerParams& c, double phi) {
  const double ec = -c.anharmonicity;
  const double top = c.freq_max + ec;
  const double ratio = (c.freq_min + ec) / top;
  const double d = ratio * ratio;
  const double cs = std::cos(kPi * phi);
  return top * std::pow(d * d + (1.0 - d * d) * cs * cs, 0.25) - ec;
}

/// k-th flux derivative (Hz per flux quantum^k), 5-point central stencil with step 1e-3.
inline double coupler_frequency_derivative(const CouplerParams& c, double phi, int k) {
  constexpr double h = 1e-3;
  const double fm2 = coupler_frequency(c, phi - 2 * h);
  const double fm1 = coupler_frequency(c, phi - h);
  const double fp1 = coupler_frequency(c, phi + h);
  const double fp2 = coupler_frequency(c, phi + 2 * h);
  if (k == 1) return (-fp2 + 8 * fp1 - 8 * fm1 + fm2) / (12 * h);
  if (k == 2) return (-fp2 + 16 * fp1 - 30 * coupler_frequency(c, phi) + 16 * fm1 - fm2) / (12 * h * h);
  throw ArgumentError("coupler_frequency_derivative: only k = 1, 2 supported");
}

/// Flux modulation phi(t) = phi_dc + A cos(frequency t / k + phase) on one coupler.
struct DriveConfig {
  int coupler = 0;
  double amplitude = 0.0;  // flux quanta
  double frequency = 0.0;  // rad/s, the targeted transition frequency
  int harmonic = 1;
  double phase = 0.0;

  void validate() const {
    if (!(amplitude >= 0.0) || amplitude >= 0.5) throw ArgumentError("drive: amplitude must lie in [0, 0.5)");
    if (harmonic < 1 || harmonic > 2) throw ArgumentError("drive: harmonic must be 1 or 2");
    if (!std::isfinite(frequency) || !std::isfinite(phase)) throw ArgumentError("drive: non-finite parameter");
  }

  double flux(double phi_dc, double t) const {
    return phi_dc + amplitude * std::cos(frequency * t / harmonic + phase);
  }
};

/// J (rad/s) for the pair (qubit, qubit+1) driven through their shared coupler:
/// d^k w_c/d phi^k * g g' / Delta^2 * A^k / 2, with Delta the qubit difference frequency.
inline double effective_coupling_estimate(const DeviceSpec& spec, int qubit, const DriveConfig& drive) {
  spec.validate();
  drive.validate();
  if (qubit < 0 || qubit >= spec.num_qubits()) throw ArgumentError("coupling estimate: qubit out of range");
  if (drive.coupler != qubit) throw ArgumentError("coupling estimate: drive must target the pair's shared coupler");
  const int other = spec.next_qubit(qubit);
  const double delta = kTwoPi * (spec.qubits[qubit].frequency - spec.qubits[other].frequency);
  if (delta == 0.0) throw DegeneratePairError("coupling estimate: qubits are degenerate");
  const auto& c = spec.couplers[qubit];
  const double deriv = kTwoPi * coupler_frequency_derivative(c, c.phi_dc, drive.harmonic);
  const double g = kTwoPi * spec.g_next[qubit];
  const double gp = kTwoPi * spec.g_prev[other];
  return deriv * g * gp / (delta * delta) * std::pow(drive.amplitude, drive.harmonic) / 2.0;
}

struct HybridizationRatio {
  int qubit_a = 0;
  int qubit_b = 0;
  double ratio = 0.0;  // g / |Delta|
};

/// Static qubit-qubit coupling over detuning for every pair with a reported coupling.
inline std::vector<HybridizationRatio> hybridization_ratios(const DeviceSpec& spec) {
  std::vector<HybridizationRatio> out;
  for (int i = 0; i < spec.num_qubits(); ++i) {
    if (!spec.g_qubit_qubit[i]) continue;
    const int j = spec.next_qubit(i);
    const double delta = std::abs(spec.qubits[i].frequency - spec.qubits[j].frequency);
    if (delta == 0.0) throw DegeneratePairError("hybridization ratio: degenerate pair");
    out.push_back({i, j, *spec.g_qubit_qubit[i] / delta});
  }
  return out;
}

/// V = M^-1 (Phi_target - Phi_off).
inline Eigen::VectorXd crosstalk_compensation(const Eigen::MatrixXd& m, const Eigen::VectorXd& target,
                                              const Eigen::VectorXd& offset, double max_condition = 1e10) {
  if (m.rows() != m.cols() || m.rows() == 0) throw ArgumentError("crosstalk: matrix must be square");
  if (target.size() != m.rows() || offset.size() != m.rows())
    throw ArgumentError("crosstalk: flux vectors must match the matrix size");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  if (!(smin > 0.0) || sv(0) / smin > max_condition) throw NumericalError("crosstalk: matrix is singular or ill-conditioned");
  Eigen::VectorXd v = m.partialPivLu().solve(target - offset);
  const double residual = (m * v + offset - target).lpNorm<Eigen::Infinity>();
  if (!(residual < 1e-10 * std::max(1.0, target.lpNorm<Eigen::Infinity>())))
    throw NumericalError("crosstalk: residual above tolerance");
  return v;
}

/// A contiguous stretch of the ring: qubits first..first+n-1 and the couplers between them.
/// Modes are interleaved q, c, q, c, ..., q.
struct DeviceSubset {
  std::vector<int> qubits;
  std::vector<int> couplers;

  static DeviceSubset chain(const DeviceSpec& spec, int first_qubit, int num_qubits) {
    if (num_qubits < 1 || num_qubits > spec.num_qubits()) throw ArgumentError("device subset: bad qubit count");
    if (first_qubit < 0 || first_qubit >= spec.num_qubits()) throw ArgumentError("device subset: bad first qubit");
    DeviceSubset s;
    for (int k = 0; k < num_qubits; ++k) {
      const int q = (first_qubit + k) % spec.num_qubits();
      s.qubits.push_back(q);
      if (k + 1 < num_qubits) s.couplers.push_back(q);
    }
    return s;
  }

  int num_modes() const { return static_cast<int>(qubits.size() + couplers.size()); }
  int qubit_mode(int k) const { return 2 * k; }
  int coupler_mode(int k) const { return 2 * k + 1; }
};

struct DeviceModelOptions {
  int levels = 0;  // 0 = spec.levels
  std::size_t dimension_guard = kDeviceDimensionGuard;
  bool allow_large = false;
};

/// H(t) = H_static + sum_j w_cj(phi_j(t)) n_cj over the subset, angular units, lab frame.
class DeviceHamiltonian {
 public:
  DeviceHamiltonian(const DeviceSpec& spec, DeviceSubset subset, std::vector<DriveConfig> drives,
                    const DeviceModelOptions& opt = {})
      : subset_(std::move(subset)), drives_(std::move(drives)), basis_(Basis::qubits(1)),
        static_part_(SparseOperator::zero(Basis::qubits(1))) {
    spec.validate();
    const int d = opt.levels > 0 ? opt.levels : spec.levels;
    basis_ = Basis::modes(std::vector<int>(static_cast<std::size_t>(subset_.num_modes()), d));
    if (basis_.dimension() > opt.dimension_guard && !opt.allow_large)
      throw ResourceError("device Hamiltonian: dimension " + std::to_string(basis_.dimension()) +
                          " exceeds the guard");
    for (const auto& dr : drives_) {
      dr.validate();
      if (std::find(subset_.couplers.begin(), subset_.couplers.end(), dr.coupler) == subset_.couplers.end())
        throw ArgumentError("device Hamiltonian: drive targets a coupler outside the subset");
    }
    for (int c : subset_.couplers) couplers_.push_back(spec.couplers[c]);

    const auto dim = static_cast<Eigen::Index>(basis_.dimension());
    std::vector<SparseOperator::Triplet> t;
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(dim);
    coupler_number_.assign(couplers_.size(), Eigen::VectorXd::Zero(dim));
    for (Eigen::Index i = 0; i < dim; ++i) {
      const auto l = basis_.label(static_cast<std::size_t>(i));
      for (std::size_t k = 0; k < subset_.qubits.size(); ++k) {
        const auto& q = spec.qubits[subset_.qubits[k]];
        const double n = l.occupations[subset_.qubit_mode(static_cast<int>(k))];
        diag(i) += kTwoPi * (q.frequency * n + 0.5 * q.anharmonicity * n * (n - 1));
      }
      for (std::size_t k = 0; k < couplers_.size(); ++k) {
        const double n = l.occupations[subset_.coupler_mode(static_cast<int>(k))];
        diag(i) += kTwoPi * 0.5 * couplers_[k].anharmonicity * n * (n - 1);
        coupler_number_[k](i) = n;
      }
    }
    // (g/2)(a_q^dag - a_q)(a_c^dag - a_c) for each qubit-coupler pair in the subset.
    for (std::size_t k = 0; k < couplers_.size(); ++k) {
      const int cm = subset_.coupler_mode(static_cast<int>(k));
      add_coupling(t, subset_.qubit_mode(static_cast<int>(k)), cm, kTwoPi * spec.g_next[subset_.qubits[k]]);
      add_coupling(t, subset_.qubit_mode(static_cast<int>(k + 1)), cm,
                   kTwoPi * spec.g_prev[subset_.qubits[k + 1]]);
    }
    for (Eigen::Index i = 0; i < dim; ++i)
      if (diag(i) != 0.0) t.emplace_back(i, i, diag(i));
    static_part_ = SparseOperator::from_triplets(basis_, t, true);
  }

  const Basis& basis() const noexcept { return basis_; }
  const DeviceSubset& subset() const noexcept { return subset_; }
  const SparseOperator& static_part() const noexcept { return static_part_; }

  /// Coupler frequency (rad/s) of subset coupler k at time t.
  double coupler_angular_frequency(std::size_t k, double t) const {
    double phi = couplers_[k].phi_dc;
    for (const auto& dr : drives_)
      if (dr.coupler == subset_.couplers[k]) phi = dr.flux(couplers_[k].phi_dc, t);
    return kTwoPi * coupler_frequency(couplers_[k], phi);
  }

  SparseOperator at(double t) const {
    Eigen::VectorXd extra = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis_.dimension()));
    for (std::size_t k = 0; k < couplers_.size(); ++k) extra += coupler_angular_frequency(k, t) * coupler_number_[k];
    SparseOperator::Matrix d(extra.size(), extra.size());
    d.reserve(Eigen::VectorXi::Constant(extra.size(), 1));
    for (Eigen::Index i = 0; i < extra.size(); ++i) d.insert(i, i) = extra(i);
    return SparseOperator(basis_, SparseOperator::Matrix(static_part_.matrix() + d), true);
  }

  /// out = H(t) in, without materialising H(t).
  void apply(double t, const CVector& in, CVector& out) const {
    out.noalias() = static_part_.matrix() * in;
    for (std::size_t k = 0; k < couplers_.size(); ++k)
      out += (coupler_angular_frequency(k, t) * coupler_number_[k].array()).cast<cplx>().matrix().cwiseProduct(in);
  }

  /// Largest |H_ij| over a drive period bound, in Hz.
  double max_frequency_scale() const {
    double mx = static_part_.max_abs_entry();
    Eigen::VectorXd extra = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis_.dimension()));
    for (std::size_t k = 0; k < couplers_.size(); ++k) extra += kTwoPi * couplers_[k].freq_max * coupler_number_[k];
    mx = std::max(mx, (static_part_.dense().diagonal().real() + extra).cwiseAbs().maxCoeff());
    return mx / kTwoPi;
  }

  /// Index of the bare state with one excitation in subset qubit k and all else empty.
  std::size_t single_qubit_excitation(int k) const {
    BasisLabel l{std::vector<int>(static_cast<std::size_t>(subset_.num_modes()), 0)};
    l.occupations[subset_.qubit_mode(k)] = 1;
    return basis_.index(l);
  }

 private:
  void add_coupling(std::vector<SparseOperator::Triplet>& t, int qm, int cm, double g) const {
    const auto dim = basis_.dimension();
    for (std::size_t i = 0; i < dim; ++i) {
      const auto l = basis_.label(i);
      const int nq = l.occupations[qm];
      const int nc = l.occupations[cm];
      // (a^dag - a) matrix elements: <n+1|a^dag|n> = sqrt(n+1), <n-1|-a|n> = -sqrt(n).
      for (int dq : {+1, -1}) {
        const int mq = nq + dq;
        if (mq < 0 || mq >= basis_.levels(qm)) continue;
        const double eq = dq > 0 ? std::sqrt(static_cast<double>(nq + 1)) : -std::sqrt(static_cast<double>(nq));
        for (int dc : {+1, -1}) {
          const int mc = nc + dc;
          if (mc < 0 || mc >= basis_.levels(cm)) continue;
          const double ec = dc > 0 ? std::sqrt(static_cast<double>(nc + 1)) : -std::sqrt(static_cast<double>(nc));
          BasisLabel out = l;
          out.occupations[qm] = mq;
          out.occupations[cm] = mc;
          t.emplace_back(static_cast<Eigen::Index>(basis_.index(out)), static_cast<Eigen::Index>(i), 0.5 * g * eq * ec);
        }
      }
    }
  }

  DeviceSubset subset_;
  std::vector<DriveConfig> drives_;
  std::vector<CouplerParams> couplers_;
  Basis basis_;
  SparseOperator static_part_;
  std::vector<Eigen::VectorXd> coupler_number_;
};

}  // namespace pstsim
