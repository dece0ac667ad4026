#pragma once

// Simulated Pauli tomography with optional shot noise, linear-inversion reconstruction,
// transverse phase extraction and GHZ fidelities.

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pstsim/random.hpp"
#include "pstsim/statespace.hpp"

namespace pstsim {

struct TomographySettings {
  int num_qubits = 1;
  long shots = 0;  // per setting; 0 = exact expectations
  std::uint64_t seed = 0;

  void validate() const {
    if (num_qubits < 1 || num_qubits > 8) throw ArgumentError("tomography: 1..8 qubits supported");
    if (shots < 0) throw ArgumentError("tomography: shots must be >= 0");
  }
};

/// Expectation value for every Pauli string over {I, X, Y, Z}^n.
struct ExpectationTable {
  int num_qubits = 0;
  std::map<std::string, double> values;

  double at(const std::string& p) const {
    auto it = values.find(p);
    if (it == values.end()) throw ArgumentError("expectation table: missing entry " + p);
    return it->second;
  }
};

namespace detail {

inline std::vector<std::string> all_strings(int n, const std::string& alphabet) {
  std::vector<std::string> out{""};
  for (int k = 0; k < n; ++k) {
    std::vector<std::string> next;
    for (const auto& s : out)
      for (char c : alphabet) next.push_back(s + c);
    out = std::move(next);
  }
  return out;
}

/// Rotates each qubit so that measuring Z reads out the requested Pauli axis.
inline CMatrix measurement_rotation(char axis) {
  CMatrix r(2, 2);
  const double h = 1.0 / std::sqrt(2.0);
  switch (axis) {
    case 'X':
      r << h, h, h, -h;
      break;
    case 'Y':
      r << h, cplx(0, -h), h, cplx(0, h);
      break;
    default:
      r = CMatrix::Identity(2, 2);
  }
  return r;
}

/// Outcome probabilities of a joint measurement in the setting's eigenbasis.
inline Eigen::VectorXd setting_probabilities(const CMatrix& rho, const std::string& setting) {
  const int n = static_cast<int>(setting.size());
  CMatrix u = CMatrix::Identity(1, 1);
  for (char c : setting) {
    const CMatrix r = measurement_rotation(c);
    CMatrix k(u.rows() * 2, u.cols() * 2);
    for (Eigen::Index i = 0; i < u.rows(); ++i)
      for (Eigen::Index j = 0; j < u.cols(); ++j) k.block(2 * i, 2 * j, 2, 2) = u(i, j) * r;
    u = k;
  }
  (void)n;
  const CMatrix rr = u * rho * u.adjoint();
  Eigen::VectorXd p = rr.diagonal().real().cwiseMax(0.0);
  return p;
}

}  // namespace detail

/// Expectations of all 4^n Pauli strings from the 3^n measurement settings. Strings containing
/// identities are averaged over every setting that measures them.
inline ExpectationTable simulate_tomography(const DensityMatrix& rho, const TomographySettings& settings) {
  settings.validate();
  const int n = rho.num_qubits();
  if (n != settings.num_qubits) throw ArgumentError("tomography: qubit count mismatch");
  const auto setting_list = detail::all_strings(n, "XYZ");
  std::map<std::string, std::pair<double, int>> acc;
  for (std::size_t si = 0; si < setting_list.size(); ++si) {
    const std::string& setting = setting_list[si];
    Eigen::VectorXd p = detail::setting_probabilities(rho.matrix(), setting);
    const double total = p.sum();
    if (total > 0.0) p /= total;
    if (settings.shots > 0) {
      Rng rng(derive_seed(settings.seed, {si}));
      Eigen::VectorXd cdf(p.size());
      double c = 0.0;
      for (Eigen::Index k = 0; k < p.size(); ++k) cdf(k) = (c += p(k));
      Eigen::VectorXd counts = Eigen::VectorXd::Zero(p.size());
      for (long s = 0; s < settings.shots; ++s) {
        const double r = rng.uniform() * c;
        Eigen::Index k = 0;
        while (k + 1 < cdf.size() && cdf(k) <= r) ++k;
        counts(k) += 1.0;
      }
      p = counts / static_cast<double>(settings.shots);
    }
    // Every subset of measured qubits gives one Pauli string with identities elsewhere.
    for (std::uint32_t subset = 0; subset < (1u << n); ++subset) {
      std::string key(n, 'I');
      for (int q = 0; q < n; ++q)
        if (subset & (1u << (n - 1 - q))) key[q] = setting[q];
      double e = 0.0;
      for (Eigen::Index k = 0; k < p.size(); ++k) {
        const int parity = std::popcount(static_cast<std::uint32_t>(k) & subset) % 2;
        e += parity ? -p(k) : p(k);
      }
      auto& slot = acc[key];
      slot.first += e;
      slot.second += 1;
    }
  }
  ExpectationTable t;
  t.num_qubits = n;
  for (const auto& [k, v] : acc) t.values[k] = v.first / v.second;
  // The identity carries the trace of the input.
  t.values[std::string(n, 'I')] = rho.trace();
  return t;
}

inline ExpectationTable simulate_tomography(const StateVector& psi, const TomographySettings& settings) {
  if (!psi.basis.is_qubit()) throw ArgumentError("tomography: qubit state required");
  const StateVector full = psi.basis.is_sector() ? embed_sector_state(psi) : psi;
  return simulate_tomography(DensityMatrix::pure(full.amplitudes), settings);
}

/// rho = 2^-n sum_P t_P P without positivity correction.
inline DensityMatrix reconstruct_linear(const ExpectationTable& t) {
  const int n = t.num_qubits;
  if (n < 1) throw ArgumentError("reconstruct: empty table");
  const auto strings = detail::all_strings(n, "IXYZ");
  const Eigen::Index dim = Eigen::Index{1} << n;
  CMatrix rho = CMatrix::Zero(dim, dim);
  for (const auto& s : strings) {
    auto it = t.values.find(s);
    if (it == t.values.end()) throw ArgumentError("reconstruct: incomplete Pauli basis, missing " + s);
    const PauliString p(s);
    const SiteMask f = p.flip_mask();
    for (SiteMask x = 0; x < static_cast<SiteMask>(dim); ++x)
      rho(static_cast<Eigen::Index>(x ^ f), static_cast<Eigen::Index>(x)) += it->second * p.phase(x);
  }
  return DensityMatrix(rho / static_cast<double>(dim));
}

/// Linear inversion followed by projection onto the nearest density matrix.
inline DensityMatrix reconstruct(const ExpectationTable& t) { return reconstruct_linear(t).psd_projected(); }

inline constexpr double kPhaseThreshold = 1e-6;

/// atan2(<Y>, <X>) in (-pi, pi].
inline double xy_phase(const DensityMatrix& rho, double threshold = kPhaseThreshold) {
  if (rho.num_qubits() != 1) throw ArgumentError("xy_phase: single-qubit state required");
  const double x = 2.0 * rho(1, 0).real();
  const double y = 2.0 * rho(1, 0).imag();
  if (std::hypot(x, y) < threshold) throw UndefinedPhaseError("xy_phase: transverse Bloch component vanishes");
  const double a = std::atan2(y, x);
  return a <= -kPi ? kPi : a;
}

/// Wraps an angle into (-pi, pi].
inline double wrap_phase(double a) {
  a = std::remainder(a, 2.0 * kPi);
  return a <= -kPi ? a + 2.0 * kPi : a;
}

/// <psi|rho|psi>.
inline double fidelity(const DensityMatrix& rho, const CVector& target) {
  if (target.size() != rho.dimension()) throw ArgumentError("fidelity: dimension mismatch");
  return (target.adjoint() * rho.matrix() * target)(0).real();
}

inline double fidelity(const DensityMatrix& rho, const StateVector& target) {
  const StateVector full = target.basis.is_sector() ? embed_sector_state(target) : target;
  return fidelity(rho, full.amplitudes);
}

struct FidelityReport {
  double fidelity = 0.0;
  double fidelity_opt = 0.0;
  double phi_star = 0.0;  // Z angle on the designated qubit, (-pi, pi]
};

/// Maximises the fidelity over Z(phi) = diag(1, e^{i phi}) on `site`: a 1 mrad scan followed
/// by golden-section refinement.
inline FidelityReport fidelity_opt_z(const DensityMatrix& rho, const CVector& target, int site = 0) {
  const int n = rho.num_qubits();
  if (site < 0 || site >= n) throw ArgumentError("fidelity_opt_z: site out of range");
  if (target.size() != rho.dimension()) throw ArgumentError("fidelity_opt_z: dimension mismatch");
  // F(phi) = c0 + 2 Re(c1 e^{i phi}).
  const SiteMask bit = SiteMask{1} << (n - 1 - site);
  double c0 = 0.0;
  cplx c1 = 0.0;
  for (Eigen::Index x = 0; x < rho.dimension(); ++x)
    for (Eigen::Index y = 0; y < rho.dimension(); ++y) {
      const cplx term = std::conj(target(x)) * rho(x, y) * target(y);
      const bool bx = static_cast<SiteMask>(x) & bit, by = static_cast<SiteMask>(y) & bit;
      if (bx == by) c0 += term.real();
      else if (bx) c1 += term;
    }
  auto f = [&](double phi) { return c0 + 2.0 * (c1 * std::exp(cplx(0, phi))).real(); };

  FidelityReport r;
  r.fidelity = f(0.0);
  double best_phi = 0.0, best = r.fidelity;
  const int steps = static_cast<int>(std::floor(kPi / 1e-3));
  for (int k = -steps; k <= steps; ++k) {
    const double phi = k * 1e-3;
    const double v = f(phi);
    if (v > best) {
      best = v;
      best_phi = phi;
    }
  }
  constexpr double gr = 0.6180339887498949;
  double a = best_phi - 1e-3, b = best_phi + 1e-3;
  for (int it = 0; it < 60; ++it) {
    const double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    if (f(x1) > f(x2)) b = x2;
    else a = x1;
  }
  const double refined = 0.5 * (a + b);
  if (f(refined) > best) {
    best = f(refined);
    best_phi = refined;
  }
  r.fidelity_opt = std::max(best, r.fidelity);
  r.phi_star = r.fidelity_opt > r.fidelity ? wrap_phase(best_phi) : 0.0;
  return r;
}

/// (|0...0> + e^{i phase} |1...1>) / sqrt 2.
inline CVector ghz_state(int num_qubits, double branch_phase = 0.0) {
  const Eigen::Index dim = Eigen::Index{1} << num_qubits;
  CVector v = CVector::Zero(dim);
  v(0) = 1.0 / std::sqrt(2.0);
  v(dim - 1) = std::exp(cplx(0, branch_phase)) / std::sqrt(2.0);
  return v;
}

}  // namespace pstsim
