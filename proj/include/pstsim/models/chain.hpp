#pragma once

// Chain models: coupled-qubit chain with detunings and ZZ terms, the perfect-state-transfer
// coupling profile, fractional-transfer profiles, the parity-dependent effective Hamiltonian
// and the dense P-iSWAP product.
//
// Units: angular frequency (rad/s) and seconds throughout. Evolution is exp(-iHt).
// Sites are 0-based; pair n couples with its mirror N-1-n.

#include <cmath>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "pstsim/statespace.hpp"

namespace pstsim {

/// H = -sum d_n/2 Z_n + sum J_n (s-_n s+_{n+1} + h.c.) + sum zeta_i n_i n_{i'}, i' = (i+1) mod N.
struct ChainSpec {
  int length = 0;
  double transfer_time = 0.0;
  std::vector<double> couplings;   // N-1
  std::vector<double> detunings;   // N
  std::vector<double> zz;          // N; the last entry closes the ring (site N-1 with site 0)

  void validate() const {
    if (length < 2) throw ArgumentError("chain: length must be >= 2");
    if (!(transfer_time > 0.0) || !std::isfinite(transfer_time)) throw ArgumentError("chain: transfer time must be > 0");
    if (static_cast<int>(couplings.size()) != length - 1) throw ArgumentError("chain: need N-1 couplings");
    if (static_cast<int>(detunings.size()) != length) throw ArgumentError("chain: need N detunings");
    if (static_cast<int>(zz.size()) != length) throw ArgumentError("chain: need N zz strengths");
    for (const auto* v : {&couplings, &detunings, &zz})
      for (double x : *v)
        if (!std::isfinite(x)) throw ArgumentError("chain: non-finite parameter");
  }

  bool mirror_symmetric(double tol = 0.0) const {
    for (int n = 0; n < length - 1; ++n)
      if (std::abs(couplings[n] - couplings[length - 2 - n]) > tol) return false;
    return true;
  }
};

/// J_n = (pi / 2 tau) sqrt(n (N - n)), n = 1..N-1.
inline std::vector<double> pst_couplings(int num_sites, double tau) {
  if (num_sites < 2) throw ArgumentError("pst_couplings: N must be >= 2");
  if (!(tau > 0.0)) throw ArgumentError("pst_couplings: tau must be > 0");
  std::vector<double> j(num_sites - 1);
  const double scale = kPi / (2.0 * tau);
  for (int n = 1; n < num_sites; ++n) {
    // n(N-n) is symmetric under n -> N-n, so mirrored entries are bit-identical.
    j[n - 1] = scale * std::sqrt(static_cast<double>(n * (num_sites - n)));
  }
  return j;
}

inline ChainSpec pst_chain(int num_sites, double tau) {
  ChainSpec s;
  s.length = num_sites;
  s.transfer_time = tau;
  s.couplings = pst_couplings(num_sites, tau);
  s.detunings.assign(num_sites, 0.0);
  s.zz.assign(num_sites, 0.0);
  return s;
}

struct FstProfile {
  std::vector<double> couplings;
  std::vector<double> detunings;
};

/// Which case formula is used for even and odd N. `standard` applies the detuning-free
/// formula to even N; `swapped` exchanges them. Only `standard` transfers sin^2(theta/2).
enum class FstAssignment { standard, swapped };

/// Couplings and detunings transferring the fraction sin^2(theta/2) between mirror sites at tau.
inline FstProfile fst_profile(int num_sites, double tau, double theta,
                              FstAssignment assignment = FstAssignment::standard) {
  if (num_sites < 2) throw ArgumentError("fst_profile: N must be >= 2");
  if (!(tau > 0.0)) throw ArgumentError("fst_profile: tau must be > 0");
  if (!(theta >= 0.0 && theta <= kPi)) throw ArgumentError("fst_profile: theta must lie in [0, pi]");
  const int N = num_sites;
  const double t = theta / kPi;
  const double c = kPi / (2.0 * tau);
  const bool even_formula = (N % 2 == 0) == (assignment == FstAssignment::standard);

  FstProfile p;
  p.couplings.resize(N - 1);
  p.detunings.assign(N, 0.0);
  for (int n = 1; n < N; ++n) {
    const double m = N - 2 * n;
    double num = 0.0;
    double den = 0.0;
    if (even_formula) {
      num = static_cast<double>(n * (N - n)) * (m * m - t * t);
      den = static_cast<double>((N - 1 - 2 * n) * (N + 1 - 2 * n));
    } else {
      num = static_cast<double>(n * (N - n)) * (m * m - (t - 1.0) * (t - 1.0));
      den = m * m;
    }
    if (den == 0.0) throw ProfileInfeasibleError("fst_profile: singular coupling formula at n=" + std::to_string(n));
    const double arg = num / den;
    if (arg < 0.0 || !std::isfinite(arg))
      throw ProfileInfeasibleError("fst_profile: negative square-root argument at n=" + std::to_string(n));
    p.couplings[n - 1] = c * std::sqrt(arg);
  }
  if (!even_formula) {
    for (int n = 1; n <= N; ++n) {
      const int d1 = 2 * n - N;
      const int d2 = 2 * n - 2 - N;
      if (d1 == 0 || d2 == 0)
        throw ProfileInfeasibleError("fst_profile: singular detuning formula at n=" + std::to_string(n));
      p.detunings[n - 1] = c * (t - 1.0) * (N / 2.0) * (1.0 / d1 - 1.0 / d2);
    }
  }
  return p;
}

inline ChainSpec fst_chain(int num_sites, double tau, double theta,
                           FstAssignment assignment = FstAssignment::standard) {
  auto p = fst_profile(num_sites, tau, theta, assignment);
  ChainSpec s;
  s.length = num_sites;
  s.transfer_time = tau;
  s.couplings = std::move(p.couplings);
  s.detunings = std::move(p.detunings);
  s.zz.assign(num_sites, 0.0);
  return s;
}

namespace detail {

inline void check_chain_basis(const Basis& basis, int num_sites) {
  if (!basis.is_qubit() || basis.num_sites() != num_sites)
    throw ArgumentError("Hamiltonian basis must be a qubit basis over the chain's sites");
}

}  // namespace detail

/// Chain Hamiltonian in a qubit basis (full space or one excitation sector).
inline SparseOperator build_chain_hamiltonian(const ChainSpec& spec, const Basis& basis) {
  spec.validate();
  const int N = spec.length;
  detail::check_chain_basis(basis, N);
  std::vector<SparseOperator::Triplet> t;
  t.reserve(basis.dimension() * static_cast<std::size_t>(N));
  for (std::size_t i = 0; i < basis.dimension(); ++i) {
    const SiteMask m = basis.mask(i);
    const auto ii = static_cast<Eigen::Index>(i);
    double diag = 0.0;
    for (int n = 0; n < N; ++n) {
      const bool on = m & basis.site_bit(n);
      diag += -0.5 * spec.detunings[n] * (on ? -1.0 : 1.0);
      const int np = (n + 1) % N;
      if (spec.zz[n] != 0.0 && on && (m & basis.site_bit(np))) diag += spec.zz[n];
    }
    if (diag != 0.0) t.emplace_back(ii, ii, diag);
    for (int n = 0; n + 1 < N; ++n) {
      const SiteMask a = basis.site_bit(n);
      const SiteMask b = basis.site_bit(n + 1);
      if (static_cast<bool>(m & a) == static_cast<bool>(m & b) || spec.couplings[n] == 0.0) continue;
      t.emplace_back(static_cast<Eigen::Index>(basis.index(m ^ a ^ b)), ii, spec.couplings[n]);
    }
  }
  return SparseOperator::from_triplets(basis, t, true);
}

/// (theta / 2 tau) sum_n (prod_{inner k} Z_k)(s-_n s+_ntilde + h.c.) over mirror pairs.
inline SparseOperator build_effective_pst_hamiltonian(int num_sites, double tau, double theta, const Basis& basis) {
  if (num_sites < 2) throw ArgumentError("effective Hamiltonian: N must be >= 2");
  if (!(tau > 0.0)) throw ArgumentError("effective Hamiltonian: tau must be > 0");
  detail::check_chain_basis(basis, num_sites);
  const int N = num_sites;
  const double strength = theta / (2.0 * tau);
  std::vector<SparseOperator::Triplet> t;
  for (std::size_t i = 0; i < basis.dimension(); ++i) {
    const SiteMask m = basis.mask(i);
    for (int n = 0; n < N / 2; ++n) {
      const SiteMask a = basis.site_bit(n);
      const SiteMask b = basis.site_bit(N - 1 - n);
      if (static_cast<bool>(m & a) == static_cast<bool>(m & b)) continue;
      SiteMask inner = 0;
      for (int k = n + 1; k < N - 1 - n; ++k) inner |= basis.site_bit(k);
      const double sign = (std::popcount(m & inner) % 2) ? -1.0 : 1.0;
      t.emplace_back(static_cast<Eigen::Index>(basis.index(m ^ a ^ b)), static_cast<Eigen::Index>(i), sign * strength);
    }
  }
  return SparseOperator::from_triplets(basis, t, true);
}

/// Phases of the P-iSWAP product: pair n maps |10> -> pair[n] P |01>, the odd-N centre picks up `centre`.
struct PstPhases {
  int num_sites = 0;
  std::vector<cplx> pair;
  cplx centre{1.0, 0.0};
};

/// exp(-i H tau) of a real symmetric matrix via its eigendecomposition.
inline CMatrix real_symmetric_propagator(const Eigen::MatrixXd& h, double t) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  const Eigen::VectorXcd ph = (-kI * t * es.eigenvalues().cast<cplx>()).array().exp();
  const CMatrix v = es.eigenvectors().cast<cplx>();
  return v * ph.asDiagonal() * v.transpose();
}

/// Pair and centre phases read off the single-excitation block of exp(-i H_chain tau) for the
/// ideal PST chain. Computed once per N and cached.
inline PstPhases pst_phases(int num_sites) {
  if (num_sites < 2 || num_sites > kMaxSites) throw ArgumentError("pst_phases: N out of range");
  static std::mutex mu;
  static std::map<int, PstPhases> cache;
  std::lock_guard<std::mutex> lock(mu);
  if (auto it = cache.find(num_sites); it != cache.end()) return it->second;

  const int N = num_sites;
  const auto j = pst_couplings(N, 1.0);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(N, N);
  for (int n = 0; n + 1 < N; ++n) h(n, n + 1) = h(n + 1, n) = j[n];
  const CMatrix u = real_symmetric_propagator(h, 1.0);
  PstPhases p;
  p.num_sites = N;
  for (int n = 0; n < N / 2; ++n) {
    const cplx a = u(N - 1 - n, n);
    p.pair.push_back(a / std::abs(a));
  }
  if (N % 2) {
    const cplx a = u(N / 2, N / 2);
    p.centre = a / std::abs(a);
  }
  cache.emplace(N, p);
  return p;
}

/// Phases of the product written with e^{+i P pi/2} per pair and an untouched centre.
inline PstPhases pst_phases_gate_frame(int num_sites) {
  if (num_sites < 2 || num_sites > kMaxSites) throw ArgumentError("pst_phases_gate_frame: N out of range");
  PstPhases p;
  p.num_sites = num_sites;
  p.pair.assign(num_sites / 2, kI);
  return p;
}

inline SiteMask mirror_mask(SiteMask m, int num_sites) {
  SiteMask r = 0;
  for (int s = 0; s < num_sites; ++s)
    if (m & (SiteMask{1} << s)) r |= SiteMask{1} << (num_sites - 1 - s);
  return r;
}

/// Amplitude and target of the P-iSWAP product acting on computational state `m`.
inline std::pair<SiteMask, cplx> piswap_product_action(const PstPhases& ph, SiteMask m) {
  const int N = ph.num_sites;
  auto bit = [N](int s) { return SiteMask{1} << (N - 1 - s); };
  cplx amp = 1.0;
  for (int n = 0; n < N / 2; ++n) {
    const bool a = m & bit(n);
    const bool b = m & bit(N - 1 - n);
    if (!a && !b) continue;
    if (a && b) {
      amp *= -ph.pair[n] * ph.pair[n];
      continue;
    }
    SiteMask inner = 0;
    for (int k = n + 1; k < N - 1 - n; ++k) inner |= bit(k);
    amp *= ph.pair[n] * ((std::popcount(m & inner) % 2) ? -1.0 : 1.0);
  }
  if (N % 2 && (m & bit(N / 2))) amp *= ph.centre;
  return {mirror_mask(m, N), amp};
}

inline constexpr int kDenseMaxSites = 12;

/// Dense 2^N matrix of the P-iSWAP product with the given phases.
inline CMatrix piswap_product(const PstPhases& ph) {
  if (ph.num_sites > kDenseMaxSites) throw ResourceError("piswap_product: 2^N exceeds the dense guard");
  const auto dim = Eigen::Index{1} << ph.num_sites;
  CMatrix u = CMatrix::Zero(dim, dim);
  for (SiteMask x = 0; x < static_cast<SiteMask>(dim); ++x) {
    const auto [y, a] = piswap_product_action(ph, x);
    u(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)) = a;
  }
  return u;
}

/// The PST operation in the chain's own frame: equals exp(-i H_chain tau) up to a global phase.
inline CMatrix pst_unitary(int num_sites) { return piswap_product(pst_phases(num_sites)); }

inline CMatrix pst_unitary_gate_frame(int num_sites) { return piswap_product(pst_phases_gate_frame(num_sites)); }

/// Per-site phases g_s with pst_unitary = (tensor diag(1, g_s)) * pst_unitary_gate_frame.
inline std::vector<cplx> pst_frame_phases(int num_sites) {
  const PstPhases chain = pst_phases(num_sites);
  const PstPhases gate = pst_phases_gate_frame(num_sites);
  std::vector<cplx> g(num_sites);
  for (int n = 0; n < num_sites / 2; ++n) g[n] = g[num_sites - 1 - n] = chain.pair[n] / gate.pair[n];
  if (num_sites % 2) g[num_sites / 2] = chain.centre / gate.centre;
  return g;
}

}  // namespace pstsim
