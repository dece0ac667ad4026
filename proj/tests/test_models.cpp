#include <catch_amalgamated.hpp>

#include <random>

#include "pstsim/evolution.hpp"
#include "pstsim/models/chain.hpp"
#include "pstsim/models/device.hpp"
#include "pstsim/models/lattice.hpp"

using namespace pstsim;
using Catch::Approx;

namespace {

// Dense Kronecker-product construction used as an independent oracle.
CMatrix single_site(const CMatrix& op, int site, int n) {
  CMatrix m = CMatrix::Identity(1, 1);
  for (int k = 0; k < n; ++k) {
    const CMatrix f = k == site ? op : CMatrix(CMatrix::Identity(2, 2));
    CMatrix r(m.rows() * 2, m.cols() * 2);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) r.block(2 * i, 2 * j, 2, 2) = m(i, j) * f;
    m = r;
  }
  return m;
}

CMatrix sigma_minus() {
  CMatrix s = CMatrix::Zero(2, 2);
  s(0, 1) = 1.0;
  return s;
}

CMatrix pauli_z() {
  CMatrix z = CMatrix::Zero(2, 2);
  z(0, 0) = 1.0;
  z(1, 1) = -1.0;
  return z;
}

CMatrix oracle_chain(int n, const std::vector<double>& j, const std::vector<double>& d) {
  const Eigen::Index dim = Eigen::Index{1} << n;
  CMatrix h = CMatrix::Zero(dim, dim);
  for (int k = 0; k + 1 < n; ++k) {
    const CMatrix t = single_site(sigma_minus(), k, n) * single_site(sigma_minus().adjoint(), k + 1, n);
    h += j[k] * (t + t.adjoint());
  }
  for (int k = 0; k < n; ++k) h += -d[k] / 2.0 * single_site(pauli_z(), k, n);
  return h;
}

CMatrix oracle_effective(int n, double tau, double theta) {
  const Eigen::Index dim = Eigen::Index{1} << n;
  CMatrix h = CMatrix::Zero(dim, dim);
  for (int k = 0; k < n / 2; ++k) {
    CMatrix p = CMatrix::Identity(dim, dim);
    for (int q = k + 1; q < n - 1 - k; ++q) p = p * single_site(pauli_z(), q, n);
    const CMatrix t = single_site(sigma_minus(), k, n) * single_site(sigma_minus().adjoint(), n - 1 - k, n);
    h += theta / (2 * tau) * p * (t + t.adjoint());
  }
  return h;
}

double mirror_fraction(const ChainSpec& spec) {
  const Basis b = Basis::sector(spec.length, 1);
  const CMatrix u = propagator(build_chain_hamiltonian(spec, b), spec.transfer_time);
  return std::norm(u(spec.length - 1, 0));
}

}  // namespace

TEST_CASE("PST couplings") {
  const auto j2 = pst_couplings(2, 1e-6);
  REQUIRE(j2.size() == 1);
  CHECK(j2[0] == Approx(kPi / 2e-6).epsilon(1e-15));

  const auto j6 = pst_couplings(6, 640e-9);
  const double khz[] = {873.5, 1104.9, 1171.9, 1104.9, 873.5};
  for (int n = 0; n < 5; ++n) CHECK(j6[n] / kTwoPi / 1e3 == Approx(khz[n]).margin(0.05));

  for (int n = 2; n <= 20; ++n) {
    const auto j = pst_couplings(n, 0.37e-6);
    for (int k = 0; k < n - 1; ++k) CHECK(j[k] == j[n - 2 - k]);
  }
  CHECK_THROWS_AS(pst_couplings(1, 1.0), ArgumentError);
}

TEST_CASE("FST profile reduces to PST at theta = pi") {
  for (int n = 2; n <= 9; ++n) {
    const auto p = fst_profile(n, 350e-9, kPi);
    const auto j = pst_couplings(n, 350e-9);
    for (int k = 0; k < n - 1; ++k) CHECK(std::abs(p.couplings[k] - j[k]) <= 1e-12 * j[k]);
    for (double d : p.detunings) CHECK(d == 0.0);
  }
  CHECK_THROWS_AS(fst_profile(4, 1.0, 3.2), ArgumentError);
}

TEST_CASE("FST case assignment selected by transfer-fraction verification") {
  const double thetas[] = {0.0, 0.2 * kPi, 0.5 * kPi, 0.6 * kPi, kPi};
  for (int n = 3; n <= 6; ++n)
    for (double th : thetas) {
      const double target = std::pow(std::sin(th / 2), 2);
      const double standard = mirror_fraction(fst_chain(n, 1.0, th, FstAssignment::standard));
      CHECK(std::abs(standard - target) < 1e-8);
    }
  // The exchanged assignment is singular or has no real solution, except where it coincides at theta = pi.
  int swapped_ok = 0, swapped_total = 0;
  for (int n = 3; n <= 6; ++n)
    for (double th : thetas) {
      if (th == kPi) continue;
      ++swapped_total;
      try {
        const double f = mirror_fraction(fst_chain(n, 1.0, th, FstAssignment::swapped));
        if (std::abs(f - std::pow(std::sin(th / 2), 2)) < 1e-8) ++swapped_ok;
      } catch (const ProfileInfeasibleError&) {
      }
    }
  CHECK(swapped_ok == 0);
  CHECK(swapped_total > 0);
}

TEST_CASE("FST examples") {
  CHECK(mirror_fraction(fst_chain(3, 350e-9, 0.6 * kPi)) == Approx(0.6545084971874737).margin(1e-9));
  const auto id = fst_chain(4, 1e-6, 0.0);
  const Basis b = Basis::sector(4, 1);
  const CMatrix u = propagator(build_chain_hamiltonian(id, b), id.transfer_time);
  CHECK(std::norm(u(0, 0)) == Approx(1.0).margin(1e-9));
}

TEST_CASE("chain Hamiltonian matrices") {
  ChainSpec s = pst_chain(2, 1.0);
  const double j = s.couplings[0];
  const CMatrix h2 = build_chain_hamiltonian(s, Basis::sector(2, 1)).dense();
  CHECK(std::abs(h2(0, 1) - j) < 1e-15);
  CHECK(std::abs(h2(1, 0) - j) < 1e-15);
  CHECK(std::abs(h2(0, 0)) < 1e-15);
  CHECK(std::abs(h2(1, 1)) < 1e-15);

  const ChainSpec s6 = pst_chain(6, 640e-9);
  const CMatrix h6 = build_chain_hamiltonian(s6, Basis::sector(6, 1)).dense();
  CMatrix hand = CMatrix::Zero(6, 6);
  for (int n = 0; n < 5; ++n) hand(n, n + 1) = hand(n + 1, n) = s6.couplings[n];
  CHECK((h6 - hand).norm() == 0.0);

  // Full-space assembly against the Kronecker oracle, with detunings.
  auto fst = fst_chain(5, 1.0, 0.6 * kPi);
  const CMatrix full = build_chain_hamiltonian(fst, Basis::qubits(5)).dense();
  CHECK((full - oracle_chain(5, fst.couplings, fst.detunings)).norm() < 1e-13);

  // Sector blocks agree with the full-space matrix.
  for (int k = 0; k <= 5; ++k) {
    const Basis sec = Basis::sector(5, k);
    const CMatrix blk = build_chain_hamiltonian(fst, sec).dense();
    for (std::size_t a = 0; a < sec.dimension(); ++a)
      for (std::size_t c = 0; c < sec.dimension(); ++c)
        CHECK(std::abs(blk(a, c) - full(sec.mask(a), sec.mask(c))) < 1e-15);
  }
}

TEST_CASE("ZZ term shifts the doubly excited pair level") {
  ChainSpec s = pst_chain(3, 1.0);
  const Basis b = Basis::sector(3, 2);
  const CMatrix h0 = build_chain_hamiltonian(s, b).dense();
  s.zz = {0.3, 0.0, 0.0};
  const CMatrix h1 = build_chain_hamiltonian(s, b).dense();
  const auto i110 = static_cast<Eigen::Index>(b.index(BasisLabel::from_bitstring("110")));
  CHECK(std::real(h1(i110, i110) - h0(i110, i110)) == Approx(0.3));
  CHECK((h1 - h0).norm() == Approx(0.3));

  // Two sites: the only doubly excited level moves by zeta, every other eigenvalue stays.
  ChainSpec p = pst_chain(2, 1.0);
  p.zz = {0.0, 0.0};
  Eigen::SelfAdjointEigenSolver<CMatrix> a(build_chain_hamiltonian(p, Basis::qubits(2)).dense());
  p.zz = {0.25, 0.0};
  Eigen::SelfAdjointEigenSolver<CMatrix> z(build_chain_hamiltonian(p, Basis::qubits(2)).dense());
  CHECK(z.eigenvalues().sum() - a.eigenvalues().sum() == Approx(0.25));
  const Eigen::VectorXd diff = z.eigenvalues() - a.eigenvalues();
  int moved = 0;
  for (Eigen::Index i = 0; i < diff.size(); ++i) {
    if (std::abs(diff(i) - 0.25) < 1e-12) ++moved;
    else CHECK(std::abs(diff(i)) < 1e-12);
  }
  CHECK(moved == 1);

  // The last entry closes the ring.
  ChainSpec r = pst_chain(3, 1.0);
  r.zz = {0.0, 0.0, 0.5};
  const CMatrix hr = build_chain_hamiltonian(r, Basis::qubits(3)).dense();
  CHECK(std::real(hr(0b101, 0b101)) == Approx(0.5));
}

TEST_CASE("Hamiltonians conserve excitation number") {
  ChainSpec s = fst_chain(6, 1.0, 0.5 * kPi);
  s.zz = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  const Basis b = Basis::qubits(6);
  const auto n = excitation_number_operator(b);
  CHECK(commutator_defect(build_chain_hamiltonian(s, b), n) < 1e-10);
  CHECK(commutator_defect(build_effective_pst_hamiltonian(6, 1.0, 0.7, b), n) < 1e-10);
  const auto lat = build_lattice_hamiltonian(pst_lattice(3, 2, 1.0));
  CHECK(commutator_defect(lat, excitation_number_operator(lat.basis())) < 1e-10);
}

TEST_CASE("effective parity Hamiltonian") {
  const double tau = 1.0;
  const CMatrix h2 = build_effective_pst_hamiltonian(2, tau, 0.8, Basis::qubits(2)).dense();
  CHECK(std::abs(h2(0b01, 0b10) - 0.4) < 1e-15);
  CHECK((h2 - oracle_effective(2, tau, 0.8)).norm() < 1e-15);

  // N = 3, theta = pi: only sites 1 and 3 couple, sign set by site 2.
  const CMatrix h3 = build_effective_pst_hamiltonian(3, tau, kPi, Basis::qubits(3)).dense();
  CHECK(std::abs(h3(0b001, 0b100) - kPi / 2) < 1e-15);
  CHECK(std::abs(h3(0b011, 0b110) + kPi / 2) < 1e-15);
  CHECK(std::abs(h3(0b010, 0b100)) == 0.0);
  CHECK(std::abs(h3(0b001, 0b010)) == 0.0);
  CHECK(h3.diagonal().norm() == 0.0);

  // N = 4 in the two-excitation sector.
  const Basis s42 = Basis::sector(4, 2);
  const CMatrix h4 = build_effective_pst_hamiltonian(4, tau, kPi, s42).dense();
  auto el = [&](const char* a, const char* c) {
    return h4(static_cast<Eigen::Index>(s42.index(BasisLabel::from_bitstring(a))),
              static_cast<Eigen::Index>(s42.index(BasisLabel::from_bitstring(c))));
  };
  CHECK(std::abs(el("0110", "1100")) == 0.0);
  const CMatrix h41 = build_effective_pst_hamiltonian(4, tau, kPi, Basis::sector(4, 1)).dense();
  const cplx even = h41(3, 0);  // <0001|H|1000>
  CHECK(std::abs(el("0101", "1100") + even) < 1e-15);
  CHECK(std::abs(even - kPi / 2) < 1e-15);

  for (int n = 2; n <= 7; ++n)
    CHECK((build_effective_pst_hamiltonian(n, 0.3, 1.1, Basis::qubits(n)).dense() - oracle_effective(n, 0.3, 1.1))
              .norm() < 1e-13);
}

TEST_CASE("P-iSWAP product") {
  for (int n = 2; n <= 8; ++n) {
    const CMatrix u = pst_unitary(n);
    const auto dim = u.rows();
    CHECK((u.adjoint() * u - CMatrix::Identity(dim, dim)).cwiseAbs().maxCoeff() < 1e-12);
    const CMatrix u2 = u * u;
    CHECK((u2 - CMatrix(u2.diagonal().asDiagonal())).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((u2.diagonal().cwiseAbs().array() - 1.0).abs().maxCoeff() < 1e-12);
  }

  // N = 2 is an iSWAP with phase -i under exp(-iHt).
  const CMatrix u2 = pst_unitary(2);
  CHECK(std::abs(u2(0b01, 0b10) - cplx(0, -1)) < 1e-12);
  CHECK(std::abs(u2(0b11, 0b11) - 1.0) < 1e-12);

  // N = 3 in the e^{+iP pi/2} frame: even parity gives +i, odd parity -i.
  const CMatrix p3 = pst_unitary_gate_frame(3);
  CHECK(std::abs(p3(0b001, 0b100) - cplx(0, 1)) < 1e-15);
  CHECK(std::abs(p3(0b011, 0b110) - cplx(0, -1)) < 1e-15);
  // Chain frame: the transferred amplitude relative to the untransferred reference flips with parity.
  const CMatrix c3 = pst_unitary(3);
  const cplx even_rel = c3(0b001, 0b100) / c3(0b000, 0b000);
  const cplx odd_rel = c3(0b011, 0b110) / c3(0b010, 0b010);
  CHECK(std::abs(even_rel + odd_rel) < 1e-12);
}

TEST_CASE("stroboscopic equivalence of chain and P-iSWAP product") {
  for (int n = 2; n <= 8; ++n) {
    const ChainSpec s = pst_chain(n, 1.0);
    const CMatrix u = propagator(build_chain_hamiltonian(s, Basis::qubits(n)), 1.0);
    const auto cmp = stroboscopic_compare(u, pst_unitary(n));
    CHECK(cmp.distance < 1e-9);
  }
}

TEST_CASE("cached phases agree with the closed forms") {
  for (int n = 2; n <= 10; ++n) {
    const auto ph = pst_phases(n);
    const cplx s = std::pow(cplx(0, -1), n - 1);
    for (const auto& p : ph.pair) CHECK(std::abs(p - s) < 1e-12);
    if (n % 2) CHECK(std::abs(ph.centre - s) < 1e-12);
    const auto g = pst_frame_phases(n);
    for (int k = 0; k < n; ++k) {
      const cplx expect = (n % 2 && k == n / 2) ? s : std::pow(cplx(0, -1), n);
      CHECK(std::abs(g[k] - expect) < 1e-12);
    }
  }
  // Frame relation on the dense operators.
  for (int n = 2; n <= 7; ++n) {
    const auto g = pst_frame_phases(n);
    const Eigen::Index dim = Eigen::Index{1} << n;
    CVector d(dim);
    for (Eigen::Index x = 0; x < dim; ++x) {
      cplx p = 1.0;
      for (int k = 0; k < n; ++k)
        if (x & (Eigen::Index{1} << (n - 1 - k))) p *= g[k];
      d(x) = p;
    }
    CHECK((pst_unitary(n) - d.asDiagonal() * pst_unitary_gate_frame(n)).norm() < 1e-12);
  }
}

TEST_CASE("FST chain matches the effective form up to a local Z frame") {
  for (int n = 2; n <= 7; ++n)
    for (double th : {0.2 * kPi, 0.5 * kPi, 0.6 * kPi, kPi}) {
      const ChainSpec s = fst_chain(n, 1.0, th);
      const CMatrix u = propagator(build_chain_hamiltonian(s, Basis::qubits(n)), 1.0);
      const CMatrix ue = propagator(build_effective_pst_hamiltonian(n, 1.0, th, Basis::qubits(n)), 1.0);
      const auto f = fit_local_z_frame(u, ue, n);
      CHECK(f.distance < 1e-8);
      for (int k = 0; k < n; ++k) {
        cplx expect = std::pow(cplx(0, -1), n - 2);
        if (n % 2 && k == n / 2) expect *= std::exp(cplx(0, -th / 2));
        CHECK(std::abs(f.site[k] - expect) < 1e-8);
      }
    }
}

TEST_CASE("lattice Hamiltonian") {
  const auto spec = pst_lattice(2, 2, 1.0);
  const auto h = build_lattice_hamiltonian(spec);
  CHECK(h.dimension() == 4);
  const CMatrix u = propagator(h, 1.0);
  CHECK(std::norm(u(spec.site(1, 1), spec.site(0, 0))) == Approx(1.0).margin(1e-12));

  // Separable: H = Hx (x) I + I (x) Hy.
  const auto s3 = pst_lattice(3, 4, 1.0);
  const CMatrix hl = build_lattice_hamiltonian(s3).dense();
  const CMatrix hx = build_chain_hamiltonian(pst_chain(3, 1.0), Basis::sector(3, 1)).dense();
  const CMatrix hy = build_chain_hamiltonian(pst_chain(4, 1.0), Basis::sector(4, 1)).dense();
  CMatrix kron = CMatrix::Zero(12, 12);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) kron.block(4 * a, 4 * b, 4, 4) += hx(a, b) * CMatrix::Identity(4, 4);
  for (int a = 0; a < 3; ++a) kron.block(4 * a, 4 * a, 4, 4) += hy;
  CHECK((hl - kron).norm() < 1e-14);

  const auto big = pst_lattice(9, 7, 1e-6);
  const CMatrix ub = propagator(build_lattice_hamiltonian(big), 1e-6);
  CHECK(std::norm(ub(big.site(8, 6), big.site(0, 0))) > 1 - 1e-6);
  CHECK(std::norm(ub(big.site(4, 3), big.site(4, 3))) > 1 - 1e-9);
}

TEST_CASE("coupler flux model") {
  const auto dev = DeviceSpec::defaults();
  for (const auto& c : dev.couplers) {
    CHECK(coupler_frequency(c, 0.0) == Approx(c.freq_max).epsilon(1e-12));
    CHECK(coupler_frequency(c, 0.5) == Approx(c.freq_min).epsilon(1e-12));
    CHECK(coupler_frequency(c, 1.0) == Approx(c.freq_max).epsilon(1e-12));
    CHECK(std::abs(coupler_frequency_derivative(c, 0.0, 1)) < 1e-6 * c.freq_max);
    // Monotone decrease between the sweet spots.
    CHECK(coupler_frequency_derivative(c, 0.2, 1) < 0.0);
  }
}

TEST_CASE("parametric coupling estimate") {
  const auto dev = DeviceSpec::defaults();
  DriveConfig d{0, 0.0, 0.0, 1, 0.0};
  CHECK(effective_coupling_estimate(dev, 0, d) == 0.0);
  d.amplitude = 0.02;
  const double j1 = effective_coupling_estimate(dev, 0, d);
  d.amplitude = 0.04;
  CHECK(effective_coupling_estimate(dev, 0, d) == Approx(2 * j1).epsilon(1e-12));
  d.harmonic = 2;
  const double k2a = effective_coupling_estimate(dev, 0, d);
  d.amplitude = 0.08;
  CHECK(effective_coupling_estimate(dev, 0, d) == Approx(4 * k2a).epsilon(1e-12));

  // Oracle: the analytic derivative of the flux model.
  const auto& c = dev.couplers[0];
  const double ec = -c.anharmonicity, top = c.freq_max + ec;
  const double r = (c.freq_min + ec) / top, dd = r * r * r * r;
  const double phi = c.phi_dc;
  const double inner = dd + (1 - dd) * std::pow(std::cos(kPi * phi), 2);
  const double deriv = top * 0.25 * std::pow(inner, -0.75) * (1 - dd) * (-2 * kPi * std::cos(kPi * phi) * std::sin(kPi * phi));
  const double delta = kTwoPi * (dev.qubits[0].frequency - dev.qubits[1].frequency);
  const double oracle = kTwoPi * deriv * kTwoPi * dev.g_next[0] * kTwoPi * dev.g_prev[1] / (delta * delta) * 0.02 / 2;
  CHECK(j1 == Approx(oracle).epsilon(1e-8));

  auto degenerate = dev;
  degenerate.qubits[1].frequency = degenerate.qubits[0].frequency;
  d = {0, 0.02, 0.0, 1, 0.0};
  CHECK_THROWS_AS(effective_coupling_estimate(degenerate, 0, d), DegeneratePairError);
}

TEST_CASE("hybridization ratios") {
  const auto r = hybridization_ratios(DeviceSpec::defaults());
  REQUIRE(r.size() == 4);
  int above = 0;
  for (const auto& h : r) {
    if (h.qubit_a == 2 && h.qubit_b == 3) {
      CHECK(h.ratio == Approx(8.3 / 40.0).epsilon(1e-9));
      CHECK(h.ratio > 0.1);
      ++above;
    } else {
      CHECK(h.ratio < 0.02);
    }
  }
  CHECK(above == 1);
}

TEST_CASE("crosstalk compensation") {
  const Eigen::VectorXd target = Eigen::VectorXd::LinSpaced(6, 0.1, 0.35);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(6);
  CHECK((crosstalk_compensation(Eigen::MatrixXd::Identity(6, 6), target, zero) - target).norm() == 0.0);
  CHECK(crosstalk_compensation(Eigen::MatrixXd::Identity(6, 6), target, target).norm() == 0.0);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(6, 6) * 2.0;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) m(i, j) += u(rng);
  Eigen::VectorXd off(6);
  for (int i = 0; i < 6; ++i) off(i) = u(rng);
  const Eigen::VectorXd v = crosstalk_compensation(m, target, off);
  CHECK((m * v + off - target).lpNorm<Eigen::Infinity>() < 1e-10);

  Eigen::MatrixXd singular = Eigen::MatrixXd::Ones(6, 6);
  CHECK_THROWS_AS(crosstalk_compensation(singular, target, zero), NumericalError);
}

TEST_CASE("device Hamiltonian") {
  const auto dev = DeviceSpec::defaults();
  const auto sub = DeviceSubset::chain(dev, 0, 3);
  std::vector<DriveConfig> drives = {{0, 0.05, kTwoPi * 440e6, 1, 0.0}, {1, 0.04, kTwoPi * 340e6, 1, 0.3}};
  const DeviceHamiltonian h(dev, sub, drives);
  CHECK(h.basis().dimension() == 243);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ut(0.0, 1e-6);
  for (int i = 0; i < 100; ++i) {
    const auto op = h.at(ut(rng));
    CHECK(op.hermiticity_defect() <= 1e-12 * op.max_abs_entry());
  }
  // apply() agrees with the materialised operator.
  CVector v = CVector::Random(243);
  CVector out;
  h.apply(3.7e-8, v, out);
  CHECK((out - h.at(3.7e-8).apply(v)).norm() < 1e-12 * out.norm());

  DeviceModelOptions small;
  small.dimension_guard = 100;
  CHECK_THROWS_AS(DeviceHamiltonian(dev, sub, drives, small), ResourceError);
  small.allow_large = true;
  CHECK_NOTHROW(DeviceHamiltonian(dev, sub, drives, small));
}

TEST_CASE("undriven device eigenstates follow the bare qubit states") {
  const auto dev = DeviceSpec::defaults();
  const auto sub = DeviceSubset::chain(dev, 0, 3);
  const DeviceHamiltonian h(dev, sub, {});
  Eigen::SelfAdjointEigenSolver<CMatrix> es(h.at(0.0).dense());
  for (int k = 0; k < 3; ++k) {
    const auto idx = static_cast<Eigen::Index>(h.single_qubit_excitation(k));
    const double best = es.eigenvectors().row(idx).cwiseAbs2().maxCoeff();
    CHECK(best > 0.99);
  }
}
