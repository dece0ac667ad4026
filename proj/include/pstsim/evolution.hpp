#pragma once

// Time evolution: dense propagators, Krylov propagation, RK4 for time-dependent
// Hamiltonians, relaxation terms and stroboscopic comparison of unitaries.

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "pstsim/models/device.hpp"
#include "pstsim/statespace.hpp"

namespace pstsim {

inline constexpr std::size_t kDenseGuard = 4096;

enum class EvolutionMethod { dense_expm, krylov, rk4 };

struct EvolutionOptions {
  EvolutionMethod method = EvolutionMethod::dense_expm;
  double dt = 0.0;  // rk4 step; 0 selects the default rule
  int krylov_dimension = 30;
  double krylov_tolerance = 1e-10;
  bool track_norm = true;
  std::size_t dense_guard = kDenseGuard;

  void validate() const {
    if (dt < 0.0 || !std::isfinite(dt)) throw ArgumentError("evolution: dt must be >= 0");
    if (krylov_dimension < 2) throw ArgumentError("evolution: krylov dimension must be >= 2");
  }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<StateVector> states;
  Eigen::MatrixXd populations;  // time x site
  std::vector<double> norms;

  int num_sites() const { return static_cast<int>(populations.cols()); }
  double population(std::size_t time_index, int site) const {
    return populations(static_cast<Eigen::Index>(time_index), site);
  }
};

/// U = exp(-i H t) by scaling and squaring with a Pade approximant.
inline CMatrix propagator(const SparseOperator& h, double t, std::size_t guard = kDenseGuard) {
  if (h.dimension() > guard) throw ResourceError("propagator: dimension exceeds the dense guard");
  const CMatrix a = (-kI * t) * h.dense();
  CMatrix u = a.exp();
  if (!u.allFinite()) throw NumericalError("propagator: non-finite result");
  return u;
}

namespace detail {

inline void check_finite(const CVector& v) {
  if (!v.allFinite()) throw NumericalError("evolution: non-finite amplitudes");
}

inline void record(Trajectory& tr, double t, const StateVector& s) {
  tr.times.push_back(t);
  tr.states.push_back(s);
  tr.norms.push_back(s.norm());
  const auto pops = s.site_populations();
  const auto row = static_cast<Eigen::Index>(tr.times.size() - 1);
  if (tr.populations.rows() <= row) tr.populations.conservativeResize(row + 1, static_cast<Eigen::Index>(pops.size()));
  for (std::size_t k = 0; k < pops.size(); ++k) tr.populations(row, static_cast<Eigen::Index>(k)) = pops[k];
}

inline void check_times(const std::vector<double>& times) {
  if (times.empty()) throw ArgumentError("evolution: no output times");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!std::isfinite(times[i])) throw ArgumentError("evolution: non-finite time");
    if (i > 0 && times[i] < times[i - 1]) throw ArgumentError("evolution: times must be ascending");
  }
}

}  // namespace detail

/// exp(-i H dt) v via Arnoldi projection; the step is split while the error estimate exceeds `tol`.
inline CVector krylov_expv(const SparseOperator& h, const CVector& v, double dt, int max_dim = 30, double tol = 1e-10) {
  const double beta0 = v.norm();
  if (beta0 == 0.0 || dt == 0.0) return v;
  const auto n = static_cast<Eigen::Index>(h.dimension());
  const int m_max = static_cast<int>(std::min<Eigen::Index>(max_dim, n));
  CVector w = v;
  double remaining = dt;
  double step = dt;
  int halvings = 0;
  while (remaining != 0.0) {
    if (std::abs(step) > std::abs(remaining)) step = remaining;
    const double beta = w.norm();
    CMatrix vb = CMatrix::Zero(n, m_max + 1);
    CMatrix hm = CMatrix::Zero(m_max + 1, m_max);
    vb.col(0) = w / beta;
    int m = m_max;
    bool breakdown = false;
    for (int j = 0; j < m_max; ++j) {
      CVector z = h.apply(vb.col(j));
      for (int i = 0; i <= j; ++i) {
        hm(i, j) = vb.col(i).dot(z);
        z -= hm(i, j) * vb.col(i);
      }
      const double hn = z.norm();
      hm(j + 1, j) = hn;
      if (hn < 1e-14 * std::max(1.0, hm.topLeftCorner(j + 1, j + 1).cwiseAbs().maxCoeff())) {
        m = j + 1;
        breakdown = true;
        break;
      }
      vb.col(j + 1) = z / hn;
    }
    const CMatrix e = ((-kI * step) * hm.topLeftCorner(m, m)).exp();
    const double err = breakdown ? 0.0 : beta * std::abs(hm(m, m - 1)) * std::abs(e(m - 1, 0));
    if (err > tol && halvings < 60) {
      step /= 2.0;
      ++halvings;
      continue;
    }
    w = beta * (vb.leftCols(m) * e.col(0));
    detail::check_finite(w);
    remaining -= step;
    if (std::abs(remaining) < 1e-15 * std::abs(dt)) remaining = 0.0;
  }
  return w;
}

/// Time-independent evolution from t = 0 to each requested time.
inline Trajectory evolve(const SparseOperator& h, const StateVector& psi0, const std::vector<double>& times,
                         const EvolutionOptions& opt = {}) {
  opt.validate();
  detail::check_times(times);
  if (!(psi0.basis == h.basis())) throw ArgumentError("evolve: state and Hamiltonian bases differ");
  Trajectory tr;
  CVector psi = psi0.amplitudes;
  double t_prev = 0.0;
  CMatrix u_cache;
  double cached_dt = std::numeric_limits<double>::quiet_NaN();
  for (double t : times) {
    const double dt = t - t_prev;
    if (dt != 0.0) {
      switch (opt.method) {
        case EvolutionMethod::dense_expm:
          if (dt != cached_dt) {
            u_cache = propagator(h, dt, opt.dense_guard);
            cached_dt = dt;
          }
          psi = u_cache * psi;
          break;
        case EvolutionMethod::krylov:
          psi = krylov_expv(h, psi, dt, opt.krylov_dimension, opt.krylov_tolerance);
          break;
        case EvolutionMethod::rk4:
          throw ArgumentError("evolve: rk4 requires a time-dependent Hamiltonian");
      }
      detail::check_finite(psi);
    }
    detail::record(tr, t, StateVector(psi0.basis, psi));
    t_prev = t;
  }
  return tr;
}

/// H(t) given through its action on a vector.
struct TimeDependentHamiltonian {
  Basis basis;
  std::function<void(double, const CVector&, CVector&)> apply;
  double max_frequency = 0.0;  // Hz, bound on |H_ij| / 2pi used for the default step

  static TimeDependentHamiltonian from_device(const DeviceHamiltonian& dh) {
    return {dh.basis(), [&dh](double t, const CVector& in, CVector& out) { dh.apply(t, in, out); },
            dh.max_frequency_scale()};
  }

  static TimeDependentHamiltonian constant(const SparseOperator& h) {
    return {h.basis(), [&h](double, const CVector& in, CVector& out) { out.noalias() = h.matrix() * in; },
            h.max_abs_entry() / (2.0 * kPi)};
  }
};

/// dt = min(1 / (50 f_max), span / 2000).
inline double default_rk4_step(double max_frequency, double span) {
  double dt = std::abs(span) / 2000.0;
  if (max_frequency > 0.0) dt = std::min(dt, 1.0 / (50.0 * max_frequency));
  return dt;
}

/// Classical RK4 on d psi/dt = -i H(t) psi, starting at t = 0.
inline Trajectory evolve(const TimeDependentHamiltonian& h, const StateVector& psi0, const std::vector<double>& times,
                         const EvolutionOptions& opt = {}) {
  opt.validate();
  detail::check_times(times);
  if (!(psi0.basis == h.basis)) throw ArgumentError("evolve: state and Hamiltonian bases differ");
  if (times.front() < 0.0) throw ArgumentError("evolve: time-dependent evolution runs forward from t = 0");
  const double dt_max = opt.dt > 0.0 ? opt.dt : default_rk4_step(h.max_frequency, times.back());
  Trajectory tr;
  CVector psi = psi0.amplitudes;
  const auto n = psi.size();
  CVector k1(n), k2(n), k3(n), k4(n), tmp(n);
  double t_now = 0.0;
  for (double t_out : times) {
    const double span = t_out - t_now;
    if (span > 0.0) {
      const auto steps = static_cast<long>(std::ceil(span / dt_max - 1e-9));
      const double dt = span / static_cast<double>(steps);
      for (long s = 0; s < steps; ++s) {
        const double t0 = t_now + dt * static_cast<double>(s);
        h.apply(t0, psi, k1);
        k1 *= -kI;
        tmp = psi + 0.5 * dt * k1;
        h.apply(t0 + 0.5 * dt, tmp, k2);
        k2 *= -kI;
        tmp = psi + 0.5 * dt * k2;
        h.apply(t0 + 0.5 * dt, tmp, k3);
        k3 *= -kI;
        tmp = psi + dt * k3;
        h.apply(t0 + dt, tmp, k4);
        k4 *= -kI;
        psi += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
      detail::check_finite(psi);
      t_now = t_out;
    }
    detail::record(tr, t_out, StateVector(psi0.basis, psi));
  }
  return tr;
}

/// One-period propagator of a T-periodic H(t), column by column with RK4.
inline CMatrix period_propagator(const TimeDependentHamiltonian& h, double period, const EvolutionOptions& opt = {}) {
  if (!(period > 0.0)) throw ArgumentError("period_propagator: period must be > 0");
  const auto dim = static_cast<Eigen::Index>(h.basis.dimension());
  if (static_cast<std::size_t>(dim) > opt.dense_guard) throw ResourceError("period_propagator: dimension exceeds the dense guard");
  EvolutionOptions o = opt;
  o.method = EvolutionMethod::rk4;
  CMatrix u(dim, dim);
  for (Eigen::Index j = 0; j < dim; ++j)
    u.col(j) = evolve(h, StateVector::basis_state(h.basis, static_cast<std::size_t>(j)), {period}, o).states[0].amplitudes;
  return u;
}

/// Evolution under a T-periodic H(t): whole periods by powers of the period propagator, the
/// remainder of each sample by RK4 from t = 0.
inline Trajectory evolve_periodic(const TimeDependentHamiltonian& h, double period, const StateVector& psi0,
                                  const std::vector<double>& times, const EvolutionOptions& opt = {}) {
  detail::check_times(times);
  if (!(psi0.basis == h.basis)) throw ArgumentError("evolve: state and Hamiltonian bases differ");
  if (times.front() < 0.0) throw ArgumentError("evolve: time-dependent evolution runs forward from t = 0");
  const CMatrix ut = period_propagator(h, period, opt);
  EvolutionOptions o = opt;
  o.method = EvolutionMethod::rk4;
  if (o.dt <= 0.0) o.dt = default_rk4_step(h.max_frequency, period);
  Trajectory tr;
  CVector whole = psi0.amplitudes;
  long done = 0;
  for (double t : times) {
    const auto n = static_cast<long>(std::floor(t / period + 1e-12));
    for (; done < n; ++done) whole = ut * whole;
    const double rest = t - static_cast<double>(n) * period;
    CVector psi = whole;
    if (rest > 1e-15 * period) psi = evolve(h, StateVector(psi0.basis, whole), {rest}, o).states[0].amplitudes;
    detail::check_finite(psi);
    detail::record(tr, t, StateVector(psi0.basis, psi));
  }
  return tr;
}

/// Per-site relaxation. The default adds -i (Gamma/2) n per site so an excited site decays as
/// exp(-t / T1); `literal_pi_factor` uses -i pi Gamma n instead.
struct NoiseSpec {
  std::vector<double> relaxation_rates;  // 1/s per site
  bool zz = false;
  bool literal_pi_factor = false;

  static NoiseSpec from_t1(const std::vector<double>& t1) {
    NoiseSpec n;
    for (double v : t1) n.relaxation_rates.push_back(v > 0.0 ? 1.0 / v : 0.0);
    return n;
  }
};

inline SparseOperator add_relaxation(const SparseOperator& h, const NoiseSpec& noise) {
  const Basis& b = h.basis();
  if (static_cast<int>(noise.relaxation_rates.size()) != b.num_sites())
    throw ArgumentError("add_relaxation: need one rate per site");
  for (double g : noise.relaxation_rates)
    if (!(g >= 0.0) || !std::isfinite(g)) throw ArgumentError("add_relaxation: rates must be finite and >= 0");
  const double factor = noise.literal_pi_factor ? kPi : 0.5;
  std::vector<SparseOperator::Triplet> t;
  for (std::size_t i = 0; i < b.dimension(); ++i) {
    const auto l = b.label(i);
    double rate = 0.0;
    for (int s = 0; s < b.num_sites(); ++s) rate += noise.relaxation_rates[s] * l.occupations[s];
    if (rate != 0.0)
      t.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i), cplx(0.0, -factor * rate));
  }
  const auto decay = SparseOperator::from_triplets(b, t, false);
  return SparseOperator(b, SparseOperator::Matrix(h.matrix() + decay.matrix()), t.empty() && h.hermitian());
}

/// Largest singular value.
inline double operator_norm(const CMatrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<CMatrix> es(a.adjoint() * a, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

struct StroboscopicComparison {
  double phase = 0.0;     // arg of the largest-magnitude entry ratio U_a / U_b
  double distance = 0.0;  // min over phi of ||U_a - e^{i phi} U_b||_2
};

inline StroboscopicComparison stroboscopic_compare(const CMatrix& ua, const CMatrix& ub) {
  if (ua.rows() != ub.rows() || ua.cols() != ub.cols()) throw ArgumentError("stroboscopic_compare: shape mismatch");
  Eigen::Index r = 0, c = 0;
  const double mb = ub.cwiseAbs().maxCoeff(&r, &c);
  if (mb == 0.0 || ua.cwiseAbs().maxCoeff() == 0.0) throw ArgumentError("stroboscopic_compare: zero matrix");
  StroboscopicComparison out;
  out.phase = std::arg(ua(r, c) / ub(r, c));
  auto dist = [&](double phi) { return operator_norm(ua - std::exp(kI * phi) * ub); };
  // Golden-section refinement of the phase around the entry-ratio estimate.
  constexpr double gr = 0.6180339887498949;
  double a = out.phase - 0.25, b = out.phase + 0.25;
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = dist(x1), f2 = dist(x2);
  for (int it = 0; it < 40; ++it) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = dist(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = dist(x2);
    }
  }
  out.distance = std::min({dist(out.phase), f1, f2});
  return out;
}

struct LocalZFrame {
  cplx global{1.0, 0.0};
  std::vector<cplx> site;  // U ~ global * (tensor diag(1, site_s)) * U_ref
  double distance = 0.0;
};

/// Fits U = g D U_ref with D a product of single-site Z-type phases (qubit full space).
inline LocalZFrame fit_local_z_frame(const CMatrix& u, const CMatrix& uref, int num_sites) {
  const Eigen::Index dim = Eigen::Index{1} << num_sites;
  if (u.rows() != dim || uref.rows() != dim || u.cols() != dim || uref.cols() != dim)
    throw ArgumentError("fit_local_z_frame: matrices must be 2^N square");
  if (std::abs(uref(0, 0)) < 1e-12) throw ArgumentError("fit_local_z_frame: reference does not fix the vacuum");
  LocalZFrame f;
  f.global = u(0, 0) / uref(0, 0);
  auto single = [num_sites](int s) { return Eigen::Index{1} << (num_sites - 1 - s); };
  for (int m = 0; m < num_sites; ++m) {
    Eigen::Index best = single(0);
    for (int j = 1; j < num_sites; ++j)
      if (std::abs(uref(single(m), single(j))) > std::abs(uref(single(m), best))) best = single(j);
    f.site.push_back(u(single(m), best) / (f.global * uref(single(m), best)));
  }
  CVector d(dim);
  for (Eigen::Index x = 0; x < dim; ++x) {
    cplx p = 1.0;
    for (int s = 0; s < num_sites; ++s)
      if (x & single(s)) p *= f.site[s];
    d(x) = p;
  }
  f.distance = operator_norm(u - f.global * d.asDiagonal() * uref);
  return f;
}

}  // namespace pstsim
