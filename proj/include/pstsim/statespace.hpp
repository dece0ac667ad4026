#pragma once

// Numerical substrate: bases (full qubit space, fixed-excitation sectors, mixed-radix
// device modes), state vectors, density matrices, sparse operators, partial traces and
// Pauli expectations.
//
// Site convention: sites are 0-based in the C++ API; site 0 is the most significant
// digit of a basis index. For qubit bases an occupation pattern is stored as a bit mask
// where site s maps to bit (N - 1 - s). The full space is indexed by the mask itself.
// Sectors are ordered lexicographically by the sorted list of occupied sites, so the
// single-excitation sector index equals the site index.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pstsim/errors.hpp"

namespace pstsim {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using SiteMask = std::uint64_t;

inline constexpr int kMaxSites = 63;
inline constexpr int kMaxModeLevels = 4;
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr cplx kI{0.0, 1.0};

struct Tolerances {
  double hermiticity = 1e-10;
  double trace = 1e-10;
  double psd = 1e-10;
};

namespace detail {

// Pascal triangle up to 64; C(64, 32) < 2^61 so every entry fits.
inline const std::array<std::array<std::uint64_t, 65>, 65>& binomial_table() {
  static const auto table = [] {
    std::array<std::array<std::uint64_t, 65>, 65> t{};
    for (int n = 0; n <= 64; ++n) {
      t[n][0] = 1;
      for (int k = 1; k <= n; ++k) t[n][k] = t[n - 1][k - 1] + (k <= n - 1 ? t[n - 1][k] : 0);
    }
    return t;
  }();
  return table;
}

}  // namespace detail

inline std::uint64_t binomial(int n, int k) {
  if (n < 0 || k < 0 || k > n || n > 64) return 0;
  return detail::binomial_table()[n][k];
}

/// Per-site occupation numbers. Qubit sites hold 0/1, device modes 0..d-1.
struct BasisLabel {
  std::vector<int> occupations;

  static BasisLabel from_bitstring(std::string_view bits) {
    BasisLabel label;
    label.occupations.reserve(bits.size());
    for (char c : bits) {
      if (c < '0' || c > '9') throw ArgumentError("basis label: invalid character '" + std::string(1, c) + "'");
      label.occupations.push_back(c - '0');
    }
    return label;
  }

  std::string to_string() const {
    std::string s;
    for (int o : occupations) s.push_back(static_cast<char>('0' + o));
    return s;
  }

  int total() const { return std::accumulate(occupations.begin(), occupations.end(), 0); }
  bool operator==(const BasisLabel&) const = default;
};

class Basis {
 public:
  /// Full 2^N qubit space.
  static Basis qubits(int num_sites) {
    if (num_sites < 1 || num_sites > kMaxSites) throw ArgumentError("qubit basis: site count out of range");
    Basis b;
    b.levels_.assign(num_sites, 2);
    b.dimension_ = std::size_t{1} << num_sites;
    b.finish_strides();
    return b;
  }

  /// Fixed-excitation sector of N two-level sites, lexicographically ordered.
  static Basis sector(int num_sites, int num_excitations) {
    if (num_sites < 1 || num_sites > kMaxSites) throw ArgumentError("sector basis: site count out of range");
    if (num_excitations < 0 || num_excitations > num_sites)
      throw ArgumentError("sector basis: need 0 <= num_excitations <= num_sites");
    Basis b;
    b.levels_.assign(num_sites, 2);
    b.excitations_ = num_excitations;
    b.dimension_ = binomial(num_sites, num_excitations);
    b.finish_strides();
    return b;
  }

  /// Mixed-radix product space of modes with the given level counts.
  static Basis modes(std::vector<int> levels) {
    if (levels.empty()) throw ArgumentError("mode basis: no sites");
    Basis b;
    std::size_t dim = 1;
    for (int d : levels) {
      if (d < 2 || d > kMaxModeLevels) throw ArgumentError("mode basis: level count must be in [2, 4]");
      dim *= static_cast<std::size_t>(d);
    }
    b.levels_ = std::move(levels);
    b.dimension_ = dim;
    b.finish_strides();
    return b;
  }

  /// Structureless space of the given dimension (no sites, no labels).
  static Basis abstract(std::size_t dimension) {
    if (dimension == 0) throw ArgumentError("abstract basis: dimension must be positive");
    Basis b;
    b.dimension_ = dimension;
    return b;
  }

  bool is_abstract() const noexcept { return levels_.empty(); }
  int num_sites() const noexcept { return static_cast<int>(levels_.size()); }
  std::size_t dimension() const noexcept { return dimension_; }
  int levels(int site) const { return levels_.at(site); }
  const std::vector<int>& level_counts() const noexcept { return levels_; }
  bool is_qubit() const noexcept {
    return !levels_.empty() && std::all_of(levels_.begin(), levels_.end(), [](int d) { return d == 2; });
  }
  bool is_sector() const noexcept { return excitations_.has_value(); }
  bool is_full_qubit() const noexcept { return is_qubit() && !is_sector(); }
  int num_excitations() const {
    if (!excitations_) throw ArgumentError("basis is not an excitation sector");
    return *excitations_;
  }

  SiteMask site_bit(int site) const { return SiteMask{1} << (num_sites() - 1 - site); }

  /// Occupation mask of basis state `index` (qubit bases only).
  SiteMask mask(std::size_t index) const {
    require_qubit();
    if (index >= dimension_) throw ArgumentError("basis index out of range");
    if (!excitations_) return static_cast<SiteMask>(index);
    // Greedy unranking in the combinatorial number system (colex rank counts up from the
    // smallest mask, sector order counts down).
    SiteMask m = 0;
    std::uint64_t r = dimension_ - 1 - index;
    for (int j = *excitations_; j >= 1; --j) {
      int c = j - 1;
      while (c + 1 < num_sites() && binomial(c + 1, j) <= r) ++c;
      r -= binomial(c, j);
      m |= SiteMask{1} << c;
    }
    return m;
  }

  std::optional<std::size_t> find(SiteMask m) const {
    require_qubit();
    if (num_sites() < 64 && (m >> num_sites()) != 0) return std::nullopt;
    if (!excitations_) return static_cast<std::size_t>(m);
    if (std::popcount(m) != *excitations_) return std::nullopt;
    std::uint64_t r = 0;
    int j = 1;
    for (SiteMask rest = m; rest != 0; rest &= rest - 1, ++j) r += binomial(std::countr_zero(rest), j);
    return static_cast<std::size_t>(dimension_ - 1 - r);
  }

  std::size_t index(SiteMask m) const {
    auto i = find(m);
    if (!i) throw ArgumentError("occupation pattern not contained in basis");
    return *i;
  }

  BasisLabel label(std::size_t index) const {
    if (index >= dimension_) throw ArgumentError("basis index out of range");
    if (is_abstract()) throw ArgumentError("abstract basis has no labels");
    BasisLabel l;
    l.occupations.resize(levels_.size());
    if (is_qubit()) {
      const SiteMask m = mask(index);
      for (int s = 0; s < num_sites(); ++s) l.occupations[s] = (m & site_bit(s)) ? 1 : 0;
      return l;
    }
    for (int s = 0; s < num_sites(); ++s) l.occupations[s] = static_cast<int>((index / strides_[s]) % levels_[s]);
    return l;
  }

  std::size_t index(const BasisLabel& l) const {
    if (static_cast<int>(l.occupations.size()) != num_sites())
      throw ArgumentError("basis label length does not match site count");
    for (int s = 0; s < num_sites(); ++s)
      if (l.occupations[s] < 0 || l.occupations[s] >= levels_[s])
        throw ArgumentError("basis label entry exceeds the site's level count");
    if (is_qubit()) {
      SiteMask m = 0;
      for (int s = 0; s < num_sites(); ++s)
        if (l.occupations[s]) m |= site_bit(s);
      return index(m);
    }
    std::size_t i = 0;
    for (int s = 0; s < num_sites(); ++s) i += strides_[s] * static_cast<std::size_t>(l.occupations[s]);
    return i;
  }

  std::size_t stride(int site) const { return strides_.at(site); }

  bool operator==(const Basis& o) const {
    return levels_ == o.levels_ && excitations_ == o.excitations_ && dimension_ == o.dimension_;
  }

 private:
  Basis() = default;

  void require_qubit() const {
    if (!is_qubit()) throw ArgumentError("operation requires a qubit basis");
  }

  void finish_strides() {
    strides_.assign(levels_.size(), 1);
    for (int s = num_sites() - 2; s >= 0; --s) strides_[s] = strides_[s + 1] * static_cast<std::size_t>(levels_[s + 1]);
  }

  std::vector<int> levels_;
  std::optional<int> excitations_;
  std::size_t dimension_ = 0;
  std::vector<std::size_t> strides_;
};

struct StateVector {
  Basis basis;
  CVector amplitudes;

  StateVector(Basis b, CVector a) : basis(std::move(b)), amplitudes(std::move(a)) {
    if (static_cast<std::size_t>(amplitudes.size()) != basis.dimension())
      throw ArgumentError("state vector length does not match basis dimension");
  }

  static StateVector basis_state(const Basis& b, std::size_t index) {
    if (index >= b.dimension()) throw ArgumentError("basis index out of range");
    CVector a = CVector::Zero(static_cast<Eigen::Index>(b.dimension()));
    a[static_cast<Eigen::Index>(index)] = 1.0;
    return {b, std::move(a)};
  }

  static StateVector from_label(const Basis& b, const BasisLabel& l) { return basis_state(b, b.index(l)); }

  double norm() const { return amplitudes.norm(); }

  /// Excited-state population per site (expected occupation for device modes).
  std::vector<double> site_populations() const {
    std::vector<double> pops(basis.num_sites(), 0.0);
    if (basis.is_abstract()) return pops;
    for (std::size_t i = 0; i < basis.dimension(); ++i) {
      const double p = std::norm(amplitudes[static_cast<Eigen::Index>(i)]);
      if (p == 0.0) continue;
      if (basis.is_qubit()) {
        const SiteMask m = basis.mask(i);
        for (int s = 0; s < basis.num_sites(); ++s)
          if (m & basis.site_bit(s)) pops[s] += p;
      } else {
        const BasisLabel l = basis.label(i);
        for (int s = 0; s < basis.num_sites(); ++s) pops[s] += p * l.occupations[s];
      }
    }
    return pops;
  }
};

class DensityMatrix {
 public:
  explicit DensityMatrix(CMatrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw ArgumentError("density matrix must be square");
    const auto n = static_cast<std::uint64_t>(m_.rows());
    if (n == 0 || !std::has_single_bit(n)) throw ArgumentError("density matrix dimension must be a power of two");
    num_qubits_ = std::countr_zero(n);
  }

  static DensityMatrix pure(const CVector& psi) { return DensityMatrix(psi * psi.adjoint()); }

  static DensityMatrix maximally_mixed(int num_qubits) {
    const Eigen::Index d = Eigen::Index{1} << num_qubits;
    return DensityMatrix(CMatrix::Identity(d, d) / static_cast<double>(d));
  }

  int num_qubits() const noexcept { return num_qubits_; }
  Eigen::Index dimension() const noexcept { return m_.rows(); }
  const CMatrix& matrix() const noexcept { return m_; }
  cplx operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

  double trace() const { return m_.trace().real(); }
  double hermiticity_defect() const { return (m_ - m_.adjoint()).cwiseAbs().maxCoeff(); }
  bool is_hermitian(double tol = Tolerances{}.hermiticity) const { return hermiticity_defect() <= tol; }

  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }

  /// Nearest PSD unit-trace matrix by eigenvalue clipping and renormalisation.
  /// Nearest unit-trace PSD matrix in Frobenius norm: eigenvalues are shifted to unit sum,
  /// the most negative are clipped to zero and their weight spread over the rest.
  DensityMatrix psd_projected() const {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part());
    Eigen::VectorXd ev = es.eigenvalues();  // ascending
    const auto d = ev.size();
    ev.array() += (1.0 - ev.sum()) / static_cast<double>(d);
    double carry = 0.0;
    Eigen::Index lo = 0;
    while (lo < d && ev(lo) + carry / static_cast<double>(d - lo) < 0.0) {
      carry += ev(lo);
      ev(lo++) = 0.0;
    }
    if (lo == d) throw NumericalError("PSD projection: no positive eigenvalues");
    for (Eigen::Index i = lo; i < d; ++i) ev(i) += carry / static_cast<double>(d - lo);
    const CMatrix& v = es.eigenvectors();
    return DensityMatrix(v * ev.cast<cplx>().asDiagonal() * v.adjoint());
  }

  /// Hermitian, unit trace and PSD within `tol`.
  bool is_valid(const Tolerances& tol = {}) const {
    return is_hermitian(tol.hermiticity) && std::abs(trace() - 1.0) <= tol.trace && min_eigenvalue() >= -tol.psd;
  }

 private:
  CMatrix hermitian_part() const { return 0.5 * (m_ + m_.adjoint()); }

  CMatrix m_;
  int num_qubits_ = 0;
};

class SparseOperator {
 public:
  using Matrix = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;
  using Triplet = Eigen::Triplet<cplx>;

  SparseOperator(Basis basis, Matrix m, bool hermitian, const Tolerances& tol = {})
      : basis_(std::move(basis)), m_(std::move(m)), hermitian_(hermitian) {
    if (static_cast<std::size_t>(m_.rows()) != basis_.dimension() || m_.rows() != m_.cols())
      throw ArgumentError("operator shape does not match basis dimension");
    m_.makeCompressed();
    if (hermitian_ && hermiticity_defect() > tol.hermiticity * std::max(1.0, max_abs_entry()))
      throw ConsistencyError("operator flagged Hermitian but A != A^dagger");
  }

  /// Duplicate (row, col) entries are summed.
  static SparseOperator from_triplets(const Basis& basis, const std::vector<Triplet>& triplets, bool hermitian,
                                      const Tolerances& tol = {}) {
    const auto d = static_cast<Eigen::Index>(basis.dimension());
    for (const auto& t : triplets)
      if (t.row() < 0 || t.col() < 0 || t.row() >= d || t.col() >= d)
        throw ArgumentError("operator entry index out of range");
    Matrix m(d, d);
    m.setFromTriplets(triplets.begin(), triplets.end());
    return SparseOperator(basis, std::move(m), hermitian, tol);
  }

  static SparseOperator zero(const Basis& basis) { return from_triplets(basis, {}, true); }

  const Basis& basis() const noexcept { return basis_; }
  std::size_t dimension() const noexcept { return basis_.dimension(); }
  const Matrix& matrix() const noexcept { return m_; }
  bool hermitian() const noexcept { return hermitian_; }

  CMatrix dense() const { return CMatrix(m_); }
  CVector apply(const CVector& v) const { return m_ * v; }

  double max_abs_entry() const {
    double mx = 0.0;
    for (Eigen::Index k = 0; k < m_.outerSize(); ++k)
      for (Matrix::InnerIterator it(m_, k); it; ++it) mx = std::max(mx, std::abs(it.value()));
    return mx;
  }

  double hermiticity_defect() const {
    Matrix diff = m_ - Matrix(m_.adjoint());
    double mx = 0.0;
    for (Eigen::Index k = 0; k < diff.outerSize(); ++k)
      for (Matrix::InnerIterator it(diff, k); it; ++it) mx = std::max(mx, std::abs(it.value()));
    return mx;
  }

  SparseOperator operator+(const SparseOperator& o) const {
    if (!(basis_ == o.basis_)) throw ArgumentError("operator sum: basis mismatch");
    return SparseOperator(basis_, Matrix(m_ + o.m_), hermitian_ && o.hermitian_);
  }

  SparseOperator scaled(cplx factor) const {
    return SparseOperator(basis_, Matrix(m_ * factor), hermitian_ && factor.imag() == 0.0);
  }

 private:
  Basis basis_;
  Matrix m_;
  bool hermitian_ = false;
};

/// Diagonal operator counting excitations (qubit bases) or total quanta (mode bases).
inline SparseOperator excitation_number_operator(const Basis& basis) {
  std::vector<SparseOperator::Triplet> t;
  t.reserve(basis.dimension());
  for (std::size_t i = 0; i < basis.dimension(); ++i) {
    const double n = basis.is_qubit() ? static_cast<double>(std::popcount(basis.mask(i))) : basis.label(i).total();
    const auto ii = static_cast<Eigen::Index>(i);
    t.emplace_back(ii, ii, n);
  }
  return SparseOperator::from_triplets(basis, t, true);
}

/// Operator norm of [A, B] estimated as the largest entry magnitude; zero iff they commute.
inline double commutator_defect(const SparseOperator& a, const SparseOperator& b) {
  SparseOperator::Matrix c = a.matrix() * b.matrix() - b.matrix() * a.matrix();
  double mx = 0.0;
  for (Eigen::Index k = 0; k < c.outerSize(); ++k)
    for (SparseOperator::Matrix::InnerIterator it(c, k); it; ++it) mx = std::max(mx, std::abs(it.value()));
  return mx;
}

inline StateVector embed_sector_state(const StateVector& state) {
  if (!state.basis.is_sector()) throw ArgumentError("embed_sector_state: state is not in a sector basis");
  const Basis full = Basis::qubits(state.basis.num_sites());
  CVector a = CVector::Zero(static_cast<Eigen::Index>(full.dimension()));
  for (std::size_t i = 0; i < state.basis.dimension(); ++i)
    a[static_cast<Eigen::Index>(state.basis.mask(i))] = state.amplitudes[static_cast<Eigen::Index>(i)];
  return {full, std::move(a)};
}

/// Restriction of a full-space state to a sector; amplitude outside the sector is dropped.
inline StateVector project_to_sector(const StateVector& state, const Basis& sector) {
  if (!state.basis.is_full_qubit()) throw ArgumentError("project_to_sector: state is not in a full qubit basis");
  if (!sector.is_sector() || sector.num_sites() != state.basis.num_sites())
    throw ArgumentError("project_to_sector: incompatible sector");
  CVector a(static_cast<Eigen::Index>(sector.dimension()));
  for (std::size_t i = 0; i < sector.dimension(); ++i)
    a[static_cast<Eigen::Index>(i)] = state.amplitudes[static_cast<Eigen::Index>(sector.mask(i))];
  return {sector, std::move(a)};
}

namespace detail {

inline void check_keep_sites(int num_sites, const std::vector<int>& keep) {
  if (keep.empty()) throw ArgumentError("partial_trace: empty keep list");
  std::vector<bool> seen(num_sites, false);
  for (int s : keep) {
    if (s < 0 || s >= num_sites) throw ArgumentError("partial_trace: site out of range");
    if (seen[s]) throw ArgumentError("partial_trace: duplicate site");
    seen[s] = true;
  }
}

// Index of the kept sites' occupation in the reduced space; keep[0] is most significant.
inline std::size_t kept_index(SiteMask m, int num_sites, const std::vector<int>& keep) {
  std::size_t k = 0;
  for (int s : keep) k = (k << 1) | ((m >> (num_sites - 1 - s)) & 1U);
  return k;
}

}  // namespace detail

/// Reduced density matrix over `keep` (in the given order) of a qubit-basis state.
inline DensityMatrix partial_trace(const StateVector& state, const std::vector<int>& keep) {
  const Basis& b = state.basis;
  if (!b.is_qubit()) throw ArgumentError("partial_trace: qubit basis required");
  const int n = b.num_sites();
  detail::check_keep_sites(n, keep);
  SiteMask keep_mask = 0;
  for (int s : keep) keep_mask |= b.site_bit(s);

  // Group amplitudes by environment configuration.
  std::unordered_map<SiteMask, std::vector<std::pair<std::size_t, cplx>>> groups;
  for (std::size_t i = 0; i < b.dimension(); ++i) {
    const cplx a = state.amplitudes[static_cast<Eigen::Index>(i)];
    if (a == cplx{}) continue;
    const SiteMask m = b.mask(i);
    groups[m & ~keep_mask].emplace_back(detail::kept_index(m, n, keep), a);
  }
  const Eigen::Index d = Eigen::Index{1} << keep.size();
  CMatrix rho = CMatrix::Zero(d, d);
  for (const auto& [env, entries] : groups)
    for (const auto& [ki, ai] : entries)
      for (const auto& [kj, aj] : entries)
        rho(static_cast<Eigen::Index>(ki), static_cast<Eigen::Index>(kj)) += ai * std::conj(aj);
  return DensityMatrix(std::move(rho));
}

inline DensityMatrix partial_trace(const DensityMatrix& rho, const std::vector<int>& keep) {
  const int n = rho.num_qubits();
  detail::check_keep_sites(n, keep);
  SiteMask keep_mask = 0;
  for (int s : keep) keep_mask |= SiteMask{1} << (n - 1 - s);
  const Eigen::Index d = Eigen::Index{1} << keep.size();
  CMatrix out = CMatrix::Zero(d, d);
  const auto dim = static_cast<SiteMask>(rho.dimension());
  for (SiteMask x = 0; x < dim; ++x) {
    const SiteMask env = x & ~keep_mask;
    const auto kx = static_cast<Eigen::Index>(detail::kept_index(x, n, keep));
    // Enumerate y sharing the environment of x.
    for (SiteMask sub = keep_mask;; sub = (sub - 1) & keep_mask) {
      const SiteMask y = env | sub;
      out(kx, static_cast<Eigen::Index>(detail::kept_index(y, n, keep))) +=
          rho(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
      if (sub == 0) break;
    }
  }
  return DensityMatrix(std::move(out));
}

/// Tensor product of single-qubit Paulis; character i acts on site i.
class PauliString {
 public:
  explicit PauliString(std::string_view ops) : ops_(ops) {
    for (char& c : ops_) {
      if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
      if (c != 'I' && c != 'X' && c != 'Y' && c != 'Z') throw ArgumentError("Pauli string: invalid character");
    }
    if (ops_.empty()) throw ArgumentError("Pauli string: empty");
  }

  int size() const noexcept { return static_cast<int>(ops_.size()); }
  char operator[](int site) const { return ops_.at(site); }
  const std::string& str() const noexcept { return ops_; }

  /// P|x> = phase(x) |x ^ flip_mask()>.
  SiteMask flip_mask() const {
    SiteMask f = 0;
    const int n = size();
    for (int s = 0; s < n; ++s)
      if (ops_[s] == 'X' || ops_[s] == 'Y') f |= SiteMask{1} << (n - 1 - s);
    return f;
  }

  cplx phase(SiteMask x) const {
    cplx ph = 1.0;
    const int n = size();
    for (int s = 0; s < n; ++s) {
      const bool bit = (x >> (n - 1 - s)) & 1U;
      switch (ops_[s]) {
        case 'Z':
          if (bit) ph = -ph;
          break;
        case 'Y':
          ph *= bit ? -kI : kI;
          break;
        default:
          break;
      }
    }
    return ph;
  }

  bool operator==(const PauliString&) const = default;

 private:
  std::string ops_;
};

namespace detail {

inline double checked_real(cplx v, double scale) {
  if (std::abs(v.imag()) > 1e-12 * std::max(1.0, scale))
    throw ConsistencyError("Pauli expectation has a non-negligible imaginary part");
  return v.real();
}

}  // namespace detail

/// <psi|P|psi> for a qubit-basis state (full space or sector).
inline double pauli_expectation(const StateVector& state, const PauliString& p) {
  const Basis& b = state.basis;
  if (!b.is_qubit()) throw ArgumentError("pauli_expectation: qubit basis required");
  if (p.size() != b.num_sites()) throw ArgumentError("pauli_expectation: string length differs from site count");
  const SiteMask f = p.flip_mask();
  cplx acc = 0.0;
  for (std::size_t i = 0; i < b.dimension(); ++i) {
    const cplx a = state.amplitudes[static_cast<Eigen::Index>(i)];
    if (a == cplx{}) continue;
    const SiteMask x = b.mask(i);
    const auto j = b.find(x ^ f);
    if (!j) continue;
    acc += std::conj(state.amplitudes[static_cast<Eigen::Index>(*j)]) * p.phase(x) * a;
  }
  return detail::checked_real(acc, state.amplitudes.squaredNorm());
}

/// Tr(rho P).
inline double pauli_expectation(const DensityMatrix& rho, const PauliString& p) {
  if (p.size() != rho.num_qubits()) throw ArgumentError("pauli_expectation: string length differs from qubit count");
  const SiteMask f = p.flip_mask();
  cplx acc = 0.0;
  const auto dim = static_cast<SiteMask>(rho.dimension());
  for (SiteMask x = 0; x < dim; ++x)
    acc += p.phase(x) * rho(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(x ^ f));
  return detail::checked_real(acc, std::abs(rho.trace()));
}

/// Dense matrix of a Pauli string (2^n x 2^n).
inline CMatrix pauli_matrix(const PauliString& p) {
  const Eigen::Index d = Eigen::Index{1} << p.size();
  CMatrix m = CMatrix::Zero(d, d);
  const SiteMask f = p.flip_mask();
  for (SiteMask x = 0; x < static_cast<SiteMask>(d); ++x)
    m(static_cast<Eigen::Index>(x ^ f), static_cast<Eigen::Index>(x)) = p.phase(x);
  return m;
}

}  // namespace pstsim
