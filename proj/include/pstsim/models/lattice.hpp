#pragma once

// Square lattice with separable axis couplings, single-excitation sector only.
// Grid site (x, y), 0-based, maps to chain site x * ny + y.

#include <vector>

#include "pstsim/models/chain.hpp"

namespace pstsim {

struct LatticeSpec {
  int nx = 0;
  int ny = 0;
  double transfer_time = 0.0;
  std::vector<double> couplings_x;  // nx-1
  std::vector<double> couplings_y;  // ny-1

  void validate() const {
    if (nx < 1 || ny < 1 || nx * ny < 2) throw ArgumentError("lattice: grid must hold at least two sites");
    if (nx * ny > kMaxSites) throw ArgumentError("lattice: too many sites");
    if (!(transfer_time > 0.0)) throw ArgumentError("lattice: transfer time must be > 0");
    if (static_cast<int>(couplings_x.size()) != nx - 1 || static_cast<int>(couplings_y.size()) != ny - 1)
      throw ArgumentError("lattice: axis profile lengths must be nx-1 and ny-1");
  }

  int num_sites() const { return nx * ny; }
  int site(int x, int y) const {
    if (x < 0 || x >= nx || y < 0 || y >= ny) throw ArgumentError("lattice: site outside grid");
    return x * ny + y;
  }
};

/// Both axes carry the PST profile for the shared transfer time.
inline LatticeSpec pst_lattice(int nx, int ny, double tau) {
  LatticeSpec s;
  s.nx = nx;
  s.ny = ny;
  s.transfer_time = tau;
  if (nx >= 2) s.couplings_x = pst_couplings(nx, tau);
  if (ny >= 2) s.couplings_y = pst_couplings(ny, tau);
  s.validate();
  return s;
}

/// Hopping matrix H_x (x) I + I (x) H_y over the single-excitation sector.
inline SparseOperator build_lattice_hamiltonian(const LatticeSpec& spec) {
  spec.validate();
  const Basis basis = Basis::sector(spec.num_sites(), 1);
  std::vector<SparseOperator::Triplet> t;
  for (int x = 0; x < spec.nx; ++x)
    for (int y = 0; y < spec.ny; ++y) {
      const int s = spec.site(x, y);
      if (x + 1 < spec.nx) {
        const int r = spec.site(x + 1, y);
        t.emplace_back(s, r, spec.couplings_x[x]);
        t.emplace_back(r, s, spec.couplings_x[x]);
      }
      if (y + 1 < spec.ny) {
        const int r = spec.site(x, y + 1);
        t.emplace_back(s, r, spec.couplings_y[y]);
        t.emplace_back(r, s, spec.couplings_y[y]);
      }
    }
  return SparseOperator::from_triplets(basis, t, true);
}

}  // namespace pstsim
