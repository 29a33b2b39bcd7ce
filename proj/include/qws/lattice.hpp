#ifndef QWS_LATTICE_HPP
#define QWS_LATTICE_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qws/types.hpp"

namespace qws {

/// One hopping amplitude h: |x,sigma>  ->  |x+delta, sigma_prime>.
struct HoppingEntry {
  CellVector delta;
  SiteIndex sigma = 0;
  SiteIndex sigma_prime = 0;
  cx amp;
};

/// Crystal lattice: d-dimensional torus of cells, r sites per cell, and a
/// translation-invariant hopping table
///   H0 |x,sigma> = sum_{delta,sigma'} h_{delta,sigma,sigma'} |x+delta,sigma'>.
///
/// The table is Hermitian-closed: for every entry the partner at
/// (-delta, sigma', sigma) is present with the conjugate amplitude.
/// Immutable after construction; safe to share across threads.
class LatticeSpec {
 public:
  LatticeSpec(int d, int r, std::vector<HoppingEntry> hops, std::string name);

  int dim() const { return d_; }
  int basis() const { return r_; }
  const std::string& name() const { return name_; }
  const std::vector<HoppingEntry>& hops() const { return hops_; }
  int max_abs_delta() const { return max_abs_delta_; }

  /// n = l^d cells, N = n*r vertices.
  long long cells(int l) const { return ipow(l, d_); }
  long long vertices(int l) const { return cells(l) * r_; }

  /// Flat index sigma + r*(x1 + l*x2 + ...).
  long long vertex_index(const CellVector& x, SiteIndex s, int l) const;
  std::pair<CellVector, SiteIndex> vertex_coords(long long v, int l) const;

 private:
  int d_, r_;
  std::vector<HoppingEntry> hops_;
  std::string name_;
  int max_abs_delta_ = 0;
};

// Built-in lattices. Names: staggered-hypercubic-<d>, honeycomb, kagome,
// dirac-square, decoupled-square.
LatticeSpec build_staggered_hypercubic(int d);
LatticeSpec build_honeycomb();
LatticeSpec build_kagome();
LatticeSpec build_dirac_square(double gamma, double omega);
LatticeSpec build_decoupled_component();

/// Look up a built-in by name ("dirac-square" takes gamma/omega parameters).
LatticeSpec builtin_lattice(const std::string& name, double ds_gamma = 1.0,
                            double ds_omega = 1.0);

struct AssembleOptions {
  bool allow_aliasing = false;  // permit l < 3*max|delta_i|; aliased hops sum
};

/// Dense real-space Hamiltonian on the l^d-cell torus. Hermitian by
/// construction of the table.
MatC assemble_dense(const LatticeSpec& spec, int l, const AssembleOptions& opt = {});

/// Sparse version for propagation at scale.
SpMatC assemble_sparse(const LatticeSpec& spec, int l, const AssembleOptions& opt = {});

struct NeighborEntry {
  long long vertex;
  cx amp;
};

struct NeighborList {
  std::vector<NeighborEntry> neighbors;  // off-site couplings <u|H0|v>, u != v
  cx onsite;                             // <v|H0|v>
};

/// All u with nonzero <u|H0|v>, amplitudes included; the on-site element is
/// reported separately.
NeighborList neighbors(const LatticeSpec& spec, int l, long long v,
                       const AssembleOptions& opt = {});

/// Parse a lattice spec file (JSON: d, r, name, hoppings[{delta, sigma,
/// sigma_prime, re, im}]). Missing Hermitian partners are auto-completed;
/// strict mode requires them and verifies consistency.
LatticeSpec load_lattice_file(const std::string& path, bool strict = false);
LatticeSpec parse_lattice_json(const std::string& text, bool strict = false);

/// Serialize back to the file format (canonical entry order).
std::string lattice_to_json(const LatticeSpec& spec);

}  // namespace qws

#endif
