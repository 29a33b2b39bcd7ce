#ifndef QWS_BLOCH_HPP
#define QWS_BLOCH_HPP

#include <map>
#include <string>
#include <vector>

#include "qws/lattice.hpp"
#include "qws/types.hpp"

namespace qws {

/// Momentum on the d-torus, components canonicalized to (-pi, pi].
struct Momentum {
  std::vector<double> k;
  std::vector<int> grid;  // k_i = 2*pi*grid_i/l when taken from a grid; empty otherwise
};

/// All l^d grid momenta k_i = 2*pi*m_i/l, m_i in [0,l), canonicalized, in
/// cell-index order (m_1 fastest).
std::vector<Momentum> momentum_grid(int d, int l);

/// r x r momentum-space block with entries <k,a|H0|k,b> for the Fourier basis
/// |k,s> = n^{-1/2} sum_x e^{+i k.x} |x,s>; equal to the conjugate of the
/// (sigma,sigma') table transform sum_delta h_{delta,sigma,sigma'} e^{-ik.delta}.
MatC block_matrix_raw(const LatticeSpec& spec, const std::vector<double>& k);

struct BlochBlock {
  Momentum k;
  MatC matrix;     // Hermitian r x r
  VecR evals;      // ascending
  MatC evecs;      // orthonormal columns
};

/// Block plus eigendecomposition (degenerate subspaces orthonormal; only
/// projectors are contract-bearing).
BlochBlock block_matrix(const LatticeSpec& spec, const Momentum& k);

struct DiracPoint {
  Momentum k;
  std::vector<int> band_indices;   // ascending band indices touching energy 0
  double linearity_constant = 0;   // min sampled |E(k+delta)|/|delta| over rays
  std::vector<double> chi;         // chi_sigma = <sigma|P_ker|sigma>, size r
  MatC kernel_basis;               // r x m orthonormal kernel eigenvectors
  int m() const { return static_cast<int>(band_indices.size()); }
};

struct DiracScanOptions {
  int resolution = 0;          // points per axis; 0 = default for the dimension
  double tol = 1e-6;           // |E| threshold for an accepted Dirac point
  double energy_shift = 0.0;   // subtracted from the diagonal before analysis
  bool auto_shift = false;     // detect a common nonzero touching energy
  double linearity_min = 0.1;  // required |E(k+delta)|/|delta| at |delta|=1e-3
  int rational_den_max = 24;   // snap k/pi to rationals with denominator <= this
  int threads = 0;
};

int default_scan_resolution(int d);

/// Locate all Dirac points: coarse scan of min_i |E_i(k)|, local refinement
/// from scan minima, rational snapping, linearity probe, kernel projector.
/// Throws NumericalError if no band reaches zero, or if the only minima fail
/// the linearity test (quadratic touching), with distinct messages.
std::vector<DiracPoint> find_dirac_points(const LatticeSpec& spec,
                                          const DiracScanOptions& opt = {});

struct AssumptionCheck {
  bool pass = false;
  double evidence = 0;
  std::string note;
};

struct AssumptionReport {
  int D = 0;  // number of Dirac points
  int m = 0;  // degenerate-band count at each point
  double energy_shift = 0;
  AssumptionCheck a[5];
  bool all_pass() const {
    for (const auto& c : a)
      if (!c.pass) return false;
    return true;
  }
  std::string render() const;
};

AssumptionReport verify_assumptions(const LatticeSpec& spec,
                                    const std::vector<DiracPoint>& diracs,
                                    const DiracScanOptions& opt = {});

/// Rational approximation of x with denominator <= qmax; returns (p, q, residual).
struct RationalFit {
  long long p = 0, q = 1;
  double residual = 0;
};
RationalFit nearest_rational(double x, int qmax);

/// N x N unitary with columns |k,s> = n^{-1/2} e^{+i k.x} |x,s>, momenta in
/// grid order. Conjugating assemble_dense by it block-diagonalizes H0.
MatC fourier_matrix(const LatticeSpec& spec, int l);

/// True when H0(k)^2 is a multiple of the identity for all sampled k
/// (checked on a deterministic sample); enables closed-form moment sums.
bool has_scalar_square_blocks(const LatticeSpec& spec);

/// Match k against a grid momentum of the l-torus; returns grid index or -1.
long long grid_index_of_momentum(int d, int l, const std::vector<double>& k,
                                 double tol = 1e-9);

}  // namespace qws

#endif
