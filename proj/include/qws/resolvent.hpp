#ifndef QWS_RESOLVENT_HPP
#define QWS_RESOLVENT_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qws/bloch.hpp"
#include "qws/lattice.hpp"
#include "qws/types.hpp"

namespace qws {

/// The two oracle families: the projector-coupled bipartite form (used when
/// the I1 limit vanishes) and the on-site potential of strength -1/I1.
enum class OracleCase { BipartiteProjector, OnSitePotential };

/// Marked vertex (w, alpha).
struct MarkedVertex {
  CellVector w;
  SiteIndex alpha = 0;
};

/// Finite-lattice spectrum of H0 resolved per (k, band), with the weights
/// |<eigvec|w,alpha>|^2 = |v_alpha|^2 / n. Exact; F and its derivative are
/// termwise sums over it. Kernel states (Dirac-point zero modes) are flagged.
class SpectralTable {
 public:
  int d = 0, l = 0, r = 0;
  long long n = 0;
  SiteIndex alpha = 0;
  std::vector<double> energy;    // size n*r, grid-major then band-ascending
  std::vector<double> weight;    // same layout
  std::vector<uint8_t> kernel;   // 1 for exact zero modes at Dirac momenta
  double chi_alpha = 0;          // n * (total kernel weight) = sum_j chi_alpha^(j)
  double min_nonzero_energy = 0;

  /// F(E) = <w,alpha| (gamma H0 - E)^{-1} |w,alpha>. Throws NumericalError
  /// naming the offending eigenvalue when E is within 1e-12*scale of a pole.
  double F(double E, double gamma = 1.0) const;
  /// Termwise derivative, F'(E) > 0.
  double Fprime(double E, double gamma = 1.0) const;
  /// Largest negative and smallest positive eigenvalue of gamma*H0.
  std::pair<double, double> bracketing_poles(double gamma = 1.0) const;
};

/// Build the table from per-momentum eigendecompositions (parallel over k,
/// deterministic layout). `diracs` identifies kernel momenta for exact
/// zero-mode flagging; pass the output of find_dirac_points.
SpectralTable build_spectral_table(const LatticeSpec& spec, int l, SiteIndex alpha,
                                   const std::vector<DiracPoint>& diracs,
                                   int threads = 0);

/// One-off evaluation of F (builds a table internally; prefer the table when
/// evaluating repeatedly). Independence from w is a tested property.
double F_of_E(const LatticeSpec& spec, int l, const MarkedVertex& marked, double E,
              double gamma = 1.0, const std::vector<DiracPoint>* diracs = nullptr);

struct LatticeSums {
  int l = 0;
  std::map<int, double> moments;  // m -> <w~| H0~^{-m} |w~>
  double min_nonzero_energy = 0;
};

/// Exact momentum sums of the inverse-power moments, kernel excluded.
/// Uses the closed form E(k)^{-m} when H0(k)^2 is scalar (verified), else
/// per-k eigendecompositions. Deterministic across thread counts.
LatticeSums lattice_moments(const LatticeSpec& spec, int l, SiteIndex alpha, int m_max,
                            const std::vector<DiracPoint>& diracs, int threads = 0);

struct IntegralEstimate {
  double I1 = 0, I1_unc = 0;
  bool I2_finite = true;
  double I2 = 0, I2_unc = 0;       // valid when I2_finite
  double log_slope = 0, log_intercept = 0;  // moment2 ~ slope*ln(N) + intercept (d=2)
  std::vector<int> ladder;
  std::vector<LatticeSums> sums;   // per ladder entry (moments 1 and 2)
};

/// Default geometric ladder for the dimension, scaled so every Dirac
/// momentum lies on each grid.
std::vector<int> default_ladder(const LatticeSpec& spec, const std::vector<DiracPoint>& diracs);

/// Richardson-extrapolate the moment sums over a ladder of sizes; in d=2 the
/// m=2 moment diverges and the log-law fit (slope, intercept) is returned.
IntegralEstimate limit_integrals(const LatticeSpec& spec,
                                 const std::vector<DiracPoint>& diracs,
                                 std::vector<int> ladder = {}, int threads = 0);

/// Iterated Richardson extrapolation with leading exponent estimated from the
/// last three entries; returns (estimate, uncertainty = last correction).
std::pair<double, double> richardson_extrapolate(const std::vector<double>& ls,
                                                 const std::vector<double>& vals);

struct RootPair {
  double Eminus = 0, Eplus = 0;
};

/// Solve the eigenvalue condition in the two intervals bracketing the kernel
/// pole at 0: F(E) = f(gamma)/E (bipartite case) or F(E) = I1 (on-site case).
/// Throws NumericalError when no sign change exists in a bracket.
RootPair find_roots(const SpectralTable& table, OracleCase oracle, double gamma = 1.0,
                    double I1 = 0.0);

/// (gamma-1)^2/(2*gamma-1); the gamma=1/2 pole is rejected.
double gamma_detuning_f(double gamma);

struct SpectralPrediction {
  std::string lattice;
  int d = 0, l = 0;
  long long n = 0, N = 0;
  OracleCase oracle = OracleCase::BipartiteProjector;
  double gamma = 1.0;
  double chi_alpha = 0;
  double I1 = 0;
  double I2 = 0;           // limit for d>2; for d=2 the log-law slope
  bool I2_is_log = false;
  double moment2_at_l = 0;  // finite-size m=2 sum actually used downstream
  double Eminus = 0, Eplus = 0;
  double Fprime_minus = 0, Fprime_plus = 0;
  double overlap_start = 0;      // |<psi_+|s>|
  double run_time = 0;           // pi / (2|E_+|)
  double success_amplitude = 0;  // predicted peak |<target|psi(T)>|
};

/// Closed-form prediction from exact roots and termwise F'.
SpectralPrediction predict(const LatticeSpec& spec, int l, const MarkedVertex& marked,
                           OracleCase oracle, double gamma,
                           const std::vector<DiracPoint>& diracs, int threads = 0);

struct GammaTuning {
  double gamma = 1.0;
  double f = 0;
  double Eminus = 0, Eplus = 0;  // closed form from the finite-size m=2 sum
};

/// Closed-form detuned eigenvalues E(gamma) = +-gamma*sqrt((chi+n f)/(n m2)).
GammaTuning gamma_analysis(const LatticeSpec& spec, int l, const MarkedVertex& marked,
                           double gamma, const std::vector<DiracPoint>& diracs,
                           int threads = 0);

}  // namespace qws

#endif
