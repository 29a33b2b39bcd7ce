#ifndef QWS_DYNAMICS_HPP
#define QWS_DYNAMICS_HPP

#include <optional>
#include <string>
#include <vector>

#include "qws/bloch.hpp"
#include "qws/lattice.hpp"
#include "qws/resolvent.hpp"
#include "qws/types.hpp"

namespace qws {

struct OracleKind {
  OracleCase variant = OracleCase::BipartiteProjector;
  double gamma = 1.0;  // scaling of H0 in H = gamma*H0 + H_oracle
  double I1 = 0.0;     // on-site strength is -1/I1 (OnSitePotential only)
};

/// A fully validated search setup: lattice, size, marked vertex, oracle, and
/// the Dirac-point data the starting states are built from.
struct SearchInstance {
  LatticeSpec spec;
  int l = 0;
  MarkedVertex marked;
  OracleKind oracle;
  std::vector<DiracPoint> diracs;
  AssumptionReport assumptions;
  long long marked_vertex() const { return spec.vertex_index(marked.w, marked.alpha, l); }
};

/// Build and validate an instance. oracle_case empty = automatic: bipartite
/// when the I1 limit and the finite-size m=1 moment both vanish, on-site
/// otherwise. Checks Dirac momenta lie on the l-grid and assumptions pass.
SearchInstance make_search_instance(const LatticeSpec& spec, int l,
                                    const MarkedVertex& marked,
                                    std::optional<OracleCase> oracle_case = {},
                                    double gamma = 1.0, int threads = 0);

/// The marked-item perturbation alone (H = gamma*H0 + this).
SpMatC oracle_hamiltonian(const SearchInstance& inst);

/// Full search Hamiltonian gamma*H0 + H_oracle, sparse.
SpMatC search_hamiltonian(const SearchInstance& inst);

/// Normalized H0|w,alpha>; supported on the neighbors of the marked vertex.
VecC gamma_state(const SearchInstance& inst);

/// Overlap target for traces: H0|w,alpha> / 2^{d/2} for the bipartite case
/// (the normalization the predicted 2^{-(d+1)/2} peak amplitude refers to),
/// the marked basis vector for the on-site case.
VecC overlap_target(const SearchInstance& inst);

struct StartingState {
  VecC state;
  SiteIndex alpha = 0;
  std::vector<long long> phase_tuple;  // numerators over the common denominator
  long long phase_den = 1;
};

/// All candidate starting states: one per site label alpha and admissible
/// tuple of Dirac phases (group generated by the rational momenta),
/// deduplicated up to a global phase. Throws when the enumeration exceeds cap.
std::vector<StartingState> enumerate_starting_states(const LatticeSpec& spec, int l,
                                                     const std::vector<DiracPoint>& diracs,
                                                     int cap = 256);

/// Measurement rule: measure in the vertex basis, then guess a uniformly
/// random neighbor of the outcome (or the outcome itself).
struct SuccessRule {
  long long marked = -1;
  std::vector<std::pair<long long, int>> neighbor_degrees;  // (vertex u, deg u)
};
SuccessRule make_success_rule(const SearchInstance& inst);

double success_probability(const VecC& psi, const SuccessRule& rule);

struct EvolutionTrace {
  std::vector<double> times;
  std::vector<double> overlap_sq;
  std::vector<double> success_prob;
  double norm_drift = 0;  // max | ||psi(t)|| - 1 |
  std::string path;       // "dense" or "krylov"
};

enum class PropagatorPath { Auto, Dense, Krylov };

struct EvolveOptions {
  long long dense_budget = 4096;
  int krylov_dim = 30;
  double krylov_tol = 1e-10;
  PropagatorPath path = PropagatorPath::Auto;
};

/// exp(-iHt) psi0 sampled on `times` (sorted ascending). Dense spectral path
/// for N <= dense_budget, Lanczos short-time propagator otherwise. Aborts
/// (NumericalError) if the norm drifts beyond 1e-8.
EvolutionTrace evolve(const SpMatC& H, const VecC& psi0, const std::vector<double>& times,
                      const VecC& target, const SuccessRule* rule = nullptr,
                      const EvolveOptions& opt = {});

/// Single-time propagation returning the state itself.
VecC evolve_state(const SpMatC& H, const VecC& psi0, double t, const EvolveOptions& opt = {});

struct SearchRun {
  StartingState start;
  EvolutionTrace trace;
  double best_success = 0;
  double best_time = 0;
  double max_overlap_sq = 0;
};

struct SearchReport {
  SpectralPrediction prediction;
  int runs = 0;                     // enumerated starting states (constant overhead)
  int best_run = -1;
  double best_success = 0;
  double best_time = 0;
  double amplification_repetitions = 1;  // ~sqrt(log N) accounting for d = 2
  long long guessed_vertex = -1;    // argmax of the measured distribution at best time
  bool guess_hits_marked = false;   // guessed vertex is the marked one or adjacent to it
};

struct RunSearchOptions {
  int time_points = 200;
  double t_max_factor = 2.0;
  EvolveOptions evolve;
  int threads = 0;
};

/// Full pipeline: prediction, starting-state enumeration, evolution of every
/// candidate over [0, t_max_factor*T], selection of the best (run, time) by
/// success probability.
std::pair<std::vector<SearchRun>, SearchReport> run_search(const SearchInstance& inst,
                                                           const RunSearchOptions& opt = {});

}  // namespace qws

#endif
