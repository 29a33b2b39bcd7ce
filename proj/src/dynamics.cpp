#include "qws/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "qws/threading.hpp"

namespace qws {

SearchInstance make_search_instance(const LatticeSpec& spec, int l,
                                    const MarkedVertex& marked,
                                    std::optional<OracleCase> oracle_case, double gamma,
                                    int threads) {
  SearchInstance inst{spec, l, marked, {}, {}, {}};
  if (marked.alpha < 0 || marked.alpha >= spec.basis())
    throw ConfigError("marked site index out of range");
  if (static_cast<int>(marked.w.size()) != spec.dim())
    throw ConfigError("marked cell dimension mismatch");

  DiracScanOptions dopt;
  dopt.threads = threads;
  inst.diracs = find_dirac_points(spec, dopt);
  inst.assumptions = verify_assumptions(spec, inst.diracs, dopt);
  if (!inst.assumptions.all_pass())
    throw NumericalError("lattice fails the Dirac-point assumptions:\n" +
                         inst.assumptions.render());
  for (const auto& dp : inst.diracs) {
    if (grid_index_of_momentum(spec.dim(), l, dp.k.k) < 0) {
      RationalFit rf = nearest_rational(dp.k.k[0] / kTwoPi, 48);
      throw ConfigError("l=" + std::to_string(l) + " does not place the Dirac momentum of '" +
                        spec.name() + "' on the grid; choose l divisible by " +
                        std::to_string(rf.q));
    }
  }

  inst.oracle.gamma = gamma;
  auto integrals = limit_integrals(spec, inst.diracs, {}, threads);
  double m1_here =
      lattice_moments(spec, l, marked.alpha, 1, inst.diracs, threads).moments.at(1);
  if (oracle_case.has_value()) {
    inst.oracle.variant = *oracle_case;
  } else {
    bool bipartite = std::abs(integrals.I1) < 1e-6 && std::abs(m1_here) < 1e-8;
    inst.oracle.variant = bipartite ? OracleCase::BipartiteProjector
                                    : OracleCase::OnSitePotential;
  }
  inst.oracle.I1 = integrals.I1;
  if (inst.oracle.variant == OracleCase::OnSitePotential) {
    if (std::abs(inst.oracle.I1) < 1e-12)
      throw NumericalError("on-site oracle needs a nonzero I1 limit");
  } else {
    auto nb = neighbors(spec, l, inst.marked_vertex());
    if (std::abs(nb.onsite) > 1e-12)
      throw NumericalError("bipartite oracle requires <w,alpha|H0|w,alpha> = 0; "
                           "this lattice has an on-site term at the marked vertex");
  }
  return inst;
}

SpMatC oracle_hamiltonian(const SearchInstance& inst) {
  const long long N = inst.spec.vertices(inst.l);
  const long long wv = inst.marked_vertex();
  std::vector<Eigen::Triplet<cx>> trips;
  if (inst.oracle.variant == OracleCase::OnSitePotential) {
    trips.emplace_back(wv, wv, cx(-1.0 / inst.oracle.I1, 0.0));
  } else {
    auto nb = neighbors(inst.spec, inst.l, wv);
    for (const auto& [u, amp] : nb.neighbors) {
      trips.emplace_back(u, wv, -amp);               // -H0|w><w|
      trips.emplace_back(wv, u, -std::conj(amp));    // -|w><w|H0
    }
    if (std::abs(nb.onsite) > 0) trips.emplace_back(wv, wv, -2.0 * nb.onsite.real());
  }
  SpMatC M(N, N);
  M.setFromTriplets(trips.begin(), trips.end());
  return M;
}

SpMatC search_hamiltonian(const SearchInstance& inst) {
  SpMatC H = assemble_sparse(inst.spec, inst.l);
  if (inst.oracle.gamma != 1.0) H = H * cx(inst.oracle.gamma, 0.0);
  H = H + oracle_hamiltonian(inst);
  H.makeCompressed();
  return H;
}

VecC gamma_state(const SearchInstance& inst) {
  const long long N = inst.spec.vertices(inst.l);
  auto nb = neighbors(inst.spec, inst.l, inst.marked_vertex());
  VecC v = VecC::Zero(N);
  for (const auto& [u, amp] : nb.neighbors) v[u] = amp;
  v[inst.marked_vertex()] += nb.onsite;
  double norm = v.norm();
  if (norm < 1e-14) throw NumericalError("marked vertex is isolated: H0|w,alpha> = 0");
  return v / norm;
}

VecC overlap_target(const SearchInstance& inst) {
  const long long N = inst.spec.vertices(inst.l);
  if (inst.oracle.variant == OracleCase::OnSitePotential) {
    VecC v = VecC::Zero(N);
    v[inst.marked_vertex()] = 1.0;
    return v;
  }
  auto nb = neighbors(inst.spec, inst.l, inst.marked_vertex());
  VecC v = VecC::Zero(N);
  for (const auto& [u, amp] : nb.neighbors) v[u] = amp;
  return v / std::sqrt(std::pow(2.0, inst.spec.dim()));
}

std::vector<StartingState> enumerate_starting_states(const LatticeSpec& spec, int l,
                                                     const std::vector<DiracPoint>& diracs,
                                                     int cap) {
  const int d = spec.dim();
  const int r = spec.basis();
  const long long n = spec.cells(l);
  const int D = static_cast<int>(diracs.size());
  if (D == 0) throw NumericalError("no Dirac points: no starting states");

  // exact rational phases: k_i/(2pi) = p/q, common denominator Q
  long long Q = 1;
  for (const auto& dp : diracs)
    for (double ki : dp.k.k) {
      RationalFit rf = nearest_rational(ki / kTwoPi, 48);
      if (rf.residual > 1e-9)
        throw NumericalError("Dirac momentum is not a rational multiple of 2*pi "
                             "(assumption 4); phase enumeration unavailable");
      Q = std::lcm(Q, rf.q);
    }
  // generator per axis: the D-tuple of numerators of k^{(j)}_i * Q / (2pi)
  std::vector<std::vector<long long>> gens(d, std::vector<long long>(D));
  for (int j = 0; j < D; ++j)
    for (int i = 0; i < d; ++i)
      gens[i][j] = std::llround(diracs[j].k.k[i] / kTwoPi * Q);
  std::set<std::vector<long long>> group;
  group.insert(std::vector<long long>(D, 0));
  for (;;) {
    std::set<std::vector<long long>> next = group;
    for (const auto& t : group)
      for (int i = 0; i < d; ++i) {
        std::vector<long long> u(D);
        for (int j = 0; j < D; ++j) u[j] = ((t[j] + gens[i][j]) % Q + Q) % Q;
        next.insert(u);
      }
    if (static_cast<int>(next.size()) > cap)
      throw NumericalError("starting-state phase enumeration exceeds cap " +
                           std::to_string(cap) + " (group denominator " +
                           std::to_string(Q) + ", " + std::to_string(D) + " points)");
    if (next.size() == group.size()) break;
    group = std::move(next);
  }

  // per-point kernel column alpha, spread over cells with the e^{i k.x} phase
  std::vector<StartingState> out;
  const long long N = n * r;
  for (SiteIndex alpha = 0; alpha < r; ++alpha) {
    double chi_alpha = 0;
    for (const auto& dp : diracs) chi_alpha += dp.chi[alpha];
    if (chi_alpha < 1e-12) continue;
    for (const auto& tuple : group) {
      VecC s = VecC::Zero(N);
      for (int j = 0; j < D; ++j) {
        const auto& dp = diracs[j];
        double chij = dp.chi[alpha];
        if (chij < 1e-14) continue;
        MatC P = dp.kernel_basis * dp.kernel_basis.adjoint();
        cx phase = std::polar(1.0, -kTwoPi * static_cast<double>(tuple[j]) / Q);
        cx pref = phase * std::sqrt(chij / chi_alpha) / std::sqrt(chij * n);
        for (long long c = 0; c < n; ++c) {
          double kx = 0;
          long long t = c;
          for (int i = 0; i < d; ++i) {
            kx += dp.k.k[i] * static_cast<double>(t % l);
            t /= l;
          }
          cx cell_phase = std::polar(1.0, kx);
          for (int sg = 0; sg < r; ++sg) {
            cx amp = P(sg, alpha);
            if (std::abs(amp) < 1e-16) continue;
            s[c * r + sg] += pref * cell_phase * amp;
          }
        }
      }
      double norm = s.norm();
      if (norm < 1e-12) continue;
      s /= norm;
      bool dup = false;
      for (const auto& prev : out)
        if (prev.alpha == alpha && std::abs(prev.state.dot(s)) > 1.0 - 1e-10) dup = true;
      if (dup) continue;
      StartingState st;
      st.state = std::move(s);
      st.alpha = alpha;
      st.phase_tuple = tuple;
      st.phase_den = Q;
      out.push_back(std::move(st));
    }
  }
  return out;
}

SuccessRule make_success_rule(const SearchInstance& inst) {
  SuccessRule rule;
  rule.marked = inst.marked_vertex();
  auto nb = neighbors(inst.spec, inst.l, rule.marked);
  for (const auto& [u, amp] : nb.neighbors) {
    auto unb = neighbors(inst.spec, inst.l, u);
    rule.neighbor_degrees.emplace_back(u, static_cast<int>(unb.neighbors.size()));
  }
  return rule;
}

double success_probability(const VecC& psi, const SuccessRule& rule) {
  double p = std::norm(psi[rule.marked]);
  for (const auto& [u, deg] : rule.neighbor_degrees)
    if (deg > 0) p += std::norm(psi[u]) / deg;
  return p;
}

// --------------------------------------------------------------------------
// Propagators
// --------------------------------------------------------------------------

namespace {

struct LanczosStepper {
  const SpMatC& H;
  int m;
  double tol;
  VecC psi;

  /// Advance by dt with adaptive substepping; Lanczos with full reorthogonalization.
  void advance(double dt) {
    double remaining = dt;
    double h = dt;
    int guard = 0;
    while (remaining > 1e-14 * std::max(1.0, dt)) {
      if (++guard > 100000) throw NumericalError("Krylov propagator stalled");
      h = std::min(h, remaining);
      double beta0 = psi.norm();
      if (beta0 < 1e-300) return;
      const long long N = psi.size();
      MatC V(N, m);
      VecR a(m), b(m);
      V.col(0) = psi / beta0;
      int used = m;
      bool breakdown = false;
      for (int j = 0; j < m; ++j) {
        VecC w = H * V.col(j);
        if (j > 0) w -= b[j - 1] * V.col(j - 1);
        a[j] = w.dot(V.col(j)).real();
        w -= a[j] * V.col(j);
        // full reorthogonalization
        for (int i = 0; i <= j; ++i) w -= V.col(i).dot(w) * V.col(i);
        double nb = w.norm();
        b[j] = nb;
        if (j + 1 < m) {
          if (nb < 1e-12) {
            used = j + 1;
            breakdown = true;
            break;
          }
          V.col(j + 1) = w / nb;
        }
      }
      MatR T = MatR::Zero(used, used);
      for (int j = 0; j < used; ++j) {
        T(j, j) = a[j];
        if (j + 1 < used) T(j, j + 1) = T(j + 1, j) = b[j];
      }
      Eigen::SelfAdjointEigenSolver<MatR> es(T);
      VecC u = VecC::Zero(used);
      const auto& W = es.eigenvectors();
      for (int i = 0; i < used; ++i) {
        cx phase = std::polar(1.0, -es.eigenvalues()[i] * h);
        u += phase * W(0, i) * W.col(i).cast<cx>();
      }
      double err = breakdown ? 0.0 : std::abs(b[used - 1] * u[used - 1]);
      if (err > tol && h > 1e-12) {
        h *= 0.5;
        continue;
      }
      psi = beta0 * (V.leftCols(used) * u);
      remaining -= h;
      if (err < 0.1 * tol) h *= 1.8;  // cautious growth
    }
  }
};

}  // namespace

EvolutionTrace evolve(const SpMatC& H, const VecC& psi0, const std::vector<double>& times,
                      const VecC& target, const SuccessRule* rule, const EvolveOptions& opt) {
  if (!std::is_sorted(times.begin(), times.end()))
    throw ConfigError("evolution times must be sorted ascending");
  if (std::abs(psi0.norm() - 1.0) > 1e-9)
    throw ConfigError("initial state is not normalized");
  const long long N = psi0.size();
  bool dense = opt.path == PropagatorPath::Dense ||
               (opt.path == PropagatorPath::Auto && N <= opt.dense_budget);
  EvolutionTrace tr;
  tr.times = times;
  tr.overlap_sq.resize(times.size());
  tr.success_prob.assign(times.size(), 0.0);
  tr.path = dense ? "dense" : "krylov";

  auto record = [&](std::size_t i, const VecC& psi) {
    tr.overlap_sq[i] = std::norm(target.dot(psi));
    if (rule) tr.success_prob[i] = success_probability(psi, *rule);
    tr.norm_drift = std::max(tr.norm_drift, std::abs(psi.norm() - 1.0));
    if (tr.norm_drift > 1e-8)
      throw NumericalError("propagator norm drift " + std::to_string(tr.norm_drift) +
                           " exceeds 1e-8 at t=" + std::to_string(times[i]));
  };

  if (dense) {
    MatC Hd(H);
    Eigen::SelfAdjointEigenSolver<MatC> es(Hd);
    if (es.info() != Eigen::Success) throw NumericalError("dense eigensolve failed");
    VecC c = es.eigenvectors().adjoint() * psi0;
    for (std::size_t i = 0; i < times.size(); ++i) {
      VecC phased(c.size());
      for (long long j = 0; j < c.size(); ++j)
        phased[j] = std::polar(1.0, -es.eigenvalues()[j] * times[i]) * c[j];
      VecC psi = es.eigenvectors() * phased;
      record(i, psi);
    }
  } else {
    LanczosStepper st{H, opt.krylov_dim, opt.krylov_tol, psi0};
    double t = 0;
    for (std::size_t i = 0; i < times.size(); ++i) {
      st.advance(times[i] - t);
      t = times[i];
      record(i, st.psi);
    }
  }
  return tr;
}

VecC evolve_state(const SpMatC& H, const VecC& psi0, double t, const EvolveOptions& opt) {
  const long long N = psi0.size();
  bool dense = opt.path == PropagatorPath::Dense ||
               (opt.path == PropagatorPath::Auto && N <= opt.dense_budget);
  if (dense) {
    MatC Hd(H);
    Eigen::SelfAdjointEigenSolver<MatC> es(Hd);
    VecC c = es.eigenvectors().adjoint() * psi0;
    for (long long j = 0; j < c.size(); ++j)
      c[j] *= std::polar(1.0, -es.eigenvalues()[j] * t);
    return es.eigenvectors() * c;
  }
  LanczosStepper st{H, opt.krylov_dim, opt.krylov_tol, psi0};
  st.advance(t);
  return st.psi;
}

std::pair<std::vector<SearchRun>, SearchReport> run_search(const SearchInstance& inst,
                                                           const RunSearchOptions& opt) {
  SearchReport rep;
  rep.prediction = predict(inst.spec, inst.l, inst.marked, inst.oracle.variant,
                           inst.oracle.gamma, inst.diracs, opt.threads);
  auto states = enumerate_starting_states(inst.spec, inst.l, inst.diracs);
  rep.runs = static_cast<int>(states.size());
  const double T = rep.prediction.run_time;
  std::vector<double> times(opt.time_points);
  for (int i = 0; i < opt.time_points; ++i)
    times[i] = opt.t_max_factor * T * i / (opt.time_points - 1);

  SpMatC H = search_hamiltonian(inst);
  VecC target = overlap_target(inst);
  SuccessRule rule = make_success_rule(inst);

  std::vector<SearchRun> runs;
  runs.reserve(states.size());
  for (auto& st : states) {
    SearchRun run;
    run.trace = evolve(H, st.state, times, target, &rule, opt.evolve);
    auto it = std::max_element(run.trace.success_prob.begin(), run.trace.success_prob.end());
    run.best_success = *it;
    run.best_time = times[std::distance(run.trace.success_prob.begin(), it)];
    run.max_overlap_sq =
        *std::max_element(run.trace.overlap_sq.begin(), run.trace.overlap_sq.end());
    run.start = std::move(st);
    runs.push_back(std::move(run));
  }
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (runs[i].best_success > rep.best_success) {
      rep.best_success = runs[i].best_success;
      rep.best_time = runs[i].best_time;
      rep.best_run = static_cast<int>(i);
    }
  }
  if (inst.spec.dim() == 2)
    rep.amplification_repetitions =
        std::sqrt(std::log(static_cast<double>(inst.spec.vertices(inst.l))));

  if (rep.best_run >= 0) {
    VecC psi = evolve_state(H, runs[rep.best_run].start.state, rep.best_time, opt.evolve);
    long long arg = 0;
    double best = -1;
    for (long long v = 0; v < psi.size(); ++v)
      if (std::norm(psi[v]) > best) {
        best = std::norm(psi[v]);
        arg = v;
      }
    rep.guessed_vertex = arg;
    rep.guess_hits_marked = (arg == rule.marked);
    for (const auto& [u, deg] : rule.neighbor_degrees)
      if (arg == u) rep.guess_hits_marked = true;
  }
  return {std::move(runs), rep};
}

}  // namespace qws
