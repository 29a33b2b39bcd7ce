#include "qws/bloch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "qws/threading.hpp"

namespace qws {

std::vector<Momentum> momentum_grid(int d, int l) {
  if (l < 1) throw ConfigError("momentum grid needs l >= 1");
  long long n = ipow(l, d);
  std::vector<Momentum> out(n);
  for (long long g = 0; g < n; ++g) {
    Momentum mo;
    mo.k.resize(d);
    mo.grid.resize(d);
    long long t = g;
    for (int i = 0; i < d; ++i) {
      int mi = static_cast<int>(t % l);
      t /= l;
      mo.grid[i] = mi;
      mo.k[i] = wrap_angle(kTwoPi * mi / l);
    }
    out[g] = std::move(mo);
  }
  return out;
}

MatC block_matrix_raw(const LatticeSpec& spec, const std::vector<double>& k) {
  const int r = spec.basis();
  MatC A = MatC::Zero(r, r);
  for (const auto& e : spec.hops()) {
    double phase = 0;
    for (int i = 0; i < spec.dim(); ++i) phase -= k[i] * e.delta[i];
    A(e.sigma_prime, e.sigma) += e.amp * std::polar(1.0, phase);
  }
  return A;
}

BlochBlock block_matrix(const LatticeSpec& spec, const Momentum& k) {
  BlochBlock b;
  b.k = k;
  b.matrix = block_matrix_raw(spec, k.k);
  Eigen::SelfAdjointEigenSolver<MatC> es(b.matrix);
  if (es.info() != Eigen::Success)
    throw NumericalError("Bloch block eigensolve failed");
  b.evals = es.eigenvalues();
  b.evecs = es.eigenvectors();
  return b;
}

int default_scan_resolution(int d) {
  switch (d) {
    case 1: return 256;
    case 2: return 64;
    case 3: return 64;
    case 4: return 16;
    case 5: return 10;
    default: return 8;
  }
}

RationalFit nearest_rational(double x, int qmax) {
  RationalFit best;
  best.residual = std::numeric_limits<double>::infinity();
  for (int q = 1; q <= qmax; ++q) {
    long long p = std::llround(x * q);
    double res = std::abs(x - static_cast<double>(p) / q);
    if (res < best.residual - 1e-18) {
      best = {p, q, res};
    }
  }
  return best;
}

namespace {

VecR band_energies(const LatticeSpec& spec, const std::vector<double>& k, double shift) {
  MatC A = block_matrix_raw(spec, k);
  for (int i = 0; i < A.rows(); ++i) A(i, i) -= shift;
  Eigen::SelfAdjointEigenSolver<MatC> es(A, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

double min_abs_energy(const LatticeSpec& spec, const std::vector<double>& k, double shift) {
  VecR e = band_energies(spec, k, shift);
  double m = std::numeric_limits<double>::infinity();
  for (int i = 0; i < e.size(); ++i) m = std::min(m, std::abs(e[i]));
  return m;
}

/// Nelder-Mead minimization of f over R^d (periodic coords handled by f).
std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                std::vector<double> x0, double scale, int maxit,
                                double ftol) {
  const int d = static_cast<int>(x0.size());
  std::vector<std::vector<double>> simplex(d + 1, x0);
  std::vector<double> fv(d + 1);
  for (int i = 0; i < d; ++i) simplex[i + 1][i] += scale;
  for (int i = 0; i <= d; ++i) fv[i] = f(simplex[i]);
  for (int it = 0; it < maxit; ++it) {
    std::vector<int> idx(d + 1);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    std::vector<std::vector<double>> s2(d + 1);
    std::vector<double> f2(d + 1);
    for (int i = 0; i <= d; ++i) {
      s2[i] = simplex[idx[i]];
      f2[i] = fv[idx[i]];
    }
    simplex = s2;
    fv = f2;
    if (fv[d] - fv[0] < ftol) break;
    std::vector<double> cen(d, 0.0);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) cen[j] += simplex[i][j] / d;
    auto combine = [&](double t) {
      std::vector<double> x(d);
      for (int j = 0; j < d; ++j) x[j] = cen[j] + t * (simplex[d][j] - cen[j]);
      return x;
    };
    auto xr = combine(-1.0);
    double fr = f(xr);
    if (fr < fv[0]) {
      auto xe = combine(-2.0);
      double fe = f(xe);
      if (fe < fr) {
        simplex[d] = xe;
        fv[d] = fe;
      } else {
        simplex[d] = xr;
        fv[d] = fr;
      }
    } else if (fr < fv[d - 1]) {
      simplex[d] = xr;
      fv[d] = fr;
    } else {
      auto xc = combine(fr < fv[d] ? -0.5 : 0.5);
      double fc = f(xc);
      if (fc < std::min(fr, fv[d])) {
        simplex[d] = xc;
        fv[d] = fc;
      } else {
        for (int i = 1; i <= d; ++i) {
          for (int j = 0; j < d; ++j)
            simplex[i][j] = simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]);
          fv[i] = f(simplex[i]);
        }
      }
    }
  }
  int best = 0;
  for (int i = 1; i <= d; ++i)
    if (fv[i] < fv[best]) best = i;
  return simplex[best];
}

bool same_momentum(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  for (size_t i = 0; i < a.size(); ++i)
    if (angle_dist(a[i], b[i]) > tol) return false;
  return true;
}

}  // namespace

std::vector<DiracPoint> find_dirac_points(const LatticeSpec& spec,
                                          const DiracScanOptions& opt) {
  const int d = spec.dim();
  const int res = opt.resolution > 0 ? opt.resolution : default_scan_resolution(d);
  const double spacing = kTwoPi / res;

  double shift = opt.energy_shift;
  auto f = [&](const std::vector<double>& k) { return min_abs_energy(spec, k, shift); };

  // coarse scan
  const long long npts = ipow(res, d);
  std::vector<float> scan(npts);
  parallel_blocks(npts, 4096, opt.threads, [&](std::size_t, std::size_t b, std::size_t e) {
    std::vector<double> k(d);
    for (std::size_t g = b; g < e; ++g) {
      long long t = g;
      for (int i = 0; i < d; ++i) {
        k[i] = wrap_angle(kTwoPi * static_cast<double>(t % res) / res);
        t /= res;
      }
      scan[g] = static_cast<float>(f(k));
    }
  });

  if (opt.auto_shift && shift == 0.0) {
    // If no band reaches zero anywhere, look for a common touching energy of
    // adjacent bands and retry with the diagonal shifted by it.
    double global_min = *std::min_element(scan.begin(), scan.end());
    if (global_min > opt.tol) {
      double best_gap = std::numeric_limits<double>::infinity();
      double cand = 0;
      std::vector<double> k(d);
      for (long long g = 0; g < npts; ++g) {
        long long t = g;
        for (int i = 0; i < d; ++i) {
          k[i] = wrap_angle(kTwoPi * static_cast<double>(t % res) / res);
          t /= res;
        }
        VecR e = band_energies(spec, k, 0.0);
        for (int i = 0; i + 1 < e.size(); ++i) {
          if (e[i + 1] - e[i] < best_gap) {
            best_gap = e[i + 1] - e[i];
            cand = 0.5 * (e[i + 1] + e[i]);
          }
        }
      }
      DiracScanOptions o2 = opt;
      o2.auto_shift = false;
      o2.energy_shift = cand;
      auto out = find_dirac_points(spec, o2);
      return out;
    }
  }

  // seeds: local minima of the scan below a threshold
  const double seed_thr = std::max(0.5, 1.5 * spacing * std::sqrt(static_cast<double>(d)));
  std::vector<long long> seeds;
  std::vector<int> digits(d);
  for (long long g = 0; g < npts; ++g) {
    if (scan[g] > seed_thr) continue;
    long long t = g;
    for (int i = 0; i < d; ++i) {
      digits[i] = static_cast<int>(t % res);
      t /= res;
    }
    bool is_min = true;
    for (int i = 0; i < d && is_min; ++i) {
      for (int s : {-1, 1}) {
        long long gg = 0;
        for (int j = d - 1; j >= 0; --j) {
          int dj = (j == i) ? wrap(digits[j] + s, res) : digits[j];
          gg = gg * res + dj;
        }
        if (scan[gg] < scan[g]) {
          is_min = false;
          break;
        }
      }
    }
    if (is_min) seeds.push_back(g);
  }
  if (seeds.empty())
    throw NumericalError("no Dirac point: band minimum is positive everywhere (min |E| = " +
                         std::to_string(*std::min_element(scan.begin(), scan.end())) + ")");

  // refine each seed
  std::vector<DiracPoint> found;
  std::mt19937_64 rng(0x5eed);
  for (long long g : seeds) {
    std::vector<double> k0(d);
    long long t = g;
    for (int i = 0; i < d; ++i) {
      k0[i] = kTwoPi * static_cast<double>(t % res) / res;
      t /= res;
    }
    auto kr = nelder_mead(f, k0, spacing / 2, 600, 1e-15);
    // snap to rational multiples of pi when that does not hurt the minimum
    auto ks = kr;
    for (int i = 0; i < d; ++i) {
      RationalFit rf = nearest_rational(wrap_angle(kr[i]) / kPi, opt.rational_den_max);
      if (rf.residual < 1e-5) ks[i] = kPi * static_cast<double>(rf.p) / rf.q;
    }
    if (f(ks) <= std::max(f(kr), 1e-12)) kr = ks;
    double fmin = f(kr);
    if (fmin > opt.tol) continue;
    for (int i = 0; i < d; ++i) kr[i] = wrap_angle(kr[i]);
    bool dup = false;
    for (const auto& dp : found)
      if (same_momentum(dp.k.k, kr, 1e-5)) dup = true;
    if (dup) continue;

    DiracPoint dp;
    dp.k.k = kr;
    // kernel bands and chi
    MatC A = block_matrix_raw(spec, kr);
    for (int i = 0; i < A.rows(); ++i) A(i, i) -= shift;
    Eigen::SelfAdjointEigenSolver<MatC> es(A);
    VecR ev = es.eigenvalues();
    double ker_tol = std::max(1e-8, 10 * fmin);
    std::vector<int> kerbands;
    for (int i = 0; i < ev.size(); ++i)
      if (std::abs(ev[i]) <= ker_tol) kerbands.push_back(i);
    dp.band_indices = kerbands;
    dp.kernel_basis = MatC(spec.basis(), kerbands.size());
    for (size_t i = 0; i < kerbands.size(); ++i)
      dp.kernel_basis.col(i) = es.eigenvectors().col(kerbands[i]);
    MatC P = dp.kernel_basis * dp.kernel_basis.adjoint();
    dp.chi.resize(spec.basis());
    for (int s = 0; s < spec.basis(); ++s) dp.chi[s] = P(s, s).real();

    // linearity probe: axis rays plus 8 seeded random rays
    std::vector<std::vector<double>> rays;
    for (int i = 0; i < d; ++i) {
      std::vector<double> r1(d, 0.0), r2(d, 0.0);
      r1[i] = 1.0;
      r2[i] = -1.0;
      rays.push_back(r1);
      rays.push_back(r2);
    }
    std::normal_distribution<double> nd;
    for (int j = 0; j < 8; ++j) {
      std::vector<double> r(d);
      double norm = 0;
      for (int i = 0; i < d; ++i) {
        r[i] = nd(rng);
        norm += r[i] * r[i];
      }
      norm = std::sqrt(norm);
      for (int i = 0; i < d; ++i) r[i] /= norm;
      rays.push_back(r);
    }
    double c_at3 = std::numeric_limits<double>::infinity();
    double c_at2 = std::numeric_limits<double>::infinity();
    for (const auto& rdir : rays) {
      for (double eps : {1e-2, 1e-3}) {
        std::vector<double> kk(d);
        for (int i = 0; i < d; ++i) kk[i] = kr[i] + eps * rdir[i];
        double ratio = f(kk) / eps;
        (eps == 1e-3 ? c_at3 : c_at2) = std::min(eps == 1e-3 ? c_at3 : c_at2, ratio);
      }
    }
    dp.linearity_constant = c_at3;
    if (c_at3 < opt.linearity_min)
      throw NumericalError("band touching at located minimum is not linear "
                           "(sampled |E|/|delta| = " + std::to_string(c_at3) +
                           " at |delta|=1e-3; quadratic touching?)");
    (void)c_at2;
    found.push_back(std::move(dp));
  }
  if (found.empty())
    throw NumericalError("no Dirac point found: scan minima did not refine below tol");

  // consistent kernel dimension across points
  std::sort(found.begin(), found.end(), [](const DiracPoint& a, const DiracPoint& b) {
    return std::lexicographical_compare(a.k.k.begin(), a.k.k.end(), b.k.k.begin(),
                                        b.k.k.end());
  });
  return found;
}

AssumptionReport verify_assumptions(const LatticeSpec& spec,
                                    const std::vector<DiracPoint>& diracs,
                                    const DiracScanOptions& opt) {
  AssumptionReport rep;
  const int d = spec.dim();
  const int res = opt.resolution > 0 ? opt.resolution : default_scan_resolution(d);
  const double spacing = kTwoPi / res;
  rep.D = static_cast<int>(diracs.size());
  rep.m = diracs.empty() ? 0 : diracs.front().m();
  rep.energy_shift = opt.energy_shift;

  // (1) common zero energy at all located points
  double max_ker_energy = 0;
  bool m_consistent = true;
  for (const auto& dp : diracs) {
    if (dp.m() != rep.m) m_consistent = false;
    VecR ev = band_energies(spec, dp.k.k, opt.energy_shift);
    for (int idx : dp.band_indices) max_ker_energy = std::max(max_ker_energy, std::abs(ev[idx]));
  }
  rep.a[0].evidence = max_ker_energy;
  rep.a[0].pass = m_consistent && max_ker_energy <= opt.tol;
  rep.a[0].note = m_consistent ? "max |E| over kernel bands at the located points"
                               : "kernel dimension differs between points";

  // (2) no other zeros away from the points: min over scan outside exclusion
  // balls of min_i |E_i|, all bands
  const double ball = 3.0 * spacing;
  double off_min = std::numeric_limits<double>::infinity();
  const long long npts = ipow(res, d);
  std::vector<double> k(d);
  double m_plus_one_min = std::numeric_limits<double>::infinity();
  for (long long g = 0; g < npts; ++g) {
    long long t = g;
    for (int i = 0; i < d; ++i) {
      k[i] = wrap_angle(kTwoPi * static_cast<double>(t % res) / res);
      t /= res;
    }
    VecR ev = band_energies(spec, k, opt.energy_shift);
    // (3) evidence: (m+1)-th smallest |E| anywhere on the grid
    if (rep.m < spec.basis()) {
      std::vector<double> a(ev.size());
      for (int i = 0; i < ev.size(); ++i) a[i] = std::abs(ev[i]);
      std::nth_element(a.begin(), a.begin() + rep.m, a.end());
      m_plus_one_min = std::min(m_plus_one_min, a[rep.m]);
    }
    bool inside = false;
    for (const auto& dp : diracs) {
      double dist2 = 0;
      for (int i = 0; i < d; ++i) {
        double dd = angle_dist(k[i], dp.k.k[i]);
        dist2 += dd * dd;
      }
      if (dist2 < ball * ball) inside = true;
    }
    if (inside) continue;
    for (int i = 0; i < ev.size(); ++i) off_min = std::min(off_min, std::abs(ev[i]));
  }
  double cmin = diracs.empty() ? 1.0 : diracs.front().linearity_constant;
  for (const auto& dp : diracs) cmin = std::min(cmin, dp.linearity_constant);
  rep.a[1].evidence = off_min;
  rep.a[1].pass = off_min > std::max(1e-6, 0.1 * cmin * ball);
  rep.a[1].note = "min |E_i(k)| outside exclusion balls around the points";

  rep.a[2].evidence = (rep.m < spec.basis()) ? m_plus_one_min
                                             : std::numeric_limits<double>::infinity();
  rep.a[2].pass = (rep.m >= spec.basis()) || m_plus_one_min > 0.05;
  rep.a[2].note = (rep.m >= spec.basis())
                      ? "all bands touch zero (m = r); vacuous"
                      : "min over the grid of the (m+1)-th smallest |E_i(k)|";

  // (4) rationality of k/pi
  double worst_res = 0;
  long long lcm_den = 1;
  for (const auto& dp : diracs) {
    for (int i = 0; i < d; ++i) {
      RationalFit rf = nearest_rational(dp.k.k[i] / kPi, opt.rational_den_max);
      worst_res = std::max(worst_res, rf.residual);
      lcm_den = std::lcm(lcm_den, rf.q);
    }
  }
  rep.a[3].evidence = worst_res;
  rep.a[3].pass = worst_res < opt.tol;
  rep.a[3].note = "max residual of k/pi vs rationals with denominator <= " +
                  std::to_string(opt.rational_den_max) +
                  "; phase-group denominator lcm = " + std::to_string(lcm_den);

  // (5) min chi
  double min_chi = std::numeric_limits<double>::infinity();
  for (const auto& dp : diracs)
    for (double c : dp.chi) min_chi = std::min(min_chi, c);
  rep.a[4].evidence = min_chi;
  rep.a[4].pass = min_chi > 1e-6;
  rep.a[4].note = "min over points and sites of chi";
  return rep;
}

std::string AssumptionReport::render() const {
  std::ostringstream os;
  os << "Dirac points: D=" << D << ", degenerate bands m=" << m;
  if (energy_shift != 0) os << ", energy shift " << energy_shift;
  os << "\n";
  const char* names[5] = {"common zero energy", "no other zeros", "remaining bands gapped",
                          "momenta rational multiples of pi", "chi weights nonzero"};
  for (int i = 0; i < 5; ++i) {
    os << "  assumption " << (i + 1) << " [" << (a[i].pass ? "pass" : "FAIL") << "] "
       << names[i] << ": " << a[i].evidence << " (" << a[i].note << ")\n";
  }
  return os.str();
}

MatC fourier_matrix(const LatticeSpec& spec, int l) {
  const int d = spec.dim();
  const int r = spec.basis();
  const long long n = spec.cells(l);
  const long long N = n * r;
  MatC F = MatC::Zero(N, N);
  auto grid = momentum_grid(d, l);
  const double norm = 1.0 / std::sqrt(static_cast<double>(n));
  for (long long g = 0; g < n; ++g) {
    for (long long c = 0; c < n; ++c) {
      double phase = 0;
      long long t = c;
      for (int i = 0; i < d; ++i) {
        phase += grid[g].k[i] * static_cast<double>(t % l);
        t /= l;
      }
      cx val = std::polar(norm, phase);
      for (int s = 0; s < r; ++s) F(c * r + s, g * r + s) = val;
    }
  }
  return F;
}

bool has_scalar_square_blocks(const LatticeSpec& spec) {
  std::mt19937_64 rng(0xb10c);
  std::uniform_real_distribution<double> ud(-kPi, kPi);
  const int r = spec.basis();
  for (int trial = 0; trial < 24; ++trial) {
    std::vector<double> k(spec.dim());
    for (auto& ki : k) ki = ud(rng);
    MatC A = block_matrix_raw(spec, k);
    MatC A2 = A * A;
    cx mean = A2.trace() / static_cast<double>(r);
    double off = (A2 - mean * MatC::Identity(r, r)).cwiseAbs().maxCoeff();
    if (off > 1e-10 * std::max(1.0, std::abs(mean))) return false;
  }
  return true;
}

long long grid_index_of_momentum(int d, int l, const std::vector<double>& k, double tol) {
  long long g = 0;
  for (int i = d - 1; i >= 0; --i) {
    double frac = k[i] / kTwoPi * l;
    long long m = std::llround(frac);
    if (std::abs(frac - m) > tol * l) return -1;
    g = g * l + wrap(static_cast<int>(m), l);
  }
  return g;
}

}  // namespace qws
