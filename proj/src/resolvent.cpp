#include "qws/resolvent.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qws/threading.hpp"

namespace qws {

namespace {

constexpr std::size_t kGridBlock = 4096;  // fixed; keeps sums thread-count independent

/// Kernel band count at a grid momentum, or 0 if it is not a Dirac momentum.
int kernel_bands_at(const std::vector<double>& k, const std::vector<DiracPoint>& diracs) {
  for (const auto& dp : diracs) {
    bool match = true;
    for (size_t i = 0; i < k.size(); ++i)
      if (angle_dist(k[i], dp.k.k[i]) > 1e-9) {
        match = false;
        break;
      }
    if (match) return dp.m();
  }
  return 0;
}

void decode_grid(long long g, int d, int l, std::vector<double>& k) {
  for (int i = 0; i < d; ++i) {
    k[i] = wrap_angle(kTwoPi * static_cast<double>(g % l) / l);
    g /= l;
  }
}

}  // namespace

SpectralTable build_spectral_table(const LatticeSpec& spec, int l, SiteIndex alpha,
                                   const std::vector<DiracPoint>& diracs, int threads) {
  SpectralTable t;
  t.d = spec.dim();
  t.l = l;
  t.r = spec.basis();
  t.n = spec.cells(l);
  t.alpha = alpha;
  if (alpha < 0 || alpha >= t.r) throw ConfigError("marked site index out of range");
  const long long total = t.n * t.r;
  if (total > (1LL << 24))
    throw ConfigError("spectral table too large (n*r > 2^24); use lattice_moments");
  t.energy.resize(total);
  t.weight.resize(total);
  t.kernel.assign(total, 0);
  const double inv_n = 1.0 / static_cast<double>(t.n);

  parallel_blocks(t.n, kGridBlock, threads, [&](std::size_t, std::size_t b, std::size_t e) {
    std::vector<double> k(t.d);
    for (std::size_t g = b; g < e; ++g) {
      decode_grid(static_cast<long long>(g), t.d, l, k);
      MatC A = block_matrix_raw(spec, k);
      Eigen::SelfAdjointEigenSolver<MatC> es(A);
      int nker = kernel_bands_at(k, diracs);
      // kernel bands = the nker smallest in |E|
      std::vector<int> order(t.r);
      std::iota(order.begin(), order.end(), 0);
      if (nker > 0)
        std::sort(order.begin(), order.end(), [&](int i, int j) {
          return std::abs(es.eigenvalues()[i]) < std::abs(es.eigenvalues()[j]);
        });
      for (int i = 0; i < t.r; ++i) {
        long long idx = static_cast<long long>(g) * t.r + i;
        t.energy[idx] = es.eigenvalues()[i];
        t.weight[idx] = std::norm(es.eigenvectors()(alpha, i)) * inv_n;
      }
      for (int j = 0; j < nker; ++j)
        t.kernel[static_cast<long long>(g) * t.r + order[j]] = 1;
    }
  });

  KahanSum chi;
  double min_nz = std::numeric_limits<double>::infinity();
  for (long long i = 0; i < total; ++i) {
    if (t.kernel[i])
      chi.add(t.weight[i]);
    else
      min_nz = std::min(min_nz, std::abs(t.energy[i]));
  }
  t.chi_alpha = chi.value() * static_cast<double>(t.n);
  t.min_nonzero_energy = min_nz;
  return t;
}

double SpectralTable::F(double E, double gamma) const {
  double scale = 0;
  for (double e : energy) scale = std::max(scale, std::abs(gamma * e));
  scale = std::max(scale, std::abs(E));
  // pole proximity check
  for (size_t i = 0; i < energy.size(); ++i) {
    double den = gamma * energy[i] - E;
    if (std::abs(den) < 1e-12 * scale && weight[i] > 1e-300)
      throw NumericalError("F(E): E=" + std::to_string(E) +
                           " is within 1e-12 of eigenvalue " +
                           std::to_string(gamma * energy[i]));
  }
  KahanSum s;
  for (size_t i = 0; i < energy.size(); ++i) s.add(weight[i] / (gamma * energy[i] - E));
  return s.value();
}

double SpectralTable::Fprime(double E, double gamma) const {
  KahanSum s;
  for (size_t i = 0; i < energy.size(); ++i) {
    double den = gamma * energy[i] - E;
    s.add(weight[i] / (den * den));
  }
  return s.value();
}

std::pair<double, double> SpectralTable::bracketing_poles(double gamma) const {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < energy.size(); ++i) {
    if (kernel[i]) continue;
    double e = gamma * energy[i];
    if (e < -1e-12) lo = std::max(lo, e);
    if (e > 1e-12) hi = std::min(hi, e);
  }
  if (!std::isfinite(lo) || !std::isfinite(hi))
    throw NumericalError("spectrum does not bracket 0 on both sides");
  return {lo, hi};
}

double F_of_E(const LatticeSpec& spec, int l, const MarkedVertex& marked, double E,
              double gamma, const std::vector<DiracPoint>* diracs) {
  std::vector<DiracPoint> none;
  const auto& dp = diracs ? *diracs : none;
  auto table = build_spectral_table(spec, l, marked.alpha, dp);
  return table.F(E, gamma);
}

// --------------------------------------------------------------------------
// Moments
// --------------------------------------------------------------------------

LatticeSums lattice_moments(const LatticeSpec& spec, int l, SiteIndex alpha, int m_max,
                            const std::vector<DiracPoint>& diracs, int threads) {
  const int d = spec.dim();
  const int r = spec.basis();
  const long long n = spec.cells(l);
  if (m_max < 1) throw ConfigError("m_max must be >= 1");
  const bool scalar_sq = has_scalar_square_blocks(spec);

  // column alpha of the block: entries with e.sigma == alpha
  std::vector<const HoppingEntry*> col;
  for (const auto& e : spec.hops())
    if (e.sigma == alpha) col.push_back(&e);

  const std::size_t nblocks = (n + kGridBlock - 1) / kGridBlock;
  std::vector<std::vector<double>> partial(nblocks, std::vector<double>(m_max + 1, 0.0));
  std::vector<double> blockmin(nblocks, std::numeric_limits<double>::infinity());

  parallel_blocks(n, kGridBlock, threads, [&](std::size_t bi, std::size_t b, std::size_t e) {
    std::vector<KahanSum> acc(m_max + 1);
    double mn = std::numeric_limits<double>::infinity();
    std::vector<double> k(d);
    std::vector<cx> colvals(r);
    for (std::size_t g = b; g < e; ++g) {
      decode_grid(static_cast<long long>(g), d, l, k);
      int nker = kernel_bands_at(k, diracs);
      if (scalar_sq) {
        // E^2 from the alpha column norm; diagonal entry for odd moments
        std::fill(colvals.begin(), colvals.end(), cx(0, 0));
        for (const auto* he : col) {
          double phase = 0;
          for (int i = 0; i < d; ++i) phase -= k[i] * he->delta[i];
          colvals[he->sigma_prime] += he->amp * std::polar(1.0, phase);
        }
        double E2 = 0;
        for (const auto& v : colvals) E2 += std::norm(v);
        if (nker > 0 || E2 < 1e-18) continue;  // whole block is kernel
        double E = std::sqrt(E2);
        mn = std::min(mn, E);
        double diag = colvals[alpha].real();
        double inv2 = 1.0 / E2;
        double even = inv2;        // E^{-2}
        double odd = diag * inv2;  // B_aa * E^{-2}
        for (int m = 1; m <= m_max; ++m) {
          if (m % 2 == 1) {
            acc[m].add(odd);
            odd *= inv2;
          } else {
            acc[m].add(even);
            even *= inv2;
          }
        }
      } else {
        MatC A = block_matrix_raw(spec, k);
        Eigen::SelfAdjointEigenSolver<MatC> es(A);
        std::vector<int> order(r);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int i, int j) {
          return std::abs(es.eigenvalues()[i]) < std::abs(es.eigenvalues()[j]);
        });
        for (int oi = nker; oi < r; ++oi) {
          int i = order[oi];
          double E = es.eigenvalues()[i];
          double w = std::norm(es.eigenvectors()(alpha, i));
          mn = std::min(mn, std::abs(E));
          double term = w;
          for (int m = 1; m <= m_max; ++m) {
            term /= E;
            acc[m].add(term);
          }
        }
      }
    }
    for (int m = 1; m <= m_max; ++m) partial[bi][m] = acc[m].value();
    blockmin[bi] = mn;
  });

  LatticeSums out;
  out.l = l;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int m = 1; m <= m_max; ++m) {
    KahanSum s;
    for (std::size_t b = 0; b < nblocks; ++b) s.add(partial[b][m]);
    out.moments[m] = s.value() * inv_n;
  }
  out.min_nonzero_energy = *std::min_element(blockmin.begin(), blockmin.end());
  return out;
}

std::pair<double, double> richardson_extrapolate(const std::vector<double>& ls,
                                                 const std::vector<double>& vals) {
  if (vals.size() < 2) throw ConfigError("extrapolation needs at least two ladder points");
  (void)ls;  // geometric ratio-2 ladders assumed; exponent estimated from data
  std::vector<double> cur = vals;
  double est = cur.back();
  double unc = std::abs(cur[cur.size() - 1] - cur[cur.size() - 2]);
  while (cur.size() >= 3) {
    double num = cur[cur.size() - 2] - cur[cur.size() - 3];
    double den = cur[cur.size() - 1] - cur[cur.size() - 2];
    if (den == 0 || num / den <= 1.0) break;
    double fac = num / den;  // 2^p for leading error ~ l^{-p}
    std::vector<double> nxt(cur.size() - 1);
    for (size_t i = 0; i + 1 < cur.size(); ++i)
      nxt[i] = (fac * cur[i + 1] - cur[i]) / (fac - 1.0);
    double prev = est;
    est = nxt.back();
    unc = std::abs(est - prev);
    cur = std::move(nxt);
  }
  return {est, unc};
}

std::vector<int> default_ladder(const LatticeSpec& spec,
                                const std::vector<DiracPoint>& diracs) {
  // smallest q with q * k_i / (2 pi) integral for all Dirac momenta
  long long align = 1;
  for (const auto& dp : diracs)
    for (double ki : dp.k.k) {
      RationalFit rf = nearest_rational(ki / kTwoPi, 48);
      if (rf.residual < 1e-9) align = std::lcm(align, rf.q);
    }
  std::vector<int> base;
  switch (spec.dim()) {
    case 1: base = {64, 128, 256, 512}; break;
    case 2: base = {16, 32, 64, 128}; break;
    case 3: base = {8, 16, 32, 64}; break;
    case 4: base = {4, 8, 16, 32}; break;
    case 5: base = {4, 8, 16}; break;
    default: base = {2, 4, 8, 16}; break;
  }
  for (auto& l : base) l = static_cast<int>(l * align);
  return base;
}

IntegralEstimate limit_integrals(const LatticeSpec& spec,
                                 const std::vector<DiracPoint>& diracs,
                                 std::vector<int> ladder, int threads) {
  IntegralEstimate out;
  out.ladder = ladder.empty() ? default_ladder(spec, diracs) : std::move(ladder);
  if (out.ladder.size() < 2) throw ConfigError("integral ladder needs >= 2 sizes");
  std::vector<double> m1s, m2s, ls;
  for (int l : out.ladder) {
    out.sums.push_back(lattice_moments(spec, l, 0, 2, diracs, threads));
    m1s.push_back(out.sums.back().moments.at(1));
    m2s.push_back(out.sums.back().moments.at(2));
    ls.push_back(l);
  }
  std::tie(out.I1, out.I1_unc) = richardson_extrapolate(ls, m1s);
  out.I2_finite = spec.dim() > 2;
  if (out.I2_finite) {
    std::tie(out.I2, out.I2_unc) = richardson_extrapolate(ls, m2s);
  } else {
    // least-squares fit of moment2 against ln N
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int npts = static_cast<int>(out.ladder.size());
    for (int i = 0; i < npts; ++i) {
      double N = static_cast<double>(spec.vertices(out.ladder[i]));
      double x = std::log(N);
      sx += x;
      sy += m2s[i];
      sxx += x * x;
      sxy += x * m2s[i];
    }
    out.log_slope = (npts * sxy - sx * sy) / (npts * sxx - sx * sx);
    out.log_intercept = (sy - out.log_slope * sx) / npts;
    out.I2 = out.log_slope;
    out.I2_unc = 0;
  }
  return out;
}

// --------------------------------------------------------------------------
// Roots and predictions
// --------------------------------------------------------------------------

double gamma_detuning_f(double gamma) {
  if (std::abs(2 * gamma - 1) < 1e-12)
    throw NumericalError("gamma = 1/2 is a pole of the detuning function");
  double d = gamma - 1;
  return d * d / (2 * gamma - 1);
}

namespace {

double bisect(const std::function<double(double)>& g, double a, double b) {
  double fa = g(a), fb = g(b);
  if (!(fa * fb < 0))
    throw NumericalError("no sign change of the eigenvalue condition in (" +
                         std::to_string(a) + ", " + std::to_string(b) +
                         "); assumption violation or pathological instance");
  for (int it = 0; it < 300; ++it) {
    double m = 0.5 * (a + b);
    double fm = g(m);
    if (fa * fm <= 0) {
      b = m;
      fb = fm;
    } else {
      a = m;
      fa = fm;
    }
    if (b - a <= 1e-12 * std::max(std::abs(a), std::abs(b))) break;
  }
  (void)fb;
  return 0.5 * (a + b);
}

}  // namespace

RootPair find_roots(const SpectralTable& table, OracleCase oracle, double gamma,
                    double I1) {
  double f_over_E = 0.0, target = 0.0;
  if (oracle == OracleCase::BipartiteProjector) {
    f_over_E = gamma_detuning_f(gamma);
  } else {
    target = I1;
  }
  auto g = [&](double E) {
    double v = table.F(E, gamma) - target;
    if (f_over_E != 0.0) v -= f_over_E / E;
    return v;
  };
  auto [lo, hi] = table.bracketing_poles(gamma);
  const double eps_lo = 1e-9 * std::abs(lo);
  const double eps_hi = 1e-9 * hi;
  RootPair roots;
  roots.Eminus = bisect(g, lo + eps_lo, -eps_lo);
  roots.Eplus = bisect(g, eps_hi, hi - eps_hi);
  return roots;
}

SpectralPrediction predict(const LatticeSpec& spec, int l, const MarkedVertex& marked,
                           OracleCase oracle, double gamma,
                           const std::vector<DiracPoint>& diracs, int threads) {
  SpectralPrediction p;
  p.lattice = spec.name();
  p.d = spec.dim();
  p.l = l;
  p.n = spec.cells(l);
  p.N = spec.vertices(l);
  p.oracle = oracle;
  p.gamma = gamma;

  auto table = build_spectral_table(spec, l, marked.alpha, diracs, threads);
  p.chi_alpha = table.chi_alpha;

  auto integrals = limit_integrals(spec, diracs, {}, threads);
  p.I1 = integrals.I1;
  p.I2_is_log = !integrals.I2_finite;
  p.I2 = integrals.I2;
  p.moment2_at_l = lattice_moments(spec, l, marked.alpha, 2, diracs, threads).moments.at(2);

  RootPair roots = find_roots(table, oracle, gamma, p.I1);
  p.Eminus = roots.Eminus;
  p.Eplus = roots.Eplus;
  p.Fprime_minus = table.Fprime(roots.Eminus, gamma);
  p.Fprime_plus = table.Fprime(roots.Eplus, gamma);
  p.run_time = kPi / (2.0 * std::abs(p.Eplus));
  p.overlap_start = std::sqrt(table.chi_alpha) /
                    (std::abs(p.Eplus) * std::sqrt(static_cast<double>(p.n) * p.Fprime_plus));
  double inv_sqrt_fp = 1.0 / std::sqrt(p.Fprime_minus) + 1.0 / std::sqrt(p.Fprime_plus);
  if (oracle == OracleCase::BipartiteProjector) {
    p.success_amplitude = inv_sqrt_fp / std::sqrt(std::pow(2.0, p.d + 1));
  } else {
    p.success_amplitude = std::abs(p.I1) * inv_sqrt_fp / std::sqrt(2.0);
  }
  return p;
}

GammaTuning gamma_analysis(const LatticeSpec& spec, int l, const MarkedVertex& marked,
                           double gamma, const std::vector<DiracPoint>& diracs,
                           int threads) {
  GammaTuning t;
  t.gamma = gamma;
  t.f = gamma_detuning_f(gamma);
  auto table = build_spectral_table(spec, l, marked.alpha, diracs, threads);
  double m2 = lattice_moments(spec, l, marked.alpha, 2, diracs, threads).moments.at(2);
  const double n = static_cast<double>(spec.cells(l));
  double e = gamma * std::sqrt((table.chi_alpha + n * t.f) / (n * m2));
  t.Eplus = e;
  t.Eminus = -e;
  return t;
}

}  // namespace qws
