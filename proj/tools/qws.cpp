// qws: spatial-search quantum walk toolkit on crystal lattices.
//
// Subcommands: bands, dirac, integrals, simulate, verify.
// Exit codes: 0 ok, 1 verification failure, 2 invalid config, 3 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "qws/bloch.hpp"
#include "qws/config.hpp"
#include "qws/dynamics.hpp"
#include "qws/lattice.hpp"
#include "qws/resolvent.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qws;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string lattice;
  int l = -1;
  std::string ladder;
  std::string marked;
  std::string oracle;
  double gamma = std::numeric_limits<double>::quiet_NaN();
  std::string out;
  int threads = -1;
  long long seed = -1;
  double ds_gamma = std::numeric_limits<double>::quiet_NaN();
  double ds_omega = std::numeric_limits<double>::quiet_NaN();
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON experiment config");
  cmd->add_option("--lattice", f.lattice, "built-in lattice name or spec file");
  cmd->add_option("--l", f.l, "cells per side");
  cmd->add_option("--ladder", f.ladder, "comma-separated ladder of l values");
  cmd->add_option("--marked", f.marked, "marked vertex 'x1,..,xd:alpha' or 'random'");
  cmd->add_option("--oracle", f.oracle, "auto | bipartite | onsite");
  cmd->add_option("--gamma", f.gamma, "lattice-term scaling");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--threads", f.threads, "worker threads (0 = hardware)");
  cmd->add_option("--seed", f.seed, "seed for randomized choices");
  cmd->add_option("--ds-gamma", f.ds_gamma, "dirac-square diagonal strength");
  cmd->add_option("--ds-omega", f.ds_omega, "dirac-square off-diagonal strength");
}

ExperimentConfig merge(const CommonFlags& f) {
  ExperimentConfig c;
  if (!f.config_path.empty()) c = load_config_file(f.config_path);
  if (!f.lattice.empty()) c.lattice = f.lattice;
  if (f.l > 0) c.l = f.l;
  if (!f.ladder.empty()) {
    c.ladder.clear();
    std::stringstream ss(f.ladder);
    std::string tok;
    while (std::getline(ss, tok, ',')) c.ladder.push_back(std::stoi(tok));
  }
  if (!f.marked.empty()) {
    if (f.marked == "random") {
      c.marked.reset();
    } else {
      auto colon = f.marked.find(':');
      if (colon == std::string::npos) throw ConfigError("marked format: x1,..,xd:alpha");
      MarkedVertex m;
      std::stringstream ss(f.marked.substr(0, colon));
      std::string tok;
      while (std::getline(ss, tok, ',')) m.w.push_back(std::stoi(tok));
      m.alpha = std::stoi(f.marked.substr(colon + 1));
      c.marked = m;
    }
  }
  if (!f.oracle.empty()) c.oracle = f.oracle;
  if (!std::isnan(f.gamma)) c.gamma = f.gamma;
  if (!f.out.empty()) c.out = f.out;
  if (f.threads >= 0) c.threads = f.threads;
  if (f.seed >= 0) c.seed = static_cast<unsigned long long>(f.seed);
  if (!std::isnan(f.ds_gamma)) c.ds_gamma = f.ds_gamma;
  if (!std::isnan(f.ds_omega)) c.ds_omega = f.ds_omega;
  fs::create_directories(c.out);
  return c;
}

std::optional<OracleCase> oracle_choice(const std::string& s) {
  if (s == "auto" || s.empty()) return std::nullopt;
  if (s == "bipartite") return OracleCase::BipartiteProjector;
  if (s == "onsite") return OracleCase::OnSitePotential;
  throw ConfigError("unknown oracle kind: " + s);
}

int cmd_bands(const ExperimentConfig& cfg) {
  LatticeSpec spec = cfg.resolve_lattice();
  auto grid = momentum_grid(spec.dim(), cfg.l);
  std::vector<std::string> header;
  for (int i = 0; i < spec.dim(); ++i) header.push_back("k" + std::to_string(i + 1));
  for (int i = 0; i < spec.basis(); ++i) header.push_back("E" + std::to_string(i + 1));
  CsvWriter csv((fs::path(cfg.out) / "bands.csv").string(), header);
  for (const auto& k : grid) {
    auto blk = block_matrix(spec, k);
    std::vector<double> vals(k.k.begin(), k.k.end());
    for (int i = 0; i < spec.basis(); ++i) vals.push_back(blk.evals[i]);
    csv.row_values(vals);
  }
  write_plot_script((fs::path(cfg.out) / "plot_bands.py").string(), "bands.csv", "bands");
  std::cout << "wrote " << csv.path() << " and plot_bands.py\n";
  return 0;
}

int cmd_dirac(const ExperimentConfig& cfg) {
  LatticeSpec spec = cfg.resolve_lattice();
  DiracScanOptions opt;
  opt.threads = cfg.threads;
  auto diracs = find_dirac_points(spec, opt);
  auto report = verify_assumptions(spec, diracs, opt);
  json j;
  j["lattice"] = spec.name();
  j["D"] = report.D;
  j["m"] = report.m;
  auto arr = json::array();
  for (const auto& dp : diracs) {
    json e;
    e["k"] = dp.k.k;
    e["band_indices"] = dp.band_indices;
    e["linearity_constant"] = dp.linearity_constant;
    e["chi"] = dp.chi;
    arr.push_back(e);
  }
  j["dirac_points"] = arr;
  auto checks = json::array();
  for (int i = 0; i < 5; ++i) {
    json e;
    e["assumption"] = i + 1;
    e["pass"] = report.a[i].pass;
    e["evidence"] = report.a[i].evidence;
    e["note"] = report.a[i].note;
    checks.push_back(e);
  }
  j["assumptions"] = checks;

  // connectivity diagnostic on a small assembled instance
  {
    int l = std::max(3 * spec.max_abs_delta(), std::min(cfg.l, 6));
    long long N = spec.vertices(l);
    std::vector<long long> parent(N);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<long long(long long)> find = [&](long long a) {
      while (parent[a] != a) a = parent[a] = parent[parent[a]];
      return a;
    };
    for (long long v = 0; v < N; ++v)
      for (const auto& nb : neighbors(spec, l, v).neighbors) {
        long long ra = find(v), rb = find(nb.vertex);
        if (ra != rb) parent[ra] = rb;
      }
    std::set<long long> roots;
    for (long long v = 0; v < N; ++v) roots.insert(find(v));
    j["connected_components"] = roots.size();
    if (roots.size() > 1)
      j["note"] = "assembled graph is disconnected (" + std::to_string(roots.size()) +
                  " components)";
  }

  std::ofstream out(fs::path(cfg.out) / "dirac.json");
  out << j.dump(2) << "\n";
  std::cout << report.render();
  std::cout << "wrote " << (fs::path(cfg.out) / "dirac.json").string() << "\n";
  return report.all_pass() ? 0 : 1;
}

int cmd_integrals(const ExperimentConfig& cfg) {
  LatticeSpec spec = cfg.resolve_lattice();
  DiracScanOptions opt;
  opt.threads = cfg.threads;
  auto diracs = find_dirac_points(spec, opt);
  auto est = limit_integrals(spec, diracs, cfg.ladder, cfg.threads);
  CsvWriter csv((fs::path(cfg.out) / "moments.csv").string(), {"l", "m", "value"});
  for (const auto& s : est.sums)
    for (const auto& [m, v] : s.moments)
      csv.row({std::to_string(s.l), std::to_string(m), fmt17(v)});
  json j;
  j["lattice"] = spec.name();
  j["ladder"] = est.ladder;
  j["I1"] = est.I1;
  j["I1_uncertainty"] = est.I1_unc;
  if (est.I2_finite) {
    j["I2"] = est.I2;
    j["I2_uncertainty"] = est.I2_unc;
  } else {
    j["I2_log_slope"] = est.log_slope;
    j["I2_log_intercept"] = est.log_intercept;
  }
  std::ofstream out(fs::path(cfg.out) / "integrals.json");
  out << j.dump(2) << "\n";
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_simulate(const ExperimentConfig& cfg) {
  LatticeSpec spec = cfg.resolve_lattice();
  MarkedVertex marked = cfg.resolve_marked(spec);
  auto inst = make_search_instance(spec, cfg.l, marked, oracle_choice(cfg.oracle),
                                   cfg.gamma, cfg.threads);
  RunSearchOptions ropt;
  ropt.time_points = cfg.time_points;
  ropt.t_max_factor = cfg.t_max_factor;
  ropt.evolve.dense_budget = cfg.dense_budget;
  ropt.threads = cfg.threads;
  auto [runs, rep] = run_search(inst, ropt);

  const auto& p = rep.prediction;
  CsvWriter pcsv((fs::path(cfg.out) / "prediction.csv").string(),
                 {"lattice", "d", "l", "n", "N", "oracle", "gamma", "I1", "I2", "Eminus",
                  "Eplus", "Fprime", "T", "overlapStart", "successAmplitude"});
  pcsv.row({p.lattice, std::to_string(p.d), std::to_string(p.l), std::to_string(p.n),
            std::to_string(p.N),
            p.oracle == OracleCase::BipartiteProjector ? "bipartite" : "onsite",
            fmt17(p.gamma), fmt17(p.I1), fmt17(p.I2), fmt17(p.Eminus), fmt17(p.Eplus),
            fmt17(p.Fprime_plus), fmt17(p.run_time), fmt17(p.overlap_start),
            fmt17(p.success_amplitude)});

  const auto& best = runs[std::max(rep.best_run, 0)];
  CsvWriter tcsv((fs::path(cfg.out) / "trace.csv").string(),
                 {"t", "overlap_sq", "success_prob"});
  for (std::size_t i = 0; i < best.trace.times.size(); ++i)
    tcsv.row_values({best.trace.times[i], best.trace.overlap_sq[i],
                     best.trace.success_prob[i]});
  write_plot_script((fs::path(cfg.out) / "plot_trace.py").string(), "trace.csv", "trace");

  json j;
  j["lattice"] = spec.name();
  j["l"] = cfg.l;
  j["marked_cell"] = marked.w;
  j["marked_alpha"] = marked.alpha;
  j["oracle"] = p.oracle == OracleCase::BipartiteProjector ? "bipartite" : "onsite";
  j["gamma"] = cfg.gamma;
  j["runs"] = rep.runs;
  j["best_run"] = rep.best_run;
  j["best_success_prob"] = rep.best_success;
  j["best_time"] = rep.best_time;
  j["max_overlap_sq"] = best.max_overlap_sq;
  j["predicted_T"] = p.run_time;
  // alternative normalization quoted against N rather than n, for comparison
  double NI = static_cast<double>(p.N);
  if (p.d == 2) {
    j["T_alt_sqrt_NlogN"] = std::sqrt(kPi / 64.0 * NI * std::log(NI));
  } else if (p.I2 > 0) {
    j["T_alt_sqrt_I2N"] = 0.5 * kPi * std::sqrt(p.I2 * NI);
  }
  j["amplification_repetitions"] = rep.amplification_repetitions;
  j["guess_hits_marked"] = rep.guess_hits_marked;
  j["propagator"] = best.trace.path;
  j["norm_drift"] = best.trace.norm_drift;
  std::ofstream out(fs::path(cfg.out) / "summary.json");
  out << j.dump(2) << "\n";
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_verify(const ExperimentConfig& cfg) {
  int failures = 0;
  auto check = [&](const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "[pass] " : "[FAIL] ") << name;
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << "\n";
    if (!ok) ++failures;
  };
  std::mt19937_64 rng(cfg.seed);

  // resolvent equivalence: eigensum F vs dense linear solve
  {
    double worst = 0;
    for (int trial = 0; trial < 6; ++trial) {
      LatticeSpec spec = trial % 2 == 0 ? build_staggered_hypercubic(1 + trial % 3)
                                        : build_honeycomb();
      int l = spec.dim() == 1 ? 8 : 4;
      if (spec.name() == "honeycomb") l = 6;
      MatC M = assemble_dense(spec, l);
      MarkedVertex mv;
      mv.w.assign(spec.dim(), 1);
      mv.alpha = static_cast<SiteIndex>(rng() % spec.basis());
      double E = 0.05 + 0.1 * static_cast<double>(rng() % 100) / 100.0;
      long long wi = spec.vertex_index(mv.w, mv.alpha, l);
      VecC rhs = VecC::Zero(M.rows());
      rhs[wi] = 1.0;
      VecC x = (M - E * MatC::Identity(M.rows(), M.cols())).partialPivLu().solve(rhs);
      double dense_val = x[wi].real();
      double sum_val = F_of_E(spec, l, mv, E);
      worst = std::max(worst, std::abs(dense_val - sum_val));
    }
    check("resolvent equivalence (eigensum vs dense solve)", worst < 1e-10, fmt17(worst));
  }

  // block-diagonalization equivalence
  {
    double worst = 0;
    for (const auto& spec : {build_staggered_hypercubic(2), build_honeycomb(),
                             build_kagome()}) {
      int l = spec.name() == "staggered-hypercubic-2" ? 4 : 3;
      MatC M = assemble_dense(spec, l, {true});
      MatC Fm = fourier_matrix(spec, l);
      MatC B = Fm.adjoint() * M * Fm;
      auto grid = momentum_grid(spec.dim(), l);
      const int r = spec.basis();
      for (std::size_t g = 0; g < grid.size(); ++g) {
        MatC blk = block_matrix_raw(spec, grid[g].k);
        worst = std::max(worst,
                         (B.block(g * r, g * r, r, r) - blk).cwiseAbs().maxCoeff());
      }
      for (long long i = 0; i < B.rows(); ++i)
        for (long long jj = 0; jj < B.cols(); ++jj)
          if (i / r != jj / r) worst = std::max(worst, std::abs(B(i, jj)));
    }
    check("Fourier block-diagonalization", worst < 1e-10, fmt17(worst));
  }

  // roots of the eigenvalue condition are dense eigenvalues
  {
    double worst = 0;
    for (const auto& name : {std::string("staggered-hypercubic-2"), std::string("kagome")}) {
      LatticeSpec spec = builtin_lattice(name);
      int l = name == "kagome" ? 6 : 4;
      MarkedVertex mv;
      mv.w.assign(spec.dim(), 0);
      mv.alpha = 0;
      auto inst = make_search_instance(spec, l, mv, std::nullopt, 1.0, cfg.threads);
      auto table = build_spectral_table(spec, l, mv.alpha, inst.diracs, cfg.threads);
      auto roots = find_roots(table, inst.oracle.variant, 1.0, inst.oracle.I1);
      MatC H = MatC(search_hamiltonian(inst));
      Eigen::SelfAdjointEigenSolver<MatC> es(H, Eigen::EigenvaluesOnly);
      for (double rv : {roots.Eminus, roots.Eplus}) {
        double best = 1e300;
        for (long long i = 0; i < es.eigenvalues().size(); ++i)
          best = std::min(best, std::abs(es.eigenvalues()[i] - rv));
        worst = std::max(worst, best);
      }
    }
    check("roots are eigenvalues of the perturbed Hamiltonian", worst < 1e-9, fmt17(worst));
  }

  std::cout << (failures == 0 ? "verification passed\n" : "verification FAILED\n");
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quantum-walk spatial search on crystal lattices"};
  app.require_subcommand(1);
  CommonFlags f;
  int extra_time_points = -1;
  double extra_tmax = std::numeric_limits<double>::quiet_NaN();
  long long extra_budget = -1;

  auto* bands = app.add_subcommand("bands", "band structure over the momentum grid");
  add_common(bands, f);
  auto* dirac = app.add_subcommand("dirac", "Dirac points and assumption checks");
  add_common(dirac, f);
  auto* integrals = app.add_subcommand("integrals", "lattice moments and their limits");
  add_common(integrals, f);
  auto* simulate = app.add_subcommand("simulate", "run the search and record traces");
  add_common(simulate, f);
  simulate->add_option("--time-points", extra_time_points, "trace sample count");
  simulate->add_option("--t-max-factor", extra_tmax, "trace length in units of T");
  simulate->add_option("--dense-budget", extra_budget, "max N for the dense propagator");
  auto* verify = app.add_subcommand("verify", "cross-checks against dense linear algebra");
  add_common(verify, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    ExperimentConfig cfg = merge(f);
    if (extra_time_points > 0) cfg.time_points = extra_time_points;
    if (!std::isnan(extra_tmax)) cfg.t_max_factor = extra_tmax;
    if (extra_budget > 0) cfg.dense_budget = extra_budget;
    if (bands->parsed()) return cmd_bands(cfg);
    if (dirac->parsed()) return cmd_dirac(cfg);
    if (integrals->parsed()) return cmd_integrals(cfg);
    if (simulate->parsed()) return cmd_simulate(cfg);
    if (verify->parsed()) return cmd_verify(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
