#include "qws/config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace qws {

LatticeSpec ExperimentConfig::resolve_lattice() const {
  if (lattice.find('/') != std::string::npos ||
      (lattice.size() > 5 && lattice.substr(lattice.size() - 5) == ".json"))
    return load_lattice_file(lattice);
  try {
    return builtin_lattice(lattice, ds_gamma, ds_omega);
  } catch (const ConfigError&) {
    if (std::filesystem::exists(lattice)) return load_lattice_file(lattice);
    throw;
  }
}

MarkedVertex ExperimentConfig::resolve_marked(const LatticeSpec& spec) const {
  if (marked.has_value()) {
    MarkedVertex m = *marked;
    if (static_cast<int>(m.w.size()) != spec.dim())
      throw ConfigError("marked cell has wrong dimension");
    for (auto& c : m.w) c = wrap(c, l);
    if (m.alpha < 0 || m.alpha >= spec.basis())
      throw ConfigError("marked site index out of range");
    return m;
  }
  std::mt19937_64 rng(seed);
  MarkedVertex m;
  m.w.resize(spec.dim());
  for (auto& c : m.w) c = static_cast<int>(rng() % l);
  m.alpha = static_cast<SiteIndex>(rng() % spec.basis());
  return m;
}

ExperimentConfig parse_config_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  ExperimentConfig c;
  c.lattice = j.value("lattice", c.lattice);
  c.ds_gamma = j.value("ds_gamma", c.ds_gamma);
  c.ds_omega = j.value("ds_omega", c.ds_omega);
  c.l = j.value("l", c.l);
  if (j.contains("ladder")) c.ladder = j["ladder"].get<std::vector<int>>();
  if (j.contains("marked") && !j["marked"].is_string()) {
    MarkedVertex m;
    m.w = j["marked"].at("w").get<std::vector<int>>();
    m.alpha = j["marked"].value("alpha", 0);
    c.marked = m;
  }
  c.oracle = j.value("oracle", c.oracle);
  c.gamma = j.value("gamma", c.gamma);
  c.time_points = j.value("time_points", c.time_points);
  c.t_max_factor = j.value("t_max_factor", c.t_max_factor);
  c.dense_budget = j.value("dense_budget", c.dense_budget);
  c.out = j.value("out", c.out);
  c.threads = j.value("threads", c.threads);
  c.seed = j.value("seed", c.seed);
  return c;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_json(ss.str());
}

std::string fmt17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : path_(path), ncols_(header.size()) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot open output file: " + path);
  for (std::size_t i = 0; i < header.size(); ++i)
    out << header[i] << (i + 1 < header.size() ? "," : "\n");
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != ncols_) throw ConfigError("CSV row width mismatch");
  std::ofstream out(path_, std::ios::app);
  for (std::size_t i = 0; i < cells.size(); ++i)
    out << cells[i] << (i + 1 < cells.size() ? "," : "\n");
}

void CsvWriter::row_values(const std::vector<double>& vals) {
  std::vector<std::string> cells;
  cells.reserve(vals.size());
  for (double v : vals) cells.push_back(fmt17(v));
  row(cells);
}

void write_plot_script(const std::string& path, const std::string& csv_name,
                       const std::string& kind) {
  std::ofstream out(path, std::ios::trunc);
  out << "#!/usr/bin/env python3\n"
         "# renders " << csv_name << "\n"
         "import csv, sys\n"
         "import matplotlib\n"
         "matplotlib.use('Agg')\n"
         "import matplotlib.pyplot as plt\n"
         "rows = list(csv.DictReader(open('" << csv_name << "')))\n"
         "cols = rows[0].keys() if rows else []\n";
  if (kind == "bands") {
    out << "ks = [c for c in cols if c.startswith('k')]\n"
           "es = [c for c in cols if c.startswith('E')]\n"
           "if len(ks) == 2:\n"
           "    import numpy as np\n"
           "    k1 = sorted(set(float(r['k1']) for r in rows))\n"
           "    k2 = sorted(set(float(r['k2']) for r in rows))\n"
           "    fig = plt.figure()\n"
           "    ax = fig.add_subplot(projection='3d')\n"
           "    for e in es:\n"
           "        Z = np.array([float(r[e]) for r in rows]).reshape(len(k2), len(k1))\n"
           "        K1, K2 = np.meshgrid(k1, k2)\n"
           "        ax.plot_surface(K1, K2, Z, alpha=0.7)\n"
           "    ax.set_xlabel('k1'); ax.set_ylabel('k2'); ax.set_zlabel('E')\n"
           "else:\n"
           "    x = [float(r[ks[0]]) for r in rows]\n"
           "    for e in es:\n"
           "        plt.plot(x, [float(r[e]) for r in rows], '.', ms=2)\n"
           "    plt.xlabel('k'); plt.ylabel('E')\n"
           "plt.savefig('bands.png', dpi=150)\n"
           "print('wrote bands.png')\n";
  } else {
    out << "t = [float(r['t']) for r in rows]\n"
           "plt.plot(t, [float(r['overlap_sq']) for r in rows], label='overlap_sq')\n"
           "plt.plot(t, [float(r['success_prob']) for r in rows], label='success_prob')\n"
           "plt.xlabel('t'); plt.legend()\n"
           "plt.savefig('trace.png', dpi=150)\n"
           "print('wrote trace.png')\n";
  }
}

}  // namespace qws
