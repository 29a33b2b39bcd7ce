#ifndef QWS_CONFIG_HPP
#define QWS_CONFIG_HPP

#include <optional>
#include <string>
#include <vector>

#include "qws/lattice.hpp"
#include "qws/resolvent.hpp"
#include "qws/types.hpp"

namespace qws {

/// Declarative experiment description: JSON file, overridable by CLI flags.
struct ExperimentConfig {
  std::string lattice = "staggered-hypercubic-2";  // built-in name or spec file path
  double ds_gamma = 1.0, ds_omega = 1.0;           // dirac-square parameters
  int l = 8;
  std::vector<int> ladder;
  std::optional<MarkedVertex> marked;  // empty = "random" (seeded)
  std::string oracle = "auto";         // auto | bipartite | onsite
  double gamma = 1.0;
  int time_points = 200;
  double t_max_factor = 2.0;
  long long dense_budget = 4096;
  std::string out = ".";
  int threads = 0;
  unsigned long long seed = 1;

  LatticeSpec resolve_lattice() const;
  MarkedVertex resolve_marked(const LatticeSpec& spec) const;  // seeds the RNG when random
};

ExperimentConfig load_config_file(const std::string& path);
ExperimentConfig parse_config_json(const std::string& text);

/// Serialize a double with 17 significant digits (shortest round-trip-safe form).
std::string fmt17(double x);

/// Minimal CSV writer: header once, then rows; floats via fmt17.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& cells);
  void row_values(const std::vector<double>& vals);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::size_t ncols_;
};

/// Write a ready-to-run plot script next to a CSV.
void write_plot_script(const std::string& path, const std::string& csv_name,
                       const std::string& kind);

}  // namespace qws

#endif
