#include "qws/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace qws {

namespace {

using HopKey = std::tuple<CellVector, SiteIndex, SiteIndex>;

std::map<HopKey, cx> to_map(const std::vector<HoppingEntry>& hops) {
  std::map<HopKey, cx> m;
  for (const auto& e : hops) m[{e.delta, e.sigma, e.sigma_prime}] += e.amp;
  for (auto it = m.begin(); it != m.end();) {
    if (std::abs(it->second) < 1e-15) it = m.erase(it);
    else ++it;
  }
  return m;
}

std::vector<HoppingEntry> from_map(const std::map<HopKey, cx>& m) {
  std::vector<HoppingEntry> v;
  v.reserve(m.size());
  for (const auto& [k, amp] : m)
    v.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k), amp});
  return v;
}

}  // namespace

LatticeSpec::LatticeSpec(int d, int r, std::vector<HoppingEntry> hops, std::string name)
    : d_(d), r_(r), name_(std::move(name)) {
  if (d < 1) throw ConfigError("lattice dimension must be >= 1");
  if (r < 1) throw ConfigError("basis size must be >= 1");
  auto m = to_map(hops);
  for (const auto& [key, amp] : m) {
    const auto& [delta, s, sp] = key;
    if (static_cast<int>(delta.size()) != d)
      throw ConfigError("hopping offset dimension mismatch");
    if (s < 0 || s >= r || sp < 0 || sp >= r)
      throw ConfigError("hopping site index out of range");
    CellVector neg(delta.size());
    for (size_t i = 0; i < delta.size(); ++i) neg[i] = -delta[i];
    auto it = m.find({neg, sp, s});
    if (it == m.end() || std::abs(std::conj(it->second) - amp) > 1e-12)
      throw ConfigError("hopping table is not Hermitian at entry (delta," +
                        std::to_string(s) + "," + std::to_string(sp) + ")");
    for (int c : delta) max_abs_delta_ = std::max(max_abs_delta_, std::abs(c));
  }
  hops_ = from_map(m);
}

long long LatticeSpec::vertex_index(const CellVector& x, SiteIndex s, int l) const {
  long long idx = 0;
  for (int i = d_ - 1; i >= 0; --i) idx = idx * l + wrap(x[i], l);
  return s + r_ * idx;
}

std::pair<CellVector, SiteIndex> LatticeSpec::vertex_coords(long long v, int l) const {
  SiteIndex s = static_cast<SiteIndex>(v % r_);
  long long c = v / r_;
  CellVector x(d_);
  for (int i = 0; i < d_; ++i) {
    x[i] = static_cast<int>(c % l);
    c /= l;
  }
  return {x, s};
}

// --------------------------------------------------------------------------
// Built-in lattices
// --------------------------------------------------------------------------

LatticeSpec build_staggered_hypercubic(int d) {
  if (d < 1) throw ConfigError("staggered hypercubic lattice needs d >= 1");
  const int r = 1 << d;
  std::vector<HoppingEntry> hops;
  auto sign_prefix = [](int sigma, int i) {  // (-1)^{sigma_1+...+sigma_{i-1}}
    int s = 0;
    for (int j = 0; j < i; ++j) s += (sigma >> j) & 1;
    return (s % 2 == 0) ? 1.0 : -1.0;
  };
  for (int sigma = 0; sigma < r; ++sigma) {
    for (int i = 0; i < d; ++i) {
      int sp = sigma ^ (1 << i);
      double s = sign_prefix(sigma, i);
      CellVector zero(d, 0), plus(d, 0), minus(d, 0);
      plus[i] = 1;
      minus[i] = -1;
      hops.push_back({zero, sigma, sp, s});
      if ((sigma >> i) & 1)
        hops.push_back({plus, sigma, sp, -s});
      else
        hops.push_back({minus, sigma, sp, -s});
    }
  }
  return LatticeSpec(d, r, std::move(hops), "staggered-hypercubic-" + std::to_string(d));
}

LatticeSpec build_honeycomb() {
  std::vector<HoppingEntry> hops;
  for (CellVector delta : {CellVector{0, 0}, CellVector{1, 0}, CellVector{1, 1}}) {
    hops.push_back({delta, 1, 0, 1.0});
    hops.push_back({{-delta[0], -delta[1]}, 0, 1, 1.0});
  }
  return LatticeSpec(2, 2, std::move(hops), "honeycomb");
}

LatticeSpec build_kagome() {
  std::vector<HoppingEntry> hops;
  auto bond = [&](CellVector delta, SiteIndex s, SiteIndex sp) {
    hops.push_back({delta, s, sp, 1.0});
    hops.push_back({{-delta[0], -delta[1]}, sp, s, 1.0});
  };
  bond({0, 0}, 0, 1);
  bond({0, -1}, 0, 1);
  bond({0, 0}, 0, 2);
  bond({1, -1}, 0, 2);
  bond({0, 0}, 1, 2);
  bond({1, 0}, 1, 2);
  for (SiteIndex s = 0; s < 3; ++s) hops.push_back({{0, 0}, s, s, -1.0});
  return LatticeSpec(2, 3, std::move(hops), "kagome");
}

LatticeSpec build_dirac_square(double gamma, double omega) {
  std::vector<HoppingEntry> hops;
  if (gamma != 0.0) {
    hops.push_back({{0, 0}, 0, 0, 2.0 * gamma});
    hops.push_back({{0, 0}, 1, 1, -2.0 * gamma});
    for (CellVector delta : {CellVector{1, 0}, CellVector{-1, 0}, CellVector{0, 1},
                             CellVector{0, -1}}) {
      hops.push_back({delta, 0, 0, -gamma / 2.0});
      hops.push_back({delta, 1, 1, gamma / 2.0});
    }
  }
  if (omega != 0.0) {
    const cx i(0.0, 1.0);
    // transform of entry (1,0) is omega*(sin kx - i sin ky)
    hops.push_back({{-1, 0}, 1, 0, -i * omega / 2.0});
    hops.push_back({{1, 0}, 1, 0, i * omega / 2.0});
    hops.push_back({{0, -1}, 1, 0, -omega / 2.0});
    hops.push_back({{0, 1}, 1, 0, omega / 2.0});
    hops.push_back({{1, 0}, 0, 1, i * omega / 2.0});
    hops.push_back({{-1, 0}, 0, 1, -i * omega / 2.0});
    hops.push_back({{0, 1}, 0, 1, -omega / 2.0});
    hops.push_back({{0, -1}, 0, 1, omega / 2.0});
  }
  return LatticeSpec(2, 2, std::move(hops), "dirac-square");
}

LatticeSpec build_decoupled_component() {
  const cx i(0.0, 1.0);
  std::vector<HoppingEntry> hops;
  // cells are two vertices stacked in y: sigma = parity of the y coordinate
  hops.push_back({{1, 0}, 0, 0, i});
  hops.push_back({{-1, 0}, 0, 0, -i});
  hops.push_back({{1, 0}, 1, 1, -i});
  hops.push_back({{-1, 0}, 1, 1, i});
  hops.push_back({{0, 0}, 0, 1, 1.0});
  hops.push_back({{0, -1}, 0, 1, -1.0});
  hops.push_back({{0, 0}, 1, 0, 1.0});
  hops.push_back({{0, 1}, 1, 0, -1.0});
  return LatticeSpec(2, 2, std::move(hops), "decoupled-square");
}

LatticeSpec builtin_lattice(const std::string& name, double ds_gamma, double ds_omega) {
  const std::string prefix = "staggered-hypercubic-";
  if (name.rfind(prefix, 0) == 0) {
    int d = std::stoi(name.substr(prefix.size()));
    return build_staggered_hypercubic(d);
  }
  if (name == "honeycomb") return build_honeycomb();
  if (name == "kagome") return build_kagome();
  if (name == "dirac-square") return build_dirac_square(ds_gamma, ds_omega);
  if (name == "decoupled-square") return build_decoupled_component();
  throw ConfigError("unknown built-in lattice: " + name);
}

// --------------------------------------------------------------------------
// Assembly
// --------------------------------------------------------------------------

namespace {

void check_aliasing(const LatticeSpec& spec, int l, const AssembleOptions& opt) {
  if (l < 1) throw ConfigError("lattice size l must be >= 1");
  if (!opt.allow_aliasing && l < 3 * spec.max_abs_delta())
    throw ConfigError("l=" + std::to_string(l) + " is below 3*max|delta| for lattice '" +
                      spec.name() + "'; wrapped hops would alias (pass allow_aliasing " +
                      "to sum coincident entries)");
}

}  // namespace

MatC assemble_dense(const LatticeSpec& spec, int l, const AssembleOptions& opt) {
  check_aliasing(spec, l, opt);
  const long long N = spec.vertices(l);
  MatC M = MatC::Zero(N, N);
  const long long n = spec.cells(l);
  const int d = spec.dim();
  for (long long c = 0; c < n; ++c) {
    CellVector x(d);
    long long t = c;
    for (int i = 0; i < d; ++i) {
      x[i] = static_cast<int>(t % l);
      t /= l;
    }
    for (const auto& e : spec.hops()) {
      CellVector y(d);
      for (int i = 0; i < d; ++i) y[i] = wrap(x[i] + e.delta[i], l);
      M(spec.vertex_index(y, e.sigma_prime, l), spec.vertex_index(x, e.sigma, l)) += e.amp;
    }
  }
  return M;
}

SpMatC assemble_sparse(const LatticeSpec& spec, int l, const AssembleOptions& opt) {
  check_aliasing(spec, l, opt);
  const long long N = spec.vertices(l);
  const long long n = spec.cells(l);
  const int d = spec.dim();
  std::vector<Eigen::Triplet<cx>> trips;
  trips.reserve(n * spec.hops().size());
  for (long long c = 0; c < n; ++c) {
    CellVector x(d);
    long long t = c;
    for (int i = 0; i < d; ++i) {
      x[i] = static_cast<int>(t % l);
      t /= l;
    }
    for (const auto& e : spec.hops()) {
      CellVector y(d);
      for (int i = 0; i < d; ++i) y[i] = wrap(x[i] + e.delta[i], l);
      trips.emplace_back(spec.vertex_index(y, e.sigma_prime, l),
                         spec.vertex_index(x, e.sigma, l), e.amp);
    }
  }
  SpMatC M(N, N);
  M.setFromTriplets(trips.begin(), trips.end());
  return M;
}

NeighborList neighbors(const LatticeSpec& spec, int l, long long v,
                       const AssembleOptions& opt) {
  check_aliasing(spec, l, opt);
  auto [x, s] = spec.vertex_coords(v, l);
  std::map<long long, cx> acc;
  for (const auto& e : spec.hops()) {
    if (e.sigma != s) continue;
    CellVector y(spec.dim());
    for (int i = 0; i < spec.dim(); ++i) y[i] = wrap(x[i] + e.delta[i], l);
    acc[spec.vertex_index(y, e.sigma_prime, l)] += e.amp;
  }
  NeighborList out;
  out.onsite = 0.0;
  for (const auto& [u, amp] : acc) {
    if (std::abs(amp) < 1e-15) continue;
    if (u == v)
      out.onsite = amp;
    else
      out.neighbors.push_back({u, amp});
  }
  return out;
}

// --------------------------------------------------------------------------
// Spec file format
// --------------------------------------------------------------------------

LatticeSpec parse_lattice_json(const std::string& text, bool strict) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("lattice file parse error: ") + e.what());
  }
  if (!j.contains("d") || !j.contains("r"))
    throw ConfigError("lattice file needs fields 'd' and 'r'");
  int d = j["d"].get<int>();
  int r = j["r"].get<int>();
  std::string name = j.value("name", std::string("custom"));
  std::vector<HoppingEntry> hops;
  for (const auto& h : j.value("hoppings", nlohmann::json::array())) {
    HoppingEntry e;
    e.delta = h.at("delta").get<std::vector<int>>();
    e.sigma = h.at("sigma").get<int>();
    e.sigma_prime = h.at("sigma_prime").get<int>();
    e.amp = cx(h.value("re", 0.0), h.value("im", 0.0));
    hops.push_back(e);
  }
  if (!strict) {
    // auto-complete missing Hermitian partners
    auto m = to_map(hops);
    auto full = m;
    for (const auto& [key, amp] : m) {
      const auto& [delta, s, sp] = key;
      CellVector neg(delta.size());
      for (size_t i = 0; i < delta.size(); ++i) neg[i] = -delta[i];
      HopKey pk{neg, sp, s};
      if (full.find(pk) == full.end()) full[pk] = std::conj(amp);
    }
    hops = from_map(full);
  }
  return LatticeSpec(d, r, std::move(hops), std::move(name));
}

LatticeSpec load_lattice_file(const std::string& path, bool strict) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open lattice file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_lattice_json(ss.str(), strict);
}

std::string lattice_to_json(const LatticeSpec& spec) {
  nlohmann::json j;
  j["name"] = spec.name();
  j["d"] = spec.dim();
  j["r"] = spec.basis();
  auto arr = nlohmann::json::array();
  for (const auto& e : spec.hops()) {
    nlohmann::json h;
    h["delta"] = e.delta;
    h["sigma"] = e.sigma;
    h["sigma_prime"] = e.sigma_prime;
    h["re"] = e.amp.real();
    h["im"] = e.amp.imag();
    arr.push_back(h);
  }
  j["hoppings"] = arr;
  return j.dump(2);
}

}  // namespace qws
