#ifndef QWS_TYPES_HPP
#define QWS_TYPES_HPP

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace qws {

using cx = std::complex<double>;
using VecC = Eigen::VectorXcd;
using VecR = Eigen::VectorXd;
using MatC = Eigen::MatrixXcd;
using MatR = Eigen::MatrixXd;
using SpMatC = Eigen::SparseMatrix<cx>;

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

/// Offset or cell coordinate on the d-dimensional torus of cells.
using CellVector = std::vector<int>;

/// Site label within a cell, in [0, r).
using SiteIndex = int;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Reduce x into [0, l).
inline int wrap(int x, int l) {
  int m = x % l;
  return m < 0 ? m + l : m;
}

/// Reduce an angle into (-pi, pi].
inline double wrap_angle(double k) {
  while (k > kPi + 1e-15) k -= kTwoPi;
  while (k <= -kPi - 1e-15) k += kTwoPi;
  if (k > kPi) k = kPi;
  return k;
}

/// Distance of two angles on the circle.
inline double angle_dist(double a, double b) {
  double d = std::fmod(std::abs(a - b), kTwoPi);
  return std::min(d, kTwoPi - d);
}

inline long long ipow(long long b, int e) {
  long long r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

/// Compensated (Kahan) accumulator; summation order fixed by the caller.
struct KahanSum {
  double s = 0.0, c = 0.0;
  void add(double x) {
    double y = x - c;
    double t = s + y;
    c = (t - s) - y;
    s = t;
  }
  double value() const { return s; }
};

}  // namespace qws

#endif
