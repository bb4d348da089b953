#include "bubbletrack/numerics.hpp"

#include <cmath>
#include <numbers>

#include "bubbletrack/errors.hpp"

namespace bubbletrack {

double l2_norm(const Eigen::MatrixXd& data, double dt) {
  const Eigen::Index n = data.rows();
  if (n < 2) return 0.0;
  double acc = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    double w = (k == 0 || k == n - 1) ? 0.5 : 1.0;
    acc += w * data.row(k).squaredNorm();
  }
  return std::sqrt(acc * dt);
}

double l2_norm(const Signal& s) { return l2_norm(s.data, s.dt); }

Signal time_derivative(const Signal& s) {
  Signal d(s.dt, s.samples(), s.channels(), s.t0);
  const Eigen::Index n = s.samples();
  if (n < 5) {
    for (Eigen::Index k = 0; k + 1 < n; ++k) d.data.row(k) = (s.data.row(k + 1) - s.data.row(k)) / s.dt;
    if (n > 1) d.data.row(n - 1) = d.data.row(n - 2);
    return d;
  }
  const double h = 12.0 * s.dt;
  const auto& f = s.data;
  d.data.row(0) = (-25 * f.row(0) + 48 * f.row(1) - 36 * f.row(2) + 16 * f.row(3) - 3 * f.row(4)) / h;
  d.data.row(1) = (-3 * f.row(0) - 10 * f.row(1) + 18 * f.row(2) - 6 * f.row(3) + f.row(4)) / h;
  for (Eigen::Index k = 2; k < n - 2; ++k) {
    d.data.row(k) = (-f.row(k + 2) + 8 * f.row(k + 1) - 8 * f.row(k - 1) + f.row(k - 2)) / h;
  }
  const Eigen::Index m = n - 1;
  d.data.row(m) = (25 * f.row(m) - 48 * f.row(m - 1) + 36 * f.row(m - 2) - 16 * f.row(m - 3) + 3 * f.row(m - 4)) / h;
  d.data.row(m - 1) =
      (3 * f.row(m) + 10 * f.row(m - 1) - 18 * f.row(m - 2) + 6 * f.row(m - 3) - f.row(m - 4)) / h;
  return d;
}

double LineFit::coefficient() const { return std::exp(intercept); }

LineFit loglog_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw assumption_error("FitError", "need at least two points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) throw numerical_error("FitError", "log-log fit needs positive data");
    double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  LineFit f;
  f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  f.intercept = (sy - f.slope * sx) / n;
  return f;
}

double harmonic_number(int n) {
  double h = 0.0;
  for (int k = 1; k <= n; ++k) h += 1.0 / k;
  return h;
}

double distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b) { return (a - b).norm(); }

RampValue onset_ramp(double t, double Tr) {
  RampValue r;
  if (t <= 0.0) return r;
  if (t >= Tr) {
    r.v = 1.0;
    return r;
  }
  using std::numbers::pi;
  const double x = t / Tr;
  const double a = 2 * pi * x, b = 4 * pi * x;
  r.v = x - 2.0 / (3 * pi) * std::sin(a) + 1.0 / (12 * pi) * std::sin(b);
  r.d1 = (1.0 - 4.0 / 3.0 * std::cos(a) + 1.0 / 3.0 * std::cos(b)) / Tr;
  r.d2 = (8 * pi / 3 * std::sin(a) - 4 * pi / 3 * std::sin(b)) / (Tr * Tr);
  r.d3 = (16 * pi * pi / 3) * (std::cos(a) - std::cos(b)) / (Tr * Tr * Tr);
  return r;
}

}  // namespace bubbletrack
