#ifndef BUBBLETRACK_NUMERICS_HPP
#define BUBBLETRACK_NUMERICS_HPP

#include <Eigen/Dense>
#include <complex>
#include <span>
#include <vector>

#include "bubbletrack/signal.hpp"

namespace bubbletrack {

using cplx = std::complex<double>;

// Trapezoidal L2(0,T) norm across all channels.
double l2_norm(const Signal& s);
double l2_norm(const Eigen::MatrixXd& data, double dt);

// Fourth-order finite-difference time derivative (one-sided near the ends).
Signal time_derivative(const Signal& s);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;  // in log space
  double coefficient() const;  // exp(intercept)
};
// Least-squares fit of log(y) = intercept + slope*log(x).
LineFit loglog_fit(std::span<const double> x, std::span<const double> y);

double harmonic_number(int n);

// Onset envelope rising from 0 to 1 over [0, Tr], constant 1 afterwards.
// Its derivative is proportional to sin^4(pi t/Tr), so the first four
// derivatives vanish at both joints.
struct RampValue {
  double v = 0.0, d1 = 0.0, d2 = 0.0, d3 = 0.0;
};
RampValue onset_ramp(double t, double Tr);

// Euclidean distance between two points.
double distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b);

}  // namespace bubbletrack

#endif
