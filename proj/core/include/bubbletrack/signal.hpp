#ifndef BUBBLETRACK_SIGNAL_HPP
#define BUBBLETRACK_SIGNAL_HPP

#include <Eigen/Dense>
#include <iosfwd>
#include <string>

namespace bubbletrack {

// Uniformly sampled multi-channel real time series.
// Rows are samples, columns are channels; sample k sits at t0 + k*dt.
struct Signal {
  double t0 = 0.0;
  double dt = 1.0;
  Eigen::MatrixXd data;

  Signal() = default;
  Signal(double dt_, Eigen::Index n_samples, Eigen::Index n_channels, double t0_ = 0.0)
      : t0(t0_), dt(dt_), data(Eigen::MatrixXd::Zero(n_samples, n_channels)) {}

  Eigen::Index samples() const { return data.rows(); }
  Eigen::Index channels() const { return data.cols(); }
  double time(Eigen::Index k) const { return t0 + static_cast<double>(k) * dt; }
  double duration() const { return samples() > 0 ? (samples() - 1) * dt : 0.0; }

  bool same_grid(const Signal& o) const;
};

// How a cubic read treats points beyond the sampled window.
enum class Extension {
  zero,     // rest before the first sample and after the last one
  clamped,  // one-sided stencils at both ends, no reads outside
};

// Four-point Lagrange interpolation of column c at time t.
double sample_at(const Signal& s, Eigen::Index c, double t, Extension ext);

// Four Lagrange weights and the first stencil index for a read at
// fractional sample position u (stencil first..first+3).
struct CubicStencil {
  long first = 0;
  double w[4] = {0, 0, 0, 0};
};
CubicStencil cubic_stencil(double u);

// dst(k) += scale * src(t_k - delay, c) for every sample k, reading src with
// zero extension. src and dst share t0 and dt.
void accumulate_delayed(const Signal& src, Eigen::Index c, double delay, double scale, Eigen::Ref<Eigen::VectorXd> dst);

// Throws an assumption error tagged GridMismatch when the grids differ.
void require_same_grid(const Signal& a, const Signal& b, const char* where);

void write_csv(const Signal& s, std::ostream& os);
void write_csv(const Signal& s, const std::string& path);
Signal read_csv(std::istream& is);

}  // namespace bubbletrack

#endif
