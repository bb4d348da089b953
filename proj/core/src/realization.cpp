#include "bubbletrack/realization.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "bubbletrack/errors.hpp"
#include "bubbletrack/fft.hpp"
#include "bubbletrack/numerics.hpp"

namespace bubbletrack {

using std::numbers::pi;

BandFilter::BandFilter(std::vector<Interval> iv, double taper) : intervals(std::move(iv)), w(taper) {
  if (!(w > 0.0)) throw assumption_error("InvalidBand", "taper half-width must be positive");
  for (size_t i = 0; i < intervals.size(); ++i) {
    if (!(intervals[i].lo < intervals[i].hi)) throw assumption_error("InvalidBand", "interval with lo >= hi");
    if (intervals[i].lo - w <= 0.0) throw assumption_error("InvalidBand", "widened interval reaches zero frequency");
    if (i > 0 && !(intervals[i - 1].hi + w < intervals[i].lo - w))
      throw assumption_error("InvalidBand", "widened intervals overlap");
  }
}

double BandFilter::chi(double omega) const {
  const double a = std::abs(omega);
  double best = 0.0;
  for (const auto& iv : intervals) {
    if (a >= iv.lo && a <= iv.hi) return 1.0;
    double x = -1.0;
    if (a < iv.lo && a > iv.lo - w) x = (a - (iv.lo - w)) / w;
    if (a > iv.hi && a < iv.hi + w) x = ((iv.hi + w) - a) / w;
    if (x > 0.0) best = std::max(best, 0.5 * (1.0 - std::cos(pi * x)));
  }
  return best;
}

double BandFilter::support_hi() const {
  double h = 0.0;
  for (const auto& iv : intervals) h = std::max(h, iv.hi + w);
  return h;
}

double bin_omega(std::size_t k, std::size_t n, double dt) {
  const double kk = (k <= n / 2) ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(n);
  return 2 * pi * kk / (static_cast<double>(n) * dt);
}

std::size_t padded_length(Eigen::Index samples, int pad_factor) {
  if (pad_factor < 4) throw assumption_error("InvalidPadding", "zero extension must be at least 4x the signal length");
  return fft::fast_length(static_cast<std::size_t>(samples) * static_cast<std::size_t>(pad_factor));
}

namespace {
fft::cvec padded_spectrum(const Signal& s, Eigen::Index c, std::size_t np) {
  fft::cvec x(np, 0.0);
  for (Eigen::Index k = 0; k < s.samples(); ++k) x[static_cast<size_t>(k)] = s.data(k, c);
  return fft::forward(x);
}
}  // namespace

Signal bandpass(const Signal& s, const BandFilter& filter, int pad_factor) {
  Signal out(s.dt, s.samples(), s.channels(), s.t0);
  if (s.samples() == 0) return out;
  const std::size_t np = padded_length(s.samples(), pad_factor);
  for (Eigen::Index c = 0; c < s.channels(); ++c) {
    fft::cvec X = padded_spectrum(s, c, np);
    for (std::size_t k = 0; k < np; ++k) X[k] *= filter.chi(bin_omega(k, np, s.dt));
    const fft::cvec x = fft::inverse(X);
    for (Eigen::Index k = 0; k < s.samples(); ++k) out.data(k, c) = x[static_cast<size_t>(k)].real();
  }
  return out;
}

ReferenceTrajectory reference_trajectory_gen(const ModeSet& modes, const std::vector<double>& amplitudes, double ramp,
                                             double T, double dt, double onset) {
  if (amplitudes.size() != modes.size()) throw assumption_error("InvalidTrajectory", "one amplitude per mode expected");
  if (!(ramp > 0.0) || !(onset + ramp < T) || !(dt > 0.0) || onset < 0.0)
    throw assumption_error("InvalidTrajectory", "need 0 < ramp, onset + ramp < T and dt > 0");
  const auto n = static_cast<Eigen::Index>(std::llround(T / dt)) + 1;
  const auto nm = static_cast<Eigen::Index>(modes.size());
  ReferenceTrajectory r{Signal(dt, n, nm), Signal(dt, n, nm), Signal(dt, n, nm), Signal(dt, n, nm)};
  for (Eigen::Index k = 0; k < n; ++k) {
    const double tp = k * dt - onset;
    if (tp <= 0.0) continue;
    const RampValue s = onset_ramp(tp, ramp);
    for (Eigen::Index m = 0; m < nm; ++m) {
      const double a = amplitudes[static_cast<size_t>(m)], w = modes.modes[static_cast<size_t>(m)].omega;
      const double S = std::sin(w * tp), C = std::cos(w * tp);
      r.p.data(k, m) = a * s.v * S;
      r.pd.data(k, m) = a * (s.d1 * S + s.v * w * C);
      r.pdd.data(k, m) = a * (s.d2 * S + 2 * s.d1 * w * C - s.v * w * w * S);
      r.pddd.data(k, m) = a * (s.d3 * S + 3 * s.d2 * w * C - 3 * s.d1 * w * w * S - s.v * w * w * w * C);
    }
  }
  return r;
}

BandLimitedSource project_to_band_space(const Signal& q, const std::vector<BandFilter>& filters, int pad_factor) {
  if (static_cast<Eigen::Index>(filters.size()) != q.channels())
    throw assumption_error("GridMismatch", "one band filter per channel expected");
  BandLimitedSource out;
  out.q = Signal(q.dt, q.samples(), q.channels(), q.t0);
  out.filters = filters;
  for (Eigen::Index c = 0; c < q.channels(); ++c) {
    Signal one(q.dt, q.samples(), 1, q.t0);
    one.data.col(0) = q.data.col(c);
    Signal f = bandpass(one, filters[static_cast<size_t>(c)], pad_factor);
    out.q.data.col(c) = f.data.col(0);
    const double total = l2_norm(one);
    one.data.col(0) -= f.data.col(0);
    const double lost = l2_norm(one);
    out.discarded.push_back(total > 0.0 ? (lost * lost) / (total * total) : 0.0);
  }
  return out;
}

BinSolution solve_bin(const Eigen::MatrixXcd& H, const Eigen::VectorXcd& rhs) {
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(H, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  BinSolution b;
  b.sigma_max = sv(0);
  b.sigma_min = sv(sv.size() - 1);
  if (!(b.sigma_min > 0.0)) {
    b.y = Eigen::VectorXcd::Zero(H.cols());
    b.identity_defect = std::numeric_limits<double>::infinity();
    return b;
  }
  const Eigen::VectorXd inv = sv.cwiseInverse();
  const Eigen::MatrixXcd Hp = svd.matrixV() * inv.cast<std::complex<double>>().asDiagonal() * svd.matrixU().adjoint();
  b.identity_defect = (H * Hp - Eigen::MatrixXcd::Identity(H.rows(), H.rows())).cwiseAbs().maxCoeff();
  b.y = Hp * rhs;
  return b;
}

RealizedControl synthesize_controls(const BandLimitedSource& target, const SMatrixEvaluator& ev,
                                    const SynthesisOptions& opt) {
  const Signal& q = target.q;
  const Eigen::Index N = q.channels();
  if (static_cast<Eigen::Index>(ev.ensemble().clusters()) != N)
    throw assumption_error("GridMismatch", "target channels != clusters");
  if (static_cast<Eigen::Index>(target.filters.size()) != N)
    throw assumption_error("GridMismatch", "one band filter per channel expected");
  const Eigen::Index Mtr = static_cast<Eigen::Index>(ev.transducers().size());
  const Eigen::Index n = q.samples();
  const std::size_t np = padded_length(n, opt.pad_factor);

  std::vector<fft::cvec> Qh(static_cast<size_t>(N));
  for (Eigen::Index c = 0; c < N; ++c) Qh[static_cast<size_t>(c)] = padded_spectrum(q, c, np);

  std::vector<fft::cvec> L(static_cast<size_t>(Mtr), fft::cvec(np, 0.0));
  RealizedControl out;
  out.sigma_min = std::numeric_limits<double>::infinity();
  out.min_cluster_gain = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < np; ++k) {
    const double w = bin_omega(k, np, q.dt);
    Eigen::VectorXcd rhs(N);
    bool any = false;
    for (Eigen::Index c = 0; c < N; ++c) {
      // The target is already band-limited; the filter only marks its support.
      const bool inside = target.filters[static_cast<size_t>(c)].chi(w) > 0.0;
      rhs(c) = inside ? Qh[static_cast<size_t>(c)][k] : 0.0;
      any = any || inside;
    }
    if (!any) continue;
    const Eigen::MatrixXcd H = ev.Hext(std::complex<double>(0.0, w));
    const BinSolution sol = solve_bin(H, rhs);
    const double smin = sol.sigma_min, smax = sol.sigma_max;
    if (smin < opt.sigma_floor || smin <= opt.rel_cutoff * smax) {
      std::ostringstream os;
      os << "sigma_min(H_ext) = " << smin << " at omega = " << w;
      throw numerical_error("IllConditionedBand", os.str());
    }
    if (w > 0.0) {
      const Eigen::MatrixXcd G = ev.Gtr_cluster(std::complex<double>(0.0, w));
      for (Eigen::Index c = 0; c < N; ++c) {
        if (target.filters[static_cast<size_t>(c)].chi(w) <= 0.0) continue;
        const double gain = H.row(c).norm() / G.row(c).norm();
        out.min_cluster_gain = std::min(out.min_cluster_gain, gain);
        if (gain < opt.min_cluster_gain) {
          std::ostringstream os;
          os << "cluster " << c << " gain " << gain << " below " << opt.min_cluster_gain << " at omega = " << w
             << " (sigma_min(H_ext) = " << smin << ")";
          throw numerical_error("IllConditionedBand", os.str());
        }
      }
    }
    out.sigma_min = std::min(out.sigma_min, smin);
    out.sigma_max = std::max(out.sigma_max, smax);
    out.identity_defect = std::max(out.identity_defect, sol.identity_defect);
    const Eigen::VectorXcd& lam = sol.y;
    for (Eigen::Index m = 0; m < Mtr; ++m) L[static_cast<size_t>(m)][k] = lam(m);
    if (w > 0.0) ++out.bins_used;
  }
  if (out.bins_used == 0) out.sigma_min = out.min_cluster_gain = 0.0;

  out.lambda = Signal(q.dt, n, Mtr, q.t0);
  out.lambda_d = Signal(q.dt, n, Mtr, q.t0);
  out.lambda_dd = Signal(q.dt, n, Mtr, q.t0);
  double re2 = 0.0, im2 = 0.0;
  for (Eigen::Index m = 0; m < Mtr; ++m) {
    auto& X = L[static_cast<size_t>(m)];
    fft::cvec X1(np), X2(np);
    for (std::size_t k = 0; k < np; ++k) {
      const double w = bin_omega(k, np, q.dt);
      X1[k] = X[k] * std::complex<double>(0.0, w);
      X2[k] = X[k] * (-w * w);
    }
    const fft::cvec x0 = fft::inverse(X), x1 = fft::inverse(X1), x2 = fft::inverse(X2);
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto kk = static_cast<size_t>(k);
      re2 += std::norm(x0[kk].real());
      im2 += std::norm(x0[kk].imag());
      out.lambda.data(k, m) = x0[kk].real();
      out.lambda_d.data(k, m) = x1[kk].real();
      out.lambda_dd.data(k, m) = x2[kk].real();
    }
  }
  out.imag_residue = re2 > 0.0 ? std::sqrt(im2 / re2) : 0.0;

  out.onset_ramp = opt.onset_ramp;
  if (opt.onset_ramp > 0.0) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const RampValue W = onset_ramp(q.time(k) - q.t0, opt.onset_ramp);
      if (W.v == 1.0 && W.d1 == 0.0) continue;
      for (Eigen::Index m = 0; m < Mtr; ++m) {
        const double l0 = out.lambda.data(k, m), l1 = out.lambda_d.data(k, m), l2 = out.lambda_dd.data(k, m);
        out.lambda.data(k, m) = W.v * l0;
        out.lambda_d.data(k, m) = W.d1 * l0 + W.v * l1;
        out.lambda_dd.data(k, m) = W.d2 * l0 + 2 * W.d1 * l1 + W.v * l2;
      }
    }
  }
  return out;
}

double realization_error(const Signal& Q, const Signal& target) {
  require_same_grid(Q, target, "realization_error");
  if (Q.channels() != target.channels()) throw assumption_error("GridMismatch", "realization_error: channel mismatch");
  const Signal dq = time_derivative(target);
  const double denom = std::sqrt(std::pow(l2_norm(target), 2) + std::pow(l2_norm(dq), 2));
  if (!(denom > 0.0)) throw assumption_error("ZeroTarget", "realization error of a zero target");
  Signal diff = Q;
  diff.data -= target.data;
  const Signal dd = time_derivative(diff);
  return std::sqrt(std::pow(l2_norm(diff), 2) + std::pow(l2_norm(dd), 2)) / denom;
}

double realization_error(const Signal& Q, const BandLimitedSource& target) { return realization_error(Q, target.q); }

double control_cost(const RealizedControl& c) {
  return std::sqrt(std::pow(l2_norm(c.lambda), 2) + std::pow(l2_norm(c.lambda_d), 2) + std::pow(l2_norm(c.lambda_dd), 2));
}

}  // namespace bubbletrack
