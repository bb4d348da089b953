#include "bubbletrack/transfer.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "bubbletrack/errors.hpp"
#include "bubbletrack/numerics.hpp"

namespace bubbletrack {

using std::numbers::pi;
constexpr cplx I1{0.0, 1.0};

SMatrixEvaluator::SMatrixEvaluator(BubbleEnsemble e, double c0, std::optional<TransducerArray> transducers)
    : e_(std::move(e)), c0_(c0), tr_(std::move(transducers)) {
  e_.check_shape();
  const auto M = static_cast<Eigen::Index>(e_.size());
  dist_ = Eigen::MatrixXd::Zero(M, M);
  inv_w2_.resize(M);
  for (Eigen::Index i = 0; i < M; ++i) {
    inv_w2_(i) = 1.0 / (e_.omega_m[i] * e_.omega_m[i]);
    for (Eigen::Index j = 0; j < M; ++j) dist_(i, j) = (e_.positions[i] - e_.positions[j]).norm();
  }
}

Eigen::MatrixXcd SMatrixEvaluator::D(cplx s) const {
  Eigen::VectorXcd d = (inv_w2_.cast<cplx>() * (s * s)).array() + 1.0;
  return d.asDiagonal();
}

Eigen::MatrixXcd SMatrixEvaluator::Q(cplx s) const {
  const auto M = dist_.rows();
  Eigen::MatrixXcd q = Eigen::MatrixXcd::Zero(M, M);
  for (Eigen::Index i = 0; i < M; ++i)
    for (Eigen::Index j = 0; j < M; ++j)
      if (i != j) {
        const double d = dist_(i, j);
        q(i, j) = e_.eps * e_.capacitance[j] * std::exp(-s * d / c0_) / (4 * pi * d);
      }
  return q;
}

Eigen::MatrixXcd SMatrixEvaluator::pencil(cplx s) const { return D(s) + (s * s) * Q(s); }

Eigen::MatrixXcd SMatrixEvaluator::pencil_derivative(cplx s) const {
  const auto M = dist_.rows();
  Eigen::MatrixXcd dp = Eigen::MatrixXcd::Zero(M, M);
  const Eigen::MatrixXcd q = Q(s);
  for (Eigen::Index i = 0; i < M; ++i) {
    dp(i, i) = 2.0 * s * inv_w2_(i);
    for (Eigen::Index j = 0; j < M; ++j)
      if (i != j) dp(i, j) = 2.0 * s * q(i, j) - s * s * (dist_(i, j) / c0_) * q(i, j);
  }
  return dp;
}

cplx SMatrixEvaluator::det(cplx s) const { return pencil(s).partialPivLu().determinant(); }

cplx SMatrixEvaluator::log_derivative(cplx s) const {
  return pencil(s).partialPivLu().solve(pencil_derivative(s)).trace();
}

Eigen::MatrixXcd SMatrixEvaluator::Hb(cplx s) const {
  const auto M = dist_.rows();
  Eigen::MatrixXcd x = pencil(s).partialPivLu().solve(Eigen::MatrixXcd::Identity(M, M)) * (s * s);
  for (Eigen::Index i = 0; i < M; ++i) x.row(i) *= -e_.eps * e_.capacitance[i];
  return x;
}

Eigen::MatrixXcd SMatrixEvaluator::trace_matrix(cplx s, const std::vector<Eigen::Vector3d>& pts) const {
  if (!tr_) throw assumption_error("NoTransducers", "evaluator built without a transducer array");
  const auto& a = *tr_;
  Eigen::MatrixXcd g(static_cast<Eigen::Index>(pts.size()), static_cast<Eigen::Index>(a.size()));
  for (size_t i = 0; i < pts.size(); ++i)
    for (size_t m = 0; m < a.size(); ++m) {
      const double r = (pts[i] - a.positions[m]).norm();
      g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) =
          a.rho_c * std::exp(-s * (r / c0_ - a.clock_advance)) / (4 * pi * r);
    }
  return g;
}

Eigen::MatrixXcd SMatrixEvaluator::Gtr(cplx s) const { return trace_matrix(s, e_.positions); }
Eigen::MatrixXcd SMatrixEvaluator::Gtr_cluster(cplx s) const { return trace_matrix(s, e_.cluster_centers); }

Eigen::MatrixXcd SMatrixEvaluator::Hext(cplx s) const {
  Eigen::MatrixXcd x = pencil(s).partialPivLu().solve(Gtr(s)) * (s * s);
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(e_.clusters()), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(e_.cluster_of[i]) += (-e_.eps * e_.capacitance[i]) * x.row(i);
  return out;
}

Eigen::MatrixXcd eval_pencil(const BubbleEnsemble& e, double c0, cplx s) { return SMatrixEvaluator(e, c0).pencil(s); }

PoleRecord find_pole(const SMatrixEvaluator& ev, cplx guess, double tol, int max_iter) {
  cplx s = guess;
  PoleRecord rec;
  for (int it = 1; it <= max_iter; ++it) {
    const cplx f = ev.det(s);
    if (f == 0.0) {
      rec.iterations = it;
      break;
    }
    const double h = 1e-6 * std::max(std::abs(s), 1.0);
    const cplx fp = (ev.det(s + h) - ev.det(s - h)) / (2.0 * h);
    if (fp == 0.0 || !std::isfinite(std::abs(fp))) throw numerical_error("NoConvergence", "vanishing derivative in Newton");
    cplx step = f / fp;
    // Keep iterates from jumping across the spectrum.
    const double cap = 0.1 * std::max(std::abs(s), 1.0);
    if (std::abs(step) > cap) step *= cap / std::abs(step);
    s -= step;
    rec.iterations = it;
    if (std::abs(step) < tol * std::abs(s)) break;
    if (it == max_iter) {
      std::ostringstream os;
      os << "Newton did not converge from " << guess << " (last step " << std::abs(step) << ")";
      throw numerical_error("NoConvergence", os.str());
    }
  }
  rec.s = s;
  rec.eta = -s.real();
  rec.omega = s.imag();
  rec.newton_residual = std::abs(ev.det(s));
  return rec;
}

PoleCount count_poles_in_disk(const SMatrixEvaluator& ev, cplx center, double radius, int n_quad, double rel_threshold) {
  if (!(radius > 0.0) || n_quad < 8) throw assumption_error("InvalidContour", "radius must be positive, n_quad >= 8");
  cplx sum = 0.0;
  std::vector<double> mag(static_cast<size_t>(n_quad));
  for (int k = 0; k < n_quad; ++k) {
    const cplx z = radius * std::exp(I1 * (2 * pi * k / n_quad));
    const cplx s = center + z;
    const auto lu = ev.pencil(s).partialPivLu();
    mag[static_cast<size_t>(k)] = std::abs(lu.determinant());
    sum += lu.solve(ev.pencil_derivative(s)).trace() * z;
  }
  sum /= static_cast<double>(n_quad);
  // |det P| varies exponentially along large contours, so a pole near the
  // contour is detected by a local dip against the neighbouring nodes and by
  // a quadrature sum that is far from an integer.
  double min_det = std::numeric_limits<double>::infinity(), dip = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n_quad; ++k) {
    const double a = mag[static_cast<size_t>(k)];
    const double nb = std::max(mag[static_cast<size_t>((k + n_quad - 1) % n_quad)], mag[static_cast<size_t>((k + 1) % n_quad)]);
    min_det = std::min(min_det, a);
    if (nb > 0.0) dip = std::min(dip, a / nb);
  }
  PoleCount pc;
  pc.value = sum.real();
  pc.count = static_cast<int>(std::lround(sum.real()));
  pc.rounding_distance = std::abs(sum - cplx(pc.count, 0.0));
  if (!(min_det > 0.0) || !std::isfinite(sum.real()) || !std::isfinite(sum.imag()) || dip < rel_threshold ||
      pc.rounding_distance > 0.1) {
    std::ostringstream os;
    os << "pole too close to the contour (min |det P| = " << min_det << ", quadrature sum " << sum << ")";
    throw numerical_error("ContourTooClose", os.str());
  }
  pc.min_abs_det = min_det;
  return pc;
}

double nearest_pole_distance(const SMatrixEvaluator& ev, cplx s, double r_max, int n_quad) {
  auto count = [&](double r) {
    // Nudge the radius off a pole lying exactly on the contour.
    for (double f : {1.0, 1.002, 0.998, 1.01, 0.99, 1.03, 0.97, 1.06, 0.94}) {
      try {
        return count_poles_in_disk(ev, s, r * f, n_quad).count;
      } catch (const Error& err) {
        if (err.kind() != "ContourTooClose") throw;
      }
    }
    throw numerical_error("ContourTooClose", "could not place a clean contour");
  };
  if (count(r_max) <= 1) return r_max;
  double lo = 0.0, hi = r_max;
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= 1e-14 * std::abs(s)) break;
    if (count(mid) <= 1)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double default_residue_radius(const SMatrixEvaluator& ev, const PoleRecord& pole) {
  const double gap = nearest_pole_distance(ev, pole.s, 0.5 * std::abs(pole.s));
  double r = gap / 4.0;
  if (pole.eta > 0.0) r = std::min(r, pole.eta / 2.0);
  return r;
}

Eigen::MatrixXcd residue_at(const SMatrixEvaluator& ev, const PoleRecord& pole, double radius, int n_quad) {
  if (radius <= 0.0) radius = default_residue_radius(ev, pole);
  const PoleCount pc = count_poles_in_disk(ev, pole.s, radius, n_quad);
  if (pc.count != 1) throw numerical_error("NotSimple", "disk around the pole holds " + std::to_string(pc.count) + " poles");
  const auto M = static_cast<Eigen::Index>(ev.ensemble().size());
  Eigen::MatrixXcd R = Eigen::MatrixXcd::Zero(M, M);
  for (int k = 0; k < n_quad; ++k) {
    const cplx z = radius * std::exp(I1 * (2 * pi * k / n_quad));
    R += ev.Hb(pole.s + z) * z;
  }
  return R / static_cast<double>(n_quad);
}

namespace {

// Dominant eigenpair of a matrix whose spectrum lies in [0, inf) after the
// caller's shift. Returns the Rayleigh-type estimate and the unit vector.
std::pair<double, Eigen::VectorXd> power_iterate(const Eigen::MatrixXd& A, Eigen::VectorXd x, double tol) {
  x.normalize();
  double lam = x.dot(A * x), prev = lam;
  for (int it = 0; it < 1000000; ++it) {
    Eigen::VectorXd y = A * x;
    const double ny = y.norm();
    if (ny == 0.0) return {0.0, x};
    x = y / ny;
    lam = x.dot(A * x);
    if (it > 2 && std::abs(lam - prev) <= tol * std::max(1.0, std::abs(lam)) && (A * x - lam * x).norm() <= 1e3 * tol * std::max(1.0, std::abs(lam)))
      break;
    prev = lam;
  }
  return {lam, x};
}

}  // namespace

InteractionMatrix perron_analysis(const Eigen::MatrixXd& M) {
  InteractionMatrix out;
  out.M = M;
  const auto n = M.rows();
  if (n <= 1) {
    out.mu1 = 0.0;
    out.mu2 = 0.0;
    out.gap = std::numeric_limits<double>::infinity();
    out.v = out.w = Eigen::VectorXd::Ones(n);
    return out;
  }
  const double tol = 1e-14;
  // Shift by the largest row sum so the Perron root dominates strictly.
  const double sigma = M.cwiseAbs().rowwise().sum().maxCoeff();
  const Eigen::MatrixXd S = M + sigma * Eigen::MatrixXd::Identity(n, n);
  auto [l1, v] = power_iterate(S, Eigen::VectorXd::Ones(n), tol);
  auto [l1t, w] = power_iterate(S.transpose(), Eigen::VectorXd::Ones(n), tol);
  (void)l1t;
  if (v.sum() < 0) v = -v;
  if (w.sum() < 0) w = -w;
  out.mu1 = l1 - sigma;
  out.v = v;
  out.w = w;
  // Deflate mu1 to -sigma so the shifted spectrum keeps it at 0.
  const Eigen::MatrixXd B = M - (out.mu1 + sigma) * (v * w.transpose()) / w.dot(v);
  Eigen::VectorXd x0(n);
  for (Eigen::Index i = 0; i < n; ++i) x0(i) = 1.0 / (static_cast<double>(i) + 1.5) + 0.1 * std::sin(3.0 * i + 1.0);
  x0 -= (w.dot(x0) / w.dot(v)) * v;
  auto [l2, u] = power_iterate(B + sigma * Eigen::MatrixXd::Identity(n, n), x0, tol);
  (void)u;
  out.mu2 = l2 - sigma;
  out.gap = out.mu1 - out.mu2;
  return out;
}

InteractionMatrix interaction_matrix(const BubbleEnsemble& e, std::size_t alpha) {
  const auto idx = e.members(alpha);
  const auto n = static_cast<Eigen::Index>(idx.size());
  const double scale = std::pow(e.eps, e.p);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) M(i, j) = scale / (e.positions[idx[i]] - e.positions[idx[j]]).norm();
  return perron_analysis(M);
}

std::pair<double, double> toeplitz_bounds(int m) {
  if (m < 2) throw assumption_error("InvalidClusterSize", "toeplitz_bounds needs M >= 2");
  return {harmonic_number(m - 1), 2.0 * harmonic_number(m / 2)};
}

AsymptoticPole asymptotic_pole(const BubbleEnsemble& e, std::size_t alpha, double c0) {
  AsymptoticPole a;
  const double w = e.cluster_omega(alpha);
  const double C = e.cluster_capacitance(alpha);
  const auto idx = e.members(alpha);
  a.omega_pred = w;
  if (idx.size() < 2) {
    a.gap_pred = std::numeric_limits<double>::infinity();
    return a;
  }
  const InteractionMatrix im = interaction_matrix(e, alpha);
  const double coef = w * w * w * C / (8 * pi);
  const double scale = std::pow(e.eps, 1.0 - e.p);
  a.shift_coeff = coef * im.mu1;
  a.omega_pred = w - coef * im.mu1 * scale;
  a.gap_pred = coef * im.gap * scale;
  const auto n = static_cast<Eigen::Index>(idx.size());
  const double k = w / c0;
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) {
        const double d = (e.positions[idx[i]] - e.positions[idx[j]]).norm();
        G(i, j) = e.capacitance[idx[j]] / (4 * pi) * std::sin(k * d) / d;
      }
  const double m11 = im.w.dot(G * im.v) / im.w.dot(im.v);
  a.eta_pred = 0.5 * w * w * w * m11 * e.eps;
  return a;
}

PoleRecord principal_pole(const SMatrixEvaluator& ev, std::size_t alpha) {
  const AsymptoticPole a = asymptotic_pole(ev.ensemble(), alpha, ev.c0());
  PoleRecord r = find_pole(ev, cplx(-a.eta_pred, a.omega_pred));
  r.cluster = static_cast<int>(alpha);
  return r;
}

std::vector<GainSample> gain_sweep(const SMatrixEvaluator& ev, const SpectralBand& band, int n_grid) {
  std::vector<GainSample> out;
  if (n_grid < 2) return out;
  for (const auto& iv : band.intervals) {
    for (int k = 0; k < n_grid; ++k) {
      GainSample g;
      g.omega = iv.lo + (iv.hi - iv.lo) * k / (n_grid - 1);
      const cplx s(0.0, g.omega);
      Eigen::JacobiSVD<Eigen::MatrixXcd> hb(ev.Hb(s));
      g.norm_hb = hb.singularValues()(0);
      if (ev.has_transducers()) {
        Eigen::JacobiSVD<Eigen::MatrixXcd> he(ev.Hext(s));
        const auto& sv = he.singularValues();
        g.smax_hext = sv(0);
        g.smin_hext = sv(sv.size() - 1);
      }
      out.push_back(g);
    }
  }
  return out;
}

double tune_cluster(const BubbleEnsemble& e, std::size_t alpha, double target, double c0, double rel_tol, int max_iter) {
  const double w0 = e.cluster_omega(alpha);
  if (!(target > 0.0) || std::abs(target - w0) > 0.2 * w0) {
    std::ostringstream os;
    os << "target " << target << " outside 20% of the cluster frequency " << w0;
    throw numerical_error("NoConvergence", os.str());
  }
  auto g = [&](double w) {
    SMatrixEvaluator ev(e.with_cluster_omega(alpha, w), c0);
    return principal_pole(ev, alpha).omega - target;
  };
  // First-order inversion of the red shift as the initial pair.
  BubbleEnsemble at_target = e.with_cluster_omega(alpha, target);
  const AsymptoticPole a = asymptotic_pole(at_target, alpha, c0);
  double x0 = target, x1 = target + (target - a.omega_pred);
  if (x1 == x0) x1 = target * (1.0 + 1e-6);
  double g0 = g(x0), g1 = g(x1);
  for (int it = 0; it < max_iter; ++it) {
    if (std::abs(g1) < rel_tol * target) return x1;
    if (g1 == g0) break;
    const double x2 = x1 - g1 * (x1 - x0) / (g1 - g0);
    if (!(std::abs(x2 - w0) <= 0.5 * w0)) break;
    x0 = x1;
    g0 = g1;
    x1 = x2;
    g1 = g(x1);
  }
  if (std::abs(g1) < rel_tol * target) return x1;
  throw numerical_error("NoConvergence", "tune_cluster secant iteration did not converge");
}

double transducer_accessibility(const TransducerArray& array, const std::vector<Eigen::Vector3d>& centers,
                                const SpectralBand& band, int n_grid, double c0) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& iv : band.intervals) {
    for (int k = 0; k < std::max(n_grid, 2); ++k) {
      const double w = iv.lo + (iv.hi - iv.lo) * k / (std::max(n_grid, 2) - 1);
      Eigen::MatrixXcd g(static_cast<Eigen::Index>(centers.size()), static_cast<Eigen::Index>(array.size()));
      for (size_t a = 0; a < centers.size(); ++a)
        for (size_t m = 0; m < array.size(); ++m) {
          const double r = (centers[a] - array.positions[m]).norm();
          g(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(m)) =
              array.rho_c * std::exp(cplx(0.0, -w) * (r / c0 - array.clock_advance)) / (4 * pi * r);
        }
      Eigen::JacobiSVD<Eigen::MatrixXcd> svd(g);
      const auto& sv = svd.singularValues();
      best = std::min(best, sv.size() ? sv(sv.size() - 1) : 0.0);
    }
  }
  return best;
}

double trace_perturbation(const SMatrixEvaluator& ev, double omega) {
  const cplx s(0.0, omega);
  const Eigen::MatrixXcd g = ev.Gtr(s), gc = ev.Gtr_cluster(s);
  double m = 0.0;
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    m = std::max(m, (g.row(i) - gc.row(ev.ensemble().cluster_of[i])).cwiseAbs().maxCoeff());
  return m;
}

}  // namespace bubbletrack
