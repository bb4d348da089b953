#include "bubbletrack/bubbles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "bubbletrack/errors.hpp"

namespace bubbletrack {

using std::numbers::pi;

std::vector<std::size_t> BubbleEnsemble::members(std::size_t alpha) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i)
    if (cluster_of[i] == static_cast<int>(alpha)) out.push_back(i);
  return out;
}

double BubbleEnsemble::cluster_omega(std::size_t alpha) const {
  auto m = members(alpha);
  return m.empty() ? 0.0 : omega_m[m.front()];
}

double BubbleEnsemble::cluster_capacitance(std::size_t alpha) const {
  auto m = members(alpha);
  double s = 0.0;
  for (auto i : m) s += capacitance[i];
  return m.empty() ? 0.0 : s / static_cast<double>(m.size());
}

double BubbleEnsemble::cluster_radius(std::size_t alpha) const {
  double r = 0.0;
  for (auto i : members(alpha)) r = std::max(r, (positions[i] - cluster_centers[alpha]).norm());
  return r;
}

BubbleEnsemble BubbleEnsemble::with_cluster_omega(std::size_t alpha, double omega) const {
  BubbleEnsemble e = *this;
  for (auto i : members(alpha)) e.omega_m[i] = omega;
  return e;
}

void BubbleEnsemble::check_shape() const {
  const auto M = size();
  if (cluster_of.size() != M || omega_m.size() != M || capacitance.size() != M)
    throw assumption_error("InvalidEnsemble", "per-bubble arrays have inconsistent lengths");
  for (auto c : cluster_of)
    if (c < 0 || c >= static_cast<int>(clusters())) throw assumption_error("InvalidEnsemble", "cluster label out of range");
  for (std::size_t a = 0; a < clusters(); ++a)
    if (members(a).empty()) throw assumption_error("InvalidEnsemble", "empty cluster " + std::to_string(a));
  if (!(eps > 0.0 && eps < 1.0) || !(p > 0.0 && p < 1.0))
    throw assumption_error("InvalidEnsemble", "eps and p must lie in (0, 1)");
  for (std::size_t i = 0; i < M; ++i)
    if (!(omega_m[i] > 0.0) || !(capacitance[i] > 0.0))
      throw assumption_error("InvalidEnsemble", "Minnaert frequencies and capacitances must be positive");
}

namespace {
std::string pair_name(std::size_t i, std::size_t j) {
  return "bubbles (" + std::to_string(i) + ", " + std::to_string(j) + ")";
}
}  // namespace

GeometryReport validate_geometry(const BubbleEnsemble& e, const GeometryBounds& bounds) {
  e.check_shape();
  GeometryReport r;
  const double scale = std::pow(e.eps, e.p);
  double intra_min = std::numeric_limits<double>::infinity(), intra_max = 0.0;
  double inter_min = std::numeric_limits<double>::infinity(), inter_max = 0.0;
  std::size_t intra_max_pair[2] = {0, 0}, inter_min_pair[2] = {0, 0};

  for (std::size_t i = 0; i < e.size(); ++i) {
    for (std::size_t j = i + 1; j < e.size(); ++j) {
      const double d = (e.positions[i] - e.positions[j]).norm();
      if (!(d > 0.0)) throw assumption_error("GeometryViolation", pair_name(i, j) + " coincide");
      if (e.cluster_of[i] == e.cluster_of[j]) {
        if (std::abs(e.omega_m[i] - e.omega_m[j]) > 1e-12 * e.omega_m[i])
          throw assumption_error("GeometryViolation", pair_name(i, j) + " share a cluster but differ in Minnaert frequency");
        intra_min = std::min(intra_min, d);
        if (d > intra_max) {
          intra_max = d;
          intra_max_pair[0] = i;
          intra_max_pair[1] = j;
        }
        r.has_intra = true;
      } else {
        if (d < inter_min) {
          inter_min = d;
          inter_min_pair[0] = i;
          inter_min_pair[1] = j;
        }
        inter_max = std::max(inter_max, d);
        r.has_inter = true;
      }
    }
  }
  for (std::size_t a = 0; a < e.clusters(); ++a) {
    for (std::size_t b = a + 1; b < e.clusters(); ++b) {
      const double wa = e.cluster_omega(a), wb = e.cluster_omega(b);
      if (std::abs(wa - wb) <= 1e-12 * std::max(wa, wb))
        throw assumption_error("GeometryViolation", "spectral detuning: clusters " + std::to_string(a) + " and " +
                                                        std::to_string(b) + " share a Minnaert frequency");
    }
  }
  if (r.has_intra) {
    r.c1 = intra_min / scale;
    r.c2 = intra_max / scale;
  }
  if (r.has_inter) {
    r.d_min = inter_min;
    r.d_max = inter_max;
  }
  if (r.has_intra && r.has_inter && !(intra_max < inter_min)) {
    throw assumption_error("GeometryViolation",
                           "scale separation: intra-cluster " + pair_name(intra_max_pair[0], intra_max_pair[1]) +
                               " farther apart than inter-cluster " + pair_name(inter_min_pair[0], inter_min_pair[1]));
  }
  auto fail = [](const std::string& what) { throw assumption_error("GeometryViolation", what); };
  if (r.has_intra && bounds.c1 && r.c1 < *bounds.c1) fail("intra-cluster distance below c1 eps^p");
  if (r.has_intra && bounds.c2 && r.c2 > *bounds.c2)
    fail(pair_name(intra_max_pair[0], intra_max_pair[1]) + " exceed c2 eps^p");
  if (r.has_inter && bounds.d_min && r.d_min < *bounds.d_min)
    fail(pair_name(inter_min_pair[0], inter_min_pair[1]) + " closer than D_min");
  if (r.has_inter && bounds.d_max && r.d_max > *bounds.d_max) fail("inter-cluster distance above D_max");
  return r;
}

double DelayedSystem::min_delay() const {
  double m = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < tau.rows(); ++i)
    for (Eigen::Index j = 0; j < tau.cols(); ++j)
      if (i != j && tau(i, j) > 0.0) m = std::min(m, tau(i, j));
  return m;
}

DelayedSystem build_system(const BubbleEnsemble& e, double c0) {
  const auto M = static_cast<Eigen::Index>(e.size());
  DelayedSystem s;
  s.inv_omega_sq.resize(M);
  s.q = Eigen::MatrixXd::Zero(M, M);
  s.tau = Eigen::MatrixXd::Zero(M, M);
  for (Eigen::Index i = 0; i < M; ++i) {
    s.inv_omega_sq(i) = 1.0 / (e.omega_m[i] * e.omega_m[i]);
    for (Eigen::Index j = 0; j < M; ++j) {
      if (i == j) continue;
      const double d = (e.positions[i] - e.positions[j]).norm();
      s.q(i, j) = e.eps * e.capacitance[j] / (4 * pi * d);
      s.tau(i, j) = d / c0;
    }
  }
  return s;
}

void validate_transducers(const TransducerArray& a, const BoxDomain& domain, std::size_t n_clusters) {
  if (a.size() < n_clusters)
    throw assumption_error("TransducerCount", "M_tr = " + std::to_string(a.size()) + " < N = " + std::to_string(n_clusters));
  for (std::size_t m = 0; m < a.size(); ++m)
    if (domain.contains_closed(a.positions[m]))
      throw assumption_error("TransducerPlacement", "transducer " + std::to_string(m) + " inside the closed domain");
  if (!(a.rho_c > 0.0)) throw assumption_error("TransducerPlacement", "rho_c must be positive");
}

IncidentTraces incident_traces(const TransducerArray& array, const Signal& lambda, const Signal& lambda_tt,
                               const std::vector<Eigen::Vector3d>& targets, double c0) {
  require_same_grid(lambda, lambda_tt, "incident_traces");
  if (lambda.channels() != static_cast<Eigen::Index>(array.size()))
    throw assumption_error("GridMismatch", "incident_traces: one control channel per transducer expected");
  const auto nt = static_cast<Eigen::Index>(targets.size());
  IncidentTraces out{Signal(lambda.dt, lambda.samples(), nt, lambda.t0), Signal(lambda.dt, lambda.samples(), nt, lambda.t0)};
  for (Eigen::Index i = 0; i < nt; ++i) {
    for (std::size_t m = 0; m < array.size(); ++m) {
      const double r = (targets[static_cast<size_t>(i)] - array.positions[m]).norm();
      if (r <= 1e-12) throw assumption_error("TargetAtTransducer", "target " + std::to_string(i) + " coincides with a transducer");
      const double delay = r / c0 - array.clock_advance;
      if (delay < -1e-12 * std::max(1.0, r / c0))
        throw assumption_error("ClockAdvance", "clock advance exceeds the travel time to target " + std::to_string(i));
      const double scale = array.rho_c / (4 * pi * r);
      const auto m_idx = static_cast<Eigen::Index>(m);
      accumulate_delayed(lambda, m_idx, std::max(delay, 0.0), scale, out.u.data.col(i));
      accumulate_delayed(lambda_tt, m_idx, std::max(delay, 0.0), scale, out.u_tt.data.col(i));
    }
  }
  return out;
}

double default_step(const DelayedSystem& sys) {
  const double wmax = std::sqrt(1.0 / sys.inv_omega_sq.minCoeff());
  return std::min(sys.min_delay() / 8.0, 2 * pi / (64.0 * wmax));
}

Signal integrate_delayed(const DelayedSystem& sys, const Signal& forcing, double T, double dt) {
  const Eigen::Index M = sys.inv_omega_sq.size();
  if (forcing.channels() != M) throw assumption_error("GridMismatch", "integrate_delayed: forcing channels != bubbles");
  if (!(dt > 0.0) || !(T >= 0.0)) throw assumption_error("InvalidStep", "dt must be positive and T non-negative");
  const double tmin = sys.min_delay();
  if (dt > tmin / 4.0 * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "dt = " << dt << " exceeds min delay / 4 = " << tmin / 4.0;
    throw numerical_error("StepTooLarge", os.str());
  }
  const auto n = static_cast<Eigen::Index>(std::llround(T / dt)) + 1;
  Signal Y(dt, n, M, 0.0);
  if (M == 0) return Y;

  // Forcing on the step grid and at interval midpoints.
  Eigen::MatrixXd F0(n, M), Fh(n, M);
  const bool aligned = std::abs(forcing.dt - dt) <= 1e-12 * dt && forcing.t0 == 0.0 && forcing.samples() >= n;
  for (Eigen::Index c = 0; c < M; ++c) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const double t = k * dt;
      F0(k, c) = aligned ? forcing.data(k, c) : sample_at(forcing, c, t, Extension::clamped);
      Fh(k, c) = sample_at(forcing, c, t + 0.5 * dt, Extension::clamped);
    }
  }

  // Constant-delay stencils for stage offsets theta = 0.5 and 1.
  struct Pair {
    Eigen::Index j;
    double q;
    CubicStencil half, full;
  };
  std::vector<std::vector<Pair>> pairs(static_cast<size_t>(M));
  for (Eigen::Index i = 0; i < M; ++i)
    for (Eigen::Index j = 0; j < M; ++j)
      if (i != j && sys.q(i, j) != 0.0) {
        const double D = sys.tau(i, j) / dt;
        pairs[static_cast<size_t>(i)].push_back({j, sys.q(i, j), cubic_stencil(0.5 - D), cubic_stencil(1.0 - D)});
      }

  // Summing by decreasing coupling makes mirror-image bubbles accumulate
  // identical terms in identical order.
  for (auto& list : pairs)
    std::stable_sort(list.begin(), list.end(), [](const Pair& a, const Pair& b) { return a.q > b.q; });

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, M);  // acceleration history
  auto read = [&](Eigen::Index j, Eigen::Index step, const CubicStencil& st) {
    double acc = 0.0;
    for (int m = 0; m < 4; ++m) {
      const long idx = static_cast<long>(step) + st.first + m;
      if (idx >= 0 && st.w[m] != 0.0) acc += st.w[m] * A(idx, j);
    }
    return acc;
  };

  Eigen::VectorXd w2 = sys.inv_omega_sq.cwiseInverse();
  Eigen::VectorXd y = Eigen::VectorXd::Zero(M), v = Eigen::VectorXd::Zero(M);
  Eigen::VectorXd Sh(M), S1(M);
  for (Eigen::Index c = 0; c < M; ++c) A(0, c) = w2(c) * F0(0, c);

  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    for (Eigen::Index i = 0; i < M; ++i) {
      double sh = 0.0, s1 = 0.0;
      for (const auto& pr : pairs[static_cast<size_t>(i)]) {
        sh += pr.q * read(pr.j, k, pr.half);
        s1 += pr.q * read(pr.j, k, pr.full);
      }
      Sh(i) = sh;
      S1(i) = s1;
    }
    const Eigen::VectorXd a1 = A.row(k).transpose();
    const Eigen::VectorXd y2 = y + 0.5 * dt * v, v2 = v + 0.5 * dt * a1;
    const Eigen::VectorXd a2 = w2.cwiseProduct(Fh.row(k).transpose() - y2 - Sh);
    const Eigen::VectorXd y3 = y + 0.5 * dt * v2, v3 = v + 0.5 * dt * a2;
    const Eigen::VectorXd a3 = w2.cwiseProduct(Fh.row(k).transpose() - y3 - Sh);
    const Eigen::VectorXd y4 = y + dt * v3, v4 = v + dt * a3;
    const Eigen::VectorXd a4 = w2.cwiseProduct(F0.row(k + 1).transpose() - y4 - S1);
    y += dt / 6.0 * (v + 2 * v2 + 2 * v3 + v4);
    v += dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4);
    if (!y.allFinite()) throw numerical_error("NonFinite", "integrate_delayed produced NaN/Inf at step " + std::to_string(k));
    Y.data.row(k + 1) = y.transpose();
    A.row(k + 1) = w2.cwiseProduct(F0.row(k + 1).transpose() - y - S1).transpose();
  }
  return Y;
}

Signal source_amplitudes(const BubbleEnsemble& e, const Signal& Y) {
  if (Y.channels() != static_cast<Eigen::Index>(e.size())) throw assumption_error("GridMismatch", "source_amplitudes: shape");
  Signal q = Y;
  for (Eigen::Index i = 0; i < Y.channels(); ++i) q.data.col(i) *= -e.eps * e.capacitance[static_cast<size_t>(i)];
  return q;
}

Signal cluster_outputs(const BubbleEnsemble& e, const Signal& q) {
  if (q.channels() != static_cast<Eigen::Index>(e.size())) throw assumption_error("GridMismatch", "cluster_outputs: shape");
  Signal Q(q.dt, q.samples(), static_cast<Eigen::Index>(e.clusters()), q.t0);
  for (std::size_t i = 0; i < e.size(); ++i) Q.data.col(e.cluster_of[i]) += q.data.col(static_cast<Eigen::Index>(i));
  return Q;
}

Signal effective_field_at(const Eigen::Vector3d& x, const Signal& Q, const std::vector<Eigen::Vector3d>& centers,
                          double c0) {
  if (Q.channels() != static_cast<Eigen::Index>(centers.size()))
    throw assumption_error("GridMismatch", "effective_field_at: one channel per center expected");
  Signal p(Q.dt, Q.samples(), 1, Q.t0);
  for (std::size_t a = 0; a < centers.size(); ++a) {
    const double r = (x - centers[a]).norm();
    if (r <= 0.0) throw assumption_error("SingularEvaluation", "evaluation at source center " + std::to_string(a));
    accumulate_delayed(Q, static_cast<Eigen::Index>(a), r / c0, 1.0 / (4 * pi * r), p.data.col(0));
  }
  return p;
}

double cluster_reduction_error(const BubbleEnsemble& e, const Signal& q, const Signal& Q,
                               const std::vector<Eigen::Vector3d>& probes, double c0) {
  double rmax = 0.0;
  for (std::size_t a = 0; a < e.clusters(); ++a) rmax = std::max(rmax, e.cluster_radius(a));
  double sup = 0.0;
  for (std::size_t k = 0; k < probes.size(); ++k) {
    for (std::size_t i = 0; i < e.size(); ++i)
      if ((probes[k] - e.positions[i]).norm() < 10.0 * rmax)
        throw assumption_error("ProbeTooClose", "probe " + std::to_string(k) + " within 10 cluster radii of a bubble");
    Signal micro = effective_field_at(probes[k], q, e.positions, c0);
    Signal macro = effective_field_at(probes[k], Q, e.cluster_centers, c0);
    sup = std::max(sup, (micro.data - macro.data).cwiseAbs().maxCoeff());
  }
  return sup;
}

}  // namespace bubbletrack
