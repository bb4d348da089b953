#include "bubbletrack/ideal_control.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "bubbletrack/errors.hpp"
#include "bubbletrack/numerics.hpp"

namespace bubbletrack {

CouplingMatrix coupling_matrix(const ModeSet& modes, const std::vector<Eigen::Vector3d>& centers) {
  CouplingMatrix C;
  C.modes = modes;
  C.centers = centers;
  C.entries.resize(static_cast<Eigen::Index>(modes.size()), static_cast<Eigen::Index>(centers.size()));
  for (size_t a = 0; a < centers.size(); ++a) {
    if (!modes.domain.contains_open(centers[a])) {
      std::ostringstream os;
      os << "center " << a << " not strictly inside the box";
      throw assumption_error("OutsideDomain", os.str());
    }
    for (size_t k = 0; k < modes.size(); ++k)
      C.entries(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(a)) =
          eval_mode(modes.domain, modes.modes[k].index, centers[a]);
  }
  return C;
}

double mode_sup(const BoxDomain& d) { return std::sqrt(8.0 / d.lengths.prod()); }

RightInverse right_inverse(const Eigen::MatrixXd& C, double sigma_tol, double scale) {
  if (C.cols() < C.rows()) throw assumption_error("RankDeficient", "fewer centers than modes");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  RightInverse L;
  L.sigma_max = s.size() ? s(0) : 0.0;
  L.sigma_min = s.size() ? s(s.size() - 1) : 0.0;
  const double ref = std::max(L.sigma_max, scale);
  if (!(L.sigma_max > 0.0) || L.sigma_min < sigma_tol * ref) {
    std::ostringstream os;
    os << "sigma_min " << L.sigma_min << " below " << sigma_tol << " * " << ref;
    throw assumption_error("RankDeficient", os.str());
  }
  L.entries = svd.matrixV() * s.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
  return L;
}

RightInverse right_inverse(const CouplingMatrix& C, double sigma_tol) {
  return right_inverse(C.entries, sigma_tol, mode_sup(C.modes.domain));
}

double rank_probe(const ModeSet& modes, int n_centers, int n_samples, std::uint64_t seed, double sigma_tol,
                  std::optional<Region> region) {
  if (n_samples <= 0) return 0.0;
  Region r = region.value_or(Region{Eigen::Vector3d::Zero(), modes.domain.lengths});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int good = 0;
  std::vector<Eigen::Vector3d> centers(static_cast<size_t>(n_centers));
  for (int s = 0; s < n_samples; ++s) {
    for (auto& c : centers) {
      for (int i = 0; i < 3; ++i) {
        // Open interval: redraw exact endpoints.
        double v;
        do {
          v = r.lo[i] + (r.hi[i] - r.lo[i]) * u(rng);
        } while (r.hi[i] > r.lo[i] && (v <= 0.0 || v >= modes.domain.lengths[i]));
        c[i] = v;
      }
    }
    Eigen::MatrixXd C(static_cast<Eigen::Index>(modes.size()), n_centers);
    for (size_t k = 0; k < modes.size(); ++k)
      for (int a = 0; a < n_centers; ++a)
        C(static_cast<Eigen::Index>(k), a) = eval_mode(modes.domain, modes.modes[k].index, centers[a]);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(C);
    const auto& sv = svd.singularValues();
    const double ref = std::max(sv(0), mode_sup(modes.domain));
    if (sv.size() == static_cast<Eigen::Index>(modes.size()) && sv(0) > 0.0 && sv(sv.size() - 1) >= sigma_tol * ref)
      ++good;
  }
  return static_cast<double>(good) / n_samples;
}

Signal ideal_source(const ReferenceTrajectory& traj, const RightInverse& L, const ModeSet& modes, double c0) {
  require_same_grid(traj.p, traj.pdd, "ideal_source");
  if (traj.p.channels() != static_cast<Eigen::Index>(modes.size()) || L.entries.cols() != traj.p.channels())
    throw assumption_error("GridMismatch", "ideal_source: mode count mismatch");
  Eigen::VectorXd w2(static_cast<Eigen::Index>(modes.size()));
  for (size_t k = 0; k < modes.size(); ++k) w2(static_cast<Eigen::Index>(k)) = modes.modes[k].omega * modes.modes[k].omega;
  Signal q(traj.p.dt, traj.p.samples(), L.entries.rows(), traj.p.t0);
  Eigen::MatrixXd modal = traj.pdd.data + traj.p.data * w2.asDiagonal();
  q.data = modal * L.entries.transpose() / (c0 * c0);
  return q;
}

ModalTrajectory integrate_modal_forced(const ModeSet& modes, const Signal& F) {
  const Eigen::Index nm = static_cast<Eigen::Index>(modes.size());
  if (F.channels() != nm) throw assumption_error("GridMismatch", "integrate_modal: forcing channels != modes");
  const double dt = F.dt;
  ModalTrajectory out;
  out.omega_sq.resize(nm);
  for (Eigen::Index k = 0; k < nm; ++k) out.omega_sq(k) = modes.modes[k].omega * modes.modes[k].omega;
  const double wmax = std::sqrt(out.omega_sq.size() ? out.omega_sq.maxCoeff() : 0.0);
  if (dt * wmax > 0.5) {
    std::ostringstream os;
    os << "dt*omega_max = " << dt * wmax << " exceeds 0.5";
    throw numerical_error("StepTooLarge", os.str());
  }
  const Eigen::Index n = F.samples();
  out.p = Signal(dt, n, nm, F.t0);
  out.pd = Signal(dt, n, nm, F.t0);
  if (n < 2) return out;

  // Forcing at interval midpoints from a four-point cubic stencil.
  auto mid = [&](Eigen::Index k, Eigen::Index m) {
    const auto& f = F.data;
    if (n < 4) return 0.5 * (f(k, m) + f(k + 1, m));
    if (k == 0) return (5 * f(0, m) + 15 * f(1, m) - 5 * f(2, m) + f(3, m)) / 16.0;
    if (k == n - 2) return (f(n - 4, m) - 5 * f(n - 3, m) + 15 * f(n - 2, m) + 5 * f(n - 1, m)) / 16.0;
    return (-f(k - 1, m) + 9 * f(k, m) + 9 * f(k + 1, m) - f(k + 2, m)) / 16.0;
  };

  for (Eigen::Index m = 0; m < nm; ++m) {
    const double w2 = out.omega_sq(m);
    double x = 0.0, v = 0.0;
    for (Eigen::Index k = 0; k + 1 < n; ++k) {
      const double f0 = F.data(k, m), fh = mid(k, m), f1 = F.data(k + 1, m);
      const double k1x = v, k1v = f0 - w2 * x;
      const double k2x = v + 0.5 * dt * k1v, k2v = fh - w2 * (x + 0.5 * dt * k1x);
      const double k3x = v + 0.5 * dt * k2v, k3v = fh - w2 * (x + 0.5 * dt * k2x);
      const double k4x = v + dt * k3v, k4v = f1 - w2 * (x + dt * k3x);
      x += dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x);
      v += dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
      out.p.data(k + 1, m) = x;
      out.pd.data(k + 1, m) = v;
    }
  }
  if (!out.p.data.allFinite()) throw numerical_error("NonFinite", "integrate_modal produced NaN/Inf");
  return out;
}

ModalTrajectory integrate_modal(const ModeSet& modes, const Eigen::MatrixXd& C, const Signal& q, double c0) {
  if (C.rows() != static_cast<Eigen::Index>(modes.size()) || C.cols() != q.channels())
    throw assumption_error("GridMismatch", "integrate_modal: coupling shape mismatch");
  Signal F(q.dt, q.samples(), C.rows(), q.t0);
  F.data = (c0 * c0) * q.data * C.transpose();
  return integrate_modal_forced(modes, F);
}

ModalTrajectory integrate_modal(const ModeSet& modes, const CouplingMatrix& C, const Signal& q, double c0) {
  return integrate_modal(modes, C.entries, q, c0);
}

namespace {
double energy_distance_sup(const Eigen::MatrixXd& dp, const Eigen::MatrixXd& dv, const Eigen::VectorXd& w2) {
  const Eigen::VectorXd w = w2.cwiseSqrt();
  double sup = 0.0;
  for (Eigen::Index k = 0; k < dp.rows(); ++k) {
    double a = (dp.row(k).transpose().cwiseProduct(w)).norm();
    double b = dv.row(k).norm();
    sup = std::max(sup, a + b);
  }
  return sup;
}
}  // namespace

double tracking_error(const ModalTrajectory& sim, const ReferenceTrajectory& ref) {
  require_same_grid(sim.p, ref.p, "tracking_error");
  return energy_distance_sup(sim.p.data - ref.p.data, sim.pd.data - ref.pd.data, sim.omega_sq);
}

double tracking_error(const ModalTrajectory& sim, const ModalTrajectory& ref) {
  require_same_grid(sim.p, ref.p, "tracking_error");
  return energy_distance_sup(sim.p.data - ref.p.data, sim.pd.data - ref.pd.data, sim.omega_sq);
}

double energy_norm_sup(const ReferenceTrajectory& ref, const Eigen::VectorXd& omega_sq) {
  return energy_distance_sup(ref.p.data, ref.pd.data, omega_sq);
}

double energy_norm_sup(const ModalTrajectory& traj) {
  return energy_distance_sup(traj.p.data, traj.pd.data, traj.omega_sq);
}

double energy_bound_check(const ModalTrajectory& sim, const Signal& q, const Eigen::MatrixXd& C, double c0, double T) {
  const double qn = l2_norm(q);
  double sup = 0.0;
  for (Eigen::Index k = 0; k < sim.p.samples(); ++k) {
    double e2 = sim.pd.data.row(k).squaredNorm() +
                (sim.p.data.row(k).transpose().array().square() * sim.omega_sq.array()).sum();
    sup = std::max(sup, std::sqrt(e2));
  }
  if (sup == 0.0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(C);
  const double denom = c0 * c0 * svd.singularValues()(0) * std::sqrt(T) * qn;
  return sup / denom;
}

}  // namespace bubbletrack
