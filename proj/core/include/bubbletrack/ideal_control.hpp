#ifndef BUBBLETRACK_IDEAL_CONTROL_HPP
#define BUBBLETRACK_IDEAL_CONTROL_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "bubbletrack/signal.hpp"
#include "bubbletrack/spectral.hpp"

namespace bubbletrack {

struct CouplingMatrix {
  Eigen::MatrixXd entries;  // modes x centers
  ModeSet modes;
  std::vector<Eigen::Vector3d> centers;
};

struct RightInverse {
  Eigen::MatrixXd entries;  // centers x modes
  double sigma_min = 0.0;
  double sigma_max = 0.0;
};

// Per-mode coefficient functions; one channel per mode.
struct ReferenceTrajectory {
  Signal p, pd, pdd, pddd;
};

struct ModalTrajectory {
  Signal p, pd;
  Eigen::VectorXd omega_sq;  // diagonal of the modal stiffness
};

CouplingMatrix coupling_matrix(const ModeSet& modes, const std::vector<Eigen::Vector3d>& centers);

// sup |phi_k| over the box, the natural scale of coupling entries.
double mode_sup(const BoxDomain& domain);

// Moore-Penrose right inverse; RankDeficient when
// sigma_min < sigma_tol * max(sigma_max, scale).
RightInverse right_inverse(const Eigen::MatrixXd& C, double sigma_tol = 1e-8, double scale = 0.0);
RightInverse right_inverse(const CouplingMatrix& C, double sigma_tol = 1e-8);

// Fraction of seeded uniform center draws with a full-rank coupling matrix.
// Centers are drawn in `region` (the open box when absent).
double rank_probe(const ModeSet& modes, int n_centers, int n_samples, std::uint64_t seed, double sigma_tol = 1e-8,
                  std::optional<Region> region = std::nullopt);

Signal ideal_source(const ReferenceTrajectory& traj, const RightInverse& L, const ModeSet& modes, double c0);

// Fixed-step RK4 from rest; forcing read between samples by cubic interpolation.
ModalTrajectory integrate_modal(const ModeSet& modes, const Eigen::MatrixXd& C, const Signal& q, double c0);
ModalTrajectory integrate_modal(const ModeSet& modes, const CouplingMatrix& C, const Signal& q, double c0);

// Same integrator with the modal forcing (one channel per mode) given directly.
ModalTrajectory integrate_modal_forced(const ModeSet& modes, const Signal& forcing);

double tracking_error(const ModalTrajectory& sim, const ReferenceTrajectory& ref);
double tracking_error(const ModalTrajectory& sim, const ModalTrajectory& ref);
// sup of the modal energy norm of a trajectory, used to normalize errors.
double energy_norm_sup(const ReferenceTrajectory& ref, const Eigen::VectorXd& omega_sq);
double energy_norm_sup(const ModalTrajectory& traj);

double energy_bound_check(const ModalTrajectory& sim, const Signal& q, const Eigen::MatrixXd& C, double c0, double T);

}  // namespace bubbletrack

#endif
