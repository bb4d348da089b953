#ifndef BUBBLETRACK_BUBBLES_HPP
#define BUBBLETRACK_BUBBLES_HPP

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "bubbletrack/signal.hpp"
#include "bubbletrack/spectral.hpp"

namespace bubbletrack {

struct BubbleEnsemble {
  std::vector<Eigen::Vector3d> positions;        // z_i
  std::vector<int> cluster_of;                   // cluster label of bubble i
  std::vector<Eigen::Vector3d> cluster_centers;  // y_alpha
  std::vector<double> omega_m;                   // Minnaert frequency per bubble
  std::vector<double> capacitance;               // C~_i
  double eps = 0.01;
  double p = 0.5;

  std::size_t size() const { return positions.size(); }
  std::size_t clusters() const { return cluster_centers.size(); }
  std::vector<std::size_t> members(std::size_t alpha) const;
  double cluster_omega(std::size_t alpha) const;
  double cluster_capacitance(std::size_t alpha) const;  // mean C~ over members
  double cluster_radius(std::size_t alpha) const;       // max |z_i - y_alpha|
  // Copy with every member of cluster alpha retuned to omega.
  BubbleEnsemble with_cluster_omega(std::size_t alpha, double omega) const;
  void check_shape() const;
};

// Optional prescribed bounds; unset bounds are not enforced.
struct GeometryBounds {
  std::optional<double> c1, c2;       // intra distance / eps^p
  std::optional<double> d_min, d_max;  // inter-cluster distances
};

struct GeometryReport {
  double c1 = 0.0, c2 = 0.0;        // measured intra-cluster min/max of d / eps^p
  double d_min = 0.0, d_max = 0.0;  // measured inter-cluster min/max distance
  bool has_intra = false, has_inter = false;
};

GeometryReport validate_geometry(const BubbleEnsemble& e, const GeometryBounds& bounds = {});

struct DelayedSystem {
  Eigen::VectorXd inv_omega_sq;
  Eigen::MatrixXd q;    // zero diagonal
  Eigen::MatrixXd tau;  // symmetric, zero diagonal

  double min_delay() const;  // over nonzero delays; +inf when none
};

DelayedSystem build_system(const BubbleEnsemble& e, double c0);

struct TransducerArray {
  std::vector<Eigen::Vector3d> positions;
  double rho_c = 1.0;
  // Common emission lead (s). Transducer signals are time-stamped on a clock
  // advanced by this amount, so traces arrive after r/c0 - clock_advance.
  double clock_advance = 0.0;

  std::size_t size() const { return positions.size(); }
};

// Positions strictly outside the closed box and at least n_clusters of them.
void validate_transducers(const TransducerArray& a, const BoxDomain& domain, std::size_t n_clusters);

struct IncidentTraces {
  Signal u;     // one channel per target
  Signal u_tt;  // second time derivative
};

IncidentTraces incident_traces(const TransducerArray& array, const Signal& lambda, const Signal& lambda_tt,
                               const std::vector<Eigen::Vector3d>& targets, double c0);

// Default step: min(min tau / 8, 2 pi / (64 omega_max)).
double default_step(const DelayedSystem& sys);

// Explicit RK4 on (Y, dY) with delayed accelerations read from the stored
// history. Output sampled on [0, T] with step dt.
Signal integrate_delayed(const DelayedSystem& sys, const Signal& forcing, double T, double dt);

Signal source_amplitudes(const BubbleEnsemble& e, const Signal& Y);
Signal cluster_outputs(const BubbleEnsemble& e, const Signal& q);

// Retarded monopole superposition sum_a Q_a(t - |x - y_a|/c0) / (4 pi |x - y_a|).
Signal effective_field_at(const Eigen::Vector3d& x, const Signal& Q, const std::vector<Eigen::Vector3d>& centers,
                          double c0);

double cluster_reduction_error(const BubbleEnsemble& e, const Signal& q, const Signal& Q,
                               const std::vector<Eigen::Vector3d>& probes, double c0);

}  // namespace bubbletrack

#endif
