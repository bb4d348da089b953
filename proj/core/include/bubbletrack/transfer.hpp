#ifndef BUBBLETRACK_TRANSFER_HPP
#define BUBBLETRACK_TRANSFER_HPP

#include <Eigen/Dense>
#include <complex>
#include <optional>
#include <vector>

#include "bubbletrack/bubbles.hpp"
#include "bubbletrack/spectral.hpp"

namespace bubbletrack {

using cplx = std::complex<double>;

// s -> D(s), Q(s), P(s), H_b(s), G_tr(s), H_ext(s) for one ensemble.
class SMatrixEvaluator {
 public:
  SMatrixEvaluator(BubbleEnsemble e, double c0, std::optional<TransducerArray> transducers = std::nullopt);

  Eigen::MatrixXcd D(cplx s) const;
  Eigen::MatrixXcd Q(cplx s) const;
  Eigen::MatrixXcd pencil(cplx s) const;
  Eigen::MatrixXcd pencil_derivative(cplx s) const;
  cplx det(cplx s) const;
  // f'/f for f = det P, via tr(P^{-1} P').
  cplx log_derivative(cplx s) const;

  Eigen::MatrixXcd Hb(cplx s) const;          // M x M
  Eigen::MatrixXcd Gtr(cplx s) const;         // M x M_tr
  Eigen::MatrixXcd Gtr_cluster(cplx s) const; // N x M_tr, traces at cluster centers
  Eigen::MatrixXcd Hext(cplx s) const;        // N x M_tr

  const BubbleEnsemble& ensemble() const { return e_; }
  double c0() const { return c0_; }
  bool has_transducers() const { return tr_.has_value(); }
  const TransducerArray& transducers() const { return *tr_; }

 private:
  Eigen::MatrixXcd trace_matrix(cplx s, const std::vector<Eigen::Vector3d>& pts) const;

  BubbleEnsemble e_;
  double c0_;
  std::optional<TransducerArray> tr_;
  Eigen::MatrixXd dist_;
  Eigen::VectorXd inv_w2_;
};

Eigen::MatrixXcd eval_pencil(const BubbleEnsemble& e, double c0, cplx s);

struct PoleRecord {
  cplx s{0.0, 0.0};
  int cluster = -1;
  double eta = 0.0;    // -Re s
  double omega = 0.0;  // Im s
  double residue_norm = std::numeric_limits<double>::quiet_NaN();
  double newton_residual = 0.0;
  int iterations = 0;
};

PoleRecord find_pole(const SMatrixEvaluator& ev, cplx guess, double tol = 1e-12, int max_iter = 100);

struct PoleCount {
  int count = 0;
  double value = 0.0;              // real part of the quadrature sum
  double rounding_distance = 0.0;  // |value - count| including the imaginary part
  double min_abs_det = 0.0;
};

PoleCount count_poles_in_disk(const SMatrixEvaluator& ev, cplx center, double radius, int n_quad = 256,
                              double rel_threshold = 1e-10);

// Radius of the largest disk around s that holds a single pole, found by
// bisection on the argument-principle count (capped at r_max).
double nearest_pole_distance(const SMatrixEvaluator& ev, cplx s, double r_max, int n_quad = 256);

// Contour radius used by residue_at when none is given: min(gap/4, eta/2).
double default_residue_radius(const SMatrixEvaluator& ev, const PoleRecord& pole);
Eigen::MatrixXcd residue_at(const SMatrixEvaluator& ev, const PoleRecord& pole, double radius = 0.0, int n_quad = 256);

struct InteractionMatrix {
  Eigen::MatrixXd M;
  double mu1 = 0.0;
  double mu2 = 0.0;
  double gap = 0.0;  // mu1 - mu2 (infinite for a single bubble)
  Eigen::VectorXd v, w;
};

InteractionMatrix interaction_matrix(const BubbleEnsemble& e, std::size_t alpha);
// Perron data of an arbitrary nonnegative matrix, same algorithm.
InteractionMatrix perron_analysis(const Eigen::MatrixXd& M);

std::pair<double, double> toeplitz_bounds(int m);

struct AsymptoticPole {
  double omega_pred = 0.0;
  double eta_pred = 0.0;
  double gap_pred = 0.0;     // infinite for a single bubble
  double shift_coeff = 0.0;  // omega^3 C mu1 / (8 pi)
};

AsymptoticPole asymptotic_pole(const BubbleEnsemble& e, std::size_t alpha, double c0);

// Principal pole of cluster alpha, seeded from the asymptotic prediction.
PoleRecord principal_pole(const SMatrixEvaluator& ev, std::size_t alpha);

struct GainSample {
  double omega = 0.0;
  double norm_hb = 0.0;
  double smin_hext = std::numeric_limits<double>::quiet_NaN();
  double smax_hext = std::numeric_limits<double>::quiet_NaN();
};

std::vector<GainSample> gain_sweep(const SMatrixEvaluator& ev, const SpectralBand& band, int n_grid);

// Unperturbed frequency of cluster alpha placing its principal pole at target.
double tune_cluster(const BubbleEnsemble& e, std::size_t alpha, double target, double c0, double rel_tol = 1e-9,
                    int max_iter = 50);

// Band minimum of sigma_min of the cluster-level trace matrix.
double transducer_accessibility(const TransducerArray& array, const std::vector<Eigen::Vector3d>& centers,
                                const SpectralBand& band, int n_grid, double c0);

// max_{i,m} |G_tr(z_i, x_m) - G_tr(y_alpha(i), x_m)| at s = i omega.
double trace_perturbation(const SMatrixEvaluator& ev, double omega);

}  // namespace bubbletrack

#endif
