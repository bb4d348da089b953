#ifndef BUBBLETRACK_REALIZATION_HPP
#define BUBBLETRACK_REALIZATION_HPP

#include <vector>

#include "bubbletrack/ideal_control.hpp"
#include "bubbletrack/signal.hpp"
#include "bubbletrack/spectral.hpp"
#include "bubbletrack/transfer.hpp"

namespace bubbletrack {

// Flat top on each interval, raised-cosine taper of half-width w outside it.
struct BandFilter {
  std::vector<Interval> intervals;
  double w = 0.0;

  BandFilter() = default;
  BandFilter(std::vector<Interval> iv, double taper);  // validates
  double chi(double omega) const;                      // even in omega
  double support_hi() const;
};

struct BandLimitedSource {
  Signal q;
  std::vector<BandFilter> filters;  // one per channel
  std::vector<double> discarded;    // energy fraction removed per channel
};

struct RealizedControl {
  Signal lambda, lambda_d, lambda_dd;
  double onset_ramp = 0.0;
  double imag_residue = 0.0;     // imaginary part before discarding, relative
  double identity_defect = 0.0;  // max over used bins of |H H^+ - I|_max
  double sigma_min = 0.0;        // band minimum of sigma_min(H_ext)
  double sigma_max = 0.0;
  double min_cluster_gain = 0.0;  // smallest active-channel gain seen
  int bins_used = 0;
};

struct SynthesisOptions {
  int pad_factor = 4;
  double onset_ramp = 0.0;    // window length on lambda; 0 disables
  double sigma_floor = 0.0;   // IllConditionedBand below this sigma_min
  double rel_cutoff = 1e-10;  // per-bin pseudoinverse cutoff
  // Lower bound on |row_a(H_ext)| / |row_a(G~_tr)| on bins where channel a
  // is active; 0 disables. Flags bands that sit off every resonance.
  double min_cluster_gain = 0.0;
};

// Angular frequency of FFT bin k on a length-n grid with step dt (signed).
double bin_omega(std::size_t k, std::size_t n, double dt);
std::size_t padded_length(Eigen::Index samples, int pad_factor);

Signal bandpass(const Signal& s, const BandFilter& filter, int pad_factor = 4);

ReferenceTrajectory reference_trajectory_gen(const ModeSet& modes, const std::vector<double>& amplitudes, double ramp,
                                             double T, double dt, double onset = 0.0);

BandLimitedSource project_to_band_space(const Signal& q, const std::vector<BandFilter>& filters, int pad_factor = 4);

// Least-norm solution of H y = rhs on one frequency bin via the SVD.
struct BinSolution {
  Eigen::VectorXcd y;
  double sigma_min = 0.0, sigma_max = 0.0;
  double identity_defect = 0.0;  // |H H^+ - I|_max
};
BinSolution solve_bin(const Eigen::MatrixXcd& H, const Eigen::VectorXcd& rhs);

RealizedControl synthesize_controls(const BandLimitedSource& target, const SMatrixEvaluator& ev,
                                    const SynthesisOptions& opt = {});

double realization_error(const Signal& Q, const BandLimitedSource& target);
double realization_error(const Signal& Q, const Signal& target);
double control_cost(const RealizedControl& lambda);

}  // namespace bubbletrack

#endif
