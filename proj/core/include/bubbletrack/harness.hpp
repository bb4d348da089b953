#ifndef BUBBLETRACK_HARNESS_HPP
#define BUBBLETRACK_HARNESS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bubbletrack/bubbles.hpp"
#include "bubbletrack/ideal_control.hpp"
#include "bubbletrack/realization.hpp"
#include "bubbletrack/spectral.hpp"
#include "bubbletrack/transfer.hpp"

namespace bubbletrack {

constexpr int kConfigSchemaVersion = 1;
constexpr int kReportSchemaVersion = 1;

struct ClusterSpec {
  int bubbles = 2;
  std::string geometry = "equidistant";  // or "chain"
  int target = 0;                        // index into the distinct target frequencies
  std::optional<double> omega_m;         // fixed Minnaert frequency; tuned to the target when absent
  std::optional<double> capacitance;     // overrides the shared capacitance
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  BoxDomain domain;
  std::vector<ModeIndex> modes;                // explicit selection, or
  std::optional<SpectralBand> band;            // band selection
  int index_cap = 16;
  std::vector<ClusterSpec> clusters;
  double spacing = 0.1;                        // intra-cluster spacing in units of eps^p
  double exponent_p = 0.5;
  double capacitance = 1e-3;
  std::optional<Region> center_region;
  bool random_orientation = true;              // false keeps the template axes
  int transducer_count = 4;
  double transducer_radius = 3.0;
  std::vector<Eigen::Vector3d> transducer_directions;
  double rho_c = 1.0;
  std::optional<double> clock_advance;         // "auto" when absent
  std::vector<double> amplitudes;
  double ramp = 1.0;
  double onset = 0.0;
  double horizon = 1.0;
  std::vector<double> epsilons;
  std::optional<double> dt;                    // auto when absent
  double delta_fraction = 0.4;
  double taper_fraction = 0.25;
  int pad_factor = 4;
  std::optional<double> g0;
  double sigma_tol = 1e-8;
  double min_cluster_gain = 0.0;
  int rank_probe_samples = 1000;
  int gain_grid = 64;
  double refine_factor = 0.5;
  std::vector<Eigen::Vector3d> probes;         // cluster-reduction probes (optional)
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);

struct ValidationReport {
  double localization_margin = 0.0;
  double accessibility = 0.0;
  double coupling_sigma_min = 0.0;
  double rank_fraction = 0.0;
  GeometryReport geometry;  // at the largest epsilon
  std::vector<std::string> warnings;
};

// Everything that does not depend on epsilon.
struct ExperimentSetup {
  ExperimentConfig cfg;
  ModeSet modes;
  std::vector<double> target_omegas;           // distinct target frequencies
  std::vector<Eigen::Vector3d> cluster_centers;
  std::vector<std::vector<Eigen::Vector3d>> offsets;  // unit-spacing template per cluster, rotated
  TransducerArray array;
  CouplingMatrix C;
  RightInverse L;
  ValidationReport validation;
};

ExperimentSetup validate_config(const ExperimentConfig& cfg);

// Ensemble at eps with untuned frequencies (targets or fixed values).
BubbleEnsemble build_ensemble(const ExperimentSetup& setup, double eps);

struct ClusterRecord {
  int alpha = 0;
  double target_omega = 0.0;
  double tuned_omega_m = 0.0;
  PoleRecord pole;
  AsymptoticPole predicted;
  double gap_measured = 0.0;
  double growth_pred = 0.0;  // leading-order growth rate of the least damped non-principal mode
  double band_lo = 0.0, band_hi = 0.0, taper = 0.0;
};

struct EpsilonRecord {
  double eps = 0.0;
  double dt = 0.0;
  long samples = 0;
  std::vector<ClusterRecord> clusters;
  std::vector<GainSample> gain;
  double peak_norm_hb = 0.0;
  double min_smin_hext = 0.0;
  double max_smax_hext = 0.0;
  double sigma_min = 0.0, sigma_max = 0.0, identity_defect = 0.0, imag_residue = 0.0;
  int bins_used = 0;
  std::vector<double> discarded;
  double tracking_error = 0.0;          // relative, bubble-resolved modal forcing
  double tracking_error_cluster = 0.0;  // relative, cluster-level forcing
  double ideal_error = 0.0;             // relative, q_ideal injected directly
  double realization_error = 0.0;
  double control_cost = 0.0;
  double cluster_reduction = 0.0;       // sup over probes, NaN when no probes
  double nonuniform_fraction = 0.0;     // sup |Y_i - cluster mean| / sup |Y|
  // Time series kept for artifact emission.
  Signal target, Q, lambda;
};

struct RunOptions {
  double dt_scale = 1.0;
  std::optional<double> g0;
  bool keep_signals = true;
};

// Ensemble at eps with every unfixed cluster tuned onto its target.
BubbleEnsemble tuned_ensemble(const ExperimentSetup& setup, double eps);
// Principal pole, measured gap and residue per cluster.
std::vector<ClusterRecord> cluster_poles(const ExperimentSetup& setup, const SMatrixEvaluator& ev);
// Smallest gap / eps^(1-p) over the clusters.
double measured_g0(const std::vector<ClusterRecord>& clusters, double eps, double p);
// Fills band_lo, band_hi and taper on each record and returns the filters.
std::vector<BandFilter> assign_bands(const ExperimentConfig& cfg, std::vector<ClusterRecord>& clusters, double eps,
                                     double g0);
SpectralBand union_band(const std::vector<ClusterRecord>& clusters);

EpsilonRecord run_tracking_experiment(const ExperimentSetup& setup, double eps, const RunOptions& opt = {});

struct Check {
  std::string name;
  bool passed = false;
  double value = 0.0;
  std::string requirement;
};

struct Report {
  std::uint64_t seed = 0;
  std::optional<ValidationReport> validation;
  std::vector<EpsilonRecord> records;
  std::optional<EpsilonRecord> refinement;
  double g0 = 0.0;
  double gamma = 0.0, beta = 0.0, damping_slope = 0.0, shift_slope = 0.0, shift_coefficient = 0.0;
  double cost_ratio = 0.0;
  double refinement_change = 0.0;
  std::vector<Check> checks;

  bool all_passed() const;
};

Report epsilon_sweep(const ExperimentSetup& setup);

// Writes report.json, summary.csv, anchors.txt and per-epsilon CSVs.
void emit_report(const Report& report, const std::string& out_dir);
std::string report_to_json(const Report& report);

// CSV writers for tables.
void write_pole_csv(const std::vector<ClusterRecord>& clusters, const std::string& path);
void write_gain_csv(const std::vector<GainSample>& gain, const std::string& path);

}  // namespace bubbletrack

#endif
