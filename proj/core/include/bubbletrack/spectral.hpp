#ifndef BUBBLETRACK_SPECTRAL_HPP
#define BUBBLETRACK_SPECTRAL_HPP

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

namespace bubbletrack {

struct BoxDomain {
  Eigen::Vector3d lengths{1.0, 1.0, 1.0};
  double c0 = 1.0;

  BoxDomain() = default;
  BoxDomain(const Eigen::Vector3d& L, double c);
  bool contains_open(const Eigen::Vector3d& x) const;
  bool contains_closed(const Eigen::Vector3d& x) const;
};

using ModeIndex = std::array<int, 3>;

struct EigenMode {
  ModeIndex index{1, 1, 1};
  double lambda = 0.0;
  double omega = 0.0;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Sorted, pairwise disjoint closed intervals in rad/s.
struct SpectralBand {
  std::vector<Interval> intervals;

  SpectralBand() = default;
  explicit SpectralBand(std::vector<Interval> iv);  // validates
  bool contains(double omega) const;
};

struct ModeSet {
  BoxDomain domain;
  std::vector<EigenMode> modes;  // ascending omega, then index

  std::size_t size() const { return modes.size(); }
  double omega_max() const;
};

// Axis-aligned region [lo, hi].
struct Region {
  Eigen::Vector3d lo = Eigen::Vector3d::Zero();
  Eigen::Vector3d hi = Eigen::Vector3d::Zero();
};

struct Localization {
  bool ok = false;
  double margin = 0.0;  // dist(region, boundary) - c0*T
};

EigenMode eigenmode(const BoxDomain& domain, const ModeIndex& index);
double eval_mode(const BoxDomain& domain, const ModeIndex& index, const Eigen::Vector3d& x);

// Modes of candidate indices lying in the band, in canonical order.
ModeSet select_modes(const BoxDomain& domain, const SpectralBand& band, const std::vector<ModeIndex>& candidates);
ModeSet modes_in_band(const BoxDomain& domain, const SpectralBand& band, int index_cap = 16);
// Explicit selection; duplicates are rejected.
ModeSet mode_set(const BoxDomain& domain, const std::vector<ModeIndex>& indices);

// Groups of modes sharing one eigenfrequency (relative tolerance rel_tol).
std::vector<std::vector<std::size_t>> frequency_groups(const ModeSet& modes, double rel_tol = 1e-9);

Localization check_localization(const BoxDomain& domain, const Region& region, double T);

}  // namespace bubbletrack

#endif
