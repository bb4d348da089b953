#include "bubbletrack/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "bubbletrack/errors.hpp"

namespace bubbletrack {

using std::numbers::pi;

BoxDomain::BoxDomain(const Eigen::Vector3d& L, double c) : lengths(L), c0(c) {
  if (!(L.minCoeff() > 0.0) || !(c > 0.0)) throw assumption_error("InvalidDomain", "box lengths and c0 must be positive");
}

bool BoxDomain::contains_open(const Eigen::Vector3d& x) const {
  for (int i = 0; i < 3; ++i)
    if (!(x[i] > 0.0 && x[i] < lengths[i])) return false;
  return true;
}

bool BoxDomain::contains_closed(const Eigen::Vector3d& x) const {
  for (int i = 0; i < 3; ++i)
    if (!(x[i] >= 0.0 && x[i] <= lengths[i])) return false;
  return true;
}

SpectralBand::SpectralBand(std::vector<Interval> iv) : intervals(std::move(iv)) {
  for (size_t i = 0; i < intervals.size(); ++i) {
    if (!(intervals[i].lo < intervals[i].hi)) throw assumption_error("InvalidBand", "interval with lo >= hi");
    if (i > 0 && !(intervals[i - 1].hi < intervals[i].lo))
      throw assumption_error("InvalidBand", "intervals must be sorted and disjoint");
  }
}

bool SpectralBand::contains(double omega) const {
  for (const auto& iv : intervals)
    if (omega >= iv.lo && omega <= iv.hi) return true;
  return false;
}

double ModeSet::omega_max() const {
  double w = 0.0;
  for (const auto& m : modes) w = std::max(w, m.omega);
  return w;
}

EigenMode eigenmode(const BoxDomain& domain, const ModeIndex& index) {
  double lam = 0.0;
  for (int i = 0; i < 3; ++i) {
    if (index[i] < 1) throw assumption_error("InvalidModeIndex", "mode indices must be >= 1");
    double r = index[i] / domain.lengths[i];
    lam += r * r;
  }
  lam *= pi * pi;
  return EigenMode{index, lam, domain.c0 * std::sqrt(lam)};
}

double eval_mode(const BoxDomain& domain, const ModeIndex& index, const Eigen::Vector3d& x) {
  if (!domain.contains_closed(x)) throw assumption_error("OutsideDomain", "evaluation point outside the box");
  double v = 1.0;
  for (int i = 0; i < 3; ++i) {
    const double L = domain.lengths[i];
    // Exact zero on the faces.
    if (x[i] == 0.0 || x[i] == L) return 0.0;
    v *= std::sqrt(2.0 / L) * std::sin(index[i] * pi * x[i] / L);
  }
  return v;
}

namespace {
bool mode_less(const EigenMode& a, const EigenMode& b) {
  if (a.omega != b.omega) return a.omega < b.omega;
  return a.index < b.index;
}
}  // namespace

ModeSet select_modes(const BoxDomain& domain, const SpectralBand& band, const std::vector<ModeIndex>& candidates) {
  ModeSet out;
  out.domain = domain;
  std::set<ModeIndex> seen;
  for (const auto& idx : candidates) {
    if (!seen.insert(idx).second) continue;
    EigenMode m = eigenmode(domain, idx);
    if (band.contains(m.omega)) out.modes.push_back(m);
  }
  std::sort(out.modes.begin(), out.modes.end(), mode_less);
  for (const auto& iv : band.intervals) {
    bool hit = std::any_of(out.modes.begin(), out.modes.end(),
                           [&](const EigenMode& m) { return m.omega >= iv.lo && m.omega <= iv.hi; });
    if (!hit) {
      std::ostringstream os;
      os << "empty band interval [" << iv.lo << ", " << iv.hi << "]";
      throw assumption_error("EmptyBand", os.str());
    }
  }
  return out;
}

ModeSet modes_in_band(const BoxDomain& domain, const SpectralBand& band, int index_cap) {
  if (index_cap < 1) throw assumption_error("InvalidModeIndex", "index_cap must be >= 1");
  std::vector<ModeIndex> cands;
  cands.reserve(static_cast<size_t>(index_cap) * index_cap * index_cap);
  for (int a = 1; a <= index_cap; ++a)
    for (int b = 1; b <= index_cap; ++b)
      for (int c = 1; c <= index_cap; ++c) cands.push_back({a, b, c});
  return select_modes(domain, band, cands);
}

ModeSet mode_set(const BoxDomain& domain, const std::vector<ModeIndex>& indices) {
  ModeSet out;
  out.domain = domain;
  std::set<ModeIndex> seen;
  for (const auto& idx : indices) {
    if (!seen.insert(idx).second) throw assumption_error("DuplicateMode", "mode index listed twice");
    out.modes.push_back(eigenmode(domain, idx));
  }
  std::sort(out.modes.begin(), out.modes.end(), mode_less);
  return out;
}

std::vector<std::vector<std::size_t>> frequency_groups(const ModeSet& modes, double rel_tol) {
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < modes.size(); ++k) {
    if (!groups.empty()) {
      double w0 = modes.modes[groups.back().front()].omega;
      if (std::abs(modes.modes[k].omega - w0) <= rel_tol * w0) {
        groups.back().push_back(k);
        continue;
      }
    }
    groups.push_back({k});
  }
  return groups;
}

Localization check_localization(const BoxDomain& domain, const Region& region, double T) {
  double dist = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    dist = std::min(dist, region.lo[i]);
    dist = std::min(dist, domain.lengths[i] - region.hi[i]);
  }
  Localization r;
  r.margin = dist - domain.c0 * T;
  r.ok = dist > 0.0 && r.margin > 0.0;
  return r;
}

}  // namespace bubbletrack
