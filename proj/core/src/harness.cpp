#include "bubbletrack/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <json.hpp>

#include "bubbletrack/errors.hpp"
#include "bubbletrack/numerics.hpp"

namespace bubbletrack {

using json = nlohmann::json;
using std::numbers::pi;

namespace {

Error config_error(const std::string& what) { return assumption_error("ConfigError", what); }

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw config_error("unknown key '" + it.key() + "' in " + where);
  }
}

Eigen::Vector3d vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw config_error(where + " must be a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw config_error(std::string("malformed JSON: ") + e.what());
  }
  try {
    reject_unknown(j, {"schema_version", "seed", "domain", "targets", "clusters", "transducers", "trajectory", "horizon",
                       "epsilons", "dt", "band", "tolerances", "probes", "description"},
                   "config");
    if (!j.contains("schema_version") || j["schema_version"].get<int>() != kConfigSchemaVersion)
      throw config_error("schema_version must be " + std::to_string(kConfigSchemaVersion));
    if (!j.contains("seed") || !j["seed"].is_number_unsigned()) throw config_error("seed is mandatory (non-negative integer)");
    for (const char* k : {"domain", "targets", "clusters", "transducers", "trajectory", "horizon", "epsilons"})
      if (!j.contains(k)) throw config_error(std::string("missing required key '") + k + "'");

    ExperimentConfig c;
    c.seed = j["seed"].get<std::uint64_t>();

    const json& d = j["domain"];
    reject_unknown(d, {"lengths", "c0"}, "domain");
    c.domain = BoxDomain(vec3(d.at("lengths"), "domain.lengths"), d.at("c0").get<double>());

    const json& t = j["targets"];
    reject_unknown(t, {"modes", "band", "index_cap"}, "targets");
    if (t.contains("modes") == t.contains("band")) throw config_error("targets needs exactly one of 'modes' or 'band'");
    if (t.contains("modes")) {
      for (const auto& m : t["modes"]) {
        if (!m.is_array() || m.size() != 3) throw config_error("targets.modes entries must be integer triples");
        c.modes.push_back({m[0].get<int>(), m[1].get<int>(), m[2].get<int>()});
      }
    } else {
      std::vector<Interval> iv;
      for (const auto& b : t["band"]) iv.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
      c.band = SpectralBand(iv);
      c.index_cap = get_or(t, "index_cap", 16);
    }

    const json& cl = j["clusters"];
    reject_unknown(cl, {"spacing", "exponent_p", "capacitance", "center_region", "orientation", "layout"}, "clusters");
    c.spacing = cl.at("spacing").get<double>();
    c.exponent_p = cl.at("exponent_p").get<double>();
    c.capacitance = cl.at("capacitance").get<double>();
    if (cl.contains("center_region"))
      c.center_region = Region{vec3(cl["center_region"].at("lo"), "center_region.lo"),
                               vec3(cl["center_region"].at("hi"), "center_region.hi")};
    const std::string orient = get_or<std::string>(cl, "orientation", "random");
    if (orient != "random" && orient != "aligned") throw config_error("clusters.orientation must be \"random\" or \"aligned\"");
    c.random_orientation = orient == "random";
    for (const auto& e : cl.at("layout")) {
      reject_unknown(e, {"bubbles", "geometry", "target", "omega_m", "capacitance"}, "clusters.layout");
      ClusterSpec s;
      s.bubbles = e.at("bubbles").get<int>();
      s.geometry = get_or<std::string>(e, "geometry", "equidistant");
      s.target = e.at("target").get<int>();
      if (e.contains("omega_m")) s.omega_m = e["omega_m"].get<double>();
      if (e.contains("capacitance")) s.capacitance = e["capacitance"].get<double>();
      c.clusters.push_back(s);
    }

    const json& tr = j["transducers"];
    reject_unknown(tr, {"count", "radius", "directions", "rho_c", "clock_advance"}, "transducers");
    c.transducer_count = tr.at("count").get<int>();
    c.transducer_radius = tr.at("radius").get<double>();
    c.rho_c = get_or(tr, "rho_c", 1.0);
    if (tr.contains("directions"))
      for (const auto& v : tr["directions"]) c.transducer_directions.push_back(vec3(v, "transducers.directions"));
    if (tr.contains("clock_advance") && !tr["clock_advance"].is_string()) c.clock_advance = tr["clock_advance"].get<double>();
    if (tr.contains("clock_advance") && tr["clock_advance"].is_string() && tr["clock_advance"] != "auto")
      throw config_error("transducers.clock_advance must be a number or \"auto\"");

    const json& tj = j["trajectory"];
    reject_unknown(tj, {"amplitudes", "ramp", "onset"}, "trajectory");
    c.amplitudes = tj.at("amplitudes").get<std::vector<double>>();
    c.ramp = tj.at("ramp").get<double>();
    c.onset = get_or(tj, "onset", 0.0);

    c.horizon = j["horizon"].get<double>();
    c.epsilons = j["epsilons"].get<std::vector<double>>();
    if (j.contains("dt") && !(j["dt"].is_string() && j["dt"] == "auto")) c.dt = j["dt"].get<double>();

    if (j.contains("band")) {
      const json& b = j["band"];
      reject_unknown(b, {"delta_fraction", "taper_fraction", "pad_factor", "g0"}, "band");
      c.delta_fraction = get_or(b, "delta_fraction", c.delta_fraction);
      c.taper_fraction = get_or(b, "taper_fraction", c.taper_fraction);
      c.pad_factor = get_or(b, "pad_factor", c.pad_factor);
      if (b.contains("g0")) c.g0 = b["g0"].get<double>();
    }
    if (j.contains("tolerances")) {
      const json& tl = j["tolerances"];
      reject_unknown(tl, {"sigma_tol", "min_cluster_gain", "rank_probe_samples", "gain_grid", "refine_factor"}, "tolerances");
      c.sigma_tol = get_or(tl, "sigma_tol", c.sigma_tol);
      c.min_cluster_gain = get_or(tl, "min_cluster_gain", c.min_cluster_gain);
      c.rank_probe_samples = get_or(tl, "rank_probe_samples", c.rank_probe_samples);
      c.gain_grid = get_or(tl, "gain_grid", c.gain_grid);
      c.refine_factor = get_or(tl, "refine_factor", c.refine_factor);
    }
    if (j.contains("probes"))
      for (const auto& v : j["probes"]) c.probes.push_back(vec3(v, "probes"));
    return c;
  } catch (const json::exception& e) {
    throw config_error(std::string("schema violation: ") + e.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw assumption_error("IOError", "cannot read config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  auto v3 = [](const Eigen::Vector3d& v) { return json::array({v[0], v[1], v[2]}); };
  json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["seed"] = c.seed;
  j["domain"] = {{"lengths", v3(c.domain.lengths)}, {"c0", c.domain.c0}};
  if (c.band) {
    json b = json::array();
    for (const auto& iv : c.band->intervals) b.push_back({iv.lo, iv.hi});
    j["targets"] = {{"band", b}, {"index_cap", c.index_cap}};
  } else {
    json m = json::array();
    for (const auto& k : c.modes) m.push_back({k[0], k[1], k[2]});
    j["targets"] = {{"modes", m}};
  }
  json layout = json::array();
  for (const auto& s : c.clusters) {
    json e = {{"bubbles", s.bubbles}, {"geometry", s.geometry}, {"target", s.target}};
    if (s.omega_m) e["omega_m"] = *s.omega_m;
    if (s.capacitance) e["capacitance"] = *s.capacitance;
    layout.push_back(e);
  }
  j["clusters"] = {{"spacing", c.spacing},
                   {"exponent_p", c.exponent_p},
                   {"capacitance", c.capacitance},
                   {"orientation", c.random_orientation ? "random" : "aligned"},
                   {"layout", layout}};
  if (c.center_region) j["clusters"]["center_region"] = {{"lo", v3(c.center_region->lo)}, {"hi", v3(c.center_region->hi)}};
  j["transducers"] = {{"count", c.transducer_count}, {"radius", c.transducer_radius}, {"rho_c", c.rho_c}};
  if (!c.transducer_directions.empty()) {
    json d = json::array();
    for (const auto& v : c.transducer_directions) d.push_back(v3(v));
    j["transducers"]["directions"] = d;
  }
  j["transducers"]["clock_advance"] = c.clock_advance ? json(*c.clock_advance) : json("auto");
  j["trajectory"] = {{"amplitudes", c.amplitudes}, {"ramp", c.ramp}, {"onset", c.onset}};
  j["horizon"] = c.horizon;
  j["epsilons"] = c.epsilons;
  j["dt"] = c.dt ? json(*c.dt) : json("auto");
  j["band"] = {{"delta_fraction", c.delta_fraction}, {"taper_fraction", c.taper_fraction}, {"pad_factor", c.pad_factor}};
  if (c.g0) j["band"]["g0"] = *c.g0;
  j["tolerances"] = {{"sigma_tol", c.sigma_tol},
                     {"min_cluster_gain", c.min_cluster_gain},
                     {"rank_probe_samples", c.rank_probe_samples},
                     {"gain_grid", c.gain_grid},
                     {"refine_factor", c.refine_factor}};
  if (!c.probes.empty()) {
    json p = json::array();
    for (const auto& v : c.probes) p.push_back(v3(v));
    j["probes"] = p;
  }
  return j.dump(2);
}

namespace {

std::vector<Eigen::Vector3d> cluster_template(const ClusterSpec& s) {
  const int m = s.bubbles;
  std::vector<Eigen::Vector3d> pts;
  if (m < 1) throw assumption_error("InvalidCluster", "clusters need at least one bubble");
  if (s.geometry == "chain") {
    for (int i = 0; i < m; ++i) pts.emplace_back(i - 0.5 * (m - 1), 0.0, 0.0);
  } else if (s.geometry == "equidistant") {
    switch (m) {
      case 1: pts.emplace_back(0.0, 0.0, 0.0); break;
      case 2: pts = {{-0.5, 0, 0}, {0.5, 0, 0}}; break;
      case 3:
        for (int i = 0; i < 3; ++i) pts.emplace_back(std::cos(2 * pi * i / 3) / std::sqrt(3.0), std::sin(2 * pi * i / 3) / std::sqrt(3.0), 0.0);
        break;
      case 4: {
        const double h = 1.0 / (2.0 * std::sqrt(2.0));
        pts = {{h, h, h}, {h, -h, -h}, {-h, h, -h}, {-h, -h, h}};
        break;
      }
      default: throw assumption_error("InvalidCluster", "equidistant clusters exist only for 1..4 bubbles in 3D");
    }
  } else {
    throw assumption_error("InvalidCluster", "unknown cluster geometry '" + s.geometry + "'");
  }
  return pts;
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double u1 = u(rng), u2 = u(rng), u3 = u(rng);
  Eigen::Quaterniond q(std::sqrt(u1) * std::cos(2 * pi * u3), std::sqrt(1 - u1) * std::sin(2 * pi * u2),
                       std::sqrt(1 - u1) * std::cos(2 * pi * u2), std::sqrt(u1) * std::sin(2 * pi * u3));
  return q.normalized().toRotationMatrix();
}

std::vector<Eigen::Vector3d> default_directions(int count) {
  std::vector<Eigen::Vector3d> d;
  if (count == 4) {
    d = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
  } else {
    // Fibonacci sphere.
    const double golden = pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
      const double z = 1.0 - 2.0 * (i + 0.5) / count;
      const double r = std::sqrt(1.0 - z * z);
      d.emplace_back(r * std::cos(golden * i), r * std::sin(golden * i), z);
    }
  }
  for (auto& v : d) v.normalize();
  return d;
}

double max_eps(const ExperimentConfig& c) { return *std::max_element(c.epsilons.begin(), c.epsilons.end()); }

}  // namespace

BubbleEnsemble build_ensemble(const ExperimentSetup& setup, double eps) {
  const auto& c = setup.cfg;
  BubbleEnsemble e;
  e.eps = eps;
  e.p = c.exponent_p;
  e.cluster_centers = setup.cluster_centers;
  const double scale = c.spacing * std::pow(eps, c.exponent_p);
  for (size_t a = 0; a < c.clusters.size(); ++a) {
    const double w = c.clusters[a].omega_m.value_or(setup.target_omegas[static_cast<size_t>(c.clusters[a].target)]);
    for (const auto& off : setup.offsets[a]) {
      e.positions.push_back(setup.cluster_centers[a] + scale * off);
      e.cluster_of.push_back(static_cast<int>(a));
      e.omega_m.push_back(w);
      e.capacitance.push_back(c.clusters[a].capacitance.value_or(c.capacitance));
    }
  }
  return e;
}

ExperimentSetup validate_config(const ExperimentConfig& cfg) {
  ExperimentSetup s;
  s.cfg = cfg;
  const auto& c = cfg;
  if (c.epsilons.empty()) throw config_error("epsilons must not be empty");
  for (double e : c.epsilons)
    if (!(e > 0.0 && e < 1.0)) throw config_error("every epsilon must lie in (0, 1)");
  if (!(c.exponent_p > 0.0 && c.exponent_p < 1.0)) throw config_error("exponent_p must lie in (0, 1)");
  if (!(c.spacing > 0.0) || !(c.capacitance > 0.0)) throw config_error("spacing and capacitance must be positive");
  for (const auto& cs : c.clusters)
    if (cs.capacitance && !(*cs.capacitance > 0.0)) throw config_error("cluster capacitance must be positive");
  if (!(c.horizon > 0.0)) throw config_error("horizon must be positive");
  if (c.clusters.empty()) throw config_error("at least one cluster is required");

  s.modes = c.band ? modes_in_band(c.domain, *c.band, c.index_cap) : mode_set(c.domain, c.modes);
  if (s.modes.size() == 0) throw assumption_error("EmptyBand", "no target modes selected");
  if (c.amplitudes.size() != s.modes.size())
    throw config_error("trajectory.amplitudes needs one entry per target mode (" + std::to_string(s.modes.size()) + ")");
  const auto groups = frequency_groups(s.modes);
  for (const auto& g : groups) s.target_omegas.push_back(s.modes.modes[g.front()].omega);
  if (c.band) {
    const EigenMode edge = eigenmode(c.domain, {c.index_cap + 1, 1, 1});
    if (s.modes.omega_max() >= edge.omega)
      s.validation.warnings.push_back("band reaches index_cap; degenerate partners beyond the cap may be missing");
  }

  // Surjective assignment onto the distinct target frequencies.
  std::set<int> covered;
  for (const auto& cs : c.clusters) {
    if (cs.target < 0 || cs.target >= static_cast<int>(groups.size()))
      throw assumption_error("AssignmentError", "cluster target index out of range");
    covered.insert(cs.target);
  }
  if (covered.size() != groups.size())
    throw assumption_error("AssignmentError", "cluster assignment does not cover every target frequency");
  const std::size_t N = c.clusters.size();
  if (N < s.modes.size())
    throw assumption_error("RankDeficient", "N = " + std::to_string(N) + " clusters < N_M = " + std::to_string(s.modes.size()) + " modes");
  if (c.transducer_count < static_cast<int>(N))
    throw assumption_error("TransducerCount", "M_tr = " + std::to_string(c.transducer_count) + " < N = " + std::to_string(N));

  // Cluster centers and rotated templates, redrawn until C_M is full rank
  // and clusters are well separated.
  Region region = c.center_region.value_or(Region{0.25 * c.domain.lengths, 0.75 * c.domain.lengths});
  if (!c.domain.contains_open(region.lo) || !c.domain.contains_open(region.hi))
    throw assumption_error("OutsideDomain", "center_region must lie strictly inside the box");
  if ((region.hi - region.lo).minCoeff() < 0.0) throw config_error("center_region.lo must not exceed center_region.hi");
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double rmax = c.spacing * std::pow(max_eps(c), c.exponent_p);
  bool placed = false;
  for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
    s.cluster_centers.clear();
    for (std::size_t a = 0; a < N; ++a) {
      Eigen::Vector3d y;
      for (int i = 0; i < 3; ++i) y[i] = region.lo[i] + (region.hi[i] - region.lo[i]) * u(rng);
      s.cluster_centers.push_back(y);
    }
    bool separated = true;
    for (std::size_t a = 0; a < N; ++a)
      for (std::size_t b = a + 1; b < N; ++b)
        separated = separated && (s.cluster_centers[a] - s.cluster_centers[b]).norm() > 10.0 * rmax;
    if (!separated) continue;
    CouplingMatrix C = coupling_matrix(s.modes, s.cluster_centers);
    try {
      s.L = right_inverse(C, c.sigma_tol);
    } catch (const Error&) {
      continue;
    }
    s.C = C;
    placed = true;
  }
  if (!placed) throw assumption_error("RankDeficient", "no generic cluster placement found in 1000 draws");
  s.validation.coupling_sigma_min = s.L.sigma_min;
  for (std::size_t a = 0; a < N; ++a) {
    const Eigen::Matrix3d R = c.random_orientation ? random_rotation(rng) : Eigen::Matrix3d::Identity();
    std::vector<Eigen::Vector3d> pts;
    for (const auto& p : cluster_template(c.clusters[a])) pts.push_back(R * p);
    s.offsets.push_back(pts);
  }

  // Transducers around the box center.
  auto dirs = c.transducer_directions.empty() ? default_directions(c.transducer_count) : c.transducer_directions;
  if (static_cast<int>(dirs.size()) != c.transducer_count)
    throw config_error("transducers.directions must list one direction per transducer");
  const Eigen::Vector3d mid = 0.5 * c.domain.lengths;
  s.array.rho_c = c.rho_c;
  for (auto d : dirs) {
    if (!(d.norm() > 0.0)) throw config_error("transducer direction must be nonzero");
    s.array.positions.push_back(mid + c.transducer_radius * d.normalized());
  }
  validate_transducers(s.array, c.domain, N);
  if (c.clock_advance) {
    s.array.clock_advance = *c.clock_advance;
  } else {
    double rmin = std::numeric_limits<double>::infinity();
    for (const auto& x : s.array.positions)
      for (const auto& y : s.cluster_centers) rmin = std::min(rmin, (x - y).norm());
    s.array.clock_advance = std::max(0.0, (rmin - 2.0 * rmax) / c.domain.c0);
  }

  // Assumption checks at the largest epsilon (largest clusters).
  const BubbleEnsemble e = build_ensemble(s, max_eps(c));
  Region bbox{e.positions.front(), e.positions.front()};
  for (const auto& z : e.positions) {
    bbox.lo = bbox.lo.cwiseMin(z);
    bbox.hi = bbox.hi.cwiseMax(z);
  }
  const Localization loc = check_localization(c.domain, bbox, c.horizon);
  s.validation.localization_margin = loc.margin;
  if (!loc.ok) {
    std::ostringstream os;
    os << "dist(bubbles, boundary) - c0*T = " << loc.margin << " <= 0";
    throw assumption_error("LocalizationViolation", os.str());
  }
  bool fixed_all = true;
  for (const auto& cs : c.clusters) fixed_all = fixed_all && cs.omega_m.has_value();
  if (fixed_all) s.validation.geometry = validate_geometry(e);
  else {
    // Untuned clusters aimed at one frequency share omega_M until tuning; check distances only.
    BubbleEnsemble probe = e;
    for (std::size_t a = 0; a < N; ++a) probe = probe.with_cluster_omega(a, probe.cluster_omega(a) * (1.0 + 1e-6 * a));
    s.validation.geometry = validate_geometry(probe);
  }

  std::vector<Interval> iv;
  for (double w : s.target_omegas) iv.push_back({0.95 * w, 1.05 * w});
  std::sort(iv.begin(), iv.end(), [](auto& a, auto& b) { return a.lo < b.lo; });
  std::vector<Interval> merged;
  for (const auto& x : iv) {
    if (!merged.empty() && x.lo <= merged.back().hi) merged.back().hi = std::max(merged.back().hi, x.hi);
    else merged.push_back(x);
  }
  s.validation.accessibility = transducer_accessibility(s.array, s.cluster_centers, SpectralBand(merged), 32, c.domain.c0);
  double rfar = 0.0;
  for (const auto& x : s.array.positions)
    for (const auto& y : s.cluster_centers) rfar = std::max(rfar, (x - y).norm());
  if (!(s.validation.accessibility > c.sigma_tol * c.rho_c / (4 * pi * rfar)))
    throw assumption_error("TransducerAccessibility", "cluster-level trace matrix is rank deficient on the target band");

  s.validation.rank_fraction =
      rank_probe(s.modes, static_cast<int>(N), c.rank_probe_samples, c.seed ^ 0x9e3779b97f4a7c15ULL, c.sigma_tol, region);
  if (s.validation.rank_fraction < 0.99) s.validation.warnings.push_back("rank_probe full-rank fraction below 0.99");
  return s;
}

namespace {

ModalTrajectory modal_from_reference(const ReferenceTrajectory& r, const ModeSet& modes) {
  ModalTrajectory m;
  m.p = r.p;
  m.pd = r.pd;
  m.omega_sq.resize(static_cast<Eigen::Index>(modes.size()));
  for (size_t k = 0; k < modes.size(); ++k) m.omega_sq(static_cast<Eigen::Index>(k)) = modes.modes[k].omega * modes.modes[k].omega;
  return m;
}

// Leading-order damping of intra-cluster modes is (w^3 eps / 2) times an
// eigenvalue of the radiation matrix; its zero trace forces a negative one
// whenever the cluster holds two or more bubbles.
double non_principal_growth(const BubbleEnsemble& e, std::size_t alpha, double c0) {
  const auto idx = e.members(alpha);
  if (idx.size() < 2) return 0.0;
  const double w = e.cluster_omega(alpha), k = w / c0;
  const auto n = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) {
        const double d = (e.positions[idx[i]] - e.positions[idx[j]]).norm();
        G(i, j) = e.capacitance[idx[j]] / (4 * pi) * std::sin(k * d) / d;
      }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (G + G.transpose()));
  return std::max(0.0, -0.5 * w * w * w * e.eps * es.eigenvalues()(0));
}

double nonuniform_fraction(const BubbleEnsemble& e, const Signal& Y) {
  const double peak = Y.data.cwiseAbs().maxCoeff();
  if (!(peak > 0.0)) return 0.0;
  double worst = 0.0;
  for (std::size_t a = 0; a < e.clusters(); ++a) {
    const auto idx = e.members(a);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(Y.samples());
    for (auto i : idx) mean += Y.data.col(static_cast<Eigen::Index>(i));
    mean /= static_cast<double>(idx.size());
    for (auto i : idx) worst = std::max(worst, (Y.data.col(static_cast<Eigen::Index>(i)) - mean).cwiseAbs().maxCoeff());
  }
  return worst / peak;
}

double relative(double err, double scale) { return scale > 0.0 ? err / scale : (err > 0.0 ? std::numeric_limits<double>::infinity() : 0.0); }

template <class F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (Error& e) {
    if (e.stage().empty()) e.set_stage(stage);
    throw;
  }
}

}  // namespace

BubbleEnsemble tuned_ensemble(const ExperimentSetup& setup, double eps) {
  const auto& c = setup.cfg;
  BubbleEnsemble e = build_ensemble(setup, eps);
  staged("tune_cluster", [&] {
    for (std::size_t a = 0; a < c.clusters.size(); ++a) {
      if (c.clusters[a].omega_m) continue;
      const double target = setup.target_omegas[static_cast<size_t>(c.clusters[a].target)];
      e = e.with_cluster_omega(a, tune_cluster(e, a, target, c.domain.c0));
    }
    validate_geometry(e);
    return 0;
  });
  return e;
}

std::vector<ClusterRecord> cluster_poles(const ExperimentSetup& setup, const SMatrixEvaluator& ev) {
  const auto& c = setup.cfg;
  const auto& e = ev.ensemble();
  const double c0 = ev.c0();
  return staged("poles", [&] {
    std::vector<ClusterRecord> out;
    for (std::size_t a = 0; a < e.clusters(); ++a) {
      ClusterRecord cr;
      cr.alpha = static_cast<int>(a);
      cr.target_omega = setup.target_omegas[static_cast<size_t>(c.clusters[a].target)];
      cr.tuned_omega_m = e.cluster_omega(a);
      cr.predicted = asymptotic_pole(e, a, c0);
      cr.pole = principal_pole(ev, a);
      cr.growth_pred = non_principal_growth(e, a, c0);
      const double rcap = std::isfinite(cr.predicted.gap_pred) ? 2.0 * cr.predicted.gap_pred : 0.1 * cr.tuned_omega_m;
      cr.gap_measured = nearest_pole_distance(ev, cr.pole.s, std::min(rcap, 0.5 * cr.tuned_omega_m));
      const double radius = std::min(cr.gap_measured / 4.0, cr.pole.eta > 0.0 ? cr.pole.eta / 2.0 : cr.gap_measured / 4.0);
      cr.pole.residue_norm = residue_at(ev, cr.pole, radius).norm();
      out.push_back(cr);
    }
    return out;
  });
}

double measured_g0(const std::vector<ClusterRecord>& clusters, double eps, double p) {
  double g0 = std::numeric_limits<double>::infinity();
  for (const auto& cr : clusters) g0 = std::min(g0, cr.gap_measured / std::pow(eps, 1.0 - p));
  return g0;
}

std::vector<BandFilter> assign_bands(const ExperimentConfig& c, std::vector<ClusterRecord>& clusters, double eps,
                                     double g0) {
  std::vector<BandFilter> filters;
  for (auto& cr : clusters) {
    const double gap = std::isfinite(cr.predicted.gap_pred) ? cr.predicted.gap_pred : cr.gap_measured;
    const double delta = c.delta_fraction * std::min(g0 * std::pow(eps, 1.0 - c.exponent_p) / 2.0, gap / 2.0);
    cr.band_lo = cr.pole.omega - delta;
    cr.band_hi = cr.pole.omega + delta;
    cr.taper = c.taper_fraction * gap;
    filters.emplace_back(std::vector<Interval>{{cr.band_lo, cr.band_hi}}, cr.taper);
  }
  return filters;
}

SpectralBand union_band(const std::vector<ClusterRecord>& clusters) {
  std::vector<Interval> iv;
  for (const auto& cr : clusters) iv.push_back({cr.band_lo, cr.band_hi});
  std::sort(iv.begin(), iv.end(), [](auto& x, auto& y) { return x.lo < y.lo; });
  return staged("bands", [&] { return SpectralBand(iv); });
}

EpsilonRecord run_tracking_experiment(const ExperimentSetup& setup, double eps, const RunOptions& opt) {
  const auto& c = setup.cfg;
  const double c0 = c.domain.c0;
  EpsilonRecord rec;
  rec.eps = eps;

  // Tune every cluster so its principal pole sits on its target frequency.
  const BubbleEnsemble e = tuned_ensemble(setup, eps);
  const SMatrixEvaluator ev(e, c0, setup.array);

  // Poles, gaps and bands.
  rec.clusters = cluster_poles(setup, ev);
  double g0 = opt.g0 ? *opt.g0 : (c.g0 ? *c.g0 : measured_g0(rec.clusters, eps, c.exponent_p));
  const std::vector<BandFilter> filters = assign_bands(c, rec.clusters, eps, g0);
  const SpectralBand band = union_band(rec.clusters);

  rec.gain = gain_sweep(ev, band, c.gain_grid);
  rec.min_smin_hext = std::numeric_limits<double>::infinity();
  for (const auto& g : rec.gain) {
    rec.peak_norm_hb = std::max(rec.peak_norm_hb, g.norm_hb);
    rec.min_smin_hext = std::min(rec.min_smin_hext, g.smin_hext);
    rec.max_smax_hext = std::max(rec.max_smax_hext, g.smax_hext);
  }
  // The Lorentzian peak sits exactly at the pole frequency.
  for (const auto& cr : rec.clusters) {
    Eigen::JacobiSVD<Eigen::MatrixXcd> hb(ev.Hb(cplx(0.0, cr.pole.omega)));
    rec.peak_norm_hb = std::max(rec.peak_norm_hb, hb.singularValues()(0));
  }

  // Time grid.
  const DelayedSystem sys = build_system(e, c0);
  double dt = c.dt ? *c.dt : default_step(sys);
  dt = std::min(dt, 0.25 / setup.modes.omega_max());
  dt *= opt.dt_scale;
  rec.dt = dt;

  // Ideal layer and band projection.
  const ReferenceTrajectory traj = staged("reference", [&] {
    return reference_trajectory_gen(setup.modes, c.amplitudes, c.ramp, c.horizon, dt, c.onset);
  });
  rec.samples = static_cast<long>(traj.p.samples());
  const Signal q_ideal = ideal_source(traj, setup.L, setup.modes, c0);
  {
    const ModalTrajectory bypass = integrate_modal(setup.modes, setup.C, q_ideal, c0);
    const ModalTrajectory ref = modal_from_reference(traj, setup.modes);
    rec.ideal_error = relative(tracking_error(bypass, ref), energy_norm_sup(ref));
  }
  const BandLimitedSource target = staged("project_to_band_space", [&] { return project_to_band_space(q_ideal, filters, c.pad_factor); });
  rec.discarded = target.discarded;
  const ModalTrajectory ref = integrate_modal(setup.modes, setup.C, target.q, c0);

  // Realization.
  double wmin = *std::min_element(setup.target_omegas.begin(), setup.target_omegas.end());
  SynthesisOptions so;
  so.pad_factor = c.pad_factor;
  so.onset_ramp = std::min(0.1 * c.horizon, 8 * pi / wmin);
  so.min_cluster_gain = c.min_cluster_gain;
  const RealizedControl lam = staged("synthesize_controls", [&] { return synthesize_controls(target, ev, so); });
  rec.sigma_min = lam.sigma_min;
  rec.sigma_max = lam.sigma_max;
  rec.identity_defect = lam.identity_defect;
  rec.imag_residue = lam.imag_residue;
  rec.bins_used = lam.bins_used;
  rec.control_cost = control_cost(lam);

  // Physical chain.
  const IncidentTraces tr = staged("incident_traces", [&] { return incident_traces(setup.array, lam.lambda, lam.lambda_dd, e.positions, c0); });
  const Signal Y = staged("integrate_delayed", [&] { return integrate_delayed(sys, tr.u_tt, traj.p.duration(), dt); });
  rec.nonuniform_fraction = nonuniform_fraction(e, Y);
  const Signal q_eps = source_amplitudes(e, Y);
  const Signal Q = cluster_outputs(e, q_eps);

  // Galerkin projection of the bubble-resolved effective field, and of the
  // cluster-level one.
  const CouplingMatrix C_micro = coupling_matrix(setup.modes, e.positions);
  const ModalTrajectory sim = integrate_modal(setup.modes, C_micro, q_eps, c0);
  const ModalTrajectory sim_cl = integrate_modal(setup.modes, setup.C, Q, c0);
  const double scale = energy_norm_sup(ref);
  rec.tracking_error = relative(tracking_error(sim, ref), scale);
  rec.tracking_error_cluster = relative(tracking_error(sim_cl, ref), scale);
  rec.realization_error = l2_norm(target.q) > 0.0 ? realization_error(Q, target) : 0.0;
  rec.cluster_reduction = c.probes.empty() ? std::numeric_limits<double>::quiet_NaN()
                                           : cluster_reduction_error(e, q_eps, Q, c.probes, c0);
  if (opt.keep_signals) {
    rec.target = target.q;
    rec.Q = Q;
    rec.lambda = lam.lambda;
  }
  return rec;
}

bool Report::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

Report epsilon_sweep(const ExperimentSetup& setup) {
  const auto& c = setup.cfg;
  if (c.epsilons.size() < 3) throw config_error("epsilon_sweep needs at least three epsilon values");
  Report r;
  r.seed = c.seed;
  r.validation = setup.validation;
  std::vector<double> eps = c.epsilons;
  std::sort(eps.begin(), eps.end(), std::greater<>());

  RunOptions opt;
  if (c.g0) opt.g0 = c.g0;
  for (double x : eps) {
    EpsilonRecord rec = run_tracking_experiment(setup, x, opt);
    if (!opt.g0) opt.g0 = measured_g0(rec.clusters, x, c.exponent_p);
    r.records.push_back(std::move(rec));
  }
  r.g0 = *opt.g0;
  RunOptions fine = opt;
  fine.dt_scale = c.refine_factor;
  fine.keep_signals = false;
  r.refinement = run_tracking_experiment(setup, eps.back(), fine);

  std::vector<double> track, real, cost;
  for (const auto& rec : r.records) {
    track.push_back(rec.tracking_error);
    real.push_back(rec.realization_error);
    cost.push_back(rec.control_cost);
  }
  auto add = [&](std::string name, bool ok, double value, std::string req) {
    r.checks.push_back({std::move(name), ok, value, std::move(req)});
  };
  const bool positive = std::all_of(track.begin(), track.end(), [](double v) { return v > 0.0; });
  r.gamma = positive ? loglog_fit(eps, track).slope : 0.0;
  bool decreasing = true;
  for (size_t i = 1; i < track.size(); ++i) decreasing = decreasing && track[i] < track[i - 1];
  add("tracking_error_strictly_decreasing", decreasing, track.back(), "tracking error decreases strictly as eps decreases");
  add("effective_model_gamma_positive", r.gamma > 0.0, r.gamma, "fitted effective-model gamma > 0");

  const bool rpos = std::all_of(real.begin(), real.end(), [](double v) { return v > 0.0; });
  r.beta = rpos ? loglog_fit(eps, real).slope : 0.0;
  bool rmono = true;
  for (size_t i = 1; i < real.size(); ++i) rmono = rmono && real[i] < real[i - 1];
  add("realization_error_monotone", rmono, real.back(), "H1 realization error decreases monotonically as eps decreases");

  r.cost_ratio = *std::max_element(cost.begin(), cost.end()) / *std::min_element(cost.begin(), cost.end());
  add("control_cost_bounded", r.cost_ratio < 2.0, r.cost_ratio, "max/min control cost over the sweep < 2");

  double defect = 0.0;
  for (const auto& rec : r.records) defect = std::max(defect, rec.identity_defect);
  add("pseudoinverse_identity", defect <= 1e-10, defect, "|H_ext H_ext^+ - I| <= 1e-10 on every used bin");

  // Pole scaling per cluster; the report keeps the worst deviation.
  const double expected = 1.0 - c.exponent_p;
  double worst_shift = expected, worst_damp = 1.0;
  bool damped = true;
  for (std::size_t a = 0; a < c.clusters.size(); ++a) {
    if (c.clusters[a].bubbles < 2) continue;
    std::vector<double> shift, eta;
    for (const auto& rec : r.records) {
      shift.push_back(rec.clusters[a].tuned_omega_m - rec.clusters[a].pole.omega);
      eta.push_back(rec.clusters[a].pole.eta);
      damped = damped && rec.clusters[a].pole.eta > 0.0;
    }
    if (!std::all_of(shift.begin(), shift.end(), [](double v) { return v > 0.0; }) || !damped) continue;
    const LineFit fs = loglog_fit(eps, shift), fd = loglog_fit(eps, eta);
    if (std::abs(fs.slope - expected) >= std::abs(worst_shift - expected)) {
      worst_shift = fs.slope;
      r.shift_coefficient = fs.coefficient();
    }
    if (std::abs(fd.slope - 1.0) >= std::abs(worst_damp - 1.0)) worst_damp = fd.slope;
  }
  r.shift_slope = worst_shift;
  r.damping_slope = worst_damp;
  add("pole_shift_slope", std::abs(worst_shift - expected) <= 0.05, worst_shift, "pole-shift slope = 1 - p +/- 0.05");
  add("damping_slope", damped && std::abs(worst_damp - 1.0) <= 0.1, worst_damp, "damping slope = 1 +/- 0.1 with -Re s > 0");

  r.refinement_change = std::abs(r.refinement->tracking_error - r.records.back().tracking_error) / r.records.back().tracking_error;
  add("dt_refinement", r.refinement_change < 0.1, r.refinement_change, "refining dt changes the smallest-eps tracking error by < 10%");
  return r;
}

}  // namespace bubbletrack
