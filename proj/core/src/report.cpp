#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "bubbletrack/errors.hpp"
#include "bubbletrack/harness.hpp"

namespace bubbletrack {

using json = nlohmann::json;

namespace {

constexpr Eigen::Index kMaxRows = 4000;

// NaN and infinities are not representable in JSON; they become null.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw assumption_error("IOError", "cannot write " + path);
  f << std::setprecision(17);
  return f;
}

Signal decimate(const Signal& s) {
  if (s.samples() <= kMaxRows) return s;
  const Eigen::Index stride = (s.samples() + kMaxRows - 1) / kMaxRows;
  Signal out;
  out.t0 = s.t0;
  out.dt = s.dt * static_cast<double>(stride);
  const Eigen::Index n = (s.samples() - 1) / stride + 1;
  out.data.resize(n, s.channels());
  for (Eigen::Index k = 0; k < n; ++k) out.data.row(k) = s.data.row(k * stride);
  return out;
}

json pole_json(const ClusterRecord& c) {
  return {{"alpha", c.alpha},
          {"target_omega", c.target_omega},
          {"tuned_omega_m", c.tuned_omega_m},
          {"re_s", c.pole.s.real()},
          {"im_s", c.pole.s.imag()},
          {"eta", c.pole.eta},
          {"residue_norm", num(c.pole.residue_norm)},
          {"newton_residual", c.pole.newton_residual},
          {"omega_pred", c.predicted.omega_pred},
          {"eta_pred", c.predicted.eta_pred},
          {"gap_pred", num(c.predicted.gap_pred)},
          {"shift_coeff", c.predicted.shift_coeff},
          {"gap_measured", num(c.gap_measured)},
          {"growth_pred", c.growth_pred},
          {"band", {c.band_lo, c.band_hi}},
          {"taper", c.taper}};
}

std::string eps_dir_name(double eps) {
  std::ostringstream name;
  name << "eps_" << std::setprecision(6) << eps;
  return name.str();
}

json record_json(const EpsilonRecord& r) {
  const std::string dir = eps_dir_name(r.eps);
  json artifacts = {{"summary", "summary.csv"}, {"poles", dir + "/poles.csv"}, {"gain", dir + "/gain.csv"}};
  if (r.target.samples() > 0) artifacts["target"] = dir + "/target.csv";
  if (r.Q.samples() > 0) artifacts["cluster_output"] = dir + "/cluster_output.csv";
  if (r.lambda.samples() > 0) artifacts["controls"] = dir + "/controls.csv";
  json clusters = json::array();
  for (const auto& c : r.clusters) clusters.push_back(pole_json(c));
  return {{"eps", r.eps},
          {"dt", r.dt},
          {"samples", r.samples},
          {"clusters", clusters},
          {"peak_norm_hb", r.peak_norm_hb},
          {"min_sigma_min_hext", num(r.min_smin_hext)},
          {"max_sigma_max_hext", num(r.max_smax_hext)},
          {"synthesis",
           {{"sigma_min", r.sigma_min},
            {"sigma_max", r.sigma_max},
            {"identity_defect", r.identity_defect},
            {"imag_residue", r.imag_residue},
            {"bins_used", r.bins_used}}},
          {"discarded_fraction", r.discarded},
          {"tracking_error", num(r.tracking_error)},
          {"tracking_error_cluster", num(r.tracking_error_cluster)},
          {"ideal_error", num(r.ideal_error)},
          {"realization_error", num(r.realization_error)},
          {"control_cost", num(r.control_cost)},
          {"cluster_reduction", num(r.cluster_reduction)},
          {"nonuniform_fraction", num(r.nonuniform_fraction)},
          {"artifacts", artifacts}};
}

}  // namespace

std::string report_to_json(const Report& r) {
  json j;
  j["schema_version"] = kReportSchemaVersion;
  j["seed"] = r.seed;
  if (r.validation) {
    const auto& v = *r.validation;
    j["validation"] = {{"localization_margin", v.localization_margin},
                       {"accessibility", v.accessibility},
                       {"coupling_sigma_min", v.coupling_sigma_min},
                       {"rank_fraction", v.rank_fraction},
                       {"geometry",
                        {{"c1", v.geometry.c1}, {"c2", v.geometry.c2}, {"d_min", v.geometry.d_min}, {"d_max", v.geometry.d_max}}},
                       {"warnings", v.warnings}};
  }
  j["g0"] = num(r.g0);
  json recs = json::array();
  for (const auto& rec : r.records) recs.push_back(record_json(rec));
  j["records"] = recs;
  if (r.refinement) {
    j["refinement"] = record_json(*r.refinement);
    j["refinement"].erase("artifacts");
  }
  j["fits"] = {{"effective_model_gamma", r.gamma},
               {"beta", r.beta},
               {"shift_slope", r.shift_slope},
               {"shift_coefficient", r.shift_coefficient},
               {"damping_slope", r.damping_slope},
               {"cost_ratio", r.cost_ratio},
               {"refinement_change", r.refinement_change}};
  json checks = json::array();
  for (const auto& c : r.checks)
    checks.push_back({{"name", c.name}, {"passed", c.passed}, {"value", num(c.value)}, {"requirement", c.requirement}});
  j["checks"] = checks;
  j["all_passed"] = r.all_passed();
  return j.dump(2);
}

void write_pole_csv(const std::vector<ClusterRecord>& clusters, const std::string& path) {
  auto f = open_out(path);
  f << "alpha,tuned_omega_m,re_s,im_s,eta,omega_pred,eta_pred,gap_pred,gap_measured,residue_norm,band_lo,band_hi\n";
  for (const auto& c : clusters)
    f << c.alpha << ',' << c.tuned_omega_m << ',' << c.pole.s.real() << ',' << c.pole.s.imag() << ',' << c.pole.eta << ','
      << c.predicted.omega_pred << ',' << c.predicted.eta_pred << ',' << c.predicted.gap_pred << ',' << c.gap_measured << ','
      << c.pole.residue_norm << ',' << c.band_lo << ',' << c.band_hi << '\n';
}

void write_gain_csv(const std::vector<GainSample>& gain, const std::string& path) {
  auto f = open_out(path);
  f << "omega,norm_hb,sigma_min_hext,sigma_max_hext\n";
  for (const auto& g : gain) f << g.omega << ',' << g.norm_hb << ',' << g.smin_hext << ',' << g.smax_hext << '\n';
}

void emit_report(const Report& r, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const fs::path root(out_dir);
  open_out((root / "report.json").string()) << report_to_json(r) << '\n';

  auto summary = open_out((root / "summary.csv").string());
  summary << "eps,dt,tracking_error,tracking_error_cluster,ideal_error,realization_error,control_cost,sigma_min,sigma_max,"
             "identity_defect,cluster_reduction\n";
  for (const auto& rec : r.records) {
    summary << rec.eps << ',' << rec.dt << ',' << rec.tracking_error << ',' << rec.tracking_error_cluster << ','
            << rec.ideal_error << ',' << rec.realization_error << ',' << rec.control_cost << ',' << rec.sigma_min << ','
            << rec.sigma_max << ',' << rec.identity_defect << ',' << rec.cluster_reduction << '\n';
  }

  for (const auto& rec : r.records) {
    const fs::path dir = root / eps_dir_name(rec.eps);
    fs::create_directories(dir);
    write_pole_csv(rec.clusters, (dir / "poles.csv").string());
    write_gain_csv(rec.gain, (dir / "gain.csv").string());
    if (rec.target.samples() > 0) write_csv(decimate(rec.target), (dir / "target.csv").string());
    if (rec.Q.samples() > 0) write_csv(decimate(rec.Q), (dir / "cluster_output.csv").string());
    if (rec.lambda.samples() > 0) write_csv(decimate(rec.lambda), (dir / "controls.csv").string());
  }

  auto anchors = open_out((root / "anchors.txt").string());
  anchors << "fitted effective-model gamma (tracking error ~ eps^gamma): " << r.gamma << '\n'
          << "realization error slope beta: " << r.beta << '\n'
          << "pole shift slope (expected 1 - p): " << r.shift_slope << '\n'
          << "pole shift coefficient: " << r.shift_coefficient << '\n'
          << "damping slope (expected 1): " << r.damping_slope << '\n'
          << "control cost ratio max/min: " << r.cost_ratio << '\n'
          << "dt refinement relative change: " << r.refinement_change << '\n';
  for (const auto& c : r.checks) anchors << (c.passed ? "PASS " : "FAIL ") << c.name << " = " << c.value << '\n';
}

}  // namespace bubbletrack
