#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "bubbletrack/errors.hpp"
#include "bubbletrack/harness.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace bubbletrack;

namespace {

struct Args {
  std::string config;
  std::string out;
  std::vector<double> epsilons;
  std::optional<std::uint64_t> seed;
};

std::string eps_dir(const std::string& out, double eps) {
  std::ostringstream os;
  os << out << "/eps_" << std::setprecision(6) << eps;
  fs::create_directories(os.str());
  return os.str();
}

ExperimentSetup setup_from(const Args& a) {
  ExperimentConfig cfg = load_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (!a.epsilons.empty()) cfg.epsilons = a.epsilons;
  return validate_config(cfg);
}

void write_json(const json& j, const std::string& out, const char* name) {
  std::cout << j.dump(2) << "\n";
  if (out.empty()) return;
  fs::create_directories(out);
  std::ofstream(out + "/" + name) << j.dump(2) << "\n";
}

json validation_json(const ValidationReport& v) {
  return {{"localization_margin", v.localization_margin},
          {"accessibility", v.accessibility},
          {"coupling_sigma_min", v.coupling_sigma_min},
          {"rank_fraction", v.rank_fraction},
          {"geometry", {{"c1", v.geometry.c1}, {"c2", v.geometry.c2}, {"d_min", v.geometry.d_min}, {"d_max", v.geometry.d_max}}},
          {"warnings", v.warnings}};
}

int cmd_validate(const Args& a) {
  const ExperimentSetup s = setup_from(a);
  write_json(validation_json(s.validation), a.out, "validation.json");
  return 0;
}

int cmd_spectrum(const Args& a) {
  const ExperimentSetup s = setup_from(a);
  json modes = json::array();
  for (const auto& m : s.modes.modes)
    modes.push_back({{"index", m.index}, {"lambda", m.lambda}, {"omega", m.omega}});
  json j = {{"modes", modes},
            {"target_omegas", s.target_omegas},
            {"coupling_sigma_min", s.L.sigma_min},
            {"coupling_sigma_max", s.L.sigma_max}};
  write_json(j, a.out, "spectrum.json");
  return 0;
}

int cmd_poles(const Args& a, bool with_gain) {
  const ExperimentSetup s = setup_from(a);
  for (double eps : s.cfg.epsilons) {
    const BubbleEnsemble e = tuned_ensemble(s, eps);
    const SMatrixEvaluator ev(e, s.cfg.domain.c0, s.array);
    std::vector<ClusterRecord> cl = cluster_poles(s, ev);
    const double g0 = s.cfg.g0 ? *s.cfg.g0 : measured_g0(cl, eps, s.cfg.exponent_p);
    assign_bands(s.cfg, cl, eps, g0);
    std::cout << "eps " << eps << "\n";
    for (const auto& c : cl)
      std::cout << "  cluster " << c.alpha << " pole " << c.pole.s.real() << (c.pole.s.imag() < 0 ? " - " : " + ")
                << std::abs(c.pole.s.imag()) << "i gap " << c.gap_measured << " band [" << c.band_lo << ", "
                << c.band_hi << "]\n";
    if (with_gain) {
      const auto gain = gain_sweep(ev, union_band(cl), s.cfg.gain_grid);
      double smin = std::numeric_limits<double>::infinity();
      for (const auto& g : gain) smin = std::min(smin, g.smin_hext);
      std::cout << "  min sigma_min(H_ext) " << smin << "\n";
      if (!a.out.empty()) write_gain_csv(gain, eps_dir(a.out, eps) + "/gain.csv");
    }
    if (!a.out.empty()) write_pole_csv(cl, eps_dir(a.out, eps) + "/poles.csv");
  }
  return 0;
}

// realize, simulate and track share one pipeline run per epsilon and differ
// in what they print and write.
enum class Stage { realize, simulate, track };

int cmd_run(const Args& a, Stage stage) {
  const ExperimentSetup s = setup_from(a);
  Report r;
  r.seed = s.cfg.seed;
  r.validation = s.validation;
  for (double eps : s.cfg.epsilons) {
    EpsilonRecord rec = run_tracking_experiment(s, eps);
    std::cout << "eps " << eps << " realization_error " << rec.realization_error << " control_cost "
              << rec.control_cost << " identity_defect " << rec.identity_defect;
    if (stage != Stage::realize) std::cout << " tracking_error " << rec.tracking_error;
    std::cout << "\n";
    if (!a.out.empty()) {
      const std::string d = eps_dir(a.out, eps);
      write_csv(rec.lambda, d + "/controls.csv");
      write_csv(rec.target, d + "/target.csv");
      if (stage != Stage::realize) write_csv(rec.Q, d + "/cluster_output.csv");
    }
    r.records.push_back(std::move(rec));
  }
  if (stage == Stage::track && !a.out.empty()) emit_report(r, a.out);
  return 0;
}

int cmd_sweep(const Args& a) {
  const ExperimentSetup s = setup_from(a);
  const Report r = epsilon_sweep(s);
  for (const auto& c : r.checks)
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " " << c.value << "\n";
  std::cout << "effective_model_gamma " << r.gamma << "\n";
  if (!a.out.empty()) emit_report(r, a.out);
  return r.all_passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acoustic field tracking with resonant bubble clusters"};
  app.require_subcommand(1);
  Args args;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", args.out, "output directory");
    sub->add_option("--epsilon", args.epsilons, "epsilon value, repeatable; overrides the config list");
    sub->add_option("--seed", seed, "seed override");
  };
  std::vector<std::pair<CLI::App*, std::function<int()>>> verbs = {
      {app.add_subcommand("validate", "check a config and print the validation report"), [&] { return cmd_validate(args); }},
      {app.add_subcommand("spectrum", "list the selected modes and coupling conditioning"), [&] { return cmd_spectrum(args); }},
      {app.add_subcommand("poles", "principal cluster poles per epsilon"), [&] { return cmd_poles(args, false); }},
      {app.add_subcommand("gain", "transfer gain sweep over the Minnaert bands"), [&] { return cmd_poles(args, true); }},
      {app.add_subcommand("realize", "synthesize transducer controls"), [&] { return cmd_run(args, Stage::realize); }},
      {app.add_subcommand("simulate", "drive the bubble ensemble with the synthesized controls"),
       [&] { return cmd_run(args, Stage::simulate); }},
      {app.add_subcommand("track", "end-to-end tracking run per epsilon"), [&] { return cmd_run(args, Stage::track); }},
      {app.add_subcommand("sweep", "epsilon sweep with scaling fits and checks"), [&] { return cmd_sweep(args); }},
  };
  for (auto& v : verbs) add_common(v.first);

  CLI11_PARSE(app, argc, argv);
  for (auto& v : verbs) {
    if (!v.first->parsed()) continue;
    if (v.first->get_option("--seed")->count() > 0) args.seed = seed;
    try {
      return v.second();
    } catch (const Error& e) {
      std::cerr << "error";
      if (!e.stage().empty()) std::cerr << " [" << e.stage() << "]";
      std::cerr << " " << e.what() << "\n";
      return e.family() == ErrorFamily::assumption ? 2 : 3;
    } catch (const std::exception& e) {
      std::cerr << "error " << e.what() << "\n";
      return 3;
    }
  }
  return 0;
}
