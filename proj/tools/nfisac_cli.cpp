// nfisac_cli: scenario generation, single solves, sweeps and reconstruction checks.
//
//   nfisac_cli gen    --seed 7 --out run/
//   nfisac_cli solve  --scenario run/scenario.json --scheme rsma_hybrid_nf --out run/
//   nfisac_cli sweep  --spec sweep.json --trials 5 --out run/sweep
//   nfisac_cli verify --scenario run/scenario.json --solution run/solution.json --out run/

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "nfisac/experiments.hpp"
#include "nfisac/io.hpp"
#include "nfisac/reconstruction.hpp"

namespace fs = std::filesystem;
using namespace nfisac;

namespace {

struct Common {
  std::string config;
  std::string profile = "desk";
  std::uint64_t seed = 1;
  std::string out = ".";
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "SystemConfig JSON overriding the profile");
  app->add_option("--profile", c.profile, "desk|paper")->check(CLI::IsMember({"desk", "paper"}));
  app->add_option("--seed", c.seed, "Base seed");
  app->add_option("--out", c.out, "Output directory");
}

SystemConfig load_config(const Common& c) {
  SystemConfig cfg = make_profile(parse_profile(c.profile));
  if (!c.config.empty()) cfg = config_from_json(json::parse(read_text(c.config)), cfg);
  cfg.validate();
  return cfg;
}

fs::path out_dir(const Common& c) {
  fs::create_directories(c.out);
  return fs::path(c.out);
}

Scenario load_or_generate(const std::string& path, const SystemConfig& cfg, std::uint64_t seed) {
  if (path.empty()) return gen_scenario(cfg, seed);
  return scenario_from_json(json::parse(read_text(path)), cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RSMA near-field ISAC hybrid beamforming"};
  app.require_subcommand(1);

  Common gen_c;
  bool with_channels = false;
  auto* gen = app.add_subcommand("gen", "Write a random scenario JSON");
  add_common(gen, gen_c);
  gen->add_flag("--channels", with_channels, "Inline the synthesized channels");

  Common solve_c;
  std::string solve_scenario;
  std::string scheme = "rsma_hybrid_nf";
  int solve_trials = 1;
  auto* solve = app.add_subcommand("solve", "Optimize one scenario");
  add_common(solve, solve_c);
  solve->add_option("--scenario", solve_scenario, "Scenario JSON (default: generate from --seed)");
  solve->add_option("--scheme", scheme, "Scheme name");
  solve->add_option("--trials", solve_trials, "Consecutive seeds to solve")->check(CLI::PositiveNumber);

  Common sweep_c;
  std::string spec_path;
  std::vector<std::string> sweep_schemes;
  int sweep_trials = 0;
  std::size_t workers = 0;
  bool sweep_seed_given = false;
  auto* sweep = app.add_subcommand("sweep", "Monte-Carlo sweep from a SweepSpec JSON");
  add_common(sweep, sweep_c);
  sweep->add_option("--spec", spec_path, "SweepSpec JSON")->required();
  sweep->add_option("--scheme", sweep_schemes, "Override schemes (repeatable)");
  sweep->add_option("--trials", sweep_trials, "Override the trial count");
  sweep->add_option("--workers", workers, "Worker threads");

  Common verify_c;
  std::string verify_scenario, verify_solution;
  double split = 0.5;
  auto* verify = app.add_subcommand("verify", "Merge / rank-reduction checks on a solution");
  add_common(verify, verify_c);
  verify->add_option("--scenario", verify_scenario, "Scenario JSON")->required();
  verify->add_option("--solution", verify_solution, "Solution JSON")->required();
  verify->add_option("--split-sensing", split,
                     "Fraction of the common-stream covariance moved into a dedicated sensing covariance")
      ->check(CLI::Range(0.0, 1.0));

  CLI11_PARSE(app, argc, argv);
  sweep_seed_given = sweep->count("--seed") > 0;

  try {
    if (*gen) {
      const SystemConfig cfg = load_config(gen_c);
      const Scenario s = gen_scenario(cfg, gen_c.seed);
      const fs::path dir = out_dir(gen_c);
      write_text((dir / "scenario.json").string(), scenario_to_json(s, with_channels).dump(2) + "\n");
      write_text((dir / "config.json").string(), config_to_json(cfg).dump(2) + "\n");
      std::cout << "wrote " << (dir / "scenario.json").string() << "\n";
    } else if (*solve) {
      const SystemConfig cfg = load_config(solve_c);
      const Scheme sch = parse_scheme(scheme);
      const fs::path dir = out_dir(solve_c);
      for (int t = 0; t < solve_trials; ++t) {
        const std::uint64_t seed = solve_c.seed + static_cast<std::uint64_t>(t);
        const Scenario s = load_or_generate(solve_scenario, cfg, seed);
        OptimizerOptions opts;
        opts.seed = seed;
        const Solution sol = run_schemes({sch}, s, cfg, opts).at(sch);
        const std::string tag = solve_trials == 1 ? "" : "_" + std::to_string(seed);
        write_text((dir / ("solution" + tag + ".json")).string(), solution_to_json(sol).dump(2) + "\n");
        write_trace_csv(sol, (dir / ("trace" + tag + ".csv")).string());
        std::cout << scheme << " seed=" << seed << " status=" << sol.status
                  << " feasible=" << sol.feasible << " max_min_rate=" << sol.report.objective
                  << " outer=" << sol.outer_iterations << " residual=" << sol.residual_inf << "\n";
      }
    } else if (*sweep) {
      const SystemConfig cfg = load_config(sweep_c);
      SweepSpec spec = sweep_spec_from_json(json::parse(read_text(spec_path)));
      if (!sweep_schemes.empty()) {
        spec.schemes.clear();
        for (const auto& n : sweep_schemes) spec.schemes.push_back(parse_scheme(n));
      }
      if (sweep_trials > 0) spec.trials = static_cast<std::size_t>(sweep_trials);
      if (sweep_seed_given) spec.seed = sweep_c.seed;
      if (workers > 0) spec.workers = workers;
      spec.validate();
      const SweepResult res = run_sweep(spec, cfg, OptimizerOptions{});
      write_sweep_csvs(spec, cfg, res, out_dir(sweep_c).string());
      for (const auto& c : res.cells) {
        std::cout << to_string(c.scheme) << " " << spec.axis << "=" << c.value
                  << " mean_rate=" << c.mean_rate << " feasible=" << c.feasible
                  << " infeasible=" << c.infeasible << " failed=" << c.failed << "\n";
      }
    } else if (*verify) {
      const SystemConfig cfg = load_config(verify_c);
      const Scenario s = scenario_from_json(json::parse(read_text(verify_scenario)), cfg);
      const Solution sol = solution_from_json(json::parse(read_text(verify_solution)));
      if (!sol.hybrid) throw std::invalid_argument("verify needs a hybrid solution (analog + digital)");
      CovarianceSolution cov = covariance_from_hybrid(sol.beamformer.analog, sol.beamformer.digital, CMat());
      cov.sense_cov = split * cov.comm_covs[0];
      cov.comm_covs[0] *= 1.0 - split;
      const VerificationReport rep = verify_no_sensing_beams(cov, s, cfg);
      const fs::path dir = out_dir(verify_c);
      write_text((dir / "verify.json").string(), verification_to_json(rep).dump(2) + "\n");
      std::cout << "status=" << rep.status << " passed=" << rep.passed
                << " objective_before=" << rep.objective_before
                << " objective_after=" << rep.objective_after << "\n";
      return rep.passed ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
