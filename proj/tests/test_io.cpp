#include <doctest.h>

#include <filesystem>
#include <random>

#include "nfisac/io.hpp"
#include "support.hpp"

using namespace nfisac;
using namespace nfisac::testing;

TEST_CASE("complex matrices survive a JSON round trip exactly") {
  std::mt19937_64 rng(1);
  const CMat m = random_cmat(3, 5, rng);
  const json j = json::parse(to_json(m).dump());
  CHECK(cmat_from_json(j) == m);
  CHECK_THROWS_AS(cmat_from_json(json{{"re", {{1.0, 2.0}}}, {"im", {{1.0}}}}), std::invalid_argument);
}

TEST_CASE("config round trip; dBm and mW inputs agree") {
  SystemConfig c = make_profile(Profile::kPaper);
  c.sic_residual = 0.05;
  const SystemConfig back = config_from_json(json::parse(config_to_json(c).dump()), SystemConfig{});
  CHECK(back.n_tx == 64);
  CHECK(back.n_targets == 4);
  CHECK(back.reflect_coeffs.size() == 4);
  CHECK(back.power_max_mw == c.power_max_mw);
  CHECK(back.sic_residual == 0.05);

  const SystemConfig a = config_from_json(json{{"power_dbm", 20.0}, {"noise_comm_dbm", -90.0}}, SystemConfig{});
  CHECK(a.power_max_mw == doctest::Approx(100.0));
  CHECK(a.noise_comm_mw == doctest::Approx(1e-9));
  const SystemConfig b = config_from_json(json{{"n_targets", 3}}, SystemConfig{});
  CHECK(b.reflect_coeffs.size() == 3);
  CHECK_THROWS_AS(config_from_json(json{{"n_rf", 0}}, SystemConfig{}), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(json{{"schema", "nfisac.scenario/1"}}, SystemConfig{}), std::invalid_argument);
}

TEST_CASE("scenario round trip re-synthesizes the same channels") {
  const SystemConfig cfg;
  const Scenario s = gen_scenario(cfg, 8);
  const json j = json::parse(scenario_to_json(s, true).dump());
  CHECK(j.at("schema") == kScenarioSchema);
  CHECK(j.at("channels").at("comm").size() == cfg.n_users);
  const Scenario t = scenario_from_json(j, cfg);
  for (std::size_t k = 0; k < cfg.n_users; ++k) {
    CHECK((t.comm_channels[k] - s.comm_channels[k]).norm() <= 1e-9 * s.comm_channels[k].norm());
  }
  for (std::size_t m = 0; m < cfg.n_targets; ++m) {
    CHECK((t.sense_channels[m] - s.sense_channels[m]).norm() <= 1e-9 * s.sense_channels[m].norm());
  }
  json ff = j;
  ff["model"] = "far_field";
  CHECK(scenario_from_json(ff, cfg).model == ArrayModel::kFarField);
  ff["model"] = "spherical";
  CHECK_THROWS_AS(scenario_from_json(ff, cfg), std::invalid_argument);
}

TEST_CASE("solution round trip") {
  std::mt19937_64 rng(2);
  Solution s;
  s.beamformer.analog = random_phases(6, 3, rng);
  s.beamformer.digital = random_cmat(3, 3, rng);
  s.precoder = s.beamformer.product();
  s.alloc.shares = {0.25, 0.5};
  s.filters.filters = {random_unit(6, rng)};
  s.status = "converged";
  s.feasible = true;
  s.outer_iterations = 7;
  s.residual_inf = 3e-5;
  const Solution t = solution_from_json(json::parse(solution_to_json(s).dump()));
  CHECK((t.beamformer.analog - s.beamformer.analog).norm() < 1e-12);
  CHECK(t.beamformer.digital == s.beamformer.digital);
  CHECK(t.precoder == s.precoder);
  CHECK(t.alloc.shares == s.alloc.shares);
  CHECK(t.filters.filters[0] == s.filters.filters[0]);
  CHECK(t.status == "converged");
  CHECK(t.outer_iterations == 7);
  CHECK(t.residual_inf == 3e-5);
}

TEST_CASE("sweep spec round trip and defaults") {
  SweepSpec s;
  s.axis = "n_rf";
  s.values = {2, 4, 8};
  s.trials = 5;
  s.seed = 11;
  s.schemes = {Scheme::kRsmaHybridNf, Scheme::kRsmaFullDigitalNf};
  s.trace_trials = {0, 3};
  const SweepSpec t = sweep_spec_from_json(json::parse(sweep_spec_to_json(s).dump()));
  CHECK(t.axis == "n_rf");
  CHECK(t.values == s.values);
  CHECK(t.trials == 5);
  CHECK(t.seed == 11);
  CHECK(t.schemes == s.schemes);
  CHECK(t.trace_trials == s.trace_trials);

  const SweepSpec d = sweep_spec_from_json(json{{"values", {20.0}}});
  CHECK(d.axis == "power_dbm");
  CHECK(d.schemes.size() == 1);
  CHECK_THROWS_AS(sweep_spec_from_json(json{{"values", {20.0}}, {"schemes", {"x"}}}), std::invalid_argument);
}

TEST_CASE("trace CSV") {
  Solution s;
  s.trace.push_back({1, 4, 9.5, 1e-3, 9.4, 4.1, 1.0});
  s.trace.push_back({2, 2, 9.6, 1e-5, 9.6, 4.0, 0.8});
  const auto path = (std::filesystem::temp_directory_path() / "nfisac_trace.csv").string();
  write_trace_csv(s, path);
  const std::string text = read_text(path);
  CHECK(text.rfind(trace_csv_header() + "\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
  CHECK_THROWS_AS(read_text("/nonexistent/dir/file"), std::runtime_error);
  std::filesystem::remove(path);
}
