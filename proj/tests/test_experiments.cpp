#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nfisac/experiments.hpp"
#include "support.hpp"

using namespace nfisac;
using namespace nfisac::testing;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nfisac_" + name);
  fs::remove_all(p);
  return p;
}

// Small enough that a sweep cell takes well under a second.
SystemConfig tiny() { return small_config(8, 4, 2, 1, 2.0); }

}  // namespace

TEST_CASE("scenario generation is bit-identical per seed") {
  const SystemConfig cfg;
  const Scenario a = gen_scenario(cfg, 99), b = gen_scenario(cfg, 99), c = gen_scenario(cfg, 100);
  for (std::size_t k = 0; k < cfg.n_users; ++k) {
    CHECK(a.users[k].range_m == b.users[k].range_m);
    CHECK(a.comm_channels[k] == b.comm_channels[k]);
  }
  CHECK(a.users[0].range_m != c.users[0].range_m);
}

TEST_CASE("placement stays inside the near-field region") {
  const SystemConfig cfg;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Scenario s = gen_scenario(cfg, seed);
    for (const auto& u : s.users) {
      CHECK(u.range_m < 50.0);
      CHECK(u.range_m > 5.0);
      CHECK(std::abs(u.angle_rad) <= kPi / 3);
    }
    for (const auto& t : s.targets) CHECK(t.range_m < 50.0);
    for (const auto& l : s.scatterers)
      for (const auto& sc : l) {
        CHECK(sc.position.range_m >= 20.0);
        CHECK(sc.position.range_m <= 30.0);
        CHECK(sc.link_range_m > 0.0);
      }
  }
}

TEST_CASE("user ranges are uniform (Kolmogorov-Smirnov, 1%)") {
  SystemConfig cfg;
  cfg.n_users = 4;
  cfg.n_targets = 1;
  cfg.fit_reflect_coeffs();
  std::vector<double> r;
  for (std::uint64_t seed = 0; r.size() < 10000; ++seed) {
    for (const auto& u : gen_scenario(cfg, seed).users) r.push_back(u.range_m);
  }
  r.resize(10000);
  std::sort(r.begin(), r.end());
  const double n = static_cast<double>(r.size());
  double d = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double f = (r[i] - 5.0) / 45.0;
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  CHECK(d < 1.63 / std::sqrt(n));
}

TEST_CASE("scheme names round-trip; unknown names throw") {
  for (Scheme s : all_schemes()) CHECK(parse_scheme(to_string(s)) == s);
  CHECK_THROWS_AS(parse_scheme("noma_hybrid_nf"), std::invalid_argument);
  CHECK(trial_seed(10, 3) == (10u ^ 3u));
}

TEST_CASE("sweep spec and axis validation") {
  SweepSpec s;
  s.values = {1.0};
  s.schemes = {Scheme::kRsmaHybridNf};
  CHECK_NOTHROW(s.validate());
  SweepSpec bad = s;
  bad.axis = "bandwidth";
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = s;
  bad.values = {};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = s;
  bad.values = {2.0, 1.0};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = s;
  bad.trials = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = s;
  bad.schemes.clear();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  const SystemConfig cfg;
  CHECK(apply_axis(cfg, "power_dbm", 20.0).power_max_mw == doctest::Approx(100.0));
  CHECK(apply_axis(cfg, "n_targets", 3.0).reflect_coeffs.size() == 3);
  CHECK(apply_axis(cfg, "sense_rate_min", 6.0).sense_rate_min_bps == 6.0);
  CHECK_THROWS_AS(apply_axis(cfg, "n_rf", 2.5), std::invalid_argument);
  CHECK_THROWS_AS(apply_axis(cfg, "n_rf", 64.0), std::invalid_argument);  // more chains than antennas
  CHECK_THROWS_AS(apply_axis(cfg, "bandwidth", 1.0), std::invalid_argument);
}

TEST_CASE("one value, one trial, one scheme: a single CSV row") {
  SweepSpec spec;
  spec.axis = "power_dbm";
  spec.values = {30.0};
  spec.schemes = {Scheme::kSdmaHybridNf};
  const SweepResult res = run_sweep(spec, tiny(), OptimizerOptions{});
  REQUIRE(res.cells.size() == 1);
  CHECK(res.cells[0].failed == 0);
  const fs::path dir = scratch("single");
  write_sweep_csvs(spec, tiny(), res, dir.string());
  CHECK(lines(slurp(dir / "sweep_power_dbm.csv")) == 2);
  CHECK(lines(slurp(dir / "trials_power_dbm.csv")) == 2);
  CHECK(fs::exists(dir / "trace_sdma_hybrid_nf_power_dbm_30_trial0.csv"));
  fs::remove_all(dir);
}

TEST_CASE("sweeps are byte-deterministic and independent of the worker count") {
  SweepSpec spec;
  spec.axis = "sense_rate_min";
  spec.values = {1.0, 3.0};
  spec.trials = 2;
  spec.seed = 5;
  spec.schemes = {Scheme::kSdmaHybridNf, Scheme::kRsmaHybridNf};
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  write_sweep_csvs(spec, tiny(), run_sweep(spec, tiny(), OptimizerOptions{}), a.string());
  spec.workers = 3;
  write_sweep_csvs(spec, tiny(), run_sweep(spec, tiny(), OptimizerOptions{}), b.string());
  for (const auto& e : fs::directory_iterator(a)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("timing_", 0) == 0) continue;
    CHECK_MESSAGE(slurp(e.path()) == slurp(b / name), name);
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("mean rate grows with transmit power") {
  SweepSpec spec;
  spec.axis = "power_dbm";
  spec.values = {20.0, 25.0, 30.0};
  spec.trials = 3;
  spec.schemes = {Scheme::kRsmaHybridNf};
  SystemConfig cfg = tiny();
  cfg.sense_rate_min_bps = 1.0;
  const SweepResult res = run_sweep(spec, cfg, OptimizerOptions{});
  for (const auto& c : res.cells) REQUIRE(c.feasible == 3);
  CHECK(res.cells[1].mean_rate > res.cells[0].mean_rate);
  CHECK(res.cells[2].mean_rate > res.cells[1].mean_rate);
}

TEST_CASE("more RF chains close the hybrid / fully-digital gap") {
  SweepSpec spec;
  spec.axis = "n_rf";
  spec.values = {2.0, 8.0};
  spec.trials = 2;
  spec.schemes = {Scheme::kRsmaHybridNf, Scheme::kRsmaFullDigitalNf};
  const SweepResult res = run_sweep(spec, tiny(), OptimizerOptions{});
  auto gap = [&](std::size_t v) { return res.cells[2 + v].mean_rate - res.cells[v].mean_rate; };
  CHECK(gap(0) >= -1e-9);
  CHECK(gap(1) >= -1e-9);
  CHECK(gap(1) <= gap(0) + 1e-9);
}

TEST_CASE("infeasible counts never drop as the sensing threshold rises") {
  SweepSpec spec;
  spec.axis = "sense_rate_min";
  spec.values = {0.0, 10.0, 20.0, 40.0};
  spec.trials = 3;
  spec.schemes = {Scheme::kRsmaHybridNf};
  const SweepResult res = run_sweep(spec, tiny(), OptimizerOptions{});
  for (std::size_t v = 1; v < res.cells.size(); ++v) CHECK(res.cells[v].infeasible >= res.cells[v - 1].infeasible);
  CHECK(res.cells.front().infeasible == 0);
  CHECK(res.cells.back().infeasible == 3);
  for (const auto& c : res.cells) CHECK(c.failed == 0);
}

TEST_CASE("scheme chain orderings on one seed") {
  const SystemConfig cfg = tiny();
  const Scenario s = gen_scenario(cfg, 4);
  const auto m = run_schemes(all_schemes(), s, cfg, OptimizerOptions{});
  const double hyb = m.at(Scheme::kRsmaHybridNf).report.objective;
  CHECK(m.at(Scheme::kRsmaFullDigitalNf).report.objective >= hyb - 1e-9);
  CHECK(m.at(Scheme::kRsmaCommOnlyNf).report.objective >= hyb - 1e-9);
  CHECK(hyb >= m.at(Scheme::kSdmaHybridNf).report.objective - 1e-9);
  CHECK_FALSE(m.at(Scheme::kRsmaFullDigitalNf).hybrid);
  // sdma never puts power on the common stream
  CHECK(m.at(Scheme::kSdmaHybridNf).precoder.col(0).norm() == 0.0);
}

TEST_CASE("a single user gains nothing from the common stream") {
  const SystemConfig cfg = small_config(8, 4, 1, 1, 0.0);
  OptimizerOptions opts;
  opts.inner_tol = 1e-12;
  opts.inner_max = 1000;
  for (std::uint64_t seed : {1, 2, 3}) {
    const Scenario s = gen_scenario(cfg, seed);
    OptimizerOptions o = opts;
    o.mode = StreamMode::kSdma;
    const Solution sdma = optimize_fully_digital(s, cfg, o);
    o.mode = StreamMode::kRsma;
    const Solution rsma = optimize_fully_digital(s, cfg, o);
    CHECK(std::abs(sdma.report.objective - rsma.report.objective) <= 1e-3);
    // the SDMA point read with RSMA accounting: no common power, no common rate
    const RateReport again = best_report(sdma.precoder, StreamMode::kRsma, s, cfg);
    CHECK(again.common_rate == 0.0);
    CHECK(again.objective == sdma.report.objective);
  }
}
