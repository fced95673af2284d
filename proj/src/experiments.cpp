#include "nfisac/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "nfisac/io.hpp"

namespace nfisac {

namespace {

const std::vector<std::pair<Scheme, std::string>>& scheme_names() {
  static const std::vector<std::pair<Scheme, std::string>> names = {
      {Scheme::kRsmaHybridNf, "rsma_hybrid_nf"},
      {Scheme::kRsmaFullDigitalNf, "rsma_fulldigital_nf"},
      {Scheme::kSdmaHybridNf, "sdma_hybrid_nf"},
      {Scheme::kRsmaCommOnlyNf, "rsma_commonly_nf"},
      {Scheme::kRsmaHybridFf, "rsma_hybrid_ff"},
  };
  return names;
}

bool contains(const std::vector<Scheme>& v, Scheme s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::size_t as_count(double v, const char* what) {
  if (!(v >= 1.0) || std::floor(v) != v) {
    throw std::invalid_argument(std::string("apply_axis: ") + what + " must be a positive integer");
  }
  return static_cast<std::size_t>(v);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

}  // namespace

Scheme parse_scheme(const std::string& name) {
  for (const auto& [s, n] : scheme_names()) {
    if (n == name) return s;
  }
  throw std::invalid_argument("unknown scheme '" + name + "'");
}

std::string to_string(Scheme s) {
  for (const auto& [k, n] : scheme_names()) {
    if (k == s) return n;
  }
  return "unknown";
}

const std::vector<Scheme>& all_schemes() {
  static const std::vector<Scheme> all = {Scheme::kRsmaHybridNf, Scheme::kRsmaFullDigitalNf,
                                          Scheme::kSdmaHybridNf, Scheme::kRsmaCommOnlyNf,
                                          Scheme::kRsmaHybridFf};
  return all;
}

Scenario gen_scenario(const SystemConfig& cfg, std::uint64_t seed, const PlacementSpec& place) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const double rmax = rayleigh_distance(cfg.tx_aperture_m(), cfg.wavelength_m);
  const double amax = place.max_angle_deg * kPi / 180.0;
  std::uniform_real_distribution<double> range(place.min_range_m, rmax);
  std::uniform_real_distribution<double> angle(-amax, amax);
  std::uniform_real_distribution<double> srange(place.scatterer_min_m, place.scatterer_max_m);
  auto draw = [&](std::uniform_real_distribution<double>& rd) {
    PolarCoord c;
    c.range_m = rd(rng);
    c.angle_rad = angle(rng);
    return c;
  };
  std::vector<PolarCoord> users;
  for (std::size_t k = 0; k < cfg.n_users; ++k) users.push_back(draw(range));
  std::vector<PolarCoord> targets;
  for (std::size_t m = 0; m < cfg.n_targets; ++m) targets.push_back(draw(range));
  std::vector<std::vector<Scatterer>> scat(cfg.n_users);
  for (std::size_t k = 0; k < cfg.n_users; ++k) {
    for (std::size_t l = 0; l < cfg.n_scatterers; ++l) {
      Scatterer s;
      s.position = draw(srange);
      s.link_range_m = polar_distance(s.position, users[k]);
      scat[k].push_back(s);
    }
  }
  return synthesize(std::move(users), std::move(scat), std::move(targets), cfg);
}

Solution run_baseline(Scheme scheme, const Scenario& scenario, const SystemConfig& cfg,
                      const OptimizerOptions& opts, const Solution* warm) {
  OptimizerOptions o = opts;
  switch (scheme) {
    case Scheme::kRsmaHybridNf:
      o.mode = StreamMode::kRsma;
      return outer_loop(scenario, cfg, o, warm);
    case Scheme::kSdmaHybridNf:
      o.mode = StreamMode::kSdma;
      return outer_loop(scenario, cfg, o, warm);
    case Scheme::kRsmaFullDigitalNf:
      o.mode = StreamMode::kRsma;
      return optimize_fully_digital(scenario, cfg, o, warm);
    case Scheme::kRsmaCommOnlyNf: {
      SystemConfig c = cfg;
      c.sense_rate_min_bps = 0.0;
      o.mode = StreamMode::kRsma;
      return outer_loop(scenario, c, o, warm);
    }
    case Scheme::kRsmaHybridFf: {
      o.mode = StreamMode::kRsma;
      const Scenario ff = scenario.model == ArrayModel::kFarField
                              ? scenario
                              : with_model(scenario, cfg, ArrayModel::kFarField);
      return outer_loop(ff, cfg, o, warm);
    }
  }
  throw std::invalid_argument("run_baseline: unknown scheme");
}

std::map<Scheme, Solution> run_schemes(const std::vector<Scheme>& schemes, const Scenario& scenario,
                                       const SystemConfig& cfg, const OptimizerOptions& opts) {
  std::map<Scheme, Solution> out;
  const Solution* sdma = nullptr;
  if (contains(schemes, Scheme::kSdmaHybridNf)) {
    out[Scheme::kSdmaHybridNf] = run_baseline(Scheme::kSdmaHybridNf, scenario, cfg, opts);
    sdma = &out[Scheme::kSdmaHybridNf];
  }
  const Solution* rsma = nullptr;
  if (contains(schemes, Scheme::kRsmaHybridNf)) {
    out[Scheme::kRsmaHybridNf] = run_baseline(Scheme::kRsmaHybridNf, scenario, cfg, opts, sdma);
    rsma = &out[Scheme::kRsmaHybridNf];
  }
  if (contains(schemes, Scheme::kRsmaFullDigitalNf)) {
    out[Scheme::kRsmaFullDigitalNf] = run_baseline(Scheme::kRsmaFullDigitalNf, scenario, cfg, opts, rsma);
  }
  if (contains(schemes, Scheme::kRsmaCommOnlyNf)) {
    out[Scheme::kRsmaCommOnlyNf] = run_baseline(Scheme::kRsmaCommOnlyNf, scenario, cfg, opts, rsma);
  }
  if (contains(schemes, Scheme::kRsmaHybridFf)) {
    out[Scheme::kRsmaHybridFf] = run_baseline(Scheme::kRsmaHybridFf, scenario, cfg, opts);
  }
  return out;
}

void SweepSpec::validate() const {
  static const std::vector<std::string> axes = {"power_dbm", "n_rf", "n_users", "n_targets",
                                                "sense_rate_min"};
  if (std::find(axes.begin(), axes.end(), axis) == axes.end()) {
    throw std::invalid_argument("SweepSpec: unknown axis '" + axis + "'");
  }
  if (values.empty()) throw std::invalid_argument("SweepSpec: values must be non-empty");
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (!(values[i - 1] < values[i])) throw std::invalid_argument("SweepSpec: values must be sorted");
  }
  if (trials < 1) throw std::invalid_argument("SweepSpec: trials must be >= 1");
  if (schemes.empty()) throw std::invalid_argument("SweepSpec: at least one scheme");
  if (workers < 1) throw std::invalid_argument("SweepSpec: workers must be >= 1");
}

SystemConfig apply_axis(const SystemConfig& base, const std::string& axis, double value) {
  SystemConfig c = base;
  if (axis == "power_dbm") {
    c.power_max_mw = dbm_to_mw(value);
  } else if (axis == "n_rf") {
    c.n_rf = as_count(value, "n_rf");
  } else if (axis == "n_users") {
    c.n_users = as_count(value, "n_users");
  } else if (axis == "n_targets") {
    c.n_targets = as_count(value, "n_targets");
    c.fit_reflect_coeffs();
  } else if (axis == "sense_rate_min") {
    c.sense_rate_min_bps = value;
  } else {
    throw std::invalid_argument("apply_axis: unknown axis '" + axis + "'");
  }
  c.validate();
  return c;
}

SweepResult run_sweep(const SweepSpec& spec, const SystemConfig& cfg, const OptimizerOptions& opts) {
  spec.validate();
  const std::size_t nv = spec.values.size();
  const std::size_t nt = spec.trials;
  const std::size_t ns = spec.schemes.size();
  // Canonical slot of (scheme, value, trial).
  auto slot = [&](std::size_t s, std::size_t v, std::size_t t) { return (s * nv + v) * nt + t; };
  std::vector<TrialRecord> records(ns * nv * nt);

  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    while (true) {
      const std::size_t task = next.fetch_add(1);
      if (task >= nv * nt) return;
      const std::size_t v = task / nt;
      const std::size_t t = task % nt;
      const std::uint64_t seed = trial_seed(spec.seed, t);
      for (std::size_t s = 0; s < ns; ++s) {
        TrialRecord& r = records[slot(s, v, t)];
        r.scheme = spec.schemes[s];
        r.value = spec.values[v];
        r.trial = t;
        r.seed = seed;
      }
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const SystemConfig c = apply_axis(cfg, spec.axis, spec.values[v]);
        const Scenario scn = gen_scenario(c, seed);
        OptimizerOptions o = opts;
        o.seed = seed;
        std::map<Scheme, Solution> sols = run_schemes(spec.schemes, scn, c, o);
        for (std::size_t s = 0; s < ns; ++s) {
          records[slot(s, v, t)].solution = std::move(sols[spec.schemes[s]]);
        }
      } catch (const std::exception& e) {
        for (std::size_t s = 0; s < ns; ++s) {
          records[slot(s, v, t)].failed = true;
          records[slot(s, v, t)].error = e.what();
        }
      }
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      for (std::size_t s = 0; s < ns; ++s) records[slot(s, v, t)].wall_seconds = secs / static_cast<double>(ns);
    }
  };
  const std::size_t nw = std::min(spec.workers, nv * nt);
  if (nw <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < nw; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  SweepResult res;
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t v = 0; v < nv; ++v) {
      SweepCell cell;
      cell.scheme = spec.schemes[s];
      cell.value = spec.values[v];
      cell.trials = nt;
      std::vector<double> rates;
      double outer = 0.0;
      std::size_t ran = 0;
      for (std::size_t t = 0; t < nt; ++t) {
        const TrialRecord& r = records[slot(s, v, t)];
        cell.wall_seconds += r.wall_seconds;
        if (r.failed) {
          ++cell.failed;
          continue;
        }
        ++ran;
        outer += r.solution.outer_iterations;
        if (r.solution.feasible) {
          rates.push_back(r.solution.report.objective);
        } else {
          ++cell.infeasible;
        }
      }
      cell.feasible = rates.size();
      if (!rates.empty()) {
        double sum = 0.0;
        for (double x : rates) sum += x;
        cell.mean_rate = sum / static_cast<double>(rates.size());
        if (rates.size() > 1) {
          double ss = 0.0;
          for (double x : rates) ss += (x - cell.mean_rate) * (x - cell.mean_rate);
          const double n = static_cast<double>(rates.size());
          cell.std_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
        }
      }
      if (ran > 0) cell.mean_outer_iterations = outer / static_cast<double>(ran);
      res.cells.push_back(cell);
    }
  }
  res.trials = std::move(records);
  return res;
}

void write_sweep_csvs(const SweepSpec& spec, const SystemConfig& cfg, const SweepResult& result,
                      const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path base(dir);
  auto open = [&](const std::string& name) {
    std::ofstream f(base / name);
    if (!f) throw std::runtime_error("cannot write " + (base / name).string());
    return f;
  };
  {
    std::ofstream f = open("sweep_" + spec.axis + ".csv");
    f << "scheme,axis,value,power_dbm,power_mw,trials,feasible,infeasible,failed,mean_rate,"
         "std_error,mean_outer_iterations\n";
    for (const auto& c : result.cells) {
      const SystemConfig pc = apply_axis(cfg, spec.axis, c.value);
      f << to_string(c.scheme) << ',' << spec.axis << ',' << fmt(c.value) << ','
        << fmt(mw_to_dbm(pc.power_max_mw)) << ',' << fmt(pc.power_max_mw) << ',' << c.trials << ','
        << c.feasible << ',' << c.infeasible << ',' << c.failed << ',' << fmt(c.mean_rate) << ','
        << fmt(c.std_error) << ',' << fmt(c.mean_outer_iterations) << '\n';
    }
  }
  {
    std::ofstream f = open("trials_" + spec.axis + ".csv");
    f << "scheme,value,trial,seed,status,feasible,max_min_rate,min_sensing_rate,power_mw,"
         "outer_iterations,inner_iterations,residual_inf\n";
    for (const auto& r : result.trials) {
      const auto& s = r.solution;
      double min_sense = 0.0;
      if (!s.report.sensing_rates.empty()) {
        min_sense = *std::min_element(s.report.sensing_rates.begin(), s.report.sensing_rates.end());
      }
      f << to_string(r.scheme) << ',' << fmt(r.value) << ',' << r.trial << ',' << r.seed << ','
        << (r.failed ? "failed" : s.status) << ',' << (!r.failed && s.feasible ? 1 : 0) << ','
        << fmt(r.failed ? 0.0 : s.report.objective) << ',' << fmt(r.failed ? 0.0 : min_sense) << ','
        << fmt(r.failed ? 0.0 : s.report.power_mw) << ',' << s.outer_iterations << ','
        << s.inner_iterations << ',' << fmt(s.residual_inf) << '\n';
    }
  }
  {
    std::ofstream f = open("timing_" + spec.axis + ".csv");
    f << "scheme,value,trial,wall_seconds\n";
    for (const auto& r : result.trials) {
      f << to_string(r.scheme) << ',' << fmt(r.value) << ',' << r.trial << ',' << fmt(r.wall_seconds)
        << '\n';
    }
  }
  for (const auto& r : result.trials) {
    if (r.failed) continue;
    if (std::find(spec.trace_trials.begin(), spec.trace_trials.end(), r.trial) ==
        spec.trace_trials.end()) {
      continue;
    }
    std::ostringstream name;
    name << "trace_" << to_string(r.scheme) << '_' << spec.axis << '_' << fmt(r.value) << "_trial"
         << r.trial << ".csv";
    write_trace_csv(r.solution, (base / name.str()).string());
  }
}

}  // namespace nfisac
