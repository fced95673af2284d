#include "nfisac/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nfisac {

namespace {

constexpr double kDeg = 180.0 / kPi;

std::string model_name(ArrayModel m) { return m == ArrayModel::kNearField ? "near_field" : "far_field"; }

ArrayModel parse_model(const std::string& s) {
  if (s == "near_field") return ArrayModel::kNearField;
  if (s == "far_field") return ArrayModel::kFarField;
  throw std::invalid_argument("unknown array model '" + s + "'");
}

json polar_json(const PolarCoord& c) { return {{"range_m", c.range_m}, {"angle_deg", c.angle_rad * kDeg}}; }

PolarCoord polar_from(const json& j) {
  return {j.at("range_m").get<double>(), j.at("angle_deg").get<double>() / kDeg};
}

void check_schema(const json& j, const char* expected) {
  if (j.contains("schema") && j.at("schema").get<std::string>() != expected) {
    throw std::invalid_argument("expected schema " + std::string(expected) + ", got " +
                                j.at("schema").get<std::string>());
  }
}

json cvec_json(const CVec& v) {
  json re = json::array(), im = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    re.push_back(v(i).real());
    im.push_back(v(i).imag());
  }
  return {{"re", re}, {"im", im}};
}

CVec cvec_from(const json& j) {
  const auto re = j.at("re").get<std::vector<double>>();
  const auto im = j.at("im").get<std::vector<double>>();
  if (re.size() != im.size()) throw std::invalid_argument("complex vector: re/im length mismatch");
  CVec v(static_cast<Eigen::Index>(re.size()));
  for (std::size_t i = 0; i < re.size(); ++i) v(static_cast<Eigen::Index>(i)) = cplx(re[i], im[i]);
  return v;
}

}  // namespace

json to_json(const CMat& m) {
  json re = json::array(), im = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r, q;
    for (Eigen::Index k = 0; k < m.cols(); ++k) {
      r.push_back(m(i, k).real());
      q.push_back(m(i, k).imag());
    }
    re.push_back(r);
    im.push_back(q);
  }
  return {{"re", re}, {"im", im}};
}

CMat cmat_from_json(const json& j) {
  const auto re = j.at("re").get<std::vector<std::vector<double>>>();
  const auto im = j.at("im").get<std::vector<std::vector<double>>>();
  if (re.size() != im.size()) throw std::invalid_argument("complex matrix: re/im shape mismatch");
  const auto rows = static_cast<Eigen::Index>(re.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(re[0].size()) : 0;
  CMat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& r = re[static_cast<std::size_t>(i)];
    const auto& q = im[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(r.size()) != cols || q.size() != r.size()) {
      throw std::invalid_argument("complex matrix: ragged rows");
    }
    for (Eigen::Index k = 0; k < cols; ++k) {
      m(i, k) = cplx(r[static_cast<std::size_t>(k)], q[static_cast<std::size_t>(k)]);
    }
  }
  return m;
}

json config_to_json(const SystemConfig& c) {
  return {{"schema", kConfigSchema},
          {"n_tx", c.n_tx},
          {"n_rx", c.n_rx},
          {"n_rf", c.n_rf},
          {"n_users", c.n_users},
          {"n_targets", c.n_targets},
          {"n_scatterers", c.n_scatterers},
          {"spacing_m", c.spacing_m},
          {"carrier_hz", c.carrier_hz},
          {"wavelength_m", c.wavelength_m},
          {"power_mw", c.power_max_mw},
          {"power_dbm", mw_to_dbm(c.power_max_mw)},
          {"noise_comm_mw", c.noise_comm_mw},
          {"noise_sense_mw", c.noise_sense_mw},
          {"sense_rate_min_bps", c.sense_rate_min_bps},
          {"reflect_coeffs", c.reflect_coeffs},
          {"sic_residual", c.sic_residual}};
}

SystemConfig config_from_json(const json& j, SystemConfig c) {
  check_schema(j, kConfigSchema);
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("n_tx", c.n_tx);
  get("n_rx", c.n_rx);
  get("n_rf", c.n_rf);
  get("n_users", c.n_users);
  get("n_targets", c.n_targets);
  get("n_scatterers", c.n_scatterers);
  get("spacing_m", c.spacing_m);
  if (j.contains("carrier_hz")) {
    c.carrier_hz = j.at("carrier_hz").get<double>();
    c.wavelength_m = kSpeedOfLight / c.carrier_hz;
  }
  get("wavelength_m", c.wavelength_m);
  if (j.contains("power_dbm")) c.power_max_mw = dbm_to_mw(j.at("power_dbm").get<double>());
  get("power_mw", c.power_max_mw);
  if (j.contains("noise_comm_dbm")) c.noise_comm_mw = dbm_to_mw(j.at("noise_comm_dbm").get<double>());
  if (j.contains("noise_sense_dbm")) c.noise_sense_mw = dbm_to_mw(j.at("noise_sense_dbm").get<double>());
  get("noise_comm_mw", c.noise_comm_mw);
  get("noise_sense_mw", c.noise_sense_mw);
  get("sense_rate_min_bps", c.sense_rate_min_bps);
  get("sic_residual", c.sic_residual);
  if (j.contains("reflect_coeffs")) {
    c.reflect_coeffs = j.at("reflect_coeffs").get<std::vector<double>>();
  } else {
    c.fit_reflect_coeffs();
  }
  c.validate();
  return c;
}

json scenario_to_json(const Scenario& s, bool with_channels) {
  json users = json::array(), targets = json::array(), scat = json::array();
  for (const auto& u : s.users) users.push_back(polar_json(u));
  for (const auto& t : s.targets) targets.push_back(polar_json(t));
  for (const auto& list : s.scatterers) {
    json l = json::array();
    for (const auto& sc : list) {
      json e = polar_json(sc.position);
      e["link_range_m"] = sc.link_range_m;
      l.push_back(e);
    }
    scat.push_back(l);
  }
  json j = {{"schema", kScenarioSchema},
            {"model", model_name(s.model)},
            {"users", users},
            {"targets", targets},
            {"scatterers", scat}};
  if (with_channels) {
    json comm = json::array(), sense = json::array();
    for (const auto& h : s.comm_channels) comm.push_back(cvec_json(h));
    for (const auto& g : s.sense_channels) sense.push_back(to_json(g));
    j["channels"] = {{"comm", comm}, {"sense", sense}};
  }
  return j;
}

Scenario scenario_from_json(const json& j, const SystemConfig& cfg) {
  check_schema(j, kScenarioSchema);
  std::vector<PolarCoord> users, targets;
  for (const auto& u : j.at("users")) users.push_back(polar_from(u));
  for (const auto& t : j.at("targets")) targets.push_back(polar_from(t));
  std::vector<std::vector<Scatterer>> scat;
  for (const auto& l : j.at("scatterers")) {
    std::vector<Scatterer> list;
    for (const auto& e : l) list.push_back({polar_from(e), e.at("link_range_m").get<double>()});
    scat.push_back(list);
  }
  const ArrayModel model = parse_model(j.value("model", std::string("near_field")));
  return synthesize(std::move(users), std::move(scat), std::move(targets), cfg, model);
}

json report_to_json(const RateReport& r) {
  return {{"max_min_rate", r.objective},
          {"common_rate", r.common_rate},
          {"common_rates", r.common_rates},
          {"private_rates", r.private_rates},
          {"shares", r.shares},
          {"totals", r.totals},
          {"sensing_sinrs", r.sensing_sinrs},
          {"sensing_rates", r.sensing_rates},
          {"power_mw", r.power_mw},
          {"common_violation", r.common_violation}};
}

json solution_to_json(const Solution& s) {
  json phases = json::array();
  for (Eigen::Index i = 0; i < s.beamformer.analog.rows(); ++i) {
    std::vector<double> row;
    for (Eigen::Index k = 0; k < s.beamformer.analog.cols(); ++k) row.push_back(std::arg(s.beamformer.analog(i, k)));
    phases.push_back(row);
  }
  json filters = json::array();
  for (const auto& u : s.filters.filters) filters.push_back(cvec_json(u));
  return {{"schema", kSolutionSchema},
          {"status", s.status},
          {"feasible", s.feasible},
          {"hybrid", s.hybrid},
          {"analog_phases_rad", phases},
          {"digital", to_json(s.beamformer.digital)},
          {"precoder", to_json(s.precoder)},
          {"shares", s.alloc.shares},
          {"filters", filters},
          {"report", report_to_json(s.report)},
          {"outer_iterations", s.outer_iterations},
          {"inner_iterations", s.inner_iterations},
          {"residual_inf", s.residual_inf},
          {"pdd_objective", s.pdd_objective},
          {"fit_objective", s.fit_objective}};
}

Solution solution_from_json(const json& j) {
  check_schema(j, kSolutionSchema);
  Solution s;
  s.status = j.value("status", std::string());
  s.feasible = j.value("feasible", false);
  s.hybrid = j.value("hybrid", true);
  const auto phases = j.at("analog_phases_rad").get<std::vector<std::vector<double>>>();
  if (!phases.empty()) {
    s.beamformer.analog.resize(static_cast<Eigen::Index>(phases.size()),
                               static_cast<Eigen::Index>(phases[0].size()));
    for (std::size_t i = 0; i < phases.size(); ++i) {
      for (std::size_t k = 0; k < phases[i].size(); ++k) {
        s.beamformer.analog(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
            std::polar(1.0, phases[i][k]);
      }
    }
  }
  s.beamformer.digital = cmat_from_json(j.at("digital"));
  s.precoder = cmat_from_json(j.at("precoder"));
  s.alloc.shares = j.at("shares").get<std::vector<double>>();
  for (const auto& u : j.at("filters")) s.filters.filters.push_back(cvec_from(u));
  s.outer_iterations = j.value("outer_iterations", 0);
  s.inner_iterations = j.value("inner_iterations", 0);
  s.residual_inf = j.value("residual_inf", 0.0);
  s.pdd_objective = j.value("pdd_objective", 0.0);
  s.fit_objective = j.value("fit_objective", 0.0);
  return s;
}

json verification_to_json(const VerificationReport& r) {
  return {{"schema", kVerifySchema},
          {"status", r.status},
          {"passed", r.passed},
          {"objective_before", r.objective_before},
          {"objective_after", r.objective_after},
          {"sensing_rates_before", r.sensing_rates_before},
          {"sensing_rates_after", r.sensing_rates_after},
          {"common_sinr_before", r.common_sinr_before},
          {"common_sinr_after", r.common_sinr_after},
          {"private_sinr_before", r.private_sinr_before},
          {"private_sinr_after", r.private_sinr_after},
          {"covariance_error", r.covariance_error},
          {"power_before", r.power_before},
          {"power_after", r.power_after},
          {"ranks", r.ranks},
          {"min_eigenvalue", r.min_eigenvalue}};
}

json sweep_spec_to_json(const SweepSpec& s) {
  std::vector<std::string> schemes;
  for (Scheme x : s.schemes) schemes.push_back(to_string(x));
  return {{"schema", kSweepSchema}, {"axis", s.axis},   {"values", s.values},
          {"trials", s.trials},     {"seed", s.seed},   {"schemes", schemes},
          {"trace_trials", s.trace_trials}, {"workers", s.workers}};
}

SweepSpec sweep_spec_from_json(const json& j) {
  check_schema(j, kSweepSchema);
  SweepSpec s;
  s.axis = j.value("axis", s.axis);
  s.values = j.at("values").get<std::vector<double>>();
  s.trials = j.value("trials", s.trials);
  s.seed = j.value("seed", s.seed);
  if (j.contains("schemes")) {
    for (const auto& n : j.at("schemes")) s.schemes.push_back(parse_scheme(n.get<std::string>()));
  } else {
    s.schemes = {Scheme::kRsmaHybridNf};
  }
  if (j.contains("trace_trials")) s.trace_trials = j.at("trace_trials").get<std::vector<std::size_t>>();
  s.workers = j.value("workers", s.workers);
  s.validate();
  return s;
}

std::string trace_csv_header() {
  return "outer_iter,inner_iter,AL_objective,residual_inf,min_rate,min_sensing_rate,rho";
}

void write_trace_csv(const Solution& s, const std::string& path) {
  std::ostringstream os;
  os.precision(12);
  os << trace_csv_header() << '\n';
  for (const auto& r : s.trace) {
    os << r.outer_iter << ',' << r.inner_iter << ',' << r.al_objective << ',' << r.residual_inf << ','
       << r.min_rate << ',' << r.min_sensing_rate << ',' << r.penalty << '\n';
  }
  write_text(path, os.str());
}

std::string read_text(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

}  // namespace nfisac
