#include "nfisac/rates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace nfisac {

double CommonRateAlloc::sum() const { return std::accumulate(shares.begin(), shares.end(), 0.0); }

double log2p1(double x) { return std::log2(1.0 + x); }

PowerTerms power_terms(const Precoder& p, const CVec& h, std::size_t user, double noise_mw,
                       double sic_residual) {
  if (p.rows() != h.size()) throw std::invalid_argument("power_terms: dimension mismatch");
  if (static_cast<Eigen::Index>(user) + 1 >= p.cols()) {
    throw std::invalid_argument("power_terms: user index outside precoder columns");
  }
  const Eigen::RowVectorXcd proj = h.adjoint() * p;
  PowerTerms t;
  t.signal_common = std::norm(proj(0));
  t.signal_private = std::norm(proj(static_cast<Eigen::Index>(user) + 1));
  double leak = 0.0;
  for (Eigen::Index j = 1; j < proj.size(); ++j) {
    if (j != static_cast<Eigen::Index>(user) + 1) leak += std::norm(proj(j));
  }
  t.interference_private = leak + noise_mw + sic_residual * t.signal_common;
  t.total_private = t.signal_private + t.interference_private;
  t.interference_common = t.signal_private + leak + noise_mw;
  t.total_common = t.signal_common + t.interference_common;
  return t;
}

RateReport comm_rates(const Precoder& p, const CommonRateAlloc& alloc, const Scenario& scenario,
                      const SystemConfig& cfg) {
  const std::size_t k_users = scenario.n_users();
  if (alloc.shares.size() != k_users) throw std::invalid_argument("comm_rates: alloc length != K");
  if (static_cast<std::size_t>(p.cols()) != k_users + 1) {
    throw std::invalid_argument("comm_rates: precoder must have K+1 columns");
  }
  RateReport r;
  r.common_rate = std::numeric_limits<double>::infinity();
  r.min_total = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < k_users; ++k) {
    const PowerTerms t =
        power_terms(p, scenario.comm_channels[k], k, cfg.noise_comm_mw, cfg.sic_residual);
    const double rc = log2p1(t.signal_common / t.interference_common);
    const double rp = log2p1(t.signal_private / t.interference_private);
    r.common_rates.push_back(rc);
    r.private_rates.push_back(rp);
    r.shares.push_back(alloc.shares[k]);
    r.totals.push_back(alloc.shares[k] + rp);
    r.common_rate = std::min(r.common_rate, rc);
    r.min_total = std::min(r.min_total, alloc.shares[k] + rp);
  }
  r.common_violation = alloc.sum() > r.common_rate + kCommonRateTol;
  for (double c : alloc.shares) {
    if (c < -kCommonRateTol) r.common_violation = true;
  }
  r.objective = r.min_total;
  r.power_mw = p.squaredNorm();
  return r;
}

std::vector<double> sensing_sinr(const Precoder& p, const ReceiveFilters& u,
                                 const Scenario& scenario, const SystemConfig& cfg) {
  const std::size_t m_targets = scenario.n_targets();
  if (u.filters.size() != m_targets) throw std::invalid_argument("sensing_sinr: one filter per target");
  std::vector<double> out(m_targets);
  for (std::size_t m = 0; m < m_targets; ++m) {
    const CVec& um = u.filters[m];
    double interference = cfg.noise_sense_mw * um.squaredNorm();
    double signal = 0.0;
    for (std::size_t j = 0; j < m_targets; ++j) {
      const double e = cfg.reflect(j) * (um.adjoint() * scenario.sense_channels[j] * p).squaredNorm();
      if (j == m) {
        signal = e;
      } else {
        interference += e;
      }
    }
    out[m] = signal / interference;
  }
  return out;
}

std::vector<double> sensing_sinr_cov(const CMat& covariance, const ReceiveFilters& u,
                                     const Scenario& scenario, const SystemConfig& cfg) {
  const std::size_t m_targets = scenario.n_targets();
  if (u.filters.size() != m_targets) throw std::invalid_argument("sensing_sinr_cov: one filter per target");
  std::vector<double> out(m_targets);
  for (std::size_t m = 0; m < m_targets; ++m) {
    const CVec& um = u.filters[m];
    double interference = cfg.noise_sense_mw * um.squaredNorm();
    double signal = 0.0;
    for (std::size_t j = 0; j < m_targets; ++j) {
      const CVec g = scenario.sense_channels[j].adjoint() * um;
      const double e = cfg.reflect(j) * (g.adjoint() * covariance * g)(0).real();
      if (j == m) {
        signal = e;
      } else {
        interference += e;
      }
    }
    out[m] = signal / interference;
  }
  return out;
}

RateReport evaluate(const Precoder& p, const CommonRateAlloc& alloc, const ReceiveFilters& u,
                    const Scenario& scenario, const SystemConfig& cfg) {
  RateReport r = comm_rates(p, alloc, scenario, cfg);
  r.sensing_sinrs = sensing_sinr(p, u, scenario, cfg);
  for (double g : r.sensing_sinrs) r.sensing_rates.push_back(log2p1(g));
  return r;
}

CommonRateAlloc optimal_common_split(double common_rate, const std::vector<double>& private_rates) {
  const std::size_t k = private_rates.size();
  CommonRateAlloc alloc = CommonRateAlloc::zeros(k);
  if (k == 0 || !(common_rate > 0.0)) return alloc;
  std::vector<double> sorted = private_rates;
  std::sort(sorted.begin(), sorted.end());
  // Raise the water level t over the i+1 weakest users until the budget is spent.
  double level = sorted[0];
  double budget = common_rate;
  std::size_t active = 1;
  while (true) {
    const double next = active < k ? sorted[active] : std::numeric_limits<double>::infinity();
    const double need = (next - level) * static_cast<double>(active);
    if (need >= budget) {
      level += budget / static_cast<double>(active);
      break;
    }
    budget -= need;
    level = next;
    ++active;
  }
  for (std::size_t i = 0; i < k; ++i) alloc.shares[i] = std::max(0.0, level - private_rates[i]);
  // Clip rounding so the sum never exceeds the common rate.
  const double s = alloc.sum();
  if (s > common_rate) {
    for (double& c : alloc.shares) c *= common_rate / s;
  }
  return alloc;
}

std::string rate_report_csv_header(std::size_t n_users, std::size_t n_targets) {
  std::ostringstream os;
  os << "min_total,common_rate,common_violation,power_mw";
  for (std::size_t k = 1; k <= n_users; ++k) {
    os << ",common_rate_" << k << ",private_rate_" << k << ",share_" << k << ",total_" << k;
  }
  for (std::size_t m = 1; m <= n_targets; ++m) os << ",sensing_sinr_" << m << ",sensing_rate_" << m;
  return os.str();
}

std::string rate_report_csv_row(const RateReport& r) {
  std::ostringstream os;
  os.precision(12);
  os << r.min_total << ',' << r.common_rate << ',' << (r.common_violation ? 1 : 0) << ','
     << r.power_mw;
  for (std::size_t k = 0; k < r.totals.size(); ++k) {
    os << ',' << r.common_rates[k] << ',' << r.private_rates[k] << ',' << r.shares[k] << ','
       << r.totals[k];
  }
  for (std::size_t m = 0; m < r.sensing_sinrs.size(); ++m) {
    os << ',' << r.sensing_sinrs[m] << ',' << r.sensing_rates[m];
  }
  return os.str();
}

}  // namespace nfisac
